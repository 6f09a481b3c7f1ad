"""Feature importance from self-attention networks, with classical baselines
and ranking-comparison tools."""

__version__ = "0.1.0"
