import numpy as np
import pytest

from san_importance.importance import ImportanceVector
from san_importance.san import PARAM_NAMES, SanConfig, init_model, loss_and_gradients
from san_importance.tabular import Dataset, make_classification


def label_copy_dataset(n=60, n_noise=4, seed=0):
    """Feature 0 equals the (balanced, binary) label; the rest is noise."""
    rng = np.random.default_rng(seed)
    y = rng.permutation(np.arange(n) % 2)
    X = np.column_stack([y.astype(float), rng.standard_normal((n, n_noise))])
    names = [f"f{j}" for j in range(X.shape[1])]
    return Dataset(X, y, names, ["neg", "pos"])


def blobs(n=200, seed=0, gap=4.0):
    """Two well separated Gaussian blobs in 2-D."""
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 2
    X = rng.standard_normal((n, 2)) * 0.5 + np.where(y[:, None] == 1, gap / 2, -gap / 2)
    return Dataset(X, y, ["x", "y"], ["a", "b"])


def three_class(n=90, n_features=6, seed=0):
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 3
    X = rng.standard_normal((n, n_features))
    X[:, 0] += y * 1.5
    X[:, 1] -= (y == 2) * 2.0
    return Dataset(X, y, [f"c{j}" for j in range(n_features)], ["u", "v", "w"])


def fixture_rankings():
    """Fixed 20-feature trio: two identical rankings and the reverse of them."""
    names = [f"f{j}" for j in range(20)]
    base = np.linspace(1.0, 0.05, 20)
    return [
        ImportanceVector(base, "first", names),
        ImportanceVector(base.copy(), "twin", names),
        ImportanceVector(base[::-1].copy(), "reversed", names),
    ]


def random_model(n_features, n_classes, hidden=4, heads=1, seed=0, scale=1.0, dropout=0.0):
    cfg = SanConfig(hidden_dim=hidden, n_heads=heads, dropout_rate=dropout, seed=seed)
    m = init_model(n_features, n_classes, cfg)
    rng = np.random.default_rng([seed, 99])
    return m.with_params({n: rng.normal(size=a.shape) * scale for n, a in m.params().items()})


def fd_gradients(model, X, y, h=1e-5):
    """Central differences of the batch loss w.r.t. every parameter entry."""
    out = {}
    base = model.params()
    for name in PARAM_NAMES:
        arr = base[name]
        g = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            vals = []
            for sgn in (1.0, -1.0):
                pert = arr.copy()
                pert[idx] += sgn * h
                loss, _ = loss_and_gradients(model.with_params({name: pert}), X, y)
                vals.append(loss)
            g[idx] = (vals[0] - vals[1]) / (2 * h)
        out[name] = g
    return out


def max_rel_error(analytic, numeric):
    worst = 0.0
    for name in PARAM_NAMES:
        a, n = analytic[name], numeric[name]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


@pytest.fixture
def label_copy():
    return label_copy_dataset()


@pytest.fixture
def synth_small():
    return make_classification(120, 10, 4, seed=5)


@pytest.fixture
def three_class_data():
    return three_class()


# acceptance criteria report: number -> (passed, description, detail)
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        ok, desc, detail = ACCEPTANCE[num]
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {num}: {desc}"
        terminalreporter.write_line(line + (f" ({detail})" if detail else ""))
