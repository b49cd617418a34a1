import numpy as np
import pytest


def central_difference(f, x, h=1e-5):
    """Gradient of scalar ``f`` at ``x`` by central differences (``x`` restored afterwards)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = x[idx]
        x[idx] = old + h
        fp = f()
        x[idx] = old - h
        fm = f()
        x[idx] = old
        g[idx] = (fp - fm) / (2 * h)
    return g


def rel_err(a, b):
    denom = max(np.linalg.norm(b), np.linalg.norm(a), 1e-300)
    return np.linalg.norm(a - b) / denom


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = {}


@pytest.fixture
def acceptance(request):
    """Record ``(criterion, ok, detail)``; ``ok=None`` marks a skipped criterion."""
    results = request.config.stash[_ACCEPTANCE]

    def record(criterion, ok, detail):
        results[criterion] = (ok, detail)

    return record


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(_ACCEPTANCE, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(results):
        ok, detail = results[criterion]
        verdict = "SKIP" if ok is None else ("PASS" if ok else "FAIL")
        terminalreporter.write_line(f"{criterion:<8} {verdict}  {detail}")
