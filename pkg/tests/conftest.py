import itertools

import hypothesis
import numpy as np
import pytest

hypothesis.settings.register_profile("default", max_examples=50, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=10, deadline=None)
hypothesis.settings.load_profile("default")


def naive_mode_product(t, m, mode):
    """Quadruple-loop mode-n product, 1-based mode."""
    axis = mode - 1
    shape = list(t.shape)
    shape[axis] = m.shape[0]
    out = np.zeros(shape)
    for idx in itertools.product(*(range(s) for s in shape)):
        acc = 0.0
        for j in range(t.shape[axis]):
            src = list(idx)
            src[axis] = j
            acc += m[idx[axis], j] * t[tuple(src)]
        out[idx] = acc
    return out


def naive_outer(v1, v2, v3, v4):
    out = np.zeros((len(v1), len(v2), len(v3), len(v4)))
    for i, j, k, l in itertools.product(*(range(len(v)) for v in (v1, v2, v3, v4))):
        out[i, j, k, l] = v1[i] * v2[j] * v3[k] * v4[l]
    return out


def naive_unfold(t, mode):
    """Row i_n; column index over the other modes, earliest fastest."""
    axis = mode - 1
    others = [a for a in range(4) if a != axis]
    cols = int(np.prod([t.shape[a] for a in others]))
    out = np.zeros((t.shape[axis], cols))
    for idx in itertools.product(*(range(s) for s in t.shape)):
        col, stride = 0, 1
        for a in others:
            col += idx[a] * stride
            stride *= t.shape[a]
        out[idx[axis], col] = t[idx]
    return out


def naive_chain_rule(G, vs, mode):
    """Explicit index sum: grad_j = sum over the other indices of G times the
    other three factor entries."""
    axis = mode - 1
    out = np.zeros(G.shape[axis])
    for idx in itertools.product(*(range(s) for s in G.shape)):
        w = 1.0
        for a in range(4):
            if a != axis:
                w *= vs[a][idx[a]]
        out[idx[axis]] += G[idx] * w
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance criteria report: one PASS/FAIL line per criterion at the end
_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        prev = _criteria.get(number, (title, True))
        _criteria[number] = (title, prev[1] and rep.passed)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, ok = _criteria[number]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {number:2d}. {title}")
