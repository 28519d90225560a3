import numpy as np
import pytest
from hypothesis import strategies as st

from rbmsolve.model import Rbm


def random_model(rng, n_visible, n_hidden, scale=1.0, prefix="v"):
    labels = [f"{prefix}{i}" for i in range(n_visible)]
    return Rbm.random(n_visible, n_hidden, rng, scale=scale, labels=labels)


@st.composite
def small_models(draw, max_visible=5, max_hidden=4, prefix="v"):
    nv = draw(st.integers(1, max_visible))
    nh = draw(st.integers(1, max_hidden))
    seed = draw(st.integers(0, 2**32 - 1))
    scale = draw(st.sampled_from([0.1, 1.0, 3.0]))
    return random_model(np.random.default_rng(seed), nv, nh, scale, prefix)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: dict[int, str] = {}


def report(criterion: int, ok: bool, detail: str) -> bool:
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[criterion] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
