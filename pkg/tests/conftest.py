import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from invkern.group import BUILTIN_KINDS, GroupSpec, make_group

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# small dims that exercise square and non-square image shapes
DIMS = (1, 2, 4, 6, 8, 9, 12, 16)


@st.composite
def groups(draw, kinds=BUILTIN_KINDS, dims=DIMS):
    kind = draw(st.sampled_from(kinds))
    d = draw(st.sampled_from(dims))
    return make_group(GroupSpec(kind, d))


def vectors(d, n=None, scale=3.0):
    """Finite float vectors (or n x d matrices) from seeded normals, so hypothesis shrinks on the seed."""
    @st.composite
    def _draw(draw):
        seed = draw(st.integers(0, 2**32 - 1))
        rng = np.random.default_rng(seed)
        shape = (d,) if n is None else (n, d)
        return scale * rng.standard_normal(shape)
    return _draw()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def swap():
    return make_group(GroupSpec("explicit_matrices", 2, matrices=[np.eye(2), np.array([[0.0, 1.0], [1.0, 0.0]])]))


# -- acceptance summary -------------------------------------------------

ACCEPTANCE: list[tuple[str, bool, str]] = []


def record_criterion(name: str, passed: bool, detail: str = "") -> bool:
    ACCEPTANCE.append((name, bool(passed), detail))
    print(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")
    return bool(passed)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in ACCEPTANCE:
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")
