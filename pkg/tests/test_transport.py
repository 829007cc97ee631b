import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from absynth.errors import SupportTooLarge
from absynth.transport import wasserstein_1d, wasserstein_discrete


def test_diracs_on_the_line():
    assert wasserstein_1d([0.0], [1.0], [1.0], [1.0]) == pytest.approx(1.0)
    assert wasserstein_discrete(np.array([[0.0]]), [1.0], np.array([[1.0]]), [1.0]) == pytest.approx(1.0)


def test_split_mass_vs_dirac():
    # CDF area: |F_p - F_q| = 0.5 on [0, 1)
    assert wasserstein_1d([0.0, 1.0], [0.5, 0.5], [0.0], [1.0]) == pytest.approx(0.5)


def test_lp_matches_closed_form_in_1d():
    rng = np.random.default_rng(0)
    for _ in range(20):
        x, y = rng.random(5), rng.random(4)
        p, q = rng.dirichlet(np.ones(5)), rng.dirichlet(np.ones(4))
        # a second copy of the points in 2-D with a zero coordinate forces the LP route
        lp = wasserstein_discrete(np.c_[x, 0 * x], p, np.c_[y, 0 * y], q)
        assert lp == pytest.approx(wasserstein_1d(x, p, y, q), abs=1e-9)


def test_support_limit():
    pts = np.zeros((300, 2))
    w = np.full(300, 1 / 300)
    with pytest.raises(SupportTooLarge):
        wasserstein_discrete(pts, w, pts, w)


@given(st.integers(1, 6), st.integers(0, 10**6))
def test_self_distance_is_zero(n, seed):
    rng = np.random.default_rng(seed)
    pts = rng.random((n, 2))
    p = rng.dirichlet(np.ones(n))
    assert wasserstein_discrete(pts, p, pts, p) == pytest.approx(0.0, abs=1e-9)


@given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 10**6))
def test_symmetry_and_diameter_bound(n, m, seed):
    rng = np.random.default_rng(seed)
    x, y = rng.random((n, 2)), rng.random((m, 2))
    p, q = rng.dirichlet(np.ones(n)), rng.dirichlet(np.ones(m))
    d1 = wasserstein_discrete(x, p, y, q)
    d2 = wasserstein_discrete(y, q, x, p)
    assert d1 == pytest.approx(d2, abs=1e-9)
    diam = np.max(np.linalg.norm(x[:, None] - y[None], axis=-1))
    assert -1e-12 <= d1 <= diam + 1e-9
