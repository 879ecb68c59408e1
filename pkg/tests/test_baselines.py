import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from kreboot import (
    DataGenConfig,
    InputDomainError,
    KRRConfig,
    LassoConfig,
    SingularSystemError,
    generate,
    gram,
    krr_fit,
    lasso_fit,
    least_squares_fit,
    project_l1_ball,
)
from kreboot.baselines import cholesky_solve, lasso_objective, spectral_norm_sq
from kreboot.boosting import Dictionary
from kreboot.datagen import Dataset

from oracles import l1_threshold_by_bisection


def _boundary_grid_projection(v, L, n=400_001):
    """Closest point on the 2-D l1 sphere of radius L, by enumerating it."""
    t = np.linspace(0, 4, n, endpoint=False)
    seg = np.floor(t).astype(int)
    s = t - seg
    corners = np.array([[L, 0], [0, L], [-L, 0], [0, -L], [L, 0]])
    pts = corners[seg] * (1 - s)[:, None] + corners[seg + 1] * s[:, None]
    return pts[np.argmin(((pts - v) ** 2).sum(axis=1))]


# --- KRR ----------------------------------------------------------------------

def test_krr_zero_target(wendland):
    data = generate(DataGenConfig(10, 0.0, 1))
    data = Dataset(data.X, np.zeros(10), data.clean)
    assert np.array_equal(krr_fit(data, wendland, KRRConfig(0.1)), np.zeros(10))


def test_krr_one_point(wendland):
    data = Dataset(np.zeros((1, 3)), np.array([2.0]), np.array([3.0]))
    # (1 + 1 * 0.5) a = 2
    assert krr_fit(data, wendland, KRRConfig(0.5))[0] == pytest.approx(4 / 3)


@pytest.mark.parametrize("m,lam", [(50, 1e-4), (200, 1e-2), (500, 1e-3)])
def test_krr_residual(wendland, m, lam):
    data = generate(DataGenConfig(m, 1.0, m))
    G = gram(data.X, wendland)
    a = krr_fit(data, wendland, KRRConfig(lam), G=G)
    res = (G + m * lam * np.eye(m)) @ a - data.y
    assert np.abs(res).max() <= 1e-8 * np.abs(data.y).max()


def test_krr_config_validation():
    with pytest.raises(InputDomainError):
        KRRConfig(0.0)


def test_cholesky_jitter_escalation_and_failure():
    A = np.array([[1.0, 1.0], [1.0, 1.0]])  # singular PSD: needs jitter
    x = cholesky_solve(A, np.array([1.0, 1.0]))
    assert np.all(np.isfinite(x))
    with pytest.raises(SingularSystemError):
        cholesky_solve(np.array([[1.0, 0.0], [0.0, -1.0]]), np.ones(2))


# --- projection ---------------------------------------------------------------

def test_projection_feasible_unchanged():
    v = np.array([0.3, -0.2])
    assert np.array_equal(project_l1_ball(v, 1.0), v)


@pytest.mark.parametrize("v,expected", [((3.0, 0.0), (1.0, 0.0)), ((2.0, 1.0), (1.0, 0.0))])
def test_projection_examples_against_boundary_enumeration(v, expected):
    v = np.array(v)
    brute = _boundary_grid_projection(v, 1.0)
    np.testing.assert_allclose(brute, expected, atol=1e-4)
    np.testing.assert_allclose(project_l1_ball(v, 1.0), expected, atol=1e-15)


vectors = arrays(np.float64, st.integers(1, 40), elements=st.floats(-100, 100))


@settings(max_examples=200, deadline=None)
@given(vectors, st.floats(1e-3, 50))
def test_projection_properties(v, L):
    p = project_l1_ball(v, L)
    assert np.abs(p).sum() <= L * (1 + 1e-12)
    np.testing.assert_allclose(project_l1_ball(p, L), p, rtol=0, atol=1e-12 * max(1.0, L))
    np.testing.assert_allclose(p, l1_threshold_by_bisection(v, L), atol=1e-9 * max(1.0, np.abs(v).max()))
    if np.abs(v).sum() > L:
        assert np.abs(p).sum() == pytest.approx(L, rel=1e-12)


def test_projection_rejects_nonpositive_radius():
    with pytest.raises(InputDomainError):
        project_l1_ball(np.ones(3), 0.0)


# --- lasso --------------------------------------------------------------------

def test_spectral_norm_estimate(wendland):
    G = gram(generate(DataGenConfig(60, 1.0, 2)).X, wendland)
    exact = np.linalg.eigvalsh(G).max() ** 2
    est = spectral_norm_sq(G)
    # 50 power steps: accurate to the eigengap rate, never above the true value
    assert est == pytest.approx(exact, rel=1e-6)
    assert est <= exact * (1 + 1e-12)


def test_lasso_large_radius_matches_least_squares(wendland):
    data = generate(DataGenConfig(5, 1.0, 9))
    G = gram(data.X, wendland)
    a_ls = np.linalg.solve(G, data.y)
    res = lasso_fit(data, wendland, LassoConfig(radius=10 * np.abs(a_ls).sum(), max_iters=200_000, tolerance=1e-20))
    np.testing.assert_allclose(res.coefficients, a_ls, atol=1e-6)
    a_chol = least_squares_fit(data, wendland)
    np.testing.assert_allclose(a_chol, a_ls, atol=1e-6)


def test_lasso_zero_target(wendland):
    data = generate(DataGenConfig(8, 0.0, 1))
    data = Dataset(data.X, np.zeros(8), data.clean)
    res = lasso_fit(data, wendland, LassoConfig(1.0))
    assert np.array_equal(res.coefficients, np.zeros(8)) and res.objective == 0.0


@pytest.mark.parametrize("L", [0.05, 1.0, 20.0])
def test_lasso_feasible_and_monotone(wendland, L):
    data = generate(DataGenConfig(40, 1.0, 4))
    res = lasso_fit(data, wendland, LassoConfig(L, max_iters=3000))
    assert np.abs(res.coefficients).sum() <= L * (1 + 1e-12)
    trace = np.array(res.objective_trace)
    assert np.all(np.diff(trace) <= 1e-15 * trace[0])


def test_lasso_support_path_matches_direct(wendland):
    data = generate(DataGenConfig(80, 1.0, 6))
    d = Dictionary.build(data.X, wendland)
    cfg = LassoConfig(2.0, max_iters=400, tolerance=1e-30)
    a = lasso_fit(data, wendland, cfg, G=d.gram)
    b = lasso_fit(data, wendland, cfg, G=d.gram, gram_sq=d.gram_sq)
    # both paths follow the same iterates up to rounding, which the ill-conditioned
    # Gram amplifies slowly; objectives agree far more tightly than coefficients
    np.testing.assert_allclose(a.coefficients, b.coefficients, atol=1e-6)
    assert a.objective == pytest.approx(b.objective, rel=1e-12)
    assert a.objective == pytest.approx(lasso_objective(d.gram, b.coefficients, data.y), abs=1e-12)


def test_lasso_step_size_precondition(wendland):
    data = generate(DataGenConfig(10, 1.0, 4))
    with pytest.raises(InputDomainError):
        lasso_fit(data, wendland, LassoConfig(1.0, step_size=1e6))
    with pytest.raises(InputDomainError):
        LassoConfig(radius=0.0)
