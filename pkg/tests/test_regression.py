import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from fatmt.panel_io import PanelData
from fatmt.regression import (
    Annihilator,
    RankDeficientError,
    adjusted_statistics,
    fit_intercepts,
    two_sided_p,
    unadjusted_battery,
)


def per_unit_ols_intercepts(y, x):
    """Oracle: solve the normal equations unit by unit with an explicit (1, X) design."""
    t = y.shape[1]
    design = np.column_stack([np.ones(t), x])
    out = []
    for row in y:
        coef = np.linalg.solve(design.T @ design, design.T @ row)
        out.append(coef[0])
    return np.array(out)


def test_no_covariates_gives_means(rng):
    y = rng.standard_normal((5, 9))
    fit = fit_intercepts(PanelData(y, np.zeros((9, 0))))
    assert fit.one_q_one == 9.0
    np.testing.assert_allclose(fit.mu_hat, y.mean(axis=1), rtol=0, atol=1e-14)


def test_exact_fit(rng):
    x = rng.standard_normal((10, 1))
    y = (2.0 + 3.0 * x[:, 0])[None, :].repeat(2, axis=0)
    fit = fit_intercepts(PanelData(y, x))
    np.testing.assert_allclose(fit.mu_hat, 2.0, atol=1e-10)
    assert np.max(np.abs(fit.resid_full)) < 1e-10
    with pytest.raises(ValueError, match="u0"):
        unadjusted_battery(fit)


def test_matches_per_unit_normal_equations(rng):
    y = rng.standard_normal((4, 6))
    x = rng.standard_normal((6, 1))
    fit = fit_intercepts(PanelData(y, x))
    np.testing.assert_allclose(fit.mu_hat, per_unit_ols_intercepts(y, x), rtol=0, atol=1e-10)


def test_one_q_one_from_projector(rng):
    x = rng.standard_normal((15, 2)) + 0.7
    fit = fit_intercepts(PanelData(rng.standard_normal((3, 15)), x))
    q = np.eye(15) - x @ np.linalg.inv(x.T @ x) @ x.T
    assert fit.one_q_one == pytest.approx(np.ones(15) @ q @ np.ones(15), rel=1e-12)
    assert fit.one_q_one < 15


def test_annihilator_properties(rng):
    x = rng.standard_normal((20, 3))
    q = Annihilator(x)
    v = rng.standard_normal(20)
    qv = q(v)
    assert np.linalg.norm(q(qv) - qv) <= 1e-10 * np.linalg.norm(v)
    for j in range(3):
        assert np.linalg.norm(q(x[:, j])) <= 1e-10 * np.linalg.norm(x[:, j])
    # symmetry: <Qu, v> = <u, Qv>
    u = rng.standard_normal(20)
    assert q(u) @ v == pytest.approx(u @ qv, rel=1e-10)


def test_residuals_orthogonal(rng):
    panel = PanelData(rng.standard_normal((6, 25)), rng.standard_normal((25, 2)))
    fit = fit_intercepts(panel)
    design = np.column_stack([np.ones(25), panel.covariates])
    inner = design.T @ fit.resid_full
    scale = np.linalg.norm(design, axis=0)[:, None] * np.linalg.norm(fit.resid_full, axis=0)[None, :]
    assert np.max(np.abs(inner) / scale) <= 1e-8
    assert np.all(fit.sigma_e_diag > 0)


def test_rank_deficient_covariates(rng):
    x = rng.standard_normal((10, 1))
    with pytest.raises(RankDeficientError):
        fit_intercepts(PanelData(rng.standard_normal((2, 10)), np.column_stack([x, 2 * x])))


def test_constant_covariate_is_rank_deficient(rng):
    with pytest.raises(RankDeficientError):
        fit_intercepts(PanelData(rng.standard_normal((2, 10)), np.ones((10, 1))))


@settings(max_examples=30, deadline=None)
@given(c=st.floats(min_value=1e-3, max_value=1e3).flatmap(lambda a: st.sampled_from([a, -a])),
       seed=st.integers(0, 2**32 - 1))
def test_invariant_to_covariate_rescaling(c, seed):
    rng = np.random.default_rng(seed)
    y = rng.standard_normal((5, 20))
    x = rng.standard_normal((20, 2))
    a = fit_intercepts(PanelData(y, x)).mu_hat
    x2 = x.copy()
    x2[:, 1] *= c
    b = fit_intercepts(PanelData(y, x2)).mu_hat
    assert np.all(np.abs(a - b) <= 1e-9 * np.maximum(np.abs(a), 1.0))


def test_zero_estimate_has_unit_p_value():
    assert two_sided_p(np.array([0.0]))[0] == 1.0


def test_critical_value_p():
    # independent route: 2 Phi(-z) = erfc(z / sqrt 2)
    z = 1.959964
    expected = math.erfc(z / math.sqrt(2))
    got = two_sided_p(np.array([z]))[0]
    assert got == pytest.approx(expected, abs=1e-15)
    assert got == pytest.approx(0.05, abs=1e-6)


def test_scale_equivariance():
    mu = np.array([0.3, -0.2])
    s1 = adjusted_statistics(mu, 50.0, 0.0, np.array([1.0, 1.0]))
    s2 = adjusted_statistics(mu, 50.0, 0.0, np.array([4.0, 4.0]))
    np.testing.assert_allclose(s2, s1 / 2)
    assert np.all(two_sided_p(s2) > two_sided_p(s1))


def test_unadjusted_formula(rng):
    panel = PanelData(rng.standard_normal((5, 30)) + 0.2, rng.standard_normal((30, 2)))
    fit = fit_intercepts(panel)
    bat = unadjusted_battery(fit)
    expected = fit.mu_hat * math.sqrt(fit.one_q_one) / np.sqrt(fit.sigma_e_diag)
    np.testing.assert_allclose(bat.statistics, expected, rtol=1e-13)
    np.testing.assert_allclose(bat.p_values, 2 * stats.norm.cdf(-np.abs(expected)), rtol=1e-12)


def test_null_p_values_uniform():
    rng = np.random.default_rng(7)
    t, n = 50, 200
    x = rng.standard_normal((t, 2))
    beta = rng.standard_normal((n, 2))
    y = beta @ x.T + rng.standard_normal((n, t))
    p = unadjusted_battery(fit_intercepts(PanelData(y, x))).p_values
    d = stats.kstest(p, "uniform").statistic
    assert d <= 0.08
