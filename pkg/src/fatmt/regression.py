"""OLS intercepts for all units via the covariate annihilator."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .battery import Procedure, TestBattery
from .panel_io import PanelData

RANK_TOL = 1e-12
EXACT_FIT_TOL = 1e-10


class RankDeficientError(ValueError):
    """Raised when the covariate Gram matrix is numerically singular."""


class Annihilator:
    """Projector onto the orthogonal complement of ``span(source)``.

    Applied as ``v - S (S'S)^{-1} S' v``; the T x T matrix is never formed.

    Parameters
    ----------
    source : array of shape (T, k)
        Columns to annihilate. ``k = 0`` gives the identity.
    """

    def __init__(self, source: np.ndarray):
        s = np.asarray(source, dtype=float)
        if s.ndim == 1:
            s = s[:, None]
        self.source = s
        k = s.shape[1]
        if k == 0:
            self.gram_inverse = np.zeros((0, 0))
            return
        if s.shape[0] <= k:
            raise RankDeficientError(f"{s.shape[0]} rows cannot support {k} columns")
        gram = s.T @ s
        evals, evecs = np.linalg.eigh(gram)
        if evals[0] <= RANK_TOL * evals[-1]:
            raise RankDeficientError(
                f"covariates are rank deficient (eigenvalue ratio {evals[0] / evals[-1]:.3g})"
            )
        self.gram_inverse = (evecs / evals) @ evecs.T

    @property
    def n_rows(self) -> int:
        return self.source.shape[0]

    def __call__(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if self.source.shape[1] == 0:
            return v.copy()
        return v - self.source @ (self.gram_inverse @ (self.source.T @ v))


@dataclass(frozen=True)
class InterceptFit:
    """Intercept estimates and the residual pieces that feed the tests.

    ``resid_after_x`` keeps the intercept (only covariates are projected
    out) and is the input to the latent-factor step; ``resid_full`` also
    removes the constant and gives ``sigma_e_diag``.
    """

    mu_hat: np.ndarray
    one_q_one: float
    q_one: np.ndarray
    resid_after_x: np.ndarray
    resid_full: np.ndarray
    sigma_e_diag: np.ndarray
    unit_ids: tuple[str, ...] = ()

    @property
    def n_units(self) -> int:
        return self.mu_hat.size

    @property
    def n_periods(self) -> int:
        return self.q_one.size


def fit_intercepts(panel: PanelData) -> InterceptFit:
    """OLS intercepts of every unit on (1, covariates).

    ``mu_hat = (1'Q1)^{-1} 1'Q Y'`` with ``Q`` the annihilator of the
    covariates. Variances use divisor T.
    """
    t = panel.n_periods
    p = panel.n_covariates
    if t <= p + 1:
        raise RankDeficientError(f"need T > p + 1, got T={t}, p={p}")
    q = Annihilator(panel.covariates)
    ones = np.ones(t)
    q_one = q(ones)
    one_q_one = float(ones @ q_one)
    if one_q_one <= RANK_TOL * t:
        raise RankDeficientError("constant lies in the covariate span")

    y_t = panel.responses.T
    resid_after_x = q(y_t)
    mu_hat = (q_one @ y_t) / one_q_one

    q_full = Annihilator(np.column_stack([ones, panel.covariates]))
    resid_full = q_full(y_t)
    sigma_e = np.einsum("ti,ti->i", resid_full, resid_full) / t
    # responses lying in span(1, X) leave only rounding noise
    scale = np.einsum("ti,ti->i", y_t, y_t) / t
    sigma_e[sigma_e <= EXACT_FIT_TOL**2 * scale] = 0.0
    return InterceptFit(
        mu_hat=mu_hat,
        one_q_one=one_q_one,
        q_one=q_one,
        resid_after_x=resid_after_x,
        resid_full=resid_full,
        sigma_e_diag=sigma_e,
        unit_ids=panel.unit_ids,
    )


def two_sided_p(stat: np.ndarray) -> np.ndarray:
    """``2 * Phi(-|stat|)``."""
    return 2.0 * ndtr(-np.abs(stat))


def adjusted_statistics(
    mu_hat: np.ndarray,
    one_q_one: float,
    factor_term: np.ndarray | float,
    variances: np.ndarray,
) -> np.ndarray:
    """``(sqrt(k) mu - k^{-1/2} c) / sqrt(s)`` with ``k = 1'Q1``.

    ``factor_term`` is ``1'Q Z gamma_i`` per unit (0 for the unadjusted
    statistic). All batteries go through here so that a zero factor term
    reproduces the unadjusted statistic bit for bit.
    """
    root_k = np.sqrt(one_q_one)
    return (root_k * mu_hat - factor_term / root_k) / np.sqrt(variances)


def _check_variances(variances: np.ndarray, unit_ids, what: str) -> None:
    bad = np.flatnonzero(~(variances > 0))
    if bad.size:
        i = int(bad[0])
        name = unit_ids[i] if len(unit_ids) > i else str(i)
        raise ValueError(f"unit {name!r} has zero {what} variance")


def unadjusted_battery(fit: InterceptFit) -> TestBattery:
    """Per-unit t-type statistics ignoring latent factors."""
    _check_variances(fit.sigma_e_diag, fit.unit_ids, "residual")
    stat = adjusted_statistics(fit.mu_hat, fit.one_q_one, 0.0, fit.sigma_e_diag)
    return TestBattery(Procedure.UNADJUSTED, stat, two_sided_p(stat))
