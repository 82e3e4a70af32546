"""Factor-adjusted statistics, Storey-type FDR estimation and thresholding.

The threshold searches scan the observed p-value order statistics. The
FDR estimate only jumps at those points, so the largest qualifying order
statistic yields the same rejection set as the supremum over [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import ndtr, ndtri

from .battery import Procedure, TestBattery
from .latent import LatentFactorFit
from .panel_io import GroundTruth
from .regression import (
    InterceptFit,
    _check_variances,
    adjusted_statistics,
    two_sided_p,
    unadjusted_battery,
)

DEFAULT_LAMBDA = 0.1


@dataclass(frozen=True)
class DecisionReport:
    """Outcome of a thresholding rule, optionally scored against truth.

    ``pi0_hat`` is ``None`` for rules that do not estimate the null
    proportion (PFA). Truth metrics are ``None`` until :func:`confusion`
    is applied; ``power`` stays ``None`` when there are no non-nulls.
    """

    procedure: Procedure
    threshold: float
    lam: float | None
    pi0_hat: float | None
    fdr_hat: float
    rejected: np.ndarray
    n_units: int
    alpha: float | None = None
    v_of_t: int | None = None
    s_of_t: int | None = None
    fdp: float | None = None
    power: float | None = None

    @property
    def r_of_t(self) -> int:
        return int(self.rejected.size)


def _factor_term(q_one: np.ndarray, scores: np.ndarray, loadings: np.ndarray) -> np.ndarray:
    # 1'Q Z gamma_i for every unit
    if scores.shape[1] == 0:
        return np.zeros(loadings.shape[0])
    return loadings @ (q_one @ scores)


def fat_battery(fit: InterceptFit, latent: LatentFactorFit) -> TestBattery:
    """Factor-adjusted statistics with estimated scores, loadings and variances."""
    _check_variances(latent.sigma_eta_diag, fit.unit_ids, "idiosyncratic")
    term = _factor_term(fit.q_one, latent.scores, latent.loadings)
    stat = adjusted_statistics(fit.mu_hat, fit.one_q_one, term, latent.sigma_eta_diag)
    return TestBattery(Procedure.FAT, stat, two_sided_p(stat))


def oracle_battery(fit: InterceptFit, truth: GroundTruth) -> TestBattery:
    """Factor-adjusted statistics using the true scores, loadings and variances."""
    if truth.latent_scores is None or truth.latent_loadings is None or truth.idio_variances is None:
        raise ValueError("oracle battery needs latent scores, loadings and idiosyncratic variances")
    scores = np.asarray(truth.latent_scores, dtype=float).reshape(fit.n_periods, -1)
    loadings = np.asarray(truth.latent_loadings, dtype=float).reshape(fit.n_units, -1)
    sigma = np.asarray(truth.idio_variances, dtype=float)
    _check_variances(sigma, fit.unit_ids, "idiosyncratic")
    term = _factor_term(fit.q_one, scores, loadings)
    stat = adjusted_statistics(fit.mu_hat, fit.one_q_one, term, sigma)
    return TestBattery(Procedure.ORACLE_FAT, stat, two_sided_p(stat))


def _check_p(p_values) -> np.ndarray:
    p = np.asarray(p_values, dtype=float).ravel()
    if p.size == 0:
        raise ValueError("no p-values given")
    if not np.all((p >= 0) & (p <= 1)):
        raise ValueError("p-values must lie in [0, 1]")
    return p


def estimate_pi0(p_values, lam: float = DEFAULT_LAMBDA) -> float:
    """Storey's null-proportion estimate ``(N - R(lam)) / ((1 - lam) N)``.

    Not truncated at 1.
    """
    if not 0 <= lam < 1:
        raise ValueError(f"lambda must lie in [0, 1), got {lam}")
    p = _check_p(p_values)
    n = p.size
    return float(n - np.count_nonzero(p <= lam)) / ((1.0 - lam) * n)


def fdr_estimate(p_values, lam: float, t: float, pi0: float | None = None) -> float:
    """Point estimate ``N pi0(lam) t / max(R(t), 1)``; not capped at 1."""
    if not 0 <= t <= 1:
        raise ValueError(f"threshold must lie in [0, 1], got {t}")
    p = _check_p(p_values)
    if pi0 is None:
        pi0 = estimate_pi0(p, lam)
    r = np.count_nonzero(p <= t)
    return p.size * pi0 * t / max(r, 1)


def _counts_at_order_stats(p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    ps = np.sort(p)
    return ps, np.searchsorted(ps, ps, side="right")


def storey_threshold(
    p_values,
    alpha: float,
    lam: float = DEFAULT_LAMBDA,
    procedure: Procedure = Procedure.FAT,
) -> DecisionReport:
    """Largest p-value order statistic whose estimated FDR is at most ``alpha``.

    Returns threshold 0 and no rejections when no order statistic qualifies.
    """
    p = _check_p(p_values)
    n = p.size
    pi0 = estimate_pi0(p, lam)
    ps, counts = _counts_at_order_stats(p)
    fdr = n * pi0 * ps / np.maximum(counts, 1)
    ok = np.flatnonzero(fdr <= alpha)
    if ok.size:
        threshold = float(ps[ok[-1]])
        fdr_hat = float(fdr[ok[-1]])
        rejected = np.flatnonzero(p <= threshold)
    else:
        threshold, fdr_hat = 0.0, 0.0
        rejected = np.array([], dtype=int)
    return DecisionReport(procedure, threshold, lam, pi0, fdr_hat, rejected, n, alpha=alpha)


def fixed_threshold(
    p_values,
    t: float,
    lam: float = DEFAULT_LAMBDA,
    procedure: Procedure = Procedure.FAT,
) -> DecisionReport:
    """Reject ``p <= t`` and report the FDR estimate at ``t``."""
    p = _check_p(p_values)
    pi0 = estimate_pi0(p, lam)
    return DecisionReport(
        procedure,
        float(t),
        lam,
        pi0,
        fdr_estimate(p, lam, t, pi0=pi0),
        np.flatnonzero(p <= t),
        p.size,
    )


def _pfa_pieces(fit: InterceptFit, latent: LatentFactorFit):
    _check_variances(latent.sigma_eta_diag, fit.unit_ids, "idiosyncratic")
    shift = _factor_term(fit.q_one, latent.scores, latent.loadings) / np.sqrt(fit.one_q_one)
    return np.sqrt(fit.sigma_e_diag), shift, np.sqrt(latent.sigma_eta_diag)


def _pfa_numerators(t, sd_e, shift, sd_eta) -> np.ndarray:
    z = ndtri(np.asarray(t, dtype=float) / 2.0)[..., None]
    a = ndtr((sd_e * z + shift) / sd_eta)
    b = ndtr((sd_e * z - shift) / sd_eta)
    return (a + b).sum(axis=-1)


def pfa_fdp_estimate(
    fit: InterceptFit,
    latent: LatentFactorFit,
    t: float,
    p_unadjusted: np.ndarray | None = None,
) -> float:
    """Principal-factor approximation of the FDP of unadjusted p-values at ``t``.

    Returns ``nan`` when no unadjusted p-value is at or below ``t``.
    """
    if not 0 <= t <= 1:
        raise ValueError(f"threshold must lie in [0, 1], got {t}")
    if p_unadjusted is None:
        p_unadjusted = unadjusted_battery(fit).p_values
    r = int(np.count_nonzero(p_unadjusted <= t))
    if r == 0:
        return float("nan")
    num = float(_pfa_numerators(t, *_pfa_pieces(fit, latent)))
    return min(num, r) / r


def pfa_threshold(
    fit: InterceptFit,
    latent: LatentFactorFit,
    alpha: float,
    p_unadjusted: np.ndarray | None = None,
    chunk: int = 256,
) -> DecisionReport:
    """Largest unadjusted-p order statistic with PFA FDP estimate at most ``alpha``."""
    if p_unadjusted is None:
        p_unadjusted = unadjusted_battery(fit).p_values
    p = _check_p(p_unadjusted)
    n = p.size
    pieces = _pfa_pieces(fit, latent)
    ps, counts = _counts_at_order_stats(p)

    est = np.empty(n)
    for lo in range(0, n, chunk):
        num = _pfa_numerators(ps[lo : lo + chunk], *pieces)
        r = counts[lo : lo + chunk]
        est[lo : lo + chunk] = np.minimum(num, r) / r
    ok = np.flatnonzero(est <= alpha)
    if ok.size:
        threshold = float(ps[ok[-1]])
        fdr_hat = float(est[ok[-1]])
        rejected = np.flatnonzero(p <= threshold)
    else:
        threshold, fdr_hat = 0.0, 0.0
        rejected = np.array([], dtype=int)
    return DecisionReport(
        Procedure.PCA_PFA, threshold, None, None, fdr_hat, rejected, n, alpha=alpha
    )


def confusion(report: DecisionReport, truth: GroundTruth) -> DecisionReport:
    """Attach V, S, FDP and power computed against the true non-null set."""
    if truth.n_units != report.n_units:
        raise ValueError(f"truth covers {truth.n_units} units, report {report.n_units}")
    nonnull = np.zeros(report.n_units, dtype=bool)
    nonnull[truth.nonnull_set] = True
    hits = nonnull[report.rejected]
    s = int(np.count_nonzero(hits))
    v = int(hits.size - s)
    n1 = truth.n_nonnull
    return replace(
        report,
        v_of_t=v,
        s_of_t=s,
        fdp=v / max(v + s, 1),
        power=s / n1 if n1 else None,
    )


def split_by_sign(report: DecisionReport, mu_hat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Rejected units with positive and with non-positive intercept estimates."""
    rej = report.rejected
    pos = mu_hat[rej] > 0
    return rej[pos], rej[~pos]


def consistent_threshold(n_periods: int, exponent: float, scale: float = 2.0) -> float:
    """Vanishing p-value threshold ``2 (1 - Phi(scale * T**exponent))``.

    Rejecting at this level makes the null statistics' cutoff grow like
    ``T**exponent``; pick ``exponent`` below one half.
    """
    return float(2.0 * ndtr(-scale * float(n_periods) ** exponent))
