"""End-to-end analysis of one panel: fit, factor extraction, testing, thresholding.

The simulation lab, the backtester and the command line all route through
:func:`analyze` so that in-process and file-based runs agree exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .battery import Procedure, TestBattery
from .latent import GramSpectrum, LatentFactorFit, fit_latent, gram_eigen, select_factor_count
from .panel_io import PanelData, normalize_covariates, standardize_responses
from .regression import InterceptFit, fit_intercepts, unadjusted_battery
from .testing import (
    DEFAULT_LAMBDA,
    DecisionReport,
    fat_battery,
    fixed_threshold,
    pfa_fdp_estimate,
    pfa_threshold,
    storey_threshold,
)


@dataclass(frozen=True)
class Analysis:
    fit: InterceptFit
    spectrum: GramSpectrum | None
    latent: LatentFactorFit
    r_hat: int | None
    battery: TestBattery
    report: DecisionReport

    @property
    def positive(self) -> np.ndarray:
        rej = self.report.rejected
        return rej[self.fit.mu_hat[rej] > 0]

    @property
    def negative(self) -> np.ndarray:
        rej = self.report.rejected
        return rej[self.fit.mu_hat[rej] <= 0]


def prepare(panel: PanelData, center_covariates: bool = False, standardize: bool = False) -> PanelData:
    if center_covariates:
        panel = normalize_covariates(panel)
    if standardize:
        panel = standardize_responses(panel)
    return panel


def estimate_factors(
    fit: InterceptFit,
    r: int | None = None,
    pi_max: int | None = None,
) -> tuple[GramSpectrum | None, LatentFactorFit, int | None]:
    """Latent fit on ``fit.resid_after_x``; ``r=None`` selects by eigenvalue ratio."""
    if r == 0:
        return None, fit_latent(fit.resid_after_x, 0), None
    spectrum = gram_eigen(fit.resid_after_x)
    r_hat = select_factor_count(spectrum, pi_max)
    used = r_hat if r is None else r
    return spectrum, fit_latent(fit.resid_after_x, used, spectrum), r_hat


def _split_fit(panel: PanelData, r: int | None, pi_max: int | None):
    # even periods estimate loadings and variances, odd periods carry the tests
    t = panel.n_periods
    even, odd = np.arange(0, t, 2), np.arange(1, t, 2)
    est_panel = PanelData(panel.responses[:, even], panel.covariates[even], panel.unit_ids)
    test_panel = PanelData(panel.responses[:, odd], panel.covariates[odd], panel.unit_ids)
    est_fit = fit_intercepts(est_panel)
    spectrum, est_latent, r_hat = estimate_factors(est_fit, r, pi_max)
    fit = fit_intercepts(test_panel)
    gam = est_latent.loadings
    if gam.shape[1]:
        scores = np.linalg.lstsq(gam, fit.resid_after_x.T, rcond=None)[0].T
    else:
        scores = np.zeros((test_panel.n_periods, 0))
    latent = LatentFactorFit(
        r_hat=est_latent.r_hat,
        scores=scores,
        loadings=gam,
        idio_resid=est_latent.idio_resid,
        sigma_eta_diag=est_latent.sigma_eta_diag,
        sigma_resid_diag=est_latent.sigma_resid_diag,
    )
    return fit, spectrum, latent, r_hat


def analyze(
    panel: PanelData,
    procedure: Procedure | str = Procedure.FAT,
    alpha: float | None = 0.05,
    lam: float = DEFAULT_LAMBDA,
    r: int | None = None,
    pi_max: int | None = None,
    t: float | None = None,
    split: bool = False,
) -> Analysis:
    """Run one procedure on a panel.

    Parameters
    ----------
    procedure : {"fat", "unadjusted", "pca-pfa"}
    alpha : float
        Nominal FDR level for the data-driven threshold. Ignored when ``t``
        is given.
    r : int, optional
        Latent factor count override; ``None`` uses the eigenvalue ratio.
    t : float, optional
        Fixed p-value threshold instead of the data-driven one.
    split : bool
        Estimate factors on even periods and test on odd periods.
    """
    procedure = Procedure(procedure)
    if procedure is Procedure.ORACLE_FAT:
        raise ValueError("the oracle procedure needs ground truth; use sim_lab")
    if split:
        fit, spectrum, latent, r_hat = _split_fit(panel, r, pi_max)
    else:
        fit = fit_intercepts(panel)
        if procedure is Procedure.UNADJUSTED:
            spectrum, latent, r_hat = None, fit_latent(fit.resid_after_x, 0), None
        else:
            spectrum, latent, r_hat = estimate_factors(fit, r, pi_max)

    if procedure is Procedure.FAT:
        battery = fat_battery(fit, latent)
    else:
        battery = unadjusted_battery(fit)

    if procedure is Procedure.PCA_PFA:
        if t is not None:
            rep = fixed_threshold(battery.p_values, t, lam, procedure)
            rep = replace(
                rep, lam=None, pi0_hat=None,
                fdr_hat=pfa_fdp_estimate(fit, latent, t, battery.p_values),
            )
        else:
            rep = pfa_threshold(fit, latent, alpha, battery.p_values)
    elif t is not None:
        rep = fixed_threshold(battery.p_values, t, lam, procedure)
    else:
        rep = storey_threshold(battery.p_values, alpha, lam, procedure)
    return Analysis(fit, spectrum, latent, r_hat, battery, rep)
