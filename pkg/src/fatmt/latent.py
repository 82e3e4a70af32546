"""Principal-component extraction of latent factors from residual panels."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# eigenvalues below this fraction of the largest are treated as exact zeros
ZERO_EIG_TOL = 1e-12


@dataclass(frozen=True)
class GramSpectrum:
    """Eigen-decomposition of the T x T Gram matrix ``R R' / (T N)``.

    Eigenvalues are sorted in descending order; each eigenvector column is
    signed so that its largest-magnitude entry is positive.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def n_periods(self) -> int:
        return self.eigenvalues.size


@dataclass(frozen=True)
class LatentFactorFit:
    r_hat: int
    scores: np.ndarray
    loadings: np.ndarray
    idio_resid: np.ndarray
    sigma_eta_diag: np.ndarray
    sigma_resid_diag: np.ndarray

    @property
    def common_component(self) -> np.ndarray:
        """Fitted ``Z gamma'`` (T x N)."""
        return self.scores @ self.loadings.T


def gram_eigen(resid_after_x: np.ndarray) -> GramSpectrum:
    """Spectrum of the residual Gram matrix across periods.

    Parameters
    ----------
    resid_after_x : array of shape (T, N)
        Residuals after removing the observed covariates.
    """
    r = np.asarray(resid_after_x, dtype=float)
    if r.ndim != 2:
        raise ValueError(f"expected a T x N matrix, got shape {r.shape}")
    t, n = r.shape
    if t < 2:
        raise ValueError("need at least two periods")
    if not np.all(np.isfinite(r)):
        raise ValueError("residuals contain non-finite entries")

    gram = (r @ r.T) / (t * n)
    evals, evecs = np.linalg.eigh(gram)
    evals = evals[::-1].copy()
    evecs = evecs[:, ::-1].copy()

    top = evals[0] if evals[0] > 0 else 0.0
    evals[evals <= ZERO_EIG_TOL * top] = 0.0

    pivot = np.argmax(np.abs(evecs), axis=0)
    signs = np.sign(evecs[pivot, np.arange(t)])
    signs[signs == 0] = 1.0
    evecs *= signs
    return GramSpectrum(evals, evecs)


def default_pi_max(n_periods: int) -> int:
    return max(1, min(15, n_periods // 2))


def select_factor_count(spectrum: GramSpectrum, pi_max: int | None = None) -> int:
    """Eigenvalue-ratio choice of the latent factor count.

    Returns the ``j <= pi_max`` maximising ``lambda_j / lambda_{j+1}``
    (1-based), with ties going to the smaller ``j``. Ratios whose
    denominator is zero are skipped.
    """
    lam = spectrum.eigenvalues
    t = lam.size
    if pi_max is None:
        pi_max = default_pi_max(t)
    if not 1 <= pi_max <= t - 1:
        raise ValueError(f"pi_max must lie in [1, {t - 1}], got {pi_max}")

    num = lam[:pi_max]
    den = lam[1 : pi_max + 1]
    defined = den > 0
    if not np.any(defined):
        raise ValueError("degenerate spectrum: every eigenvalue ratio is undefined")
    ratios = np.full(pi_max, -np.inf)
    ratios[defined] = num[defined] / den[defined]
    return int(np.argmax(ratios)) + 1


def fit_latent(
    resid_after_x: np.ndarray,
    r: int,
    spectrum: GramSpectrum | None = None,
) -> LatentFactorFit:
    """Scores, loadings and idiosyncratic residuals for ``r`` factors.

    ``scores = sqrt(T) * (top r eigenvectors)``, loadings are the OLS
    coefficients of each unit's residual series on the scores, and the
    idiosyncratic part is what the scores leave behind. ``r = 0`` passes
    the residuals through unchanged.
    """
    res = np.asarray(resid_after_x, dtype=float)
    t, n = res.shape
    r = int(r)
    if r < 0 or (r > 0 and r > min(t, n) - 1):
        raise ValueError(f"factor count {r} outside [0, {min(t, n) - 1}]")

    sigma_resid = np.einsum("ti,ti->i", res, res) / t
    if r == 0:
        return LatentFactorFit(
            r_hat=0,
            scores=np.zeros((t, 0)),
            loadings=np.zeros((n, 0)),
            idio_resid=res.copy(),
            sigma_eta_diag=sigma_resid.copy(),
            sigma_resid_diag=sigma_resid,
        )

    if spectrum is None:
        spectrum = gram_eigen(res)
    scores = np.sqrt(t) * spectrum.eigenvectors[:, :r]
    loadings = np.linalg.solve(scores.T @ scores, scores.T @ res).T
    idio = res - scores @ loadings.T
    sigma_eta = np.einsum("ti,ti->i", idio, idio) / t
    return LatentFactorFit(
        r_hat=r,
        scores=scores,
        loadings=loadings,
        idio_resid=idio,
        sigma_eta_diag=sigma_eta,
        sigma_resid_diag=sigma_resid,
    )
