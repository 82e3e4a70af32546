"""Rolling-window fund selection and strategy-return comparison.

Window ``tau`` (1-based) fits on periods ``tau .. tau+L-1`` and realizes
the equal-weighted return of its selections at period ``tau+L``. The FDR
level is called ``fdr_level`` here to keep it apart from factor loadings.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .analysis import analyze
from .battery import Procedure
from .panel_io import GroundTruth, PanelData
from .regression import RankDeficientError


@dataclass(frozen=True)
class BacktestConfig:
    window_length: int = 120
    fdr_level: float = 0.20
    procedure: str = "fat"
    lam: float = 0.1
    short_leg_sign: str = "plus"
    pi_max: int | None = None

    def __post_init__(self):
        if Procedure(self.procedure) not in (Procedure.FAT, Procedure.UNADJUSTED):
            raise ValueError(f"backtest procedure must be fat or unadjusted, got {self.procedure!r}")
        if self.short_leg_sign not in ("plus", "minus"):
            raise ValueError(f"short_leg_sign must be 'plus' or 'minus', got {self.short_leg_sign!r}")
        if not 0 < self.fdr_level < 1:
            raise ValueError(f"fdr_level must lie in (0, 1), got {self.fdr_level}")
        if self.window_length < 1:
            raise ValueError("window_length must be positive")


@dataclass(frozen=True)
class WindowSelection:
    tau: int
    d_tau: int | None
    positive: np.ndarray
    negative: np.ndarray
    flagged: bool = False


@dataclass
class BacktestReport:
    config: BacktestConfig
    n_units: int
    windows: list[WindowSelection] = field(default_factory=list)
    returns: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def taus(self) -> np.ndarray:
        return np.array([w.tau for w in self.windows], dtype=int)

    def aggregates(self) -> dict:
        if not self.windows:
            return {"n_windows": 0, "mean_d": None, "mean_pos_frac": None,
                    "mean_neg_frac": None, "mean_return": None, "n_flagged": 0}
        d = [w.d_tau for w in self.windows if w.d_tau is not None]
        return {
            "n_windows": len(self.windows),
            "mean_d": float(np.mean(d)) if d else None,
            "mean_pos_frac": float(np.mean([w.positive.size for w in self.windows])) / self.n_units,
            "mean_neg_frac": float(np.mean([w.negative.size for w in self.windows])) / self.n_units,
            "mean_return": float(self.returns.mean()),
            "n_flagged": sum(w.flagged for w in self.windows),
        }


def _check_window(panel: PanelData, config: BacktestConfig) -> None:
    L = config.window_length
    if L < panel.n_covariates + 3:
        raise ValueError(f"window_length {L} must be at least p + 3 = {panel.n_covariates + 3}")
    if L >= panel.n_periods:
        raise ValueError(f"window_length {L} must be below the number of periods {panel.n_periods}")


def _select_window(args) -> WindowSelection:
    panel, config, start = args
    L = config.window_length
    sub = panel.window(start, start + L)
    try:
        res = analyze(
            sub,
            procedure=config.procedure,
            alpha=config.fdr_level,
            lam=config.lam,
            pi_max=config.pi_max,
        )
    except RankDeficientError:
        empty = np.array([], dtype=int)
        return WindowSelection(start + 1, None, empty, empty, flagged=True)
    return WindowSelection(start + 1, res.r_hat, res.positive, res.negative)


def rolling_select(panel: PanelData, config: BacktestConfig, workers: int = 1) -> list[WindowSelection]:
    """Selections for every window ``tau = 1 .. T - L``."""
    L = config.window_length
    if L >= panel.n_periods:
        return []
    _check_window(panel, config)
    tasks = [(panel, config, s) for s in range(panel.n_periods - L)]
    if workers <= 1:
        return [_select_window(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_select_window, tasks))


def strategy_return(
    selection: WindowSelection,
    panel: PanelData,
    window_length: int,
    short_leg_sign: str = "plus",
) -> float:
    """Equal-weight return of the window's selections one period after it ends.

    With ``short_leg_sign="plus"`` the two leg means are added; ``"minus"``
    gives the long-minus-short return. An empty leg contributes 0.
    """
    col = selection.tau - 1 + window_length
    if col >= panel.n_periods:
        raise ValueError(f"window {selection.tau} has no realization period")
    y = panel.responses[:, col]
    long_leg = float(y[selection.positive].mean()) if selection.positive.size else 0.0
    short_leg = float(y[selection.negative].mean()) if selection.negative.size else 0.0
    if short_leg_sign == "minus":
        return long_leg - short_leg
    return long_leg + short_leg


def run_backtest(panel: PanelData, config: BacktestConfig, workers: int = 1) -> BacktestReport:
    windows = rolling_select(panel, config, workers)
    rets = np.array(
        [strategy_return(w, panel, config.window_length, config.short_leg_sign) for w in windows]
    )
    return BacktestReport(config, panel.n_units, windows, rets)


@dataclass(frozen=True)
class Comparison:
    mean_diff: float
    t_stat: float
    p_value: float
    n_windows: int
    degenerate: bool = False


def compare_strategies(report_a: BacktestReport | np.ndarray, report_b: BacktestReport | np.ndarray) -> Comparison:
    """One-sample location test on the per-window return difference a - b.

    Uses the normal reference ``2 Phi(-|t|)``. A zero-variance difference
    series (up to rounding) is flagged degenerate, with p-value 1 if the mean is 0 and 0
    otherwise.
    """
    if isinstance(report_a, BacktestReport) and isinstance(report_b, BacktestReport):
        if not np.array_equal(report_a.taus, report_b.taus):
            raise ValueError("strategies are not aligned on the same windows")
    ra = report_a.returns if isinstance(report_a, BacktestReport) else np.asarray(report_a, float)
    rb = report_b.returns if isinstance(report_b, BacktestReport) else np.asarray(report_b, float)
    if ra.shape != rb.shape:
        raise ValueError("strategies are not aligned on the same windows")
    n = ra.size
    if n < 3:
        raise ValueError(f"need at least 3 aligned windows, got {n}")
    diff = ra - rb
    mean = float(diff.mean())
    sd = float(diff.std(ddof=1))
    # rounding noise on a constant series counts as zero spread
    if sd <= 1e-12 * float(np.abs(diff).max(initial=0.0)) or sd == 0.0:
        if np.all(diff == 0.0):
            return Comparison(0.0, 0.0, 1.0, n, degenerate=True)
        return Comparison(mean, math.copysign(math.inf, mean), 0.0, n, degenerate=True)
    t_stat = mean / (sd / math.sqrt(n))
    return Comparison(mean, t_stat, float(2.0 * ndtr(-abs(t_stat))), n)


def synthetic_fund_panel(
    n_units: int = 767,
    n_periods: int = 215,
    n_skilled: int = 5,
    n_unskilled: int = 0,
    alpha_size: float = 1.0,
    n_latent: int = 2,
    rho: float = 0.5,
    seed: int = 0,
) -> tuple[PanelData, GroundTruth]:
    """SYNTHETIC excess-return panel with a single market factor.

    Returns follow ``mu_i + beta_i m_t + gamma_i' z_t + eta_it`` with
    standard-normal market, loadings and latent factors and AR(1)
    cross-unit correlated noise. The first ``n_skilled`` units get
    ``+alpha_size`` and the next ``n_unskilled`` get ``-alpha_size``.
    Not real fund data.
    """
    from .simulation import ar1_idiosyncratic

    rng = np.random.default_rng(seed)
    market = rng.standard_normal((n_periods, 1))
    beta = rng.standard_normal((n_units, 1))
    z = rng.standard_normal((n_periods, n_latent))
    gamma = rng.standard_normal((n_units, n_latent))
    eta = ar1_idiosyncratic(rng.standard_normal((n_periods, n_units)), rho)
    mu = np.zeros(n_units)
    mu[:n_skilled] = alpha_size
    mu[n_skilled : n_skilled + n_unskilled] = -alpha_size
    y = mu[:, None] + beta @ market.T + gamma @ z.T + eta.T
    panel = PanelData(
        y,
        market,
        unit_ids=tuple(f"fund{i:04d}" for i in range(n_units)),
        period_ids=tuple(f"t{t:04d}" for t in range(n_periods)),
        covariate_names=("mkt_rf",),
    )
    truth = GroundTruth(mu, latent_scores=z, latent_loadings=gamma, idio_variances=np.ones(n_units))
    return panel, truth
