"""Factor-adjusted multiple testing of intercepts in high-dimensional factor panels."""

__version__ = "0.1.0"

from .analysis import Analysis, analyze, estimate_factors, prepare
from .backtest import (
    BacktestConfig,
    BacktestReport,
    compare_strategies,
    rolling_select,
    run_backtest,
    strategy_return,
    synthetic_fund_panel,
)
from .battery import Procedure, TestBattery
from .latent import GramSpectrum, LatentFactorFit, fit_latent, gram_eigen, select_factor_count
from .panel_io import GroundTruth, PanelData, PanelError, load_panel, normalize_covariates, write_panel
from .regression import Annihilator, InterceptFit, fit_intercepts, unadjusted_battery
from .simulation import SimConfig, SimulationReport, find_alpha_T, generate_dataset, preset, run_replications
from .testing import (
    DecisionReport,
    confusion,
    consistent_threshold,
    estimate_pi0,
    fixed_threshold,
    fat_battery,
    fdr_estimate,
    oracle_battery,
    pfa_fdp_estimate,
    pfa_threshold,
    storey_threshold,
)
