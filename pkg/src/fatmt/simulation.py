"""Seeded Monte-Carlo lab for the three-factor intercept-testing design.

Random-number contract
----------------------
Replication ``k`` of a run with root seed ``s`` draws from
``numpy.random.default_rng(SeedSequence(s, spawn_key=(k,)))``, so every
replication has its own stream regardless of scheduling. Within a
replication the draws happen in this order: covariates X (T x 3),
covariate loadings beta (N x 3), latent scores Z (T x r), latent loadings
gamma (N x r), idiosyncratic innovations (T x N). Non-zero intercepts go
to the first N1 units and consume no randomness.
"""

from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from .analysis import estimate_factors
from .battery import Procedure
from .panel_io import GroundTruth, PanelData
from .regression import fit_intercepts, unadjusted_battery
from .testing import (
    DecisionReport,
    confusion,
    estimate_pi0,
    fat_battery,
    fixed_threshold,
    oracle_battery,
    pfa_fdp_estimate,
    pfa_threshold,
    storey_threshold,
)

ALL_PROCEDURES = (Procedure.UNADJUSTED, Procedure.FAT, Procedure.ORACLE_FAT, Procedure.PCA_PFA)
N_OBSERVED = 3


class ConfigError(ValueError):
    """Invalid simulation configuration; ``field`` names the offending key."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class SimConfig:
    """One simulation design.

    ``mode`` selects what each replication reports:

    ``"alpha"``
        data-driven threshold at level ``alpha``.
    ``"fixed_t"``
        rejection at the fixed p-value threshold ``t``, reporting the FDR
        (or PFA FDP) estimate there.
    ``"alpha_T"``
        the smallest level at which every non-null is rejected (FAT only).

    ``r_override`` fixes the number of latent factors used by the
    estimated procedures; ``None`` selects it by eigenvalue ratio.
    """

    n_units: int = 1000
    n_periods: int = 100
    pi0: float = 0.95
    mu_signal: float = 0.8
    n_latent: int = 1
    rho: float = 0.5
    lam: float = 0.1
    alpha: float = 0.01
    t: float = 0.01
    mode: str = "alpha"
    r_override: int | None = None
    pi_max: int | None = None
    n_reps: int = 100
    seed: int = 0
    procedures: tuple[str, ...] = tuple(p.value for p in ALL_PROCEDURES)

    def __post_init__(self):
        object.__setattr__(self, "procedures", tuple(Procedure(p).value for p in self.procedures))
        self.validate()

    def validate(self) -> None:
        def need(cond, name, msg):
            if not cond:
                raise ConfigError(name, msg)

        need(self.n_units >= 1, "n_units", "must be at least 1")
        need(self.n_periods >= N_OBSERVED + 3, "n_periods", f"must be at least {N_OBSERVED + 3}")
        need(0.0 <= self.pi0 <= 1.0, "pi0", f"must lie in [0, 1], got {self.pi0}")
        need(self.n_latent >= 0, "n_latent", "must be nonnegative")
        need(-1.0 < self.rho < 1.0, "rho", f"must lie in (-1, 1), got {self.rho}")
        need(0.0 <= self.lam < 1.0, "lam", f"must lie in [0, 1), got {self.lam}")
        need(0.0 < self.alpha < 1.0, "alpha", f"must lie in (0, 1), got {self.alpha}")
        need(0.0 <= self.t <= 1.0, "t", f"must lie in [0, 1], got {self.t}")
        need(self.mode in ("alpha", "fixed_t", "alpha_T"), "mode", f"unknown mode {self.mode!r}")
        need(self.n_reps >= 1, "n_reps", "must be at least 1")
        need(self.r_override is None or self.r_override >= 0, "r_override", "must be nonnegative")
        need(0 <= self.seed < 2**64, "seed", "must be a 64-bit unsigned integer")
        if self.mode == "alpha_T":
            need(self.n_nonnull >= 1, "pi0", "alpha_T search needs at least one non-null unit")

    @property
    def n_nonnull(self) -> int:
        return int(round(self.n_units * (1.0 - self.pi0)))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["procedures"] = list(self.procedures)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            key = sorted(unknown)[0]
            raise ConfigError(key, "unknown configuration key")
        d = dict(d)
        if "procedures" in d:
            d["procedures"] = tuple(d["procedures"])
        return cls(**d)


def replication_rng(seed: int, rep_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(rep_index,)))


def ar1_idiosyncratic(innovations: np.ndarray, rho: float) -> np.ndarray:
    """Map iid N(0,1) innovations (T x N) to rows with covariance ``rho**|i-j|``.

    This is the lower-triangular square root of the AR(1) correlation
    matrix applied along the unit axis: ``e_0 = xi_0`` and
    ``e_i = rho e_{i-1} + sqrt(1 - rho^2) xi_i``.
    """
    xi = np.array(innovations, dtype=float)
    if rho == 0.0:
        return xi
    c = math.sqrt(1.0 - rho * rho)
    xi[:, 0] /= c
    return lfilter([c], [1.0, -rho], xi, axis=1)


def generate_dataset(config: SimConfig, rep_index: int) -> tuple[PanelData, GroundTruth]:
    n, t, r = config.n_units, config.n_periods, config.n_latent
    rng = replication_rng(config.seed, rep_index)
    x = rng.standard_normal((t, N_OBSERVED))
    beta = rng.standard_normal((n, N_OBSERVED))
    z = rng.standard_normal((t, r))
    gamma = rng.standard_normal((n, r))
    eta = ar1_idiosyncratic(rng.standard_normal((t, n)), config.rho)

    mu = np.zeros(n)
    mu[: config.n_nonnull] = config.mu_signal
    y = mu[:, None] + beta @ x.T + gamma @ z.T + eta.T
    truth = GroundTruth(mu, latent_scores=z, latent_loadings=gamma, idio_variances=np.ones(n))
    return PanelData(y, x), truth


@dataclass(frozen=True)
class ReplicationRecord:
    config_index: int
    rep: int
    procedure: str
    r_used: int
    r_hat: int | None
    threshold: float
    fdr_hat: float
    n_rejected: int
    v: int
    s: int
    fdp: float
    power: float
    pi0_hat: float
    alpha_T: float = math.nan

    FIELDS = (
        "config_index", "rep", "procedure", "r_used", "r_hat", "threshold", "fdr_hat",
        "n_rejected", "v", "s", "fdp", "power", "pi0_hat", "alpha_T",
    )


def _record(ci, rep, proc, r_used, r_hat, report: DecisionReport, alpha_t=math.nan):
    return ReplicationRecord(
        config_index=ci,
        rep=rep,
        procedure=proc.value,
        r_used=r_used,
        r_hat=r_hat,
        threshold=report.threshold,
        fdr_hat=report.fdr_hat,
        n_rejected=report.r_of_t,
        v=report.v_of_t,
        s=report.s_of_t,
        fdp=report.fdp,
        power=math.nan if report.power is None else report.power,
        pi0_hat=math.nan if report.pi0_hat is None else report.pi0_hat,
        alpha_T=alpha_t,
    )


def alpha_T_search(p_values: np.ndarray, truth: GroundTruth, lam: float) -> tuple[float, DecisionReport]:
    """Smallest level whose data-driven threshold rejects every non-null.

    The candidate levels are the FDR estimates at the order statistics at
    or above the largest non-null p-value. Returns ``(nan, report at level
    1)`` when no level in [0, 1] achieves full power (censored).
    """
    p = np.asarray(p_values, dtype=float)
    n = p.size
    p_star = p[truth.nonnull_set].max()
    pi0 = estimate_pi0(p, lam)
    ps = np.sort(p)
    counts = np.searchsorted(ps, ps, side="right")
    fdr = n * pi0 * ps / np.maximum(counts, 1)
    cover = ps >= p_star
    level = float(fdr[cover].min())
    if level > 1.0:
        return math.nan, confusion(storey_threshold(p, 1.0 - 1e-15, lam), truth)
    return level, confusion(storey_threshold(p, level, lam), truth)


def _one_replication(args) -> list[ReplicationRecord]:
    config, ci, rep = args
    panel, truth = generate_dataset(config, rep)
    fit = fit_intercepts(panel)
    procs = [Procedure(p) for p in config.procedures]
    records = []

    need_latent = any(p in (Procedure.FAT, Procedure.PCA_PFA) for p in procs)
    if need_latent:
        _, latent, r_hat = estimate_factors(fit, config.r_override, config.pi_max)
        r_used = latent.r_hat
    r_hat_val = r_hat if need_latent else None

    for proc in procs:
        if config.mode == "alpha_T":
            if proc is not Procedure.FAT:
                continue
            battery = fat_battery(fit, latent)
            level, rep_ = alpha_T_search(battery.p_values, truth, config.lam)
            records.append(_record(ci, rep, proc, r_used, r_hat_val, rep_, level))
            continue

        if proc is Procedure.UNADJUSTED:
            p = unadjusted_battery(fit).p_values
            ru, rh = 0, None
        elif proc is Procedure.FAT:
            p = fat_battery(fit, latent).p_values
            ru, rh = r_used, r_hat_val
        elif proc is Procedure.ORACLE_FAT:
            p = oracle_battery(fit, truth).p_values
            ru, rh = config.n_latent, None
        else:
            p = unadjusted_battery(fit).p_values
            ru, rh = r_used, r_hat_val

        if config.mode == "fixed_t":
            report = fixed_threshold(p, config.t, config.lam, proc)
            if proc is Procedure.PCA_PFA:
                report = dataclasses.replace(
                    report, lam=None, pi0_hat=None,
                    fdr_hat=pfa_fdp_estimate(fit, latent, config.t, p),
                )
        elif proc is Procedure.PCA_PFA:
            report = pfa_threshold(fit, latent, config.alpha, p)
        else:
            report = storey_threshold(p, config.alpha, config.lam, proc)
        records.append(_record(ci, rep, proc, ru, rh, confusion(report, truth)))
    return records


def _num(v) -> float:
    return math.nan if v is None else float(v)


@dataclass
class SimulationReport:
    configs: list[SimConfig]
    records: list[ReplicationRecord] = field(default_factory=list)

    def select(self, procedure: str | Procedure | None = None, config_index: int | None = None):
        out = self.records
        if procedure is not None:
            out = [r for r in out if r.procedure == Procedure(procedure).value]
        if config_index is not None:
            out = [r for r in out if r.config_index == config_index]
        return out

    def column(self, name: str, procedure=None, config_index=None) -> np.ndarray:
        return np.array(
            [_num(getattr(r, name)) for r in self.select(procedure, config_index)], dtype=float
        )

    def summary(self) -> list[dict]:
        """Mean and Monte-Carlo standard error per (config, procedure)."""
        rows = []
        keys = ("fdp", "power", "fdr_hat", "threshold", "r_hat", "n_rejected", "alpha_T")
        for ci, cfg in enumerate(self.configs):
            for proc in cfg.procedures:
                recs = self.select(proc, ci)
                if not recs:
                    continue
                row = {"config_index": ci, "procedure": proc, "n_reps": len(recs)}
                for k in keys:
                    vals = np.array([_num(getattr(r, k)) for r in recs], dtype=float)
                    vals = vals[np.isfinite(vals)]
                    if vals.size == 0:
                        row[f"mean_{k}"] = None
                        row[f"se_{k}"] = None
                        continue
                    row[f"mean_{k}"] = float(vals.mean())
                    row[f"se_{k}"] = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0
                rows.append(row)
        return rows


class ReplicationError(RuntimeError):
    def __init__(self, config_index: int, rep: int, cause: BaseException):
        super().__init__(f"replication {rep} of config {config_index} failed: {cause}")
        self.config_index = config_index
        self.rep = rep


def _guarded(args):
    try:
        return _one_replication(args)
    except Exception as exc:  # re-raised with the replication index attached
        raise ReplicationError(args[1], args[2], exc) from exc


def run_replications(
    configs: SimConfig | list[SimConfig],
    procedures=None,
    workers: int = 1,
) -> SimulationReport:
    """Run every replication of every config; output order is fixed by index.

    A failing replication aborts the run with :class:`ReplicationError`.
    """
    if isinstance(configs, SimConfig):
        configs = [configs]
    if procedures is not None:
        configs = [dataclasses.replace(c, procedures=tuple(procedures)) for c in configs]
    tasks = [(c, ci, rep) for ci, c in enumerate(configs) for rep in range(c.n_reps)]
    report = SimulationReport(list(configs))
    if workers <= 1:
        for task in tasks:
            report.records.extend(_guarded(task))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for recs in pool.map(_guarded, tasks, chunksize=max(1, len(tasks) // (4 * workers))):
                report.records.extend(recs)
    return report


def find_alpha_T(config: SimConfig, workers: int = 1) -> dict:
    """Average alpha_T, its threshold, FDP and power across replications."""
    cfg = dataclasses.replace(config, mode="alpha_T", procedures=(Procedure.FAT.value,))
    rep = run_replications(cfg, workers=workers)
    a = rep.column("alpha_T")
    return {
        "alpha_T": float(np.nanmean(a)) if np.any(np.isfinite(a)) else math.nan,
        "threshold": float(rep.column("threshold").mean()),
        "fdp": float(rep.column("fdp").mean()),
        "power": float(rep.column("power").mean()),
        "n_censored": int(np.count_nonzero(~np.isfinite(a))),
        "report": rep,
    }


def preset(name: str, n_reps: int = 100, seed: int = 0) -> list[SimConfig]:
    """Experiment designs: ``fig1``, ``fig2``, ``fig3``, ``fig4``, ``table1``."""
    base = dict(n_units=1000, n_periods=100, pi0=0.95, rho=0.5, lam=0.1, n_reps=n_reps, seed=seed)
    if name == "fig1":
        return [
            SimConfig(**base, mu_signal=0.8, n_latent=1, mode="fixed_t", t=0.01, r_override=r,
                      procedures=("fat", "pca-pfa", "oracle", "unadjusted"))
            for r in range(6)
        ]
    if name == "fig2":
        return [
            SimConfig(**base, mu_signal=0.8, n_latent=r, mode="fixed_t", t=0.01, procedures=("fat",))
            for r in range(1, 11)
        ]
    if name == "fig3":
        return [SimConfig(**base, mu_signal=mu, mode="fixed_t", t=0.01) for mu in (0.4, 0.8, 1.2)]
    if name == "fig4":
        return [SimConfig(**base, mu_signal=0.8, mode="alpha", alpha=0.01)]
    if name == "table1":
        b = dict(base, pi0=0.995)
        return [
            SimConfig(**{**b, "n_periods": t}, mu_signal=1.0, mode="alpha_T", procedures=("fat",))
            for t in (32, 36, 40, 44, 48, 52, 56, 60)
        ]
    raise ConfigError("preset", f"unknown preset {name!r}")


PRESETS = ("fig1", "fig2", "fig3", "fig4", "table1")
