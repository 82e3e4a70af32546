"""Command-line front end: ``fatmt simulate | analyze | backtest``.

Options resolve as defaults < JSON config file < explicit flags. A config
file is a flat object with dotted keys (``"simulate.alpha": 0.05``) or a
``manifest.json`` from an earlier run, which replays that run.

Exit codes: 0 success, 2 invalid configuration or input, 3 runtime failure.
The default output directory comes from ``$FATMT_OUTPUT_DIR`` (else
``./fatmt-out``).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import analyze, prepare
from .backtest import BacktestConfig, compare_strategies, run_backtest
from .panel_io import PanelError, load_panel
from .regression import RankDeficientError
from .simulation import (
    PRESETS,
    ConfigError,
    ReplicationError,
    ReplicationRecord,
    SimConfig,
    preset,
    run_replications,
)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3
OUTPUT_ENV = "FATMT_OUTPUT_DIR"

SIM_FIELDS = {f.name for f in dataclasses.fields(SimConfig)}

DEFAULTS = {
    "simulate": {
        "preset": None, "workers": 1,
        **{k: v for k, v in SimConfig().to_dict().items()},
    },
    "analyze": {
        "responses": None, "covariates": None, "procedure": "fat", "alpha": 0.05, "lam": 0.1,
        "r": None, "pi_max": None, "t": None, "units_as_rows": False, "standardize": False,
        "center_covariates": False, "split": False,
    },
    "backtest": {
        "returns": None, "market": None, "window_length": 120, "fdr_level": 0.2,
        "procedure": "fat", "lam": 0.1, "short_leg_sign": "plus", "pi_max": None,
        "units_as_rows": False, "workers": 1,
    },
}


class UsageError(Exception):
    pass


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g") if np.isfinite(v) else ""
    return str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        obj = float(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _load_config_file(path: str, command: str) -> dict:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {path} is not valid JSON: {exc}") from None
    if isinstance(data, dict) and "config" in data and "command" in data:
        if data["command"] != command:
            raise UsageError(f"manifest is for {data['command']!r}, not {command!r}")
        data = data["config"]
    if not isinstance(data, dict):
        raise UsageError("config file must hold a JSON object")
    out = {}
    for key, value in data.items():
        section, _, name = key.rpartition(".")
        if section and section != command:
            continue
        if name not in DEFAULTS[command]:
            raise UsageError(f"{key}: unknown configuration key")
        out[name] = value
    return out


def _explicit(args: argparse.Namespace, command: str) -> dict:
    explicit = {}
    if getattr(args, "config", None):
        explicit.update(_load_config_file(args.config, command))
    for name in DEFAULTS[command]:
        v = getattr(args, name, None)
        if v is not None:
            explicit[name] = v
    return explicit


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get(OUTPUT_ENV, "fatmt-out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out: Path, command: str, config: dict, seed, inputs: dict, started: float, extra=None):
    manifest = {
        "command": command,
        "config": {f"{command}.{k}": v for k, v in sorted(config.items())},
        "seed": seed,
        "version": __version__,
        "inputs": {name: {"path": str(p), "sha256": _sha256(p)} for name, p in inputs.items()},
        "duration_seconds": time.perf_counter() - started,
    }
    if extra:
        manifest.update(extra)
    _dump_json(out / "manifest.json", manifest)


# ---------------------------------------------------------------- simulate


def _sim_configs(explicit: dict) -> list[SimConfig]:
    fields = {k: v for k, v in explicit.items() if k in SIM_FIELDS}
    if "procedures" in fields and isinstance(fields["procedures"], str):
        fields["procedures"] = tuple(s.strip() for s in fields["procedures"].split(",") if s.strip())
    if "procedures" in fields:
        fields["procedures"] = tuple(fields["procedures"])
    try:
        name = explicit.get("preset")
        if name:
            base = preset(name, n_reps=fields.get("n_reps", 100), seed=fields.get("seed", 0))
            return [dataclasses.replace(c, **fields) for c in base]
        return [SimConfig(**fields)]
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError("procedures", str(exc)) from None


SIM_CSV_FIELDS = ("config_index", "mu_signal", "n_periods", "n_latent") + ReplicationRecord.FIELDS[1:]


def cmd_simulate(args) -> int:
    started = time.perf_counter()
    explicit = _explicit(args, "simulate")
    configs = _sim_configs(explicit)
    workers = int(explicit.get("workers", 1))
    report = run_replications(configs, workers=workers)

    out = _out_dir(args)
    with (out / "replications.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SIM_CSV_FIELDS)
        for rec in report.records:
            cfg = configs[rec.config_index]
            row = [rec.config_index, cfg.mu_signal, cfg.n_periods, cfg.n_latent]
            row += [getattr(rec, f) for f in ReplicationRecord.FIELDS[1:]]
            w.writerow([_fmt(v) for v in row])
    _dump_json(out / "summary.json", {
        "preset": explicit.get("preset"),
        "configs": [c.to_dict() for c in configs],
        "summary": report.summary(),
    })
    explicit.pop("workers", None)
    _write_manifest(
        out, "simulate", explicit, configs[0].seed,
        {"config": args.config} if args.config else {}, started,
        extra={"resolved_configs": [c.to_dict() for c in configs], "workers": workers},
    )
    print(f"wrote {len(report.records)} replication records to {out}")
    return EXIT_OK


# ----------------------------------------------------------------- analyze


def _check_file(path, what):
    if not path:
        raise UsageError(f"--{what} is required")
    if not Path(path).is_file():
        raise UsageError(f"{what} file not found: {path}")


def cmd_analyze(args) -> int:
    started = time.perf_counter()
    opts = {**DEFAULTS["analyze"], **_explicit(args, "analyze")}
    _check_file(opts["responses"], "responses")
    _check_file(opts["covariates"], "covariates")
    if not 0 < opts["alpha"] < 1:
        raise ConfigError("alpha", f"must lie in (0, 1), got {opts['alpha']}")
    if not 0 <= opts["lam"] < 1:
        raise ConfigError("lam", f"must lie in [0, 1), got {opts['lam']}")
    panel = load_panel(opts["responses"], opts["covariates"], units_as_rows=opts["units_as_rows"])
    panel = prepare(panel, opts["center_covariates"], opts["standardize"])
    res = analyze(
        panel,
        procedure=opts["procedure"],
        alpha=opts["alpha"],
        lam=opts["lam"],
        r=opts["r"],
        pi_max=opts["pi_max"],
        t=opts["t"],
        split=opts["split"],
    )

    out = _out_dir(args)
    rejected = np.zeros(panel.n_units, dtype=bool)
    rejected[res.report.rejected] = True
    mu = res.fit.mu_hat
    with (out / "units.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["unit_id", "mu_hat", "statistic", "p_value", "rejected", "sign"])
        for i, uid in enumerate(panel.unit_ids):
            sign = ("+" if mu[i] > 0 else "-") if rejected[i] else ""
            w.writerow([uid, _fmt(mu[i]), _fmt(res.battery.statistics[i]),
                        _fmt(res.battery.p_values[i]), _fmt(bool(rejected[i])), sign])
    rep = res.report
    _dump_json(out / "summary.json", {
        "procedure": rep.procedure.value,
        "n_units": panel.n_units,
        "n_periods": panel.n_periods,
        "r_hat": res.r_hat,
        "r_used": res.latent.r_hat,
        "pi0_hat": rep.pi0_hat,
        "pi0_hat_display": None if rep.pi0_hat is None else min(rep.pi0_hat, 1.0),
        "threshold": rep.threshold,
        "fdr_hat": rep.fdr_hat,
        "fdr_hat_display": min(rep.fdr_hat, 1.0),
        "alpha": rep.alpha,
        "lambda": rep.lam,
        "n_rejected": rep.r_of_t,
        "n_positive": int(res.positive.size),
        "n_negative": int(res.negative.size),
    })
    _write_manifest(
        out, "analyze", {k: v for k, v in opts.items()}, None,
        {"responses": opts["responses"], "covariates": opts["covariates"]}, started,
    )
    print(f"{rep.r_of_t} of {panel.n_units} units rejected; results in {out}")
    return EXIT_OK


# ---------------------------------------------------------------- backtest


def cmd_backtest(args) -> int:
    started = time.perf_counter()
    opts = {**DEFAULTS["backtest"], **_explicit(args, "backtest")}
    _check_file(opts["returns"], "returns")
    _check_file(opts["market"], "market")
    panel = load_panel(opts["returns"], opts["market"], units_as_rows=opts["units_as_rows"])
    L = int(opts["window_length"])
    if L >= panel.n_periods:
        raise ConfigError("window_length", f"{L} must be below the number of periods {panel.n_periods}")
    if L < panel.n_covariates + 3:
        raise ConfigError("window_length", f"{L} must be at least p + 3 = {panel.n_covariates + 3}")
    try:
        base = BacktestConfig(
            window_length=L, fdr_level=opts["fdr_level"], procedure=opts["procedure"],
            lam=opts["lam"], short_leg_sign=opts["short_leg_sign"], pi_max=opts["pi_max"],
        )
    except ValueError as exc:
        raise ConfigError("backtest", str(exc)) from None
    workers = int(opts["workers"])
    fat = run_backtest(panel, dataclasses.replace(base, procedure="fat"), workers)
    unadj = run_backtest(panel, dataclasses.replace(base, procedure="unadjusted"), workers)
    primary = fat if base.procedure == "fat" else unadj

    out = _out_dir(args)
    with (out / "windows.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tau", "r_adj", "r_unadj", "r_diff", "d_tau", "n_pos", "n_neg",
                    "n_pos_fat", "n_neg_fat", "n_pos_unadj", "n_neg_unadj", "flagged"])
        for k, (wf, wu) in enumerate(zip(fat.windows, unadj.windows)):
            wp = primary.windows[k]
            w.writerow([_fmt(v) for v in (
                wf.tau, fat.returns[k], unadj.returns[k], fat.returns[k] - unadj.returns[k],
                wf.d_tau, wp.positive.size, wp.negative.size, wf.positive.size,
                wf.negative.size, wu.positive.size, wu.negative.size, wf.flagged or wu.flagged,
            )])
    summary = {"procedure": base.procedure, "window_length": L, "fdr_level": base.fdr_level,
               "short_leg_sign": base.short_leg_sign, "n_units": panel.n_units,
               "n_periods": panel.n_periods, **primary.aggregates(),
               "fat": fat.aggregates(), "unadjusted": unadj.aggregates()}
    if len(fat.windows) >= 3:
        cmp_ = compare_strategies(fat, unadj)
        summary["comparison"] = dataclasses.asdict(cmp_)
    else:
        summary["comparison"] = None
    _dump_json(out / "summary.json", summary)
    opts["workers"] = workers
    _write_manifest(out, "backtest", opts, None,
                    {"returns": opts["returns"], "market": opts["market"]}, started)
    print(f"{len(fat.windows)} windows written to {out}")
    return EXIT_OK


# ------------------------------------------------------------------ parser


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON config file or manifest to replay")
    p.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or ./fatmt-out)")
    p.add_argument("--show-config", action="store_true", help="print defaults and exit")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fatmt", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="Monte-Carlo experiments")
    _common(s)
    s.add_argument("--preset", choices=PRESETS)
    s.add_argument("--reps", dest="n_reps", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--workers", type=int)
    s.add_argument("--n-units", dest="n_units", type=int)
    s.add_argument("--n-periods", dest="n_periods", type=int)
    s.add_argument("--pi0", type=float)
    s.add_argument("--mu", dest="mu_signal", type=float)
    s.add_argument("--n-latent", dest="n_latent", type=int)
    s.add_argument("--rho", type=float)
    s.add_argument("--lambda", dest="lam", type=float)
    s.add_argument("--alpha", type=float)
    s.add_argument("--t", type=float)
    s.add_argument("--mode", choices=("alpha", "fixed_t", "alpha_T"))
    s.add_argument("--r", dest="r_override", type=int)
    s.add_argument("--pi-max", dest="pi_max", type=int)
    s.add_argument("--procedures", help="comma list of unadjusted,fat,oracle,pca-pfa")
    s.set_defaults(func=cmd_simulate)

    a = sub.add_parser("analyze", help="test every unit's intercept in a CSV panel")
    _common(a)
    a.add_argument("--responses")
    a.add_argument("--covariates")
    a.add_argument("--procedure", choices=("fat", "unadjusted", "pca-pfa"))
    a.add_argument("--alpha", type=float)
    a.add_argument("--lambda", dest="lam", type=float)
    a.add_argument("--r", type=int)
    a.add_argument("--pi-max", dest="pi_max", type=int)
    a.add_argument("--t", type=float)
    a.add_argument("--units-as-rows", dest="units_as_rows", action="store_const", const=True)
    a.add_argument("--standardize", action="store_const", const=True)
    a.add_argument("--center-covariates", dest="center_covariates", action="store_const", const=True)
    a.add_argument("--split", action="store_const", const=True)
    a.set_defaults(func=cmd_analyze)

    b = sub.add_parser("backtest", help="rolling-window fund selection")
    _common(b)
    b.add_argument("--returns")
    b.add_argument("--market")
    b.add_argument("--window", "--L", dest="window_length", type=int)
    b.add_argument("--fdr-level", dest="fdr_level", type=float)
    b.add_argument("--procedure", choices=("fat", "unadjusted"))
    b.add_argument("--lambda", dest="lam", type=float)
    b.add_argument("--short-leg-sign", dest="short_leg_sign", choices=("plus", "minus"))
    b.add_argument("--pi-max", dest="pi_max", type=int)
    b.add_argument("--units-as-rows", dest="units_as_rows", action="store_const", const=True)
    b.add_argument("--workers", type=int)
    b.set_defaults(func=cmd_backtest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.show_config:
        print(json.dumps({f"{args.command}.{k}": v for k, v in DEFAULTS[args.command].items()},
                         indent=2, sort_keys=True))
        return EXIT_OK
    try:
        return args.func(args)
    except (UsageError, ConfigError, PanelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ReplicationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (RankDeficientError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
