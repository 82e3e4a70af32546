"""Panel containers and CSV input/output.

Responses are stored on disk with periods as rows and units as columns
(T x N), which keeps files streamable when T is much smaller than N.
In memory, ``PanelData.responses`` is N x T.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np


class PanelError(ValueError):
    """Raised when panel files or arrays violate the input contract."""


@dataclass(frozen=True)
class PanelData:
    """Observed responses (N x T) and covariates (T x p)."""

    responses: np.ndarray
    covariates: np.ndarray
    unit_ids: tuple[str, ...] = ()
    period_ids: tuple[str, ...] = ()
    covariate_names: tuple[str, ...] = ()

    def __post_init__(self):
        y = np.array(self.responses, dtype=float, order="C")
        x = np.array(self.covariates, dtype=float, order="C")
        if y.ndim != 2:
            raise PanelError(f"responses must be 2-D, got shape {y.shape}")
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2:
            raise PanelError(f"covariates must be 2-D, got shape {x.shape}")
        n, t = y.shape
        if x.shape[0] != t:
            raise PanelError(
                f"dimension mismatch: responses have {t} periods, "
                f"covariates have {x.shape[0]}"
            )
        if n < 1:
            raise PanelError("panel needs at least one unit")
        p = x.shape[1]
        if t < p + 2:
            raise PanelError(f"need T >= p + 2, got T={t}, p={p}")
        if not np.all(np.isfinite(y)):
            raise PanelError("responses contain missing or non-finite values")
        if not np.all(np.isfinite(x)):
            raise PanelError("covariates contain missing or non-finite values")

        unit_ids = tuple(self.unit_ids) or tuple(f"u{i}" for i in range(n))
        period_ids = tuple(self.period_ids) or tuple(str(s) for s in range(t))
        names = tuple(self.covariate_names) or tuple(f"x{j}" for j in range(p))
        if len(unit_ids) != n:
            raise PanelError(f"{len(unit_ids)} unit ids for {n} units")
        if len(period_ids) != t:
            raise PanelError(f"{len(period_ids)} period ids for {t} periods")
        if len(names) != p:
            raise PanelError(f"{len(names)} covariate names for {p} columns")

        y.setflags(write=False)
        x.setflags(write=False)
        object.__setattr__(self, "responses", y)
        object.__setattr__(self, "covariates", x)
        object.__setattr__(self, "unit_ids", unit_ids)
        object.__setattr__(self, "period_ids", period_ids)
        object.__setattr__(self, "covariate_names", names)

    @property
    def n_units(self) -> int:
        return self.responses.shape[0]

    @property
    def n_periods(self) -> int:
        return self.responses.shape[1]

    @property
    def n_covariates(self) -> int:
        return self.covariates.shape[1]

    def window(self, start: int, stop: int) -> "PanelData":
        """Sub-panel of periods ``start:stop``."""
        return PanelData(
            self.responses[:, start:stop],
            self.covariates[start:stop],
            self.unit_ids,
            self.period_ids[start:stop],
            self.covariate_names,
        )


@dataclass(frozen=True)
class GroundTruth:
    """Simulation truth attached to a generated panel.

    ``latent_scores`` is T x r, ``latent_loadings`` N x r and
    ``idio_variances`` holds the diagonal of the idiosyncratic covariance.
    """

    intercepts: np.ndarray
    latent_scores: np.ndarray | None = None
    latent_loadings: np.ndarray | None = None
    idio_variances: np.ndarray | None = None
    nonnull_set: np.ndarray = field(init=False)
    null_set: np.ndarray = field(init=False)

    def __post_init__(self):
        mu = np.asarray(self.intercepts, dtype=float)
        object.__setattr__(self, "intercepts", mu)
        object.__setattr__(self, "nonnull_set", np.flatnonzero(mu != 0))
        object.__setattr__(self, "null_set", np.flatnonzero(mu == 0))

    @property
    def n_units(self) -> int:
        return self.intercepts.size

    @property
    def n_null(self) -> int:
        return self.null_set.size

    @property
    def n_nonnull(self) -> int:
        return self.nonnull_set.size


def normalize_covariates(panel: PanelData) -> PanelData:
    """Demean every covariate column; responses are left untouched."""
    x = panel.covariates
    centered = x - x.mean(axis=0)
    # a second pass removes the rounding residue of the first
    centered = centered - centered.mean(axis=0)
    return replace(panel, covariates=centered)


def standardize_responses(panel: PanelData) -> PanelData:
    """Scale each unit's responses to unit sample variance (opt-in)."""
    y = panel.responses
    sd = y.std(axis=1, keepdims=True)
    if np.any(sd == 0):
        bad = panel.unit_ids[int(np.flatnonzero(sd.ravel() == 0)[0])]
        raise PanelError(f"unit {bad!r} has zero variance; cannot standardize")
    return replace(panel, responses=y / sd)


def _read_table(path: Path) -> tuple[list[str], list[str], np.ndarray]:
    """Read a headered numeric CSV; returns (header, row labels, values).

    A first column named ``period``/``date``/``unit``/``id`` (case-insensitive)
    or holding non-numeric entries is treated as row labels.
    """
    path = Path(path)
    if not path.exists():
        raise PanelError(f"file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if len(rows) < 2:
        raise PanelError(f"{path}: need a header row and at least one data row")
    header, body = rows[0], rows[1:]
    width = len(header)
    for k, r in enumerate(body, start=2):
        if len(r) != width:
            raise PanelError(f"{path}:{k}: expected {width} fields, got {len(r)}")

    has_labels = header[0].strip().lower() in {"period", "date", "unit", "id", ""}
    if not has_labels:
        try:
            float(body[0][0])
        except ValueError:
            has_labels = True
    start = 1 if has_labels else 0
    labels = [r[0] for r in body] if has_labels else [str(i) for i in range(len(body))]

    values = np.empty((len(body), width - start))
    for k, r in enumerate(body):
        for j, cell in enumerate(r[start:]):
            try:
                v = float(cell)
            except ValueError:
                raise PanelError(
                    f"{path}:{k + 2}: non-numeric cell {cell!r} in column {header[j + start]!r}"
                ) from None
            if not np.isfinite(v):
                raise PanelError(
                    f"{path}:{k + 2}: non-numeric cell {cell!r} in column {header[j + start]!r}"
                )
            values[k, j] = v
    return [h.strip() for h in header[start:]], labels, values


def load_panel(responses_path, covariates_path, units_as_rows: bool = False) -> PanelData:
    """Load a panel from a responses CSV and a covariates CSV.

    Parameters
    ----------
    responses_path : path
        Periods as rows, one column per unit, header of unit ids. With
        ``units_as_rows=True`` the transpose is expected (header of period
        ids, one row per unit, first column the unit id).
    covariates_path : path
        T rows, one column per covariate, header of covariate names.
    """
    header, labels, values = _read_table(responses_path)
    if units_as_rows:
        unit_ids, period_ids, y = labels, header, values
    else:
        unit_ids, period_ids, y = header, labels, values.T

    x_names, x_periods, x = _read_table(covariates_path)
    if x.shape[0] != y.shape[1]:
        raise PanelError(
            f"dimension mismatch: responses have {y.shape[1]} periods, "
            f"covariates have {x.shape[0]}"
        )
    return PanelData(y, x, tuple(unit_ids), tuple(period_ids), tuple(x_names))


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_panel(panel: PanelData, responses_path, covariates_path) -> None:
    """Write a panel in the layout ``load_panel`` reads (periods as rows)."""
    with Path(responses_path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["period", *panel.unit_ids])
        for t, pid in enumerate(panel.period_ids):
            w.writerow([pid, *map(_fmt, panel.responses[:, t])])
    with Path(covariates_path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["period", *panel.covariate_names])
        for t, pid in enumerate(panel.period_ids):
            w.writerow([pid, *map(_fmt, panel.covariates[t])])
