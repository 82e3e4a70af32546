"""Per-unit test statistics tagged with the procedure that produced them."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class Procedure(str, enum.Enum):
    UNADJUSTED = "unadjusted"
    FAT = "fat"
    ORACLE_FAT = "oracle"
    PCA_PFA = "pca-pfa"


@dataclass(frozen=True)
class TestBattery:
    """Statistics and two-sided normal p-values for one procedure."""

    __test__ = False  # keep pytest from collecting this

    procedure: Procedure
    statistics: np.ndarray
    p_values: np.ndarray

    def __post_init__(self):
        stat = np.asarray(self.statistics, dtype=float)
        p = np.asarray(self.p_values, dtype=float)
        if stat.shape != p.shape:
            raise ValueError("statistics and p_values differ in shape")
        if not (np.all(np.isfinite(stat)) and np.all(np.isfinite(p))):
            raise ValueError("battery contains non-finite entries")
        object.__setattr__(self, "statistics", stat)
        object.__setattr__(self, "p_values", p)

    def __len__(self) -> int:
        return self.p_values.size
