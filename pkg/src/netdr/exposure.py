"""Exposure mappings: coarse treatment summaries of a unit's neighborhood.

An exposure value is defined by three conditions on unit i: its own
treatment arm, the number of treated neighbors falling in a window, and its
degree falling in a window. Windows are closed intervals with possibly
infinite endpoints, so "exactly two treated neighbors" is the window
[1.5, 2.5] (or [2, 2]) and "any degree" is [0, inf). Everything a unit's
exposure depends on lives within one hop, which is what makes neighborhood
based nuisance models well posed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graph import Graph

__all__ = [
    "ExposureSpec",
    "treatment_arm",
    "treated_neighbor_count",
    "indicator",
    "degree_eligible",
]


@dataclass(frozen=True)
class ExposureSpec:
    """One exposure value.

    ``arm`` is the unit's own treatment (0 or 1); ``neighbor_treated`` and
    ``degree`` are closed [lo, hi] windows for the treated-neighbor count and
    the degree. Use ``math.inf`` for an unbounded upper end.
    """

    arm: int
    neighbor_treated: tuple[float, float] = (0.0, math.inf)
    degree: tuple[float, float] = (0.0, math.inf)

    def __post_init__(self):
        if self.arm not in (0, 1):
            raise ValueError("arm must be 0 or 1")
        for name, (lo, hi) in (
            ("neighbor_treated", self.neighbor_treated),
            ("degree", self.degree),
        ):
            if math.isnan(lo) or math.isnan(hi) or lo > hi:
                raise ValueError(f"{name} window must satisfy lo <= hi")

    @property
    def trivial_windows(self) -> bool:
        """True when both windows accept every non-negative count."""
        nt, dg = self.neighbor_treated, self.degree
        return nt[0] <= 0 and math.isinf(nt[1]) and dg[0] <= 0 and math.isinf(dg[1])

    def complements(self, other: "ExposureSpec") -> bool:
        """True when the two specs partition units purely by own arm."""
        return (
            self.arm != other.arm and self.trivial_windows and other.trivial_windows
        )

    def to_dict(self) -> dict:
        return {
            "arm": self.arm,
            "neighbor_treated_lo": self.neighbor_treated[0],
            "neighbor_treated_hi": self.neighbor_treated[1],
            "degree_lo": self.degree[0],
            "degree_hi": self.degree[1],
        }

    @staticmethod
    def from_dict(d: dict) -> "ExposureSpec":
        return ExposureSpec(
            arm=int(d["arm"]),
            neighbor_treated=(
                float(d["neighbor_treated_lo"]),
                float(d["neighbor_treated_hi"]),
            ),
            degree=(float(d["degree_lo"]), float(d["degree_hi"])),
        )


def treatment_arm(d: int) -> ExposureSpec:
    """The exposure that conditions on own treatment only."""
    return ExposureSpec(arm=d)


def treated_neighbor_count(g: Graph, D: np.ndarray) -> np.ndarray:
    """Number of treated neighbors of each unit (int64).

    The last axis indexes units; stacked treatment profiles are handled
    row by row.
    """
    D = np.asarray(D, dtype=np.float64)
    counts = (g.csr() @ D.T).T
    return np.rint(counts).astype(np.int64)


def indicator(spec: ExposureSpec, g: Graph, D: np.ndarray) -> np.ndarray:
    """uint8 array marking the units whose exposure equals ``spec``.

    Accepts a single treatment vector or a stack of profiles with units on
    the last axis.
    """
    D = np.asarray(D)
    if D.shape[-1:] != (g.n,):
        raise ValueError("D must have one entry per unit on the last axis")
    counts = treated_neighbor_count(g, D)
    degs = g.degrees
    nt_lo, nt_hi = spec.neighbor_treated
    dg_lo, dg_hi = spec.degree
    out = (
        (D == spec.arm)
        & (counts >= nt_lo)
        & (counts <= nt_hi)
        & (degs >= dg_lo)
        & (degs <= dg_hi)
    )
    return out.astype(np.uint8)


def degree_eligible(spec: ExposureSpec, g: Graph) -> np.ndarray:
    """Boolean mask of units whose degree lies in the spec's degree window.

    This is the subpopulation on which the exposure probability can be
    positive at all, and therefore the fitting population for propensity
    models.
    """
    dg_lo, dg_hi = spec.degree
    degs = g.degrees
    return (degs >= dg_lo) & (degs <= dg_hi)
