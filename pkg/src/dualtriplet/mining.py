"""Pseudo-labeling of target distances from source distance statistics.

Each batch, the labeled source half yields within-class (wc) and
between-class (bc) distance populations. Their means and standard
deviations define two closed mining windows,

    wc window = [mu_wc - sigma_wc, mu_wc]
    bc window = [mu_bc, mu_bc + sigma_bc]

which sit on the confident inner flanks of the two distributions. Target
pair distances falling inside a window inherit its label; everything else
is discarded. If the two windows overlap, the shared region is excluded
from both rather than guessed.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np


class InsufficientStatsError(ValueError):
    """A distance population had fewer than two samples."""


class WindowOverlapWarning(UserWarning):
    """The wc and bc mining windows overlap; the overlap is dropped."""


@dataclass(frozen=True)
class DistanceStats:
    """Population (divide-by-n) statistics of the two distance populations."""

    mu_wc: float
    sigma_wc: float
    mu_bc: float
    sigma_bc: float
    n_wc: int
    n_bc: int


def split_wc_bc(dist: np.ndarray, labels) -> tuple[np.ndarray, np.ndarray]:
    """Upper-triangle distances split into same-label and different-label."""
    labels = np.asarray(labels, dtype=object)
    iu, ju = np.triu_indices(dist.shape[0], k=1)
    same = labels[iu] == labels[ju]
    values = dist[iu, ju]
    return values[same], values[~same]


def distance_stats(wc: np.ndarray, bc: np.ndarray) -> DistanceStats:
    wc = np.asarray(wc, dtype=np.float64)
    bc = np.asarray(bc, dtype=np.float64)
    if wc.size < 2:
        raise InsufficientStatsError(f"need >= 2 wc distances, got {wc.size}")
    if bc.size < 2:
        raise InsufficientStatsError(f"need >= 2 bc distances, got {bc.size}")
    return DistanceStats(
        float(wc.mean()),
        float(np.sqrt(np.mean((wc - wc.mean()) ** 2))),
        float(bc.mean()),
        float(np.sqrt(np.mean((bc - bc.mean()) ** 2))),
        int(wc.size),
        int(bc.size),
    )


@dataclass(frozen=True)
class MiningWindows:
    """The two labeling intervals, plus the excluded overlap if any.

    Endpoints derive from the generating statistics: the wc window is
    [mu_wc - sigma_wc, mu_wc] and the bc window is [mu_bc, mu_bc + sigma_bc],
    so each window's width is its population sigma by construction.
    Membership tests honor the overlap exclusion.
    """

    mu_wc: float
    sigma_wc: float
    mu_bc: float
    sigma_bc: float
    overlap: tuple[float, float] | None = None

    @property
    def wc_window(self) -> tuple[float, float]:
        return (self.mu_wc - self.sigma_wc, self.mu_wc)

    @property
    def bc_window(self) -> tuple[float, float]:
        return (self.mu_bc, self.mu_bc + self.sigma_bc)

    @property
    def wc_width(self) -> float:
        return self.sigma_wc

    @property
    def bc_width(self) -> float:
        return self.sigma_bc

    def _in_overlap(self, d: np.ndarray) -> np.ndarray:
        if self.overlap is None:
            return np.zeros(np.shape(d), dtype=bool)
        lo, hi = self.overlap
        return (d >= lo) & (d <= hi)

    def contains_wc(self, d) -> np.ndarray:
        d = np.asarray(d, dtype=np.float64)
        lo, hi = self.wc_window
        return (d >= lo) & (d <= hi) & ~self._in_overlap(d)

    def contains_bc(self, d) -> np.ndarray:
        d = np.asarray(d, dtype=np.float64)
        lo, hi = self.bc_window
        return (d >= lo) & (d <= hi) & ~self._in_overlap(d)


def mining_windows(stats: DistanceStats) -> MiningWindows:
    """Windows from batch statistics, excluding any wc/bc overlap from both."""
    wc_lo, wc_hi = stats.mu_wc - stats.sigma_wc, stats.mu_wc
    bc_lo, bc_hi = stats.mu_bc, stats.mu_bc + stats.sigma_bc
    lo, hi = max(wc_lo, bc_lo), min(wc_hi, bc_hi)
    overlap = (lo, hi) if lo <= hi else None
    if overlap is not None:
        warnings.warn(
            f"wc window [{wc_lo}, {wc_hi}] and bc window [{bc_lo}, {bc_hi}] "
            f"overlap on [{lo}, {hi}]; the overlap is excluded from both",
            WindowOverlapWarning,
            stacklevel=2,
        )
    return MiningWindows(stats.mu_wc, stats.sigma_wc, stats.mu_bc, stats.sigma_bc, overlap)


@dataclass(frozen=True)
class PseudoLabeledPairs:
    """Index pairs (rows of (i, j), i < j) with their distances."""

    wc_pairs: np.ndarray
    wc_distances: np.ndarray
    bc_pairs: np.ndarray
    bc_distances: np.ndarray

    @property
    def n_wc(self) -> int:
        return len(self.wc_pairs)

    @property
    def n_bc(self) -> int:
        return len(self.bc_pairs)


def pseudo_label(dist: np.ndarray, windows: MiningWindows) -> PseudoLabeledPairs:
    """Label every unordered pair of a target distance matrix via the windows.

    The scan runs in lexicographic (i, j) order; pairs outside both windows
    are discarded. The matrix carries no identity information, so no target
    labels can leak in here.
    """
    dist = np.asarray(dist, dtype=np.float64)
    n = dist.shape[0]
    if dist.ndim != 2 or dist.shape != (n, n):
        raise ValueError("distance matrix must be square")
    if not np.array_equal(dist, dist.T):
        raise ValueError("distance matrix must be symmetric")
    iu, ju = np.triu_indices(n, k=1)
    values = dist[iu, ju]
    in_wc = windows.contains_wc(values)
    in_bc = windows.contains_bc(values)
    pairs = np.column_stack([iu, ju]).astype(np.int64)
    return PseudoLabeledPairs(
        pairs[in_wc], values[in_wc], pairs[in_bc], values[in_bc]
    )


def constitute_target_pairs(
    labeled: PseudoLabeledPairs, rng: np.random.Generator
) -> np.ndarray:
    """Zip wc and bc pairs into (wc_i, wc_j, bc_k, bc_l) loss rows.

    Both lists are shuffled with the caller's generator and truncated to the
    smaller count, so each side is used at most once per batch; the pairing
    is a uniform random bijection. Returns an (m, 4) index array, possibly
    empty.
    """
    m = min(labeled.n_wc, labeled.n_bc)
    wc_order = rng.permutation(labeled.n_wc)
    bc_order = rng.permutation(labeled.n_bc)
    if m == 0:
        return np.empty((0, 4), dtype=np.int64)
    return np.hstack(
        [labeled.wc_pairs[wc_order[:m]], labeled.bc_pairs[bc_order[:m]]]
    )
