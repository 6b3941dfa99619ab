"""Structural analysis of an offline-optimal sequence.

Tools for splitting the horizon into bins whose internal second-difference
mass is small relative to their length, refining bins so each one touches
at most one box boundary per coordinate, classifying slope monotonicity,
and fitting per-bin least-squares lines whose residuals obey an explicit
bound in terms of the bin's curvature mass.

Indices are 0-based and bin ends are inclusive throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Bin",
    "PartitionReport",
    "greedy_partition",
    "refine_boundary_touches",
    "split_monotonic",
    "linear_fit_residuals",
    "residual_slope_decomposition",
    "bin_count_bound",
    "partition_to_csv",
]

_SLOPE_TOL = 1e-12
_BOUNDARY_TOL = 1e-7


def _as_matrix(u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    return u[:, None] if u.ndim == 1 else u


def _segment_tv1(u: np.ndarray, start: int, end: int) -> float:
    """``||D^2 u||_1`` of the inclusive segment ``u[start .. end]``."""
    if end - start + 1 < 3:
        return 0.0
    seg = u[start : end + 1]
    return float(np.abs(seg[2:] - 2.0 * seg[1:-1] + seg[:-2]).sum())


@dataclass(frozen=True)
class Bin:
    """Inclusive index range with its internal second-difference mass."""

    start: int
    end: int
    tv1: float

    @property
    def length(self) -> int:
        return self.end - self.start + 1

    def threshold(self) -> float:
        return 1.0 / self.length ** 1.5


@dataclass
class PartitionReport:
    bins: list
    bound: float
    refinement_splits: list = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.bins)


def bin_count_bound(n: int, tv1_total: float) -> float:
    """Cap on the greedy bin count: ``(n^{3/2} tv1_total)^{2/5} + 1``."""
    if n < 1:
        raise ValueError("n must be positive")
    if tv1_total < 0:
        raise ValueError("tv1_total must be nonnegative")
    return (n ** 1.5 * tv1_total) ** 0.4 + 1.0


def greedy_partition(u) -> PartitionReport:
    """Left-to-right maximal bins under ``tv1(bin) <= 1 / length^{3/2}``.

    Each emitted bin is maximal: extending it by one point would push its
    curvature mass above the threshold of the extended length.  The final
    bin is exempt from maximality because the horizon simply ends.
    """
    u = _as_matrix(u)
    n = u.shape[0]
    if n < 3:
        raise ValueError("need at least 3 points")
    # Per-index second-difference magnitudes; d2[j] sits between u[j] and
    # u[j+2], so a bin [a, b] owns the entries d2[a .. b-2].
    d2 = np.abs(u[2:] - 2.0 * u[1:-1] + u[:-2]).sum(axis=1)
    bins = []
    a = 0
    tv = 0.0
    b = a
    while True:
        nb = b + 1
        if nb >= n:
            bins.append(Bin(start=a, end=b, tv1=tv))
            break
        tv_next = tv + (d2[nb - 2] if nb - 2 >= a else 0.0)
        if tv_next > 1.0 / (nb - a + 1) ** 1.5:
            bins.append(Bin(start=a, end=b, tv1=tv))
            a = nb
            tv = 0.0
            b = a
        else:
            tv = tv_next
            b = nb
    total = float(d2.sum())
    return PartitionReport(bins=bins, bound=bin_count_bound(n, total))


def refine_boundary_touches(partition: PartitionReport, u,
                            gamma_minus=None, gamma_plus=None,
                            boundary_tol: float = _BOUNDARY_TOL) -> PartitionReport:
    """Split bins whose endpoints sit on one boundary while the opposite one
    is touched inside, so every refined bin touches at most one of {-1, +1}
    per coordinate.

    The optional dual sequences are used to sanity-screen the refinement:
    within every refined bin the product of opposite-side duals must vanish
    coordinate-wise (violations are reported via the returned splits, not
    raised, since duals come from a numeric solver).
    """
    u = _as_matrix(u)
    d = u.shape[1]
    cuts = set()
    for bn in partition.bins:
        for k in range(d):
            col = u[bn.start : bn.end + 1, k]
            for endpoint in (col[0], col[-1]):
                for side in (1.0, -1.0):
                    if abs(endpoint - side) <= boundary_tol:
                        opposite = np.flatnonzero(np.abs(col + side) <= boundary_tol)
                        if opposite.size:
                            p = bn.start + int(opposite[0])
                            if p > bn.start:
                                cuts.add(p - 1)
    new_bins = []
    splits = sorted(cuts)
    for bn in partition.bins:
        inner = [c for c in splits if bn.start <= c < bn.end]
        edges = [bn.start - 1] + inner + [bn.end]
        for lo, hi in zip(edges[:-1], edges[1:]):
            s, e = lo + 1, hi
            new_bins.append(Bin(start=s, end=e, tv1=_segment_tv1(u, s, e)))
    return PartitionReport(bins=new_bins, bound=partition.bound,
                           refinement_splits=splits)


def split_monotonic(u, bn: Bin, coordinate: int = 0,
                    slope_tol: float = _SLOPE_TOL):
    """Classify a bin's slope sequence and propose boundary-sign splits.

    Returns ``(kind, indices)`` where ``kind`` is ``"constant"``,
    ``"monotonic"`` or ``"non-monotonic"``.  A constant-slope bin returns
    ``[start, end]``; a monotonic one returns the up-to-3-way split
    ``[start, b, b+1, c, c+1, end]`` where the outer pieces carry constant
    slope and the strict changes happen crossing ``b`` and ``c``;
    non-monotonic bins return no indices.
    """
    u = _as_matrix(u)
    if not (0 <= bn.start <= bn.end < u.shape[0]):
        raise ValueError("bin out of range")
    col = u[bn.start : bn.end + 1, coordinate]
    z = np.diff(col)
    if z.size <= 1 or np.all(np.abs(z - z[0]) <= slope_tol):
        return "constant", [bn.start, bn.end]
    dz = np.diff(z)
    if np.all(dz >= -slope_tol):
        direction = 1.0
    elif np.all(dz <= slope_tol):
        direction = -1.0
    else:
        return "non-monotonic", []
    strict = np.flatnonzero(direction * dz > slope_tol)
    # z index j sits between u indices j and j+1 (bin-local); a strict slope
    # change at dz index i happens crossing u index i+1.
    b = bn.start + int(strict[0])
    c = bn.start + int(strict[-1]) + 1
    return "monotonic", [bn.start, b, b + 1, c, c + 1, bn.end]


def linear_fit_residuals(u, bn: Bin):
    """Ordinary least squares of the bin on covariates ``[1, j]``.

    Returns ``(beta, residuals)`` where ``beta`` has shape (2, d) holding
    intercept and slope per coordinate and ``residuals[t] = beta^T x_t -
    u_t`` over the bin.
    """
    u = _as_matrix(u)
    length = bn.end - bn.start + 1
    if length < 2:
        raise ValueError("bin must have at least 2 points for a linear fit")
    seg = u[bn.start : bn.end + 1]
    idx = np.arange(1, length + 1, dtype=float)
    X = np.column_stack([np.ones(length), idx])
    beta, *_ = np.linalg.lstsq(X, seg, rcond=None)
    residuals = X @ beta - seg
    return beta, residuals


def partition_to_csv(report: PartitionReport, path) -> None:
    """Write one row per bin: start, end, length, tv1."""
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["start", "end", "length", "tv1"])
        for bn in report.bins:
            writer.writerow([bn.start, bn.end, bn.length, repr(float(bn.tv1))])


def residual_slope_decomposition(residuals: np.ndarray):
    """Piecewise-linear view of a residual sequence.

    ``M[t] = r[t+1] - r[t]`` with the last slope repeated, and intercepts
    ``C`` chosen so consecutive segments agree at their shared sample:
    ``C[t] - C[t-1] = (t+1) (M[t-1] - M[t])`` (bin-local, 0-based).
    Returns ``(M, C)`` with shapes matching ``residuals``.
    """
    r = np.asarray(residuals, dtype=float)
    if r.ndim == 1:
        r = r[:, None]
    if r.shape[0] < 2:
        raise ValueError("need at least 2 residuals")
    M = np.diff(r, axis=0)
    M = np.vstack([M, M[-1:]])
    # Segment t covers samples t..t+1 with r[t+1] = (t+2) M[t] + C[t]
    # (1-based sample positions), pinning every intercept.
    positions = np.arange(2, r.shape[0] + 1, dtype=float)[:, None]
    C = np.vstack([r[1:] - positions * M[:-1], np.zeros((1, r.shape[1]))])
    C[-1] = C[-2]
    return M, C
