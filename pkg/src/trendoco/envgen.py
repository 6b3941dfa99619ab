"""Synthetic non-stationary environments and CSV ingestion.

Piecewise-linear comparator sequences are generated with an exactly
controlled second-difference budget: slope changes are snapped to a dyadic
lattice (steps of ``2**-45``) so every cumulative sum below magnitude one
is exact in double precision and the realized ``n * ||D^2 w||_1`` matches
the request to ~1e-10 regardless of horizon.  Slope-change magnitudes come
from a symmetric Dirichlet split of the budget and signs alternate, which
keeps the path oscillating instead of drifting; the final sequence is
recentred (an intercept shift, which leaves the budget untouched) and
rejected if it still cannot fit the amplitude box.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .losses import scaled_squared_loss

__all__ = [
    "PiecewiseLinearSpec",
    "InfeasibleSpecError",
    "gen_piecewise_linear",
    "environment_to_csv",
    "Series",
    "ingest_csv",
]

_LATTICE = 2.0 ** -45


class InfeasibleSpecError(ValueError):
    """The requested budget cannot stay inside the amplitude box."""


@dataclass(frozen=True)
class PiecewiseLinearSpec:
    """Recipe for one comparator sequence.

    ``budget`` is the target ``n * ||D^2 w||_1``; ``kinks`` counts slope
    changes; ``box`` caps the amplitude.
    """

    n: int
    d: int = 1
    kinks: int = 4
    budget: float = 1.0
    box: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 4:
            raise ValueError("horizon must be at least 4")
        if self.d < 1:
            raise ValueError("dimension must be positive")
        if self.kinks < 0:
            raise ValueError("kinks must be nonnegative")
        if self.budget < 0:
            raise ValueError("budget must be nonnegative")
        if not (0 < self.box <= 1.0):
            raise ValueError("box must lie in (0, 1] so comparators stay in the benchmark set")
        if self.kinks > self.n - 2:
            raise ValueError("at most n - 2 kinks fit in the horizon")


def _lattice_piecewise(n: int, kinks: int, budget_per_step: float, box: float,
                       rng: np.random.Generator) -> np.ndarray:
    """One coordinate's path, built in integer lattice units (exact)."""
    delta_units = np.zeros(0, dtype=np.int64)
    positions = np.zeros(0, dtype=np.int64)
    total_units = int(round(budget_per_step / _LATTICE))
    if kinks > 0 and total_units > 0:
        # Dirichlet split of the budget, rounded onto the lattice with the
        # remainder folded into the last kink so the total is exact.
        frac = rng.dirichlet(np.ones(kinks))
        units = np.floor(frac * total_units).astype(np.int64)
        units[-1] = total_units - units[:-1].sum()
        # Slope-change positions: second differences live at indices
        # 1 .. n-2 (0-based center point of the stencil).
        positions = np.sort(rng.choice(np.arange(1, n - 1), size=kinks, replace=False))
        delta_units = units
    elif total_units > 0:
        raise InfeasibleSpecError(
            "a positive budget needs at least one kink to spend it on"
        )

    sign0 = 1 if rng.random() < 0.5 else -1
    signs = sign0 * (-1) ** np.arange(delta_units.size)
    signed = signs * delta_units

    # Integer slopes at every step: slope[j] applies between w[j] and w[j+1].
    slope_units = np.zeros(n - 1, dtype=np.int64)
    if delta_units.size:
        changes = np.zeros(n - 1, dtype=np.int64)
        # A second difference at center p changes the slope entering step p.
        changes[positions] = signed
        slope_units = np.cumsum(changes)
    # Base slope chosen so the endpoint displacement roughly cancels,
    # snapped to the lattice (any integer keeps the budget exact).
    drift = slope_units.sum()
    base = -int(round(drift / (n - 1)))
    slope_units = slope_units + base

    w_units = np.concatenate([[0], np.cumsum(slope_units)])
    center = (w_units.max() + w_units.min()) // 2
    w_units -= center

    w = w_units.astype(float) * _LATTICE
    amplitude = float(np.abs(w).max())
    if amplitude > box:
        raise InfeasibleSpecError(
            f"budget {budget_per_step * n:.3g} with {kinks} kinks needs amplitude "
            f"{amplitude:.3g} > box {box:.3g}; add kinks or shrink the budget"
        )
    return w


def gen_piecewise_linear(spec: PiecewiseLinearSpec, noise: float = 0.05):
    """Generate a comparator sequence and matching loss oracles.

    Returns ``(w, losses)`` where ``w`` has shape (n, d) with
    ``n * ||D^2 w||_1`` equal to the requested budget (to ~1e-10) and
    ``losses`` are scaled squared losses whose targets are the comparator
    plus uniform noise on ``[-noise, noise]``, clipped into the box.
    Deterministic for a fixed spec.
    """
    if noise < 0:
        raise ValueError("noise must be nonnegative")
    rng = np.random.default_rng(np.random.SeedSequence((spec.seed, spec.n, spec.d)))
    per_coord = spec.budget / spec.n / spec.d
    w = np.column_stack([
        _lattice_piecewise(spec.n, spec.kinks, per_coord, spec.box, rng)
        for _ in range(spec.d)
    ])
    realized = spec.n * float(np.abs(w[2:] - 2.0 * w[1:-1] + w[:-2]).sum())
    if realized > spec.budget * (1.0 + 1e-9) + 1e-12:
        raise AssertionError(
            f"internal error: realized budget {realized!r} exceeds request {spec.budget!r}"
        )
    targets = w
    if noise > 0:
        targets = np.clip(w + rng.uniform(-noise, noise, size=w.shape),
                          -spec.box, spec.box)
    losses = [scaled_squared_loss(targets[t]) for t in range(spec.n)]
    return w, losses


def environment_to_csv(w, losses, path) -> None:
    """Write a generated environment as t, w[1..d], y[1..d] rows."""
    w = np.asarray(w, dtype=float)
    n, d = w.shape
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["t"] + [f"w{k + 1}" for k in range(d)] + [f"y{k + 1}" for k in range(d)]
        writer.writerow(header)
        for t in range(n):
            row = [t + 1]
            row += [repr(float(x)) for x in w[t]]
            row += [repr(float(x)) for x in losses[t].target]
            writer.writerow(row)


@dataclass
class Series:
    """A named numeric table normalized into ``[-1, 1]``."""

    values: np.ndarray
    name: str
    columns: list
    offsets: np.ndarray = field(default_factory=lambda: np.zeros(0))
    scales: np.ndarray = field(default_factory=lambda: np.ones(0))

    def denormalize(self, values=None) -> np.ndarray:
        v = self.values if values is None else np.asarray(values, dtype=float)
        return v * self.scales + self.offsets


def ingest_csv(path, columns=None, normalize: bool = True) -> Series:
    """Read value columns from a headed CSV and map them into ``[-1, 1]``.

    ``columns`` selects value columns by name; by default every column that
    parses as numeric in the first data row is taken.  Non-numeric cells
    and empty selections raise with the offending row/column named.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        rows = [row for row in reader if row and any(cell.strip() for cell in row)]
    if not rows:
        raise ValueError(f"{path}: no data rows")

    if columns is None:
        candidates = []
        for j, name in enumerate(header):
            try:
                float(rows[0][j])
            except (ValueError, IndexError):
                continue
            candidates.append(name)
        columns = candidates
    if not columns:
        raise ValueError(f"{path}: no numeric columns selected")
    try:
        indices = [header.index(c) for c in columns]
    except ValueError as exc:
        raise ValueError(f"{path}: unknown column in {columns}: {exc}") from None

    values = np.zeros((len(rows), len(indices)))
    for i, row in enumerate(rows):
        for jj, j in enumerate(indices):
            cell = row[j].strip() if j < len(row) else ""
            try:
                x = float(cell)
            except ValueError:
                raise ValueError(
                    f"{path}: non-numeric cell at data row {i + 1}, "
                    f"column '{header[j]}': {cell!r}"
                ) from None
            if not np.isfinite(x):
                raise ValueError(
                    f"{path}: non-finite cell at data row {i + 1}, "
                    f"column '{header[j]}'"
                )
            values[i, jj] = x

    offsets = np.zeros(len(indices))
    scales = np.ones(len(indices))
    if normalize:
        lo = values.min(axis=0)
        hi = values.max(axis=0)
        span = hi - lo
        span[span == 0] = 1.0
        offsets = (hi + lo) / 2.0
        scales = span / 2.0
        values = (values - offsets) / scales
    return Series(values=values, name=str(path), columns=list(columns),
                  offsets=offsets, scales=scales)
