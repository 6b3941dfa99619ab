"""Maintained gradient-correction matrix and Mahalanobis slab projections.

The online Newton step keeps a matrix ``A = eps*I + eta * sum_j g_j g_j^T``
together with its inverse.  Rank-one updates go through the
Sherman-Morrison identity; every :data:`REFACTOR_EVERY` updates the inverse
is recomputed from a fresh factorization so drift stays bounded.

Projections onto the per-round feasible set (an intersection of slabs
``|a^T w| <= C`` whose normals live on one coordinate pair each) are done
in the ``A``-norm: a single slab has a closed form, intersections use
Dykstra's alternating projections.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "CorrectionMatrix",
    "Slab",
    "SlabSet",
    "covariate_slabs",
    "ProjectionError",
    "mahalanobis_project",
]

REFACTOR_EVERY = 512


class CorrectionMatrix:
    """Dense symmetric ``A = eps*I + eta * sum g g^T`` with maintained inverse."""

    __slots__ = ("dim", "epsilon", "matrix", "inverse", "updates_since_refactor")

    def __init__(self, dim: int, epsilon: float = 2.0):
        if dim < 1:
            raise ValueError("dim must be positive")
        if epsilon <= 0:
            raise ValueError("epsilon must be positive")
        self.dim = int(dim)
        self.epsilon = float(epsilon)
        self.matrix = np.eye(dim) * epsilon
        self.inverse = np.eye(dim) / epsilon
        self.updates_since_refactor = 0

    def rank_one_update(self, g, eta: float) -> "CorrectionMatrix":
        """Add ``eta * g g^T``; the inverse follows by Sherman-Morrison."""
        g = np.asarray(g, dtype=float)
        if g.shape != (self.dim,):
            raise ValueError(f"gradient must have shape ({self.dim},)")
        if not np.all(np.isfinite(g)):
            raise ValueError("non-finite gradient in rank-one update")
        self.matrix += eta * np.outer(g, g)
        ag = self.inverse @ g
        denom = 1.0 + eta * (g @ ag)
        self.inverse -= (eta / denom) * np.outer(ag, ag)
        self.updates_since_refactor += 1
        if self.updates_since_refactor >= REFACTOR_EVERY:
            self.refactor()
        return self

    def refactor(self) -> None:
        """Recompute the inverse from the stored matrix."""
        self.inverse = np.linalg.inv(self.matrix)
        # Symmetrize: inv() of a symmetric matrix is symmetric only up to
        # rounding, and downstream quadratic forms assume symmetry.
        self.inverse = 0.5 * (self.inverse + self.inverse.T)
        self.updates_since_refactor = 0

    def quadratic_norm(self, v) -> float:
        """Return ``v^T A v`` (>= eps * ||v||^2)."""
        v = np.asarray(v, dtype=float)
        if v.shape != (self.dim,):
            raise ValueError(f"vector must have shape ({self.dim},)")
        return float(v @ self.matrix @ v)


@dataclass(frozen=True)
class Slab:
    """Constraint ``|normal . w| <= radius`` with a block-supported normal."""

    normal: np.ndarray
    radius: float

    def __post_init__(self):
        normal = np.asarray(self.normal, dtype=float)
        object.__setattr__(self, "normal", normal)
        if self.radius <= 0:
            raise ValueError("slab radius must be positive")
        support = np.flatnonzero(normal)
        if support.size == 0:
            raise ValueError("slab normal must be nonzero")
        block = support[0] // 2
        if np.any(support // 2 != block):
            raise ValueError(
                "slab normal must be supported on a single coordinate pair"
            )


@dataclass(frozen=True)
class SlabSet:
    slabs: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "slabs", tuple(self.slabs))

    def __len__(self) -> int:
        return len(self.slabs)

    def __iter__(self):
        return iter(self.slabs)

    def violation(self, w) -> float:
        """Largest constraint excess at ``w`` (<= 0 means feasible)."""
        worst = -np.inf
        for slab in self.slabs:
            worst = max(worst, abs(float(slab.normal @ w)) - slab.radius)
        return worst


def covariate_slabs(covariate, d: int, radius: float) -> SlabSet:
    """Feasible set for one round: ``|x . w[2k-1:2k]| <= C`` for each k."""
    covariate = np.asarray(covariate, dtype=float)
    if covariate.shape != (2,):
        raise ValueError("covariate must be a 2-vector")
    slabs = []
    for k in range(d):
        normal = np.zeros(2 * d)
        normal[2 * k : 2 * k + 2] = covariate
        slabs.append(Slab(normal=normal, radius=radius))
    return SlabSet(slabs)


class ProjectionError(RuntimeError):
    """Dykstra failed to converge; carries the best iterate found."""

    def __init__(self, message: str, best: np.ndarray, iterations: int):
        super().__init__(message)
        self.best = best
        self.iterations = iterations


def _project_single_slab(point: np.ndarray, state: CorrectionMatrix, slab: Slab) -> np.ndarray:
    """A-norm projection onto one slab, in closed form."""
    a = slab.normal
    s = float(a @ point)
    b = min(max(s, -slab.radius), slab.radius)
    if b == s:
        return point
    inv_a = state.inverse @ a
    return point - ((s - b) / float(a @ inv_a)) * inv_a


def mahalanobis_project(u, state: CorrectionMatrix, slabs: SlabSet,
                        tol: float = 1e-10, max_iter: int = 10_000) -> np.ndarray:
    """Project ``u`` onto the slab intersection in the ``A``-norm.

    A single slab uses the closed form directly; otherwise Dykstra's
    alternating projections run until one full cycle moves the iterate by
    less than ``tol`` in the ``A``-norm and every slab is satisfied within
    ``tol``.  Non-convergence raises :class:`ProjectionError` carrying the
    best iterate.
    """
    u = np.asarray(u, dtype=float)
    if u.shape != (state.dim,):
        raise ValueError(f"point must have shape ({state.dim},)")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if len(slabs) == 0:
        return u.copy()
    if len(slabs) == 1:
        return _project_single_slab(u, state, slabs.slabs[0])

    x = u.copy()
    increments = [np.zeros(state.dim) for _ in slabs]
    for _ in range(max_iter):
        x_start = x.copy()
        for i, slab in enumerate(slabs):
            shifted = x + increments[i]
            y = _project_single_slab(shifted, state, slab)
            increments[i] = shifted - y
            x = y
        move = np.sqrt(state.quadratic_norm(x - x_start))
        if move < tol and slabs.violation(x) <= tol:
            return x
    raise ProjectionError(
        f"Dykstra did not converge within {max_iter} iterations "
        f"(last cycle movement {move:.3e}, violation {slabs.violation(x):.3e})",
        best=x,
        iterations=max_iter,
    )
