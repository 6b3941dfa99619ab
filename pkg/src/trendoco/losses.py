"""Per-round convex loss oracles with certified curvature constants.

Every oracle is a quadratic of the form ``f(w) = ||w - target||^2 / (2 c)``
restricted to a working box ``[-B, B]^d``.  The scale ``c`` controls all
curvature certificates at once:

* Lipschitz constant over the box:  ``G = sqrt(sum_k (B + y_max)^2) / c``
* gradient-Lipschitz constant:      ``L = 1 / c``
* exp-concavity factor:             ``sigma = c / (d (B + y_max)^2)``

where ``y_max`` bounds the per-coordinate target magnitude of the family
the oracle belongs to.  ``sigma`` is derived analytically (it is the exact
threshold at which ``exp(-sigma f)`` stays concave over the box), so the
constants can be trusted by regret-bound checks, and :func:`verify_constants`
re-checks them empirically on random probe pairs.

Algorithms are expected to clip their queries into the working box; the
oracle rejects out-of-box points instead of extrapolating, which keeps the
certificates valid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "CurvatureConstants",
    "QuadraticLoss",
    "ConstantsReport",
    "scaled_squared_loss",
    "quadratic_loss",
    "verify_constants",
]

_BOX_SLACK = 1e-9


@dataclass(frozen=True)
class CurvatureConstants:
    """Curvature certificates of a loss over its working box.

    ``sigma`` is the exp-concavity factor, ``lipschitz_g`` the Lipschitz
    constant, ``grad_lipschitz_l`` the gradient-Lipschitz constant, and
    ``box_radius`` the half-width of the box on which all three hold.
    """

    sigma: float
    lipschitz_g: float
    grad_lipschitz_l: float
    box_radius: float = 20.0

    def __post_init__(self) -> None:
        if not (self.sigma > 0):
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not (self.box_radius > 0):
            raise ValueError(f"box_radius must be positive, got {self.box_radius}")


class QuadraticLoss:
    """One round's loss: ``f(w) = ||w - target||^2 / (2 scale)`` on a box.

    Parameters
    ----------
    target : array_like, shape (d,)
        Minimizer of the quadratic.
    scale : float
        Curvature denominator ``c``.
    constants : CurvatureConstants
        Certificates valid for the family this oracle was drawn from
        (they must hold for this target; factories guarantee that).
    """

    __slots__ = ("target", "scale", "constants", "dimension")

    def __init__(self, target, scale: float, constants: CurvatureConstants):
        target = np.atleast_1d(np.asarray(target, dtype=float))
        if target.ndim != 1:
            raise ValueError("target must be a vector")
        if not np.all(np.isfinite(target)):
            raise ValueError("target must be finite")
        if scale <= 0:
            raise ValueError(f"scale must be positive, got {scale}")
        self.target = target
        self.scale = float(scale)
        self.constants = constants
        self.dimension = target.shape[0]

    def _check_box(self, w: np.ndarray) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        if w.shape[-1] != self.dimension:
            raise ValueError(
                f"dimension mismatch: oracle is {self.dimension}-dimensional, "
                f"query has trailing size {w.shape[-1]}"
            )
        limit = self.constants.box_radius + _BOX_SLACK
        if np.any(np.abs(w) > limit):
            raise ValueError(
                "query outside the working box "
                f"[-{self.constants.box_radius}, {self.constants.box_radius}]^d; "
                "clip predictions before evaluating the loss"
            )
        return w

    def value(self, w) -> float:
        w = self._check_box(w)
        diff = w - self.target
        return float(diff @ diff) / (2.0 * self.scale)

    def gradient(self, w) -> np.ndarray:
        w = self._check_box(w)
        return (w - self.target) / self.scale

    def value_batch(self, W) -> np.ndarray:
        """Loss values at each row of an (m, d) array of points."""
        W = self._check_box(np.atleast_2d(W))
        diff = W - self.target
        return np.einsum("ij,ij->i", diff, diff) / (2.0 * self.scale)

    def gradient_batch(self, W) -> np.ndarray:
        W = self._check_box(np.atleast_2d(W))
        return (W - self.target) / self.scale

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return (
            f"QuadraticLoss(d={self.dimension}, scale={self.scale:.6g}, "
            f"target={np.array2string(self.target, precision=4)})"
        )


def quadratic_loss(target, scale: float, box_radius: float, target_bound: float) -> QuadraticLoss:
    """Build a quadratic oracle with analytically derived certificates.

    ``target_bound`` is the per-coordinate magnitude bound for the family
    the oracle belongs to; the returned ``sigma`` is then valid uniformly
    across all targets of the family, so a single exp-concavity factor can
    drive a whole run.
    """
    target = np.atleast_1d(np.asarray(target, dtype=float))
    if np.any(np.abs(target) > target_bound + _BOX_SLACK):
        raise ValueError(
            f"target magnitude exceeds the family bound {target_bound}"
        )
    d = target.shape[0]
    reach = box_radius + target_bound  # max per-coordinate |w - y| over the box
    constants = CurvatureConstants(
        sigma=scale / (d * reach * reach),
        lipschitz_g=math.sqrt(d) * reach / scale,
        grad_lipschitz_l=1.0 / scale,
        box_radius=box_radius,
    )
    return QuadraticLoss(target, scale, constants)


def scaled_squared_loss(target, box_radius: float = 20.0) -> QuadraticLoss:
    """Default loss family: scaled squared error over ``[-B, B]^d``.

    The scale ``c = sqrt(d) (B + 1)`` is fixed at construction so that the
    loss is exactly 1-Lipschitz over the box (targets range over
    ``[-1, 1]^d``) and ``1/c``-gradient-Lipschitz.  The exp-concavity
    factor comes out as ``sigma = 1 / (sqrt(d) (B + 1))``.
    """
    target = np.atleast_1d(np.asarray(target, dtype=float))
    if np.any(np.abs(target) > 1.0 + _BOX_SLACK):
        raise ValueError("target must lie in [-1, 1]^d")
    if box_radius < 1.0:
        raise ValueError("box_radius must be at least 1 so the comparator box fits")
    d = target.shape[0]
    scale = math.sqrt(d) * (box_radius + 1.0)
    return quadratic_loss(target, scale, box_radius, target_bound=1.0)


@dataclass(frozen=True)
class ConstantsReport:
    """Outcome of probing the smoothness / exp-concavity certificates.

    Slacks are the worst (most negative) margins seen; a violation beyond
    ``tolerance`` flips ``ok`` instead of raising.
    """

    probes: int
    ok: bool
    smoothness_slack: float
    exp_concavity_slack: float
    violations: int
    tolerance: float = 1e-9


def verify_constants(oracle: QuadraticLoss, probes: int, seed: int = 0,
                     tolerance: float = 1e-9) -> ConstantsReport:
    """Probe the upper-quadratic and exp-concavity inequalities.

    Samples random pairs ``(x, y)`` in the working box (plus deterministic
    box-corner pairs, which are the binding cases for quadratics) and
    checks

    * smoothness:  ``f(y) <= f(x) + <grad f(x), y - x> + (L/2) ||y - x||^2``
    * exp-concavity: ``f(y) >= f(x) + <g, y - x> + (sigma/2) <g, y - x>^2``

    at the oracle's reported constants.  Returns the worst-case slack of
    each inequality; slack below ``-tolerance`` marks the constants invalid.
    """
    if probes < 1:
        raise ValueError("probes must be at least 1")
    rng = np.random.default_rng(seed)
    d = oracle.dimension
    B = oracle.constants.box_radius
    X = rng.uniform(-B, B, size=(probes, d))
    Y = rng.uniform(-B, B, size=(probes, d))
    # Corner pairs stress the certificates where the gradient is largest.
    signs = np.sign(oracle.target + 0.5) * B
    X = np.vstack([X, signs[None, :], -signs[None, :]])
    Y = np.vstack([Y, -signs[None, :], signs[None, :]])

    fx = oracle.value_batch(X)
    fy = oracle.value_batch(Y)
    gx = oracle.gradient_batch(X)
    step = Y - X
    lin = fx + np.einsum("ij,ij->i", gx, step)
    sq_step = np.einsum("ij,ij->i", step, step)
    inner = np.einsum("ij,ij->i", gx, step)

    L = oracle.constants.grad_lipschitz_l
    sigma = oracle.constants.sigma
    smooth_slack = lin + 0.5 * L * sq_step - fy          # should be >= 0
    expconc_slack = fy - lin - 0.5 * sigma * inner ** 2  # should be >= 0

    worst_smooth = float(smooth_slack.min())
    worst_exp = float(expconc_slack.min())
    violations = int(np.sum(smooth_slack < -tolerance) + np.sum(expconc_slack < -tolerance))
    return ConstantsReport(
        probes=probes,
        ok=violations == 0,
        smoothness_slack=worst_smooth,
        exp_concavity_slack=worst_exp,
        violations=violations,
        tolerance=tolerance,
    )
