"""Online Newton step base expert over per-coordinate linear predictors.

The expert keeps a coefficient vector ``v`` in ``R^{2d}``.  Given a round's
two-dimensional covariate ``x`` it predicts ``x . v[2k-1:2k]`` for every
coordinate ``k``.  After the loss arrives it lifts the gradient through the
chain rule, performs a Newton-style step preconditioned by the maintained
correction matrix, and projects back onto the next round's slab set in the
matrix norm, which keeps every later prediction inside ``[-C, C]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .psd import CorrectionMatrix, covariate_slabs, mahalanobis_project

__all__ = ["NewtonConfig", "NewtonExpert", "lift_gradient", "static_regret_bound"]


@dataclass(frozen=True)
class NewtonConfig:
    """Expert parameters: ``eta`` is the exp-concavity factor of the losses."""

    d: int
    eta: float
    epsilon: float = 2.0
    clip_c: float = 20.0

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be positive")
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.clip_c < 1:
            raise ValueError("clip_c must be at least 1")


def lift_gradient(g, covariate) -> np.ndarray:
    """Chain-rule gradient of ``v -> f(x . v[1:2], ..., x . v[2d-1:2d])``.

    Equals ``[g_1 x, g_2 x, ..., g_d x]`` stacked into ``R^{2d}``.
    """
    g = np.asarray(g, dtype=float)
    covariate = np.asarray(covariate, dtype=float)
    return np.kron(g, covariate)


class NewtonExpert:
    """Single base expert; feed it one covariate and one loss per round."""

    __slots__ = ("config", "v", "correction", "last_covariate", "round",
                 "max_lifted_grad", "projection_tol")

    def __init__(self, config: NewtonConfig, projection_tol: float = 1e-10):
        self.config = config
        self.v = np.zeros(2 * config.d)
        self.correction = CorrectionMatrix(2 * config.d, config.epsilon)
        self.last_covariate = None
        self.round = 0
        self.max_lifted_grad = 0.0
        self.projection_tol = projection_tol

    def predict(self, covariate) -> np.ndarray:
        """Per-coordinate inner products; records the covariate for the update."""
        covariate = np.asarray(covariate, dtype=float)
        if covariate.shape != (2,) or not np.all(np.isfinite(covariate)):
            raise ValueError("covariate must be a finite 2-vector")
        self.last_covariate = covariate
        return self.v.reshape(self.config.d, 2) @ covariate

    def update(self, loss, next_covariate) -> "NewtonExpert":
        """Newton-style step on this round's loss, then project for the next.

        Must follow a :meth:`predict` call in the same round; the gradient is
        taken at the point the expert actually played.
        """
        if self.last_covariate is None:
            raise RuntimeError("update called before predict in this round")
        x = self.last_covariate
        prediction = self.v.reshape(self.config.d, 2) @ x
        g = loss.gradient(prediction)
        lifted = lift_gradient(g, x)
        self.max_lifted_grad = max(self.max_lifted_grad, float(np.linalg.norm(lifted)))

        self.correction.rank_one_update(lifted, self.config.eta)
        u = self.v - self.correction.inverse @ lifted
        slabs = covariate_slabs(next_covariate, self.config.d, self.config.clip_c)
        self.v = mahalanobis_project(u, self.correction, slabs, tol=self.projection_tol)
        self.last_covariate = None
        self.round += 1
        return self


def static_regret_bound(config: NewtonConfig, horizon: int,
                        comparator_norm_sq: float, g: float) -> float:
    """Closed-form static regret bound for a fixed feasible linear comparator.

    ``eps * ||w||^2 / 2 + (2d / sigma) * log(1 + sigma * T * G^2 / (d * eps))``
    with ``G`` a bound on the lifted gradient norms over the run.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    sigma = config.eta
    d = config.d
    return (
        config.epsilon * comparator_norm_sq / 2.0
        + (2.0 * d / sigma)
        * np.log1p(sigma * horizon * g * g / (d * config.epsilon))
    )
