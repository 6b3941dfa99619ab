"""Reference learners: projected OGD and the intercept-only expert ensemble.

OGD's step size is measured in curvature-normalized units: the update is
``w <- clip(w - (step / L) * grad f(w))`` with ``L`` the loss's
gradient-Lipschitz constant, so for quadratic losses ``step`` is exactly
the per-round contraction toward the minimizer.  Steps at or above 1 are
rejected: an alternating-target adversary turns them into linear regret.

``linsmooth_environment`` builds the stochastic stream on which tuned OGD
provably stalls at a polynomially slower rate: a bounded
second-difference-budget trend observed under uniform noise, with
quadratic losses scaled so their Lipschitz constant over the decision box
is exactly one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .envgen import InfeasibleSpecError, _lattice_piecewise
from .flh import FlhConfig, Trajectory, flh_run
from .losses import quadratic_loss

__all__ = [
    "OgdState",
    "OgdTrajectory",
    "ogd_step",
    "run_ogd",
    "flh_constant_experts_run",
    "LinsmoothEnvironment",
    "linsmooth_environment",
]

_ROOT_22 = math.sqrt(2.2)


@dataclass(frozen=True)
class OgdState:
    """Iterate, normalized step size, and decision-box half-width."""

    w: np.ndarray
    step: float
    box: float

    def __post_init__(self):
        object.__setattr__(self, "w", np.atleast_1d(np.asarray(self.w, dtype=float)))
        if not (0.0 < self.step < 1.0):
            raise ValueError(
                f"step must lie in (0, 1), got {self.step}; a unit-or-larger "
                "contraction can be exploited into linear regret"
            )
        if self.box <= 0:
            raise ValueError("box must be positive")


def ogd_step(state: OgdState, loss) -> OgdState:
    """One curvature-normalized gradient step followed by a clip to the box."""
    g = loss.gradient(state.w)
    effective = state.step / loss.constants.grad_lipschitz_l
    w = np.clip(state.w - effective * g, -state.box, state.box)
    return replace(state, w=w)


@dataclass
class OgdTrajectory:
    predictions: np.ndarray
    loss_values: np.ndarray
    final: OgdState


def run_ogd(losses, step: float, box: float = 1.0) -> OgdTrajectory:
    losses = list(losses)
    if not losses:
        raise ValueError("losses must be nonempty")
    d = losses[0].dimension
    state = OgdState(w=np.zeros(d), step=step, box=box)
    predictions = np.zeros((len(losses), d))
    values = np.zeros(len(losses))
    for t, loss in enumerate(losses):
        predictions[t] = state.w
        values[t] = loss.value(state.w)
        state = ogd_step(state, loss)
    return OgdTrajectory(predictions=predictions, loss_values=values, final=state)


def flh_constant_experts_run(sigma: float, losses, d: int = 1,
                             record_expert_losses: bool = False, **kwargs) -> Trajectory:
    """Same ensemble protocol, but every expert keeps the covariate ``[1, 0]``.

    Each expert then reduces to a constant predictor, which is the optimal
    base-learner design when the comparator's first differences (rather
    than second) carry the budget.  Used as the low-order baseline in
    scaling experiments; only the covariate map differs from the trend
    ensemble.
    """
    config = FlhConfig(sigma=sigma, d=d, covariate_mode="constant", **kwargs)
    return flh_run(config, losses, record_expert_losses=record_expert_losses)


@dataclass
class LinsmoothEnvironment:
    """Bounded-trend stream with uniform noise and unit-Lipschitz quadratics."""

    losses: list
    theta: np.ndarray
    targets: np.ndarray
    decision_halfwidth: float
    theta_halfwidth: float
    loss_scale: float


def linsmooth_environment(n: int, seed: int = 0, kinks: int = 6) -> LinsmoothEnvironment:
    """Stochastic stream on which step-tuned OGD is polynomially slow.

    The trend ``theta`` is piecewise linear with ``n ||D^2 theta||_1 <= 1``
    and ``|theta_t| <= 1/(8 sqrt(2.2))``; targets add iid uniform noise of
    the same half-width, so every target lies in ``[-1/(4 sqrt(2.2)),
    1/(4 sqrt(2.2))]``.  Losses are ``(2 sqrt(2.2) / 3) (y_t - x)^2`` over
    the decision box of half-width ``1/(2 sqrt(2.2))``, which makes their
    gradient magnitude at most one there.  Deterministic per seed.
    """
    if n < 4:
        raise ValueError("n must be at least 4")
    theta_half = 1.0 / (8.0 * _ROOT_22)
    decision_half = 1.0 / (2.0 * _ROOT_22)
    kinks = min(kinks, n - 2)
    theta = None
    for attempt in range(64):
        rng = np.random.default_rng(np.random.SeedSequence((seed, n, attempt, 0x1F)))
        try:
            theta = _lattice_piecewise(n, kinks, 1.0 / n, theta_half, rng)
            break
        except InfeasibleSpecError:
            continue
    if theta is None:
        raise InfeasibleSpecError("could not fit the trend into its amplitude box")
    noise = rng.uniform(-theta_half, theta_half, size=n)
    targets = theta + noise

    # f(x) = (2 sqrt(2.2)/3) (y - x)^2  ==  (x - y)^2 / (2 c),  c = 3/(4 sqrt(2.2))
    scale = 3.0 / (4.0 * _ROOT_22)
    losses = [
        quadratic_loss(np.array([targets[t]]), scale=scale,
                       box_radius=decision_half, target_bound=2.0 * theta_half)
        for t in range(n)
    ]
    return LinsmoothEnvironment(
        losses=losses,
        theta=theta,
        targets=targets,
        decision_halfwidth=decision_half,
        theta_halfwidth=theta_half,
        loss_scale=scale,
    )
