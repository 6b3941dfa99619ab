"""Follow-the-leading-history ensemble over online Newton experts.

One expert is spawned per round.  The expert started at time ``tau``
receives the covariate ``[1, t - tau + 1]`` at round ``t`` (or ``[1, 0]``
in constant mode), so its coefficient pair encodes an intercept and a
slope anchored at its own start.  Predictions are mixed by a probability
vector; after each loss the weights get a multiplicative update (computed
in log space) and the newborn expert is injected with weight ``1/(t+1)``.

All expert states live in stacked arrays so one round's bookkeeping is a
handful of vectorized operations over the whole pool; this is what keeps
the quadratic total work affordable at horizons in the thousands.  The
pool update follows :class:`trendoco.ons.NewtonExpert` step for step, and
the test suite pins the two implementations against each other.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .psd import ProjectionError

__all__ = ["FlhConfig", "FlhEnsemble", "Trajectory", "flh_run", "adaptive_overhead_bound"]


@dataclass(frozen=True)
class FlhConfig:
    """Ensemble parameters.

    ``sigma`` is the exp-concavity factor that drives both the weight
    update and the experts' correction matrices.  ``covariate_mode`` is
    ``"trend"`` for the monomial covariates ``[1, t - tau + 1]`` or
    ``"constant"`` for intercept-only experts ``[1, 0]``.  Pruning (off by
    default) drops experts past a geometric lifetime; regret-bound checks
    must run with it off.
    """

    sigma: float
    d: int = 1
    epsilon: float = 2.0
    clip_c: float = 20.0
    covariate_mode: str = "trend"
    prune: bool = False
    prune_window: int = 8
    projection_tol: float = 1e-10
    projection_max_iter: int = 10_000

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.d < 1:
            raise ValueError("d must be positive")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.clip_c < 1:
            raise ValueError("clip_c must be at least 1")
        if self.covariate_mode not in ("trend", "constant"):
            raise ValueError("covariate_mode must be 'trend' or 'constant'")


class FlhEnsemble:
    """Dated expert pool with a probability weight vector."""

    def __init__(self, config: FlhConfig, horizon_hint: int = 64):
        self.config = config
        self.round = 0
        cap = max(horizon_hint + 1, 8)
        two_d = 2 * config.d
        self._cap = cap
        self._m = 0
        self._start = np.zeros(cap, dtype=np.int64)
        self._V = np.zeros((cap, two_d))
        self._A = np.zeros((cap, two_d, two_d))
        self._Ainv = np.zeros((cap, two_d, two_d))
        self._since = np.zeros(cap, dtype=np.int64)
        self._logw = np.zeros(cap)
        self._maxg = np.zeros(cap)
        self._cached_X = None
        self._cached_Y = None
        self._append_expert(start_time=1, log_weight=0.0)

    # -- bookkeeping ---------------------------------------------------

    def _grow(self) -> None:
        cap = self._cap * 2
        for name in ("_start", "_V", "_A", "_Ainv", "_since", "_logw", "_maxg"):
            old = getattr(self, name)
            new = np.zeros((cap,) + old.shape[1:], dtype=old.dtype)
            new[: self._m] = old[: self._m]
            setattr(self, name, new)
        self._cap = cap

    def _append_expert(self, start_time: int, log_weight: float) -> None:
        if self._m == self._cap:
            self._grow()
        i = self._m
        two_d = 2 * self.config.d
        self._start[i] = start_time
        self._V[i] = 0.0
        self._A[i] = np.eye(two_d) * self.config.epsilon
        self._Ainv[i] = np.eye(two_d) / self.config.epsilon
        self._since[i] = 0
        self._logw[i] = log_weight
        self._maxg[i] = 0.0
        self._m += 1

    def _covariates(self, t: int) -> np.ndarray:
        m = self._m
        X = np.ones((m, 2))
        if self.config.covariate_mode == "trend":
            X[:, 1] = t - self._start[:m] + 1
        else:
            X[:, 1] = 0.0
        return X

    # -- public surface --------------------------------------------------

    @property
    def num_experts(self) -> int:
        return self._m

    @property
    def start_times(self) -> np.ndarray:
        return self._start[: self._m].copy()

    @property
    def weights(self) -> np.ndarray:
        w = np.exp(self._logw[: self._m] - self._logw[: self._m].max())
        return w / w.sum()

    @property
    def coefficients(self) -> np.ndarray:
        """Per-expert coefficient vectors, shape (m, 2d)."""
        return self._V[: self._m].copy()

    @property
    def max_lifted_grads(self) -> np.ndarray:
        """Largest lifted gradient norm each expert has seen."""
        return self._maxg[: self._m].copy()

    @property
    def last_expert_predictions(self) -> np.ndarray | None:
        return None if self._cached_Y is None else self._cached_Y.copy()

    def predict(self) -> np.ndarray:
        """Weight-averaged expert prediction for the upcoming round."""
        if self._m == 0:
            raise RuntimeError("ensemble has no active expert")
        t = self.round + 1
        m, d = self._m, self.config.d
        X = self._covariates(t)
        Y = np.einsum("mkc,mc->mk", self._V[:m].reshape(m, d, 2), X)
        self._cached_X = X
        self._cached_Y = Y
        return self.weights @ Y

    def update(self, loss) -> "FlhEnsemble":
        """Consume this round's loss: reweight, step every expert, spawn one."""
        if self._cached_Y is None:
            raise RuntimeError("update called before predict in this round")
        t = self.round + 1
        m, d = self._m, self.config.d
        X, Y = self._cached_X, self._cached_Y

        expert_losses = loss.value_batch(Y)
        grads = loss.gradient_batch(Y)

        # Multiplicative update in log space (max-subtraction inside logsumexp).
        logw = self._logw[:m] - self.config.sigma * expert_losses
        shift = logw.max()
        logw -= shift + np.log(np.exp(logw - shift).sum())
        self._logw[:m] = logw + np.log1p(-1.0 / (t + 1))

        self._step_experts(grads, X, t)
        self._append_expert(start_time=t + 1, log_weight=-np.log(t + 1))
        self.round = t
        self._cached_X = None
        self._cached_Y = None
        if self.config.prune:
            self._prune()
        return self

    def _step_experts(self, grads: np.ndarray, X: np.ndarray, t: int) -> None:
        m, d = self._m, self.config.d
        eta = self.config.sigma
        glift = (grads[:, :, None] * X[:, None, :]).reshape(m, 2 * d)
        np.maximum(self._maxg[:m], np.linalg.norm(glift, axis=1), out=self._maxg[:m])

        A = self._A[:m]
        Ainv = self._Ainv[:m]
        A += eta * glift[:, :, None] * glift[:, None, :]
        ag = np.einsum("mij,mj->mi", Ainv, glift)
        denom = 1.0 + eta * np.einsum("mi,mi->m", glift, ag)
        Ainv -= (eta / denom)[:, None, None] * (ag[:, :, None] * ag[:, None, :])

        self._since[:m] += 1
        stale = np.flatnonzero(self._since[:m] >= 512)
        if stale.size:
            fresh = np.linalg.inv(A[stale])
            Ainv[stale] = 0.5 * (fresh + np.swapaxes(fresh, 1, 2))
            self._since[stale] = 0

        U = self._V[:m] - np.einsum("mij,mj->mi", Ainv, glift)
        Xn = self._covariates(t + 1)
        self._V[:m] = self._project_pool(U, Xn)

    def _project_pool(self, U: np.ndarray, Xn: np.ndarray) -> np.ndarray:
        m, d = U.shape[0], self.config.d
        C = self.config.clip_c
        Ainv = self._Ainv[:m]
        if d == 1:
            s = np.einsum("mi,mi->m", U, Xn)
            b = np.clip(s, -C, C)
            inv_a = np.einsum("mij,mj->mi", Ainv, Xn)
            q = np.einsum("mi,mi->m", inv_a, Xn)
            return U - ((s - b) / q)[:, None] * inv_a
        return self._dykstra_pool(U, Xn)

    def _dykstra_pool(self, U: np.ndarray, Xn: np.ndarray) -> np.ndarray:
        m, d = U.shape[0], self.config.d
        C = self.config.clip_c
        tol = self.config.projection_tol
        x = U.copy()
        P = np.zeros((m, d, 2 * d))
        active = np.arange(m)
        for _ in range(self.config.projection_max_iter):
            xa = x[active]
            x0 = xa.copy()
            Pa = P[active]
            inv_a = self._Ainv[active]
            Xa = Xn[active]
            for k in range(d):
                sl = slice(2 * k, 2 * k + 2)
                shifted = xa + Pa[:, k]
                s = np.einsum("mc,mc->m", shifted[:, sl], Xa)
                b = np.clip(s, -C, C)
                ain = np.einsum("mic,mc->mi", inv_a[:, :, sl], Xa)
                q = np.einsum("mc,mc->m", ain[:, sl], Xa)
                y = shifted - ((s - b) / q)[:, None] * ain
                Pa[:, k] = shifted - y
                xa = y
            dx = xa - x0
            move = np.sqrt(np.maximum(
                np.einsum("mi,mij,mj->m", dx, self._A[active], dx), 0.0))
            blocks = xa.reshape(-1, d, 2)
            viol = (np.abs(np.einsum("mkc,mc->mk", blocks, Xa)) - C).max(axis=1)
            x[active] = xa
            P[active] = Pa
            done = (move < tol) & (viol <= tol)
            active = active[~done]
            if active.size == 0:
                return x
        starts = self._start[active].tolist()
        raise ProjectionError(
            f"pool projection did not converge for experts started at {starts}",
            best=x,
            iterations=self.config.projection_max_iter,
        )

    def _prune(self) -> None:
        m = self._m
        tau = self._start[:m]
        age = self.round + 1 - tau + 1
        lifetime = self.config.prune_window * (tau & -tau)
        keep = np.flatnonzero((age <= lifetime) | (tau == self.round + 1))
        if keep.size == m:
            return
        for name in ("_start", "_V", "_A", "_Ainv", "_since", "_logw", "_maxg"):
            arr = getattr(self, name)
            arr[: keep.size] = arr[keep]
        self._m = keep.size
        logw = self._logw[: self._m]
        shift = logw.max()
        self._logw[: self._m] = logw - (shift + np.log(np.exp(logw - shift).sum()))


@dataclass
class Trajectory:
    """Per-round record of one ensemble run."""

    predictions: np.ndarray
    loss_values: np.ndarray
    ensemble: FlhEnsemble
    expert_losses: list = field(default_factory=list)

    def interval_regret_vs_expert(self, tau: int, j: int) -> float:
        """``sum_{t=tau..j} f_t(p_t) - f_t(E_tau(t))`` (1-based rounds).

        Requires the run to have recorded expert losses.
        """
        if not self.expert_losses:
            raise ValueError("run was not recorded with expert losses")
        if not (1 <= tau <= j <= len(self.loss_values)):
            raise ValueError("interval out of range")
        total = 0.0
        for t in range(tau, j + 1):
            total += self.loss_values[t - 1] - self.expert_losses[t - 1][tau - 1]
        return total


def flh_run(config: FlhConfig, losses, record_expert_losses: bool = False) -> Trajectory:
    """Drive the ensemble over a loss sequence; deterministic given inputs."""
    losses = list(losses)
    if not losses:
        raise ValueError("losses must be nonempty")
    if any(loss.dimension != config.d for loss in losses):
        raise ValueError("every loss must match the configured dimension")
    if record_expert_losses and config.prune:
        raise ValueError("expert-loss recording assumes the full pool; disable pruning")
    n = len(losses)
    ensemble = FlhEnsemble(config, horizon_hint=n)
    predictions = np.zeros((n, config.d))
    values = np.zeros(n)
    expert_losses: list = []
    for t, loss in enumerate(losses):
        p = ensemble.predict()
        predictions[t] = p
        values[t] = loss.value(p)
        if record_expert_losses:
            expert_values = loss.value_batch(ensemble.last_expert_predictions)
            expert_losses.append(expert_values)
        ensemble.update(loss)
    return Trajectory(predictions=predictions, loss_values=values,
                      ensemble=ensemble, expert_losses=expert_losses)


def adaptive_overhead_bound(sigma: float, n: int) -> float:
    """Regret overhead of the ensemble against any single expert: ``4 log(n) / sigma``."""
    if n < 2:
        raise ValueError("n must be at least 2")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    return 4.0 * np.log(n) / sigma
