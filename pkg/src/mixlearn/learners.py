"""Online learners: dual averaging, projected gradient, and a stabilized
second-order follow-the-leader for linear prediction.

Each learner is a single-run state object with the examples' play/absorb
protocol: ``play(x)`` returns the iterate for the incoming sample (the
second-order learner folds the features into its regularizer before
answering), and ``absorb(g)`` feeds back the revealed subgradient. The
estimator classes wrap a full pass over a sample stream behind the usual
fit/predict surface and keep the run trace in a ledger.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .exceptions import (
    GradientTooLargeError,
    InvalidParamError,
    LengthMismatchError,
    NotPositiveDefiniteError,
)
from .losses import Domain, LossModel, batch_values
from .solvers import minimize_convex_on_ball, minimize_quadratic_on_ball
from .validation import as_feature_matrix


@dataclass
class RunLedger:
    """Trace of one online run.

    ``stability`` holds the observed per-step iterate movement
    ||w(t) - w(t+1)||; for learners that need the next sample to form the
    next iterate it has n - 1 entries instead of n. ``avg`` is the running
    mean of the played iterates (the averaged predictor).
    """

    n: int = 0
    step_losses: list = field(default_factory=list)
    stability: list = field(default_factory=list)
    avg: np.ndarray | None = None
    iterates: list | None = None
    mahalanobis_sq: list | None = None

    def record(self, w: np.ndarray, loss_value: float) -> None:
        self.n += 1
        self.step_losses.append(loss_value)
        if self.avg is None:
            self.avg = w.astype(float).copy()
        else:
            self.avg += (w - self.avg) / self.n
        if self.iterates is not None:
            self.iterates.append(w.copy())

    def finalize(self) -> "RunLedger":
        self.step_losses = np.asarray(self.step_losses, dtype=float)
        self.stability = np.asarray(self.stability, dtype=float)
        if self.iterates is not None:
            self.iterates = np.asarray(self.iterates, dtype=float)
        if self.mahalanobis_sq is not None:
            self.mahalanobis_sq = np.asarray(self.mahalanobis_sq, dtype=float)
        return self

    @property
    def kappa_sum(self) -> float:
        return float(np.sum(self.stability))


def _check_gradient(g: np.ndarray, G: float) -> np.ndarray:
    g = np.asarray(g, dtype=float)
    norm = float(np.linalg.norm(g))
    if norm > G * (1.0 + 1e-6):
        raise GradientTooLargeError(f"gradient norm {norm:.6g} exceeds bound {G:.6g}")
    return g


class DualAveragingState:
    """Weighted dual averaging over a ball.

    In the convex mode the proximal weight grows like sqrt(t), scaled so the
    per-step movement stays below R/sqrt(t) and the regret below 2 G R
    sqrt(n). In the strongly-convex mode the accumulated quadratic memory is
    anchored at the past iterates, which keeps the movement below
    G / (lambda t).
    """

    def __init__(self, domain: Domain, G: float, mode: str = "convex-sqrt",
                 lam: float = 0.0, scale: float | None = None):
        if mode not in ("convex-sqrt", "strongly-convex"):
            raise InvalidParamError(f"unknown dual-averaging mode: {mode!r}")
        if mode == "strongly-convex" and lam <= 0:
            raise InvalidParamError("strongly-convex mode needs lam > 0")
        self.domain = domain
        self.G = float(G)
        self.mode = mode
        self.lam = float(lam)
        self.scale = float(scale) if scale is not None else 1.5 * G / domain.radius_R
        self.t = 0
        self.grad_sum = np.zeros(domain.dim)
        self._anchor_sum = np.zeros(domain.dim)
        self.w = domain.center.copy()

    def play(self, x=None) -> np.ndarray:
        return self.w

    def absorb(self, g) -> np.ndarray:
        g = _check_gradient(g, self.G)
        self._anchor_sum += self.w
        self.grad_sum += g
        self.t += 1
        if self.mode == "convex-sqrt":
            beta = self.scale * np.sqrt(self.t)
            target = self.domain.center - self.grad_sum / beta
        else:
            target = (self.lam * self._anchor_sum - self.grad_sum) / (self.lam * self.t)
        self.w = self.domain.project(target)
        return self.w


class OnlineGradientDescentState:
    """Projected subgradient descent with the standard decaying step sizes."""

    def __init__(self, domain: Domain, G: float, mode: str = "convex-sqrt", lam: float = 0.0):
        if mode not in ("convex-sqrt", "strongly-convex"):
            raise InvalidParamError(f"unknown gradient-descent mode: {mode!r}")
        if mode == "strongly-convex" and lam <= 0:
            raise InvalidParamError("strongly-convex mode needs lam > 0")
        self.domain = domain
        self.G = float(G)
        self.mode = mode
        self.lam = float(lam)
        self.t = 0
        self.w = domain.center.copy()

    def play(self, x=None) -> np.ndarray:
        return self.w

    def absorb(self, g) -> np.ndarray:
        g = _check_gradient(g, self.G)
        self.t += 1
        if self.mode == "convex-sqrt":
            eta = self.domain.radius_R / (self.G * np.sqrt(self.t))
        else:
            eta = 1.0 / (self.lam * self.t)
        self.w = self.domain.project(self.w - eta * g)
        return self.w


class FtalVawState:
    """Second-order follow-the-leader stabilized by the incoming features.

    Before playing, the learner adds the current feature outer product to
    its regularizer matrix, then solves the ball-constrained quadratic
    min <z, w> + (sigma/2) w^T A w, where z accumulates the gradient-like
    vectors grad F(w(t)) - sigma x_t x_t^T w(t). ``sigma`` is the scalar
    curvature of the loss link, not the modulus of the expected risk.
    """

    def __init__(self, domain: Domain, sigma: float, epsilon: float = 1.0,
                 feature_bound_X: float | None = None):
        if epsilon <= 0:
            raise NotPositiveDefiniteError(f"epsilon must be positive, got {epsilon}")
        if sigma <= 0:
            raise InvalidParamError(f"sigma must be positive, got {sigma}")
        self.domain = domain
        self.sigma = float(sigma)
        self.epsilon = float(epsilon)
        self.X = feature_bound_X
        self.d = domain.dim
        self.t = 0
        self.A_eps = epsilon * np.eye(self.d)
        self.z_sum = np.zeros(self.d)
        self.w = domain.center.copy()
        self.last_mahalanobis_sq = np.nan
        self._last_x = None

    def play(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.X is not None and float(np.linalg.norm(x)) > self.X * (1.0 + 1e-6):
            raise InvalidParamError(
                f"feature norm {np.linalg.norm(x):.6g} exceeds bound {self.X:.6g}"
            )
        self.t += 1
        self.A_eps += np.outer(x, x)
        self.w, _, _ = minimize_quadratic_on_ball(
            self.sigma * self.A_eps, self.z_sum,
            self.domain.center, self.domain.ball_radius,
        )
        self.last_mahalanobis_sq = float(x @ np.linalg.solve(self.A_eps, x))
        self._last_x = x
        return self.w

    def absorb(self, g) -> np.ndarray:
        x = self._last_x
        self.z_sum += np.asarray(g, dtype=float) - self.sigma * x * float(x @ self.w)
        return self.w


class BadFtlState:
    """The plain follow-the-leader rule of the negative-regret example."""

    def __init__(self, domain: Domain):
        if domain.dim != 1:
            raise InvalidParamError("this rule is defined on a 1-dimensional domain")
        if not (domain.contains(np.ones(1)) and domain.contains(-np.ones(1))):
            raise InvalidParamError("the domain must contain the played points -1 and +1")
        self.domain = domain
        self.w = np.zeros(1)

    def play(self, x=None) -> np.ndarray:
        return self.w

    def absorb(self, g) -> np.ndarray:
        # For the linear loss the subgradient is the sample itself.
        self.w = bad_ftl_step(np.asarray(g, dtype=float))
        return self.w


def bad_ftl_step(z_prev) -> np.ndarray:
    """Play the negation of the previous sample."""
    return -np.asarray(z_prev, dtype=float)


def run_online(
    state,
    loss: LossModel,
    X,
    y=None,
    store_iterates: bool = False,
) -> RunLedger:
    """Feed a sample stream through a learner state and record the trace."""
    X = as_feature_matrix(X)
    n = X.shape[0]
    ledger = RunLedger(iterates=[] if store_iterates else None)
    track_mahal = isinstance(state, FtalVawState)
    if track_mahal:
        ledger.mahalanobis_sq = []
    # Learner iterates are feasible by construction (projection or the
    # constrained solve), so the driver evaluates the raw loss directly and
    # leaves the domain checks to the public per-call surface.
    raw_value, raw_grad, shift = loss.raw_value, loss.raw_subgradient, loss.shift
    prev_w = None
    for t in range(n):
        x = X[t]
        label = None if y is None else float(y[t])
        w = state.play(x)
        if prev_w is not None:
            diff = prev_w - w
            ledger.stability.append(float(diff @ diff) ** 0.5)
        ledger.record(w, raw_value(w, x, label) + shift)
        if track_mahal:
            ledger.mahalanobis_sq.append(state.last_mahalanobis_sq)
        g = raw_grad(w, x, label)
        w_next = state.absorb(g)
        if not track_mahal:
            diff = w - w_next
            ledger.stability.append(float(diff @ diff) ** 0.5)
            prev_w = None
        else:
            prev_w = w
    return ledger.finalize()


def regret(ledger: RunLedger, loss: LossModel, X, y, w_star) -> float:
    """Cumulative loss of the run minus that of the fixed comparator."""
    X = as_feature_matrix(X)
    if X.shape[0] != ledger.n:
        raise LengthMismatchError(f"ledger has {ledger.n} steps, samples have {X.shape[0]}")
    comparator = float(np.sum(batch_values(loss, np.asarray(w_star, dtype=float), X, y)))
    return float(np.sum(ledger.step_losses)) - comparator


def empirical_objective(loss: LossModel, X, y):
    """Mean raw loss over a sample batch as a value-and-gradient closure."""
    X = as_feature_matrix(X)
    n = X.shape[0]
    kind = loss.kind
    base_kind = loss.base.kind if kind == "ridge" else kind
    lam = loss.lam if kind == "ridge" else 0.0
    yv = None if y is None else np.asarray(y, dtype=float)

    def vg(w):
        w = np.asarray(w, dtype=float)
        a = X @ w
        if base_kind == "linear":
            v = float(np.mean(a))
            g = X.mean(axis=0)
        elif base_kind == "squared":
            r = a - yv
            v = 0.5 * float(np.mean(r * r))
            g = X.T @ r / n
        elif base_kind == "logistic":
            m = yv * a
            v = float(np.mean(np.logaddexp(0.0, -m)))
            s = 0.5 * (1.0 + np.tanh(-0.5 * m))
            g = -(X.T @ (yv * s)) / n
        else:  # pragma: no cover - all kinds enumerated above
            raise InvalidParamError(f"unsupported loss kind: {kind!r}")
        if lam:
            v += 0.5 * lam * float(w @ w)
            g = g + lam * w
        return v, g

    return vg


def best_fixed_comparator(
    loss: LossModel,
    X,
    y,
    domain: Domain | None = None,
    grid_points: int = 1025,
    tol: float = 1e-8,
    max_iter: int = 200_000,
) -> np.ndarray:
    """Minimizer of the empirical loss over the ball.

    Linear objectives are resolved on a grid (1-d) or in closed form; smooth
    objectives run accelerated projected gradient to the stated tolerance.
    """
    domain = domain if domain is not None else loss.domain
    X = as_feature_matrix(X)
    r = domain.ball_radius
    if loss.kind == "linear":
        total = X.sum(axis=0)
        if domain.dim == 1:
            grid = np.linspace(domain.center[0] - r, domain.center[0] + r, grid_points)
            return np.array([grid[np.argmin(grid * total[0])]])
        norm = float(np.linalg.norm(total))
        if norm == 0.0:
            return domain.center.copy()
        return domain.center - r * total / norm
    vg = empirical_objective(loss, X, y)
    return minimize_convex_on_ball(
        vg, domain.center, r, tol=tol, max_iter=max_iter
    )


# ---------------------------------------------------------------------------
# Estimator layer
# ---------------------------------------------------------------------------

class _OnlineEstimator(BaseEstimator):
    """Shared fit/predict surface over one online pass of a sample stream."""

    loss: LossModel
    store_iterates: bool

    def _make_state(self):
        raise NotImplementedError

    def fit(self, X, y=None):
        X = as_feature_matrix(X)
        if X.shape[1] != self.loss.domain.dim:
            raise InvalidParamError(
                f"stream dimension {X.shape[1]} does not match domain dimension "
                f"{self.loss.domain.dim}"
            )
        self.ledger_ = run_online(
            self._make_state(), self.loss, X, y, store_iterates=self.store_iterates
        )
        self.coef_ = np.asarray(self.ledger_.avg, dtype=float)
        self.n_iter_ = self.ledger_.n
        return self

    def decision_function(self, X):
        X = as_feature_matrix(X)
        return X @ self.coef_

    def predict(self, X):
        scores = self.decision_function(X)
        if self.loss.kind == "logistic":
            return np.where(scores >= 0.0, 1.0, -1.0)
        return scores


class DualAveragingLearner(_OnlineEstimator):
    """Dual averaging as an estimator; mode picks the stability envelope."""

    def __init__(self, loss: LossModel, mode: str = "convex-sqrt",
                 lam: float = 0.0, scale: float | None = None,
                 store_iterates: bool = False):
        self.loss = loss
        self.mode = mode
        self.lam = lam
        self.scale = scale
        self.store_iterates = store_iterates

    def _make_state(self):
        return DualAveragingState(
            self.loss.domain, self.loss.lipschitz_G,
            mode=self.mode, lam=self.lam, scale=self.scale,
        )


class OnlineGradientDescentLearner(_OnlineEstimator):
    """Projected online gradient descent as an estimator."""

    def __init__(self, loss: LossModel, mode: str = "convex-sqrt",
                 lam: float = 0.0, store_iterates: bool = False):
        self.loss = loss
        self.mode = mode
        self.lam = lam
        self.store_iterates = store_iterates

    def _make_state(self):
        return OnlineGradientDescentState(
            self.loss.domain, self.loss.lipschitz_G, mode=self.mode, lam=self.lam
        )


class FtalVawLearner(_OnlineEstimator):
    """Feature-stabilized second-order learner for linear prediction."""

    def __init__(self, loss: LossModel, epsilon: float = 1.0,
                 store_iterates: bool = False):
        self.loss = loss
        self.epsilon = epsilon
        self.store_iterates = store_iterates

    def _make_state(self):
        return FtalVawState(
            self.loss.domain, self.loss.scalar_strong_sigma,
            epsilon=self.epsilon, feature_bound_X=self.loss.feature_bound_X,
        )


class BadFtlLearner(_OnlineEstimator):
    """Follow-the-leader counterexample learner (negative expected regret)."""

    def __init__(self, loss: LossModel, store_iterates: bool = False):
        self.loss = loss
        self.store_iterates = store_iterates

    def _make_state(self):
        return BadFtlState(self.loss.domain)
