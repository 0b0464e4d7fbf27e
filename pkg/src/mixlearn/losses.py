"""Loss families over a compact Euclidean ball, with exact constants.

The feasible set is a ball whose *diameter* is the radius constant R carried
by the loss model, so any two feasible points are within R of each other.
Constants (Lipschitz bound, scalar curvature, feature bound) are computed
exactly from a finite process model, and a scalar shift places all loss
values in [0, G R].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import DomainViolationError, InvalidParamError, UnsupportedLossError
from .process import MarkovProcessModel, StationaryModel
from .solvers import minimize_convex_on_ball, project_ball
from .validation import as_float_array


@dataclass(frozen=True)
class Domain:
    """Euclidean ball given by its center and pairwise-distance bound R.

    ``radius_R`` bounds the distance between any two feasible points, so the
    ball's radius is R / 2.
    """

    center: np.ndarray
    radius_R: float

    def __post_init__(self):
        c = as_float_array(self.center, "center", ndim=1)
        object.__setattr__(self, "center", c)
        if self.radius_R <= 0:
            raise InvalidParamError(f"radius_R must be positive, got {self.radius_R}")

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    @property
    def ball_radius(self) -> float:
        return 0.5 * self.radius_R

    def project(self, w) -> np.ndarray:
        return project_ball(np.asarray(w, dtype=float), self.center, self.ball_radius)

    def contains(self, w, rtol: float = 1e-9) -> bool:
        diff = np.asarray(w, dtype=float) - self.center
        limit = self.ball_radius * (1.0 + rtol)
        return float(diff @ diff) <= limit * limit

    def check(self, w) -> None:
        if not self.contains(w):
            raise DomainViolationError(
                f"hypothesis at distance {np.linalg.norm(np.asarray(w) - self.center):.6g} "
                f"from center exceeds ball radius {self.ball_radius:.6g}"
            )

    def random_point(self, rng: np.random.Generator, boundary: bool = False) -> np.ndarray:
        direction = rng.standard_normal(self.dim)
        direction /= max(np.linalg.norm(direction), 1e-300)
        r = self.ball_radius if boundary else self.ball_radius * rng.random() ** (1.0 / self.dim)
        return self.center + r * direction


def project(domain: Domain, w) -> np.ndarray:
    """Euclidean projection onto the feasible ball."""
    return domain.project(w)


class LossModel:
    """Base class carrying the constants every bound formula consumes.

    Subclasses define the raw (unshifted) per-sample loss, its subgradient,
    and, when twice differentiable, the scalar curvature of the link.
    """

    kind = "abstract"

    def __init__(self, domain: Domain, G: float, L: float, sigma: float,
                 X: float, shift: float, strong_lambda: float = 0.0):
        self.domain = domain
        self.lipschitz_G = float(G)
        self.scalar_lipschitz_L = float(L)
        self.scalar_strong_sigma = float(sigma)
        self.feature_bound_X = float(X)
        self.shift = float(shift)
        self.strong_lambda = float(strong_lambda)

    # subclass surface ----------------------------------------------------
    def raw_value(self, w, x, y=None) -> float:
        raise NotImplementedError

    def raw_subgradient(self, w, x, y=None) -> np.ndarray:
        raise NotImplementedError

    def scalar_curvature(self, a: float, y: float) -> float:
        raise UnsupportedLossError(f"{self.kind} loss has no scalar second derivative")

    def min_on_ball(self, x, y=None) -> float:
        """Exact minimum of the raw loss over the feasible ball."""
        raise NotImplementedError

    # shared surface -------------------------------------------------------
    def value(self, w, x, y=None) -> float:
        self.domain.check(w)
        return self.raw_value(w, x, y) + self.shift

    def subgradient(self, w, x, y=None) -> np.ndarray:
        self.domain.check(w)
        return self.raw_subgradient(w, x, y)

    def margin_interval(self, x) -> tuple[float, float]:
        """Range of <x, w> over the feasible ball."""
        mid = float(np.dot(x, self.domain.center))
        half = float(np.linalg.norm(x)) * self.domain.ball_radius
        return mid - half, mid + half


def _sigmoid(t: float) -> float:
    return 0.5 * (1.0 + math.tanh(0.5 * t))


class LinearLoss(LossModel):
    """Plain inner-product loss <w, z>; the sample itself is the gradient."""

    kind = "linear"

    def raw_value(self, w, x, y=None) -> float:
        return float(np.dot(w, x))

    def raw_subgradient(self, w, x, y=None) -> np.ndarray:
        return np.asarray(x, dtype=float).copy()

    def min_on_ball(self, x, y=None) -> float:
        lo, _ = self.margin_interval(x)
        return lo


class SquaredLoss(LossModel):
    """Half squared residual of the linear prediction."""

    kind = "squared"

    def raw_value(self, w, x, y=None) -> float:
        a = float(np.dot(w, x))
        return 0.5 * (y - a) ** 2

    def raw_subgradient(self, w, x, y=None) -> np.ndarray:
        a = float(np.dot(w, x))
        return -(y - a) * np.asarray(x, dtype=float)

    def scalar_curvature(self, a: float, y: float) -> float:
        return 1.0

    def min_on_ball(self, x, y=None) -> float:
        lo, hi = self.margin_interval(x)
        a = min(max(y, lo), hi)
        return 0.5 * (y - a) ** 2


class LogisticLoss(LossModel):
    """Logistic link on the signed margin y <x, w>."""

    kind = "logistic"

    def raw_value(self, w, x, y=None) -> float:
        return float(np.logaddexp(0.0, -y * float(np.dot(w, x))))

    def raw_subgradient(self, w, x, y=None) -> np.ndarray:
        a = float(np.dot(w, x))
        return -y * _sigmoid(-y * a) * np.asarray(x, dtype=float)

    def scalar_curvature(self, a: float, y: float) -> float:
        s = _sigmoid(y * a)
        return s * (1.0 - s)

    def min_on_ball(self, x, y=None) -> float:
        lo, hi = self.margin_interval(x)
        best = hi if y > 0 else lo
        return float(np.logaddexp(0.0, -y * best))


class RidgeLoss(LossModel):
    """A base prediction loss plus a quadratic penalty (lam/2) ||w||^2.

    The penalty makes every per-sample loss lam-strongly convex, which is
    what the fast stability envelopes need.
    """

    kind = "ridge"

    def __init__(self, base: LossModel, lam: float, shift: float):
        if lam <= 0:
            raise InvalidParamError(f"ridge penalty must be positive, got {lam}")
        domain = base.domain
        reach = float(np.linalg.norm(domain.center)) + domain.ball_radius
        super().__init__(
            domain,
            G=base.lipschitz_G + lam * reach,
            L=base.scalar_lipschitz_L,
            sigma=base.scalar_strong_sigma,
            X=base.feature_bound_X,
            shift=shift,
            strong_lambda=lam,
        )
        self.base = base
        self.lam = float(lam)

    def raw_value(self, w, x, y=None) -> float:
        w = np.asarray(w, dtype=float)
        return self.base.raw_value(w, x, y) + 0.5 * self.lam * float(w @ w)

    def raw_subgradient(self, w, x, y=None) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        return self.base.raw_subgradient(w, x, y) + self.lam * w

    def scalar_curvature(self, a: float, y: float) -> float:
        return self.base.scalar_curvature(a, y)

    def min_on_ball(self, x, y=None) -> float:
        def vg(w):
            return (self.raw_value(w, x, y), self.raw_subgradient(w, x, y))

        w = minimize_convex_on_ball(
            vg, self.domain.center, self.domain.ball_radius, tol=1e-11
        )
        return self.raw_value(w, x, y)


_PREDICTION_KINDS = ("squared", "logistic")


def make_loss(
    kind: str,
    model: MarkovProcessModel,
    domain: Domain,
    lam: float = 0.0,
    base: str = "squared",
    shift: float | str = "auto",
) -> LossModel:
    """Build a loss with constants computed exactly from a finite process.

    ``kind`` is one of ``linear``, ``squared``, ``logistic``, ``ridge``;
    ridge wraps ``base``. ``shift="auto"`` centers the values at the exact
    minimum over states and the feasible ball; construction then audits the
    [0, G R] range on a probe grid.
    """
    if domain.dim != model.dim:
        raise InvalidParamError(
            f"domain dimension {domain.dim} does not match process dimension {model.dim}"
        )
    xs = model.emissions
    ys = model.labels
    X = float(max(np.linalg.norm(x) for x in xs))
    ball_r = domain.ball_radius
    mids = xs @ domain.center
    halves = np.linalg.norm(xs, axis=1) * ball_r
    los, his = mids - halves, mids + halves

    if kind == "linear":
        loss = LinearLoss(domain, G=X, L=1.0, sigma=0.0, X=X, shift=0.0)
    elif kind in _PREDICTION_KINDS or kind == "ridge":
        base_kind = base if kind == "ridge" else kind
        if ys is None:
            raise InvalidParamError(f"{base_kind} loss needs labeled emissions")
        if base_kind == "squared":
            L = float(np.max(np.maximum(np.abs(los - ys), np.abs(his - ys))))
            sigma = 1.0
            cls = SquaredLoss
        elif base_kind == "logistic":
            # |l'(a)| = sigmoid(-y a), maximized at the margin endpoint that
            # minimizes y a; curvature is minimized where |a| is largest.
            L = max(_sigmoid(max(-y * lo, -y * hi)) for y, lo, hi in zip(ys, los, his))
            m = np.maximum(np.abs(los), np.abs(his))
            sigma = float(np.min([_sigmoid(v) * (1.0 - _sigmoid(v)) for v in m]))
            cls = LogisticLoss
        else:
            raise InvalidParamError(f"unsupported ridge base: {base!r}")
        inner = cls(domain, G=L * X, L=L, sigma=sigma, X=X, shift=0.0)
        loss = RidgeLoss(inner, lam=lam, shift=0.0) if kind == "ridge" else inner
    else:
        raise InvalidParamError(f"unknown loss kind: {kind!r}")

    if shift == "auto":
        pairs = zip(xs, ys if ys is not None else [None] * len(xs))
        loss.shift = -min(loss.min_on_ball(x, y) for x, y in pairs)
    else:
        loss.shift = float(shift)
    _audit_range(loss, model)
    return loss


def _audit_range(loss: LossModel, model: MarkovProcessModel, tol: float = 1e-9) -> None:
    """Check shifted values stay within [0, G R] on a probe grid."""
    if loss.shift == 0.0 and model.labels is None and loss.kind == "linear":
        return  # unshifted linear losses are intentionally signed
    domain = loss.domain
    probes = [domain.center.copy()]
    for i in range(domain.dim):
        e = np.zeros(domain.dim)
        e[i] = domain.ball_radius
        probes.append(domain.center + e)
        probes.append(domain.center - e)
    rng = np.random.Generator(np.random.Philox(key=(np.uint64(0), np.uint64(0))))
    probes.extend(domain.random_point(rng, boundary=True) for _ in range(8))
    top = loss.lipschitz_G * domain.radius_R
    ys = model.labels
    for j, x in enumerate(model.emissions):
        y = None if ys is None else ys[j]
        for w in probes:
            v = loss.raw_value(w, x, y) + loss.shift
            if v < -tol or v > top + tol:
                raise InvalidParamError(
                    f"shifted loss value {v:.6g} escapes [0, {top:.6g}]; "
                    "pick a shift or domain consistent with the range assumption"
                )


# ---------------------------------------------------------------------------
# Module-level operation surface
# ---------------------------------------------------------------------------

def batch_values(loss: LossModel, w, X, y=None) -> np.ndarray:
    """Shifted loss values of one hypothesis across a sample batch."""
    loss.domain.check(w)
    w = np.asarray(w, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    a = X @ w
    kind = loss.base.kind if loss.kind == "ridge" else loss.kind
    if kind == "linear":
        vals = a
    elif kind == "squared":
        r = np.asarray(y, dtype=float) - a
        vals = 0.5 * r * r
    elif kind == "logistic":
        vals = np.logaddexp(0.0, -np.asarray(y, dtype=float) * a)
    else:  # pragma: no cover - kinds enumerated above
        raise InvalidParamError(f"unsupported loss kind: {loss.kind!r}")
    if loss.kind == "ridge":
        vals = vals + 0.5 * loss.lam * float(w @ w)
    return vals + loss.shift


def loss_value(loss: LossModel, w, x, y=None) -> float:
    """Shifted loss value F(w; z) at sample z = (x, y)."""
    return loss.value(w, x, y)


def subgradient(loss: LossModel, w, x, y=None) -> np.ndarray:
    """A subgradient of F(.; z) at w; norm bounded by the Lipschitz constant."""
    return loss.subgradient(w, x, y)


def expected_risk(
    loss: LossModel,
    stationary: StationaryModel,
    model: MarkovProcessModel,
    w,
) -> float:
    """Exact stationary risk: the pi-weighted finite sum of per-state losses."""
    w = np.asarray(w, dtype=float)
    loss.domain.check(w)
    ys = model.labels
    total = 0.0
    for j in range(model.num_states):
        y = None if ys is None else ys[j]
        total += float(stationary.pi[j]) * (loss.raw_value(w, model.emissions[j], y) + loss.shift)
    return total


def expected_risk_hessian(
    loss: LossModel,
    stationary: StationaryModel,
    model: MarkovProcessModel,
    w,
) -> np.ndarray:
    """Exact Hessian of the stationary risk for twice-differentiable kinds."""
    w = np.asarray(w, dtype=float)
    loss.domain.check(w)
    ys = model.labels
    if ys is None:
        raise UnsupportedLossError("expected-risk Hessian needs a labeled prediction loss")
    d = model.dim
    H = np.zeros((d, d))
    for j in range(model.num_states):
        x = model.emissions[j]
        a = float(np.dot(w, x))
        H += float(stationary.pi[j]) * loss.scalar_curvature(a, float(ys[j])) * np.outer(x, x)
    if isinstance(loss, RidgeLoss):
        H += loss.lam * np.eye(d)
    return H
