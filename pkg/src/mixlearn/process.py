"""Finite-state Markov processes with exactly computable mixing coefficients.

A process model is a finite-state chain plus an emission map sending each
state to a sample vector (optionally with a label for prediction losses).
Because the sample space is finite, stationary risks, conditional laws, and
the total-variation mixing coefficients are all exact linear algebra rather
than estimates; the learner layer never relies on this finiteness.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

from .exceptions import (
    InvalidLagError,
    InvalidParamError,
    InvalidStateError,
    NonErgodicError,
)
from .validation import as_float_array, check_probability_vector, check_row_stochastic

# Horizon cap for the time-sup in the averaged mixing coefficient when the
# chain is not started from its stationary law. Exceeds every shipped chain's
# mixing time by more than an order of magnitude.
BETA_TIME_HORIZON = 200


@dataclass(frozen=True)
class MarkovProcessModel:
    """Row-stochastic chain with a total emission map state -> sample.

    ``emissions`` has one row per state; ``labels`` optionally attaches a
    scalar target per state for prediction losses. ``initial`` is the law of
    the first sample's state.
    """

    transition: np.ndarray
    emissions: np.ndarray
    initial: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        P = check_row_stochastic(self.transition)
        xs = as_float_array(self.emissions, "emissions")
        if xs.ndim == 1:
            xs = xs[:, None]
        if xs.shape[0] != P.shape[0]:
            raise ValueError("emission map must cover every state exactly once")
        init = check_probability_vector(self.initial, "initial")
        if init.shape[0] != P.shape[0]:
            raise ValueError("initial vector length does not match num_states")
        ys = self.labels
        if ys is not None:
            ys = as_float_array(ys, "labels", ndim=1)
            if ys.shape[0] != P.shape[0]:
                raise ValueError("labels must cover every state exactly once")
        for name, value in (("transition", P), ("emissions", xs), ("initial", init), ("labels", ys)):
            object.__setattr__(self, name, value)
        # Aggregation matrix from state probabilities to emitted-sample
        # probabilities: states sharing an emission share an outcome column.
        keys = {}
        cols = np.empty(self.num_states, dtype=np.intp)
        for j in range(self.num_states):
            key = (xs[j].tobytes(), None if ys is None else float(ys[j]))
            cols[j] = keys.setdefault(key, len(keys))
        outcome = np.zeros((self.num_states, len(keys)))
        outcome[np.arange(self.num_states), cols] = 1.0
        object.__setattr__(self, "_outcome_matrix", outcome)

    @property
    def num_states(self) -> int:
        return self.transition.shape[0]

    @property
    def dim(self) -> int:
        return self.emissions.shape[1]

    def emitted_law(self, state_probs: np.ndarray) -> np.ndarray:
        """Push a distribution over states through the emission map."""
        return state_probs @ self._outcome_matrix


@dataclass(frozen=True)
class StationaryModel:
    """Stationary law of a process and the moments the bounds consume."""

    pi: np.ndarray
    covariance: np.ndarray
    lambda_min: float
    risk_cache: dict = field(default_factory=dict, compare=False, repr=False)


@dataclass(frozen=True)
class SamplePath:
    """One simulated trajectory: ``n_train`` learning steps plus a test tail."""

    seed: int
    path_index: int
    states: np.ndarray
    xs: np.ndarray
    ys: np.ndarray | None
    n_train: int
    n_test: int

    def __post_init__(self):
        total = self.n_train + self.n_test
        if len(self.states) != total or len(self.xs) != total:
            raise ValueError("states and samples must both have length n_train + n_test")


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    """TV distance between two laws on a common finite support."""
    return 0.5 * float(np.abs(p - q).sum())


def stationary_distribution(
    model: MarkovProcessModel,
    tol: float = 1e-13,
    max_iter: int = 200_000,
) -> StationaryModel:
    """Stationary law plus emitted-feature second moment, by power iteration.

    Starts from a point mass so that periodic chains oscillate instead of
    accidentally converging; raises ``NonErgodicError`` when the iteration
    fails or lands on a law that misses states (reducible chain).
    """
    P = model.transition
    pi = np.zeros(model.num_states)
    pi[0] = 1.0
    for _ in range(max_iter):
        nxt = pi @ P
        if float(np.abs(nxt - pi).sum()) < tol:
            pi = nxt
            break
        pi = nxt
    else:
        raise NonErgodicError("power iteration did not converge; chain is reducible or periodic")
    # Polish to the float fixed point so downstream exact-risk identities hold
    # at machine precision rather than at the stopping tolerance.
    last = np.inf
    for _ in range(1_000):
        nxt = pi @ P
        diff = float(np.abs(nxt - pi).sum())
        if diff == 0.0 or diff >= last:
            pi = nxt
            break
        pi, last = nxt, diff
    pi = pi / pi.sum()
    if model.num_states > 1 and float(pi.min()) < 1e-14:
        raise NonErgodicError("stationary law vanishes on some states; chain is reducible")
    if float(np.abs(pi @ P - pi).sum()) > 1e-10:
        raise NonErgodicError("power iteration produced a non-stationary fixed point")
    xs = model.emissions
    cov = (xs * pi[:, None]).T @ xs
    cov = 0.5 * (cov + cov.T)
    lam_min = float(np.linalg.eigvalsh(cov)[0])
    if lam_min < -1e-12:
        raise NonErgodicError("feature second-moment matrix is not positive semidefinite")
    return StationaryModel(pi=pi, covariance=cov, lambda_min=lam_min)


def conditional_distribution(model: MarkovProcessModel, state: int, k: int) -> np.ndarray:
    """Law of the state k steps after observing ``state`` (one row of P^k)."""
    if k < 1:
        raise InvalidLagError(f"lag must be >= 1, got {k}")
    if not 0 <= state < model.num_states:
        raise InvalidStateError(f"state {state} out of range [0, {model.num_states})")
    Pk = np.linalg.matrix_power(model.transition, k)
    return Pk[state].copy()


def phi_coefficient(model: MarkovProcessModel, stationary: StationaryModel, k: int) -> float:
    """Worst-case-event mixing coefficient at lag k.

    Equals twice the max over single-state conditions of the TV distance
    between the k-step emitted law and the stationary emitted law. The max
    over point conditions equals the sup over all past events because any
    conditional law is a convex combination of the state-conditioned laws
    and TV to a fixed law is maximized at an extreme point.
    """
    if k < 1:
        raise InvalidLagError(f"lag must be >= 1, got {k}")
    Pk = np.linalg.matrix_power(model.transition, k)
    target = model.emitted_law(stationary.pi)
    worst = max(total_variation(model.emitted_law(Pk[j]), target) for j in range(model.num_states))
    return 2.0 * worst


def beta_coefficient(model: MarkovProcessModel, stationary: StationaryModel, k: int) -> float:
    """Average-event mixing coefficient at lag k.

    With a stationary start the average over the past is time-invariant and
    uses pi-weights. For non-stationary starts the time-sup is evaluated as
    a max over the first ``BETA_TIME_HORIZON`` conditioning times.
    """
    if k < 1:
        raise InvalidLagError(f"lag must be >= 1, got {k}")
    Pk = np.linalg.matrix_power(model.transition, k)
    target = model.emitted_law(stationary.pi)
    tv = np.array(
        [total_variation(model.emitted_law(Pk[j]), target) for j in range(model.num_states)]
    )
    if float(np.abs(model.initial - stationary.pi).sum()) <= 1e-10:
        return 2.0 * float(stationary.pi @ tv)
    marginal = model.initial
    best = float(marginal @ tv)
    for _ in range(BETA_TIME_HORIZON - 1):
        marginal = marginal @ model.transition
        best = max(best, float(marginal @ tv))
    return 2.0 * best


def sample_path(
    model: MarkovProcessModel,
    n_train: int,
    n_test: int = 0,
    seed: int = 0,
    path_index: int = 0,
) -> SamplePath:
    """Draw one trajectory; a pure function of (model, lengths, seed, index).

    Randomness comes from a counter-based generator keyed by
    ``(seed, path_index)`` so concurrent Monte-Carlo paths are reproducible
    regardless of scheduling.
    """
    if n_train < 1:
        raise InvalidParamError(f"n_train must be >= 1, got {n_train}")
    if n_test < 0:
        raise InvalidParamError(f"n_test must be >= 0, got {n_test}")
    if seed < 0 or path_index < 0:
        raise InvalidParamError("seed and path_index must be nonnegative")
    total = n_train + n_test
    rng = np.random.Generator(np.random.Philox(key=(np.uint64(seed), np.uint64(path_index))))
    u = rng.random(total)
    cum_rows = np.cumsum(model.transition, axis=1)
    states = np.empty(total, dtype=np.intp)
    states[0] = np.searchsorted(np.cumsum(model.initial), u[0], side="right")
    for t in range(1, total):
        states[t] = np.searchsorted(cum_rows[states[t - 1]], u[t], side="right")
    xs = model.emissions[states]
    ys = None if model.labels is None else model.labels[states]
    return SamplePath(
        seed=seed, path_index=path_index, states=states, xs=xs, ys=ys,
        n_train=n_train, n_test=n_test,
    )


# ---------------------------------------------------------------------------
# Built-in processes
# ---------------------------------------------------------------------------

def sticky_process(p: float) -> MarkovProcessModel:
    """Two-state chain emitting -1/+1 that refreshes with probability p.

    Each step keeps the previous value with probability 1 - p and redraws
    uniformly from {-1, +1} with probability p, so the stationary law is
    uniform and the worst-case mixing coefficient is exactly (1-p)^k.
    """
    if not 0.0 < p <= 1.0:
        raise InvalidParamError(f"sticky parameter must be in (0, 1], got {p}")
    q = p / 2.0
    return MarkovProcessModel(
        transition=np.array([[1.0 - q, q], [q, 1.0 - q]]),
        emissions=np.array([[-1.0], [1.0]]),
        initial=np.array([0.5, 0.5]),
    )


def iid_uniform() -> MarkovProcessModel:
    """Independent uniform -1/+1 samples (the p = 1 sticky chain)."""
    return sticky_process(1.0)


def sticky_regression(p: float) -> MarkovProcessModel:
    """Sticky chain as a 1-feature regression stream: x = 1, target +-1."""
    base = sticky_process(p)
    return MarkovProcessModel(
        transition=base.transition,
        emissions=np.array([[1.0], [1.0]]),
        labels=np.array([-1.0, 1.0]),
        initial=base.initial,
    )


def sticky_classification(p: float) -> MarkovProcessModel:
    """Sticky chain as a 1-feature classification stream: x = +-1, y = +1."""
    base = sticky_process(p)
    return MarkovProcessModel(
        transition=base.transition,
        emissions=np.array([[-1.0], [1.0]]),
        labels=np.array([1.0, 1.0]),
        initial=base.initial,
    )


def sticky_features(p: float, d: int) -> MarkovProcessModel:
    """Product of d sticky coordinates plus an independent +-1 label coordinate.

    Feature vectors live on the scaled hypercube {-1, +1}^d / sqrt(d), so the
    feature norm bound is exactly 1 and the stationary feature second moment
    is I/d. State index bit i < d is feature coordinate i; bit d is the label.
    """
    if not 0.0 < p <= 1.0:
        raise InvalidParamError(f"sticky parameter must be in (0, 1], got {p}")
    if d < 1:
        raise InvalidParamError(f"feature dimension must be >= 1, got {d}")
    q = p / 2.0
    T_feat = np.array([[1.0 - q, q], [q, 1.0 - q]])
    T_label = np.full((2, 2), 0.5)
    T = T_label
    for _ in range(d):
        T = np.kron(T, T_feat)
    n = 2 ** (d + 1)
    xs = np.empty((n, d))
    ys = np.empty(n)
    scale = 1.0 / math.sqrt(d)
    for s in range(n):
        for i in range(d):
            xs[s, i] = scale if (s >> i) & 1 else -scale
        ys[s] = 1.0 if (s >> d) & 1 else -1.0
    return MarkovProcessModel(
        transition=T, emissions=xs, labels=ys, initial=np.full(n, 1.0 / n)
    )


def three_state_demo() -> MarkovProcessModel:
    """Small asymmetric 3-state chain with unit-norm features and labels."""
    T = np.array([
        [0.5, 0.3, 0.2],
        [0.2, 0.6, 0.2],
        [0.1, 0.2, 0.7],
    ])
    xs = np.array([[1.0, 0.0], [0.0, 1.0], [0.6, 0.8]])
    ys = np.array([1.0, -1.0, 0.5])
    # Start the chain stationary so the averaged mixing coefficient is
    # time-invariant; the fixed point of T is computed once here.
    pi = np.ones(3) / 3.0
    for _ in range(20_000):
        nxt = pi @ T
        if float(np.abs(nxt - pi).sum()) < 1e-15:
            pi = nxt
            break
        pi = nxt
    return MarkovProcessModel(transition=T, emissions=xs, labels=ys, initial=pi / pi.sum())


_ALIAS_RE = re.compile(r"^([a-z0-9-]+)(?:\(([^)]*)\))?$")

_BUILTIN_FACTORIES = {
    "sticky": (sticky_process, 1),
    "iid-uniform": (lambda: iid_uniform(), 0),
    "3state-demo": (lambda: three_state_demo(), 0),
    "sticky-regression": (sticky_regression, 1),
    "sticky-classification": (sticky_classification, 1),
    "sticky-features": (lambda p, d: sticky_features(p, int(d)), 2),
}


def from_config(spec) -> MarkovProcessModel:
    """Build a process from an alias string or an explicit dictionary.

    Aliases: ``sticky(p)``, ``iid-uniform``, ``3state-demo``,
    ``sticky-regression(p)``, ``sticky-classification(p)``,
    ``sticky-features(p, d)``. Dictionaries carry ``num_states``,
    ``transition``, ``emissions``, optional ``labels``, and ``initial``.
    """
    if isinstance(spec, str):
        m = _ALIAS_RE.match(spec.strip())
        if not m:
            raise InvalidParamError(f"unparseable process alias: {spec!r}")
        name, argstr = m.group(1), m.group(2)
        if name not in _BUILTIN_FACTORIES:
            raise InvalidParamError(f"unknown process alias: {name!r}")
        factory, nargs = _BUILTIN_FACTORIES[name]
        args = [float(a) for a in argstr.split(",")] if argstr else []
        if len(args) != nargs:
            raise InvalidParamError(f"alias {name!r} takes {nargs} parameter(s), got {len(args)}")
        return factory(*args)
    if not isinstance(spec, dict):
        raise InvalidParamError("process spec must be an alias string or a dict")
    allowed = {"num_states", "transition", "emissions", "labels", "initial"}
    unknown = set(spec) - allowed
    if unknown:
        raise InvalidParamError(f"unknown process config keys: {sorted(unknown)}")
    try:
        model = MarkovProcessModel(
            transition=np.asarray(spec["transition"], dtype=float),
            emissions=np.asarray(spec["emissions"], dtype=float),
            labels=None if spec.get("labels") is None else np.asarray(spec["labels"], dtype=float),
            initial=np.asarray(spec["initial"], dtype=float),
        )
    except KeyError as exc:
        raise InvalidParamError(f"process config missing key: {exc}") from exc
    if "num_states" in spec and int(spec["num_states"]) != model.num_states:
        raise InvalidParamError("num_states does not match the transition matrix")
    return model


# ---------------------------------------------------------------------------
# Mixing profiles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MixingProfile:
    """Decay profile of the mixing coefficients, used by the bound formulas.

    ``family`` records which coefficient the parameters certify: a "phi"
    profile certifies both coefficients (the averaged one is dominated by the
    worst-case one), while a "beta" profile certifies only the averaged one.
    Tabulated profiles clamp to their last entry beyond the table, which
    stays a valid upper bound because the coefficients are non-increasing.
    """

    kind: str  # geometric | algebraic | tabulated | iid
    family: str = "phi"
    phi0: float = 1.0
    phi1: float = 0.0
    s: float = 1.0
    theta: float = 1.0
    phi_table: np.ndarray | None = None
    beta_table: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("geometric", "algebraic", "tabulated", "iid"):
            raise InvalidParamError(f"unknown mixing profile kind: {self.kind!r}")
        if self.family not in ("phi", "beta"):
            raise InvalidParamError(f"profile family must be phi or beta, got {self.family!r}")
        if self.kind == "tabulated":
            phi_t = self.phi_table
            if phi_t is None and self.beta_table is None:
                raise InvalidParamError("tabulated profile needs at least one table")
            for name in ("phi_table", "beta_table"):
                t = getattr(self, name)
                if t is None:
                    continue
                t = as_float_array(t, name, ndim=1)
                if np.any(t < -1e-15):
                    raise InvalidParamError(f"{name} has negative entries")
                if np.any(np.diff(t) > 1e-12):
                    raise InvalidParamError(f"{name} must be non-increasing in the lag")
                object.__setattr__(self, name, t)
            if self.phi_table is not None and self.beta_table is not None:
                n = min(len(self.phi_table), len(self.beta_table))
                if np.any(self.beta_table[:n] > self.phi_table[:n] + 1e-12):
                    raise InvalidParamError("beta table must be dominated by phi table")
        if min(self.phi0, self.phi1, self.s) < 0 or self.theta <= 0:
            raise InvalidParamError("profile parameters must be nonnegative (theta positive)")

    def _parametric(self, k):
        k = np.asarray(k, dtype=float)
        if self.kind == "iid":
            return np.zeros_like(k)
        if self.kind == "geometric":
            return self.phi0 * np.exp(-self.phi1 * np.power(k, self.s))
        return self.phi0 * np.power(k, -self.theta)

    def _from_table(self, table, k):
        k = np.asarray(k)
        idx = np.minimum(k, len(table)).astype(np.intp) - 1
        return table[idx]

    def phi(self, k):
        """Worst-case coefficient at lag k (scalar or array)."""
        if np.any(np.asarray(k) < 1):
            raise InvalidLagError("lag must be >= 1")
        if self.kind == "tabulated":
            if self.phi_table is None:
                raise InvalidParamError("profile has no worst-case table")
            return self._from_table(self.phi_table, k)
        if self.family == "beta":
            raise InvalidParamError("profile certifies only the averaged coefficient")
        return self._parametric(k)

    def beta(self, k):
        """Averaged coefficient at lag k (scalar or array)."""
        if np.any(np.asarray(k) < 1):
            raise InvalidLagError("lag must be >= 1")
        if self.kind == "tabulated":
            table = self.beta_table if self.beta_table is not None else self.phi_table
            return self._from_table(table, k)
        return self._parametric(k)

    @staticmethod
    def iid() -> "MixingProfile":
        return MixingProfile(kind="iid")

    @staticmethod
    def geometric(phi0: float, phi1: float, s: float = 1.0, family: str = "phi") -> "MixingProfile":
        return MixingProfile(kind="geometric", phi0=phi0, phi1=phi1, s=s, family=family)

    @staticmethod
    def algebraic(phi0: float, theta: float, family: str = "phi") -> "MixingProfile":
        return MixingProfile(kind="algebraic", phi0=phi0, theta=theta, family=family)

    @staticmethod
    def from_markov(
        model: MarkovProcessModel,
        stationary: StationaryModel,
        k_max: int = 100,
    ) -> "MixingProfile":
        """Exact tabulated profile for a finite chain over lags 1..k_max."""
        ks = range(1, k_max + 1)
        return MixingProfile(
            kind="tabulated",
            phi_table=np.array([phi_coefficient(model, stationary, k) for k in ks]),
            beta_table=np.array([beta_coefficient(model, stationary, k) for k in ks]),
        )


def sticky_mixing_profile(p: float) -> MixingProfile:
    """Exact geometric profile of the sticky chain: phi(k) = (1-p)^k."""
    if not 0.0 < p <= 1.0:
        raise InvalidParamError(f"sticky parameter must be in (0, 1], got {p}")
    if p == 1.0:
        return MixingProfile.iid()
    return MixingProfile.geometric(phi0=1.0, phi1=-math.log(1.0 - p), s=1.0)
