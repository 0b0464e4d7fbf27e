"""Exact verification layer: risks, look-ahead inequalities, block sums.

Everything here leans on the finiteness of the shipped processes: stationary
risks, conditional laws, and mixing coefficients are evaluated by matrix
algebra, so the inequalities that the analysis promises can be checked with
no Monte-Carlo noise on the deterministic side.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import bounds as bounds_mod
from .exceptions import InvalidParamError, InvalidTauError, TraceMissingError
from .learners import (
    BadFtlState,
    DualAveragingState,
    FtalVawState,
    OnlineGradientDescentState,
    RunLedger,
    best_fixed_comparator,
    regret,
    run_online,
)
from .losses import LossModel, expected_risk
from .process import (
    MarkovProcessModel,
    MixingProfile,
    SamplePath,
    StationaryModel,
    beta_coefficient,
    phi_coefficient,
    sample_path,
    stationary_distribution,
)
from .solvers import minimize_convex_on_ball
from .validation import as_feature_matrix


def minimize_expected_risk(
    loss: LossModel,
    stationary: StationaryModel,
    model: MarkovProcessModel,
    tol: float = 1e-10,
) -> np.ndarray:
    """Exact minimizer of the stationary risk over the feasible ball."""
    ys = model.labels
    pi = stationary.pi

    def vg(w):
        v = 0.0
        g = np.zeros(loss.domain.dim)
        for j in range(model.num_states):
            y = None if ys is None else float(ys[j])
            v += pi[j] * loss.raw_value(w, model.emissions[j], y)
            g += pi[j] * loss.raw_subgradient(w, model.emissions[j], y)
        return v, g

    return minimize_convex_on_ball(vg, loss.domain.center, loss.domain.ball_radius, tol=tol)


def _stationary_minimizer_cached(loss, stationary, model) -> tuple[np.ndarray, float]:
    key = ("argmin", id(loss))
    if key not in stationary.risk_cache:
        w_star = minimize_expected_risk(loss, stationary, model)
        stationary.risk_cache[key] = (w_star, expected_risk(loss, stationary, model, w_star))
    return stationary.risk_cache[key]


def excess_risk(
    w,
    loss: LossModel,
    stationary: StationaryModel,
    model: MarkovProcessModel,
    w_star=None,
) -> float:
    """Exact stationary excess risk f(w) - f(w*); w* defaults to argmin f."""
    if w_star is None:
        _, f_star = _stationary_minimizer_cached(loss, stationary, model)
    else:
        f_star = expected_risk(loss, stationary, model, w_star)
    return expected_risk(loss, stationary, model, w) - f_star


def exact_future_risk(
    w,
    loss: LossModel,
    model: MarkovProcessModel,
    state_n: int,
    k_test: int,
    w_star,
) -> float:
    """Exact conditional test risk started from a known end-of-training state."""
    if k_test < 1:
        raise InvalidParamError("k_test must be >= 1")
    ys = model.labels
    diff = np.array([
        loss.raw_value(w, model.emissions[j], None if ys is None else float(ys[j]))
        - loss.raw_value(w_star, model.emissions[j], None if ys is None else float(ys[j]))
        for j in range(model.num_states)
    ])
    law = np.zeros(model.num_states)
    law[int(state_n)] = 1.0
    total = 0.0
    for _ in range(k_test):
        law = law @ model.transition
        total += float(law @ diff)
    return total / k_test


@dataclass
class FutureRiskReport:
    exact: float
    mc_estimate: float
    mc_se: float
    n_mc: int

    @property
    def within_4se(self) -> bool:
        slack = 4.0 * self.mc_se + 1e-12
        return abs(self.mc_estimate - self.exact) <= slack


def future_risk(
    w,
    loss: LossModel,
    model: MarkovProcessModel,
    stationary: StationaryModel,
    path: SamplePath,
    k_test: int,
    n_mc: int = 200,
    seed: int = 0,
    w_star=None,
) -> FutureRiskReport:
    """Conditional test risk on the continuation of a trained path.

    The exact value averages the matrix-power conditional laws started from
    the state at the end of training; the Monte-Carlo estimate averages
    fresh simulated continuations and is reported with its standard error.
    """
    if k_test < 1:
        raise InvalidParamError("k_test must be >= 1")
    if w_star is None:
        w_star, _ = _stationary_minimizer_cached(loss, stationary, model)
    ys = model.labels
    diff = np.array([
        loss.raw_value(w, model.emissions[j], None if ys is None else float(ys[j]))
        - loss.raw_value(w_star, model.emissions[j], None if ys is None else float(ys[j]))
        for j in range(model.num_states)
    ])
    state_n = int(path.states[path.n_train - 1])
    exact = exact_future_risk(w, loss, model, state_n, k_test, w_star)

    rng = np.random.Generator(np.random.Philox(key=(np.uint64(seed), np.uint64(0xFACADE))))
    cum_rows = np.cumsum(model.transition, axis=1)
    means = np.empty(n_mc)
    for m in range(n_mc):
        s = state_n
        acc = 0.0
        for u in rng.random(k_test):
            s = int(np.searchsorted(cum_rows[s], u, side="right"))
            acc += diff[s]
        means[m] = acc / k_test
    mc = float(means.mean())
    se = float(means.std(ddof=1) / math.sqrt(n_mc)) if n_mc > 1 else 0.0
    return FutureRiskReport(exact=exact, mc_estimate=mc, mc_se=se, n_mc=n_mc)


@dataclass
class LookaheadReport:
    """Exact conditional-mean gaps of one hypothesis pair at one lag."""

    tau: int
    per_state_gap: np.ndarray
    phi_bound: float
    beta_bound: float
    pi_avg_abs_gap: float

    @property
    def max_gap(self) -> float:
        return float(self.per_state_gap.max())

    @property
    def phi_ok(self) -> bool:
        return bool(np.all(self.per_state_gap <= self.phi_bound + 1e-10))

    @property
    def beta_ok(self) -> bool:
        return self.pi_avg_abs_gap <= self.beta_bound + 1e-10


def lemma1_check(
    model: MarkovProcessModel,
    stationary: StationaryModel,
    loss: LossModel,
    w,
    v,
    tau: int,
) -> LookaheadReport:
    """Exact look-ahead gap E[F(w) - F(v) | state] - (f(w) - f(v)) at lag tau.

    The worst state gap must stay below G R phi(tau) and the pi-averaged
    absolute gap below G R beta(tau).
    """
    if tau < 1:
        raise InvalidTauError("tau must be >= 1")
    ys = model.labels
    diff = np.array([
        loss.raw_value(w, model.emissions[j], None if ys is None else float(ys[j]))
        - loss.raw_value(v, model.emissions[j], None if ys is None else float(ys[j]))
        for j in range(model.num_states)
    ])
    f_gap = float(stationary.pi @ diff)
    Pt = np.linalg.matrix_power(model.transition, tau)
    gaps = Pt @ diff - f_gap
    G, R = loss.lipschitz_G, loss.domain.radius_R
    return LookaheadReport(
        tau=tau,
        per_state_gap=gaps,
        phi_bound=G * R * phi_coefficient(model, stationary, tau),
        beta_bound=G * R * beta_coefficient(model, stationary, tau),
        pi_avg_abs_gap=float(stationary.pi @ np.abs(gaps)),
    )


@dataclass
class MasterInequalityReport:
    """Both sides of the key risk-vs-regret inequality plus its sub-bounds."""

    tau: int
    lhs: float
    rhs: float
    term1: float
    term1_bound: float
    term3: float
    term3_bound: float

    @property
    def holds(self) -> bool:
        return (
            self.lhs <= self.rhs + 1e-8
            and self.term1 <= self.term1_bound + 1e-8
            and self.term3 <= self.term3_bound + 1e-8
        )


def _labels_at(y, t):
    return None if y is None else float(y[t])


def master_inequality_check(
    ledger: RunLedger,
    loss: LossModel,
    X,
    y,
    w_star,
    tau: int,
    model: MarkovProcessModel,
    stationary: StationaryModel,
    regret_value: float,
) -> MasterInequalityReport:
    """Verify the per-run risk decomposition at lag tau.

    Needs the stored iterate trace and a sample stream extending tau steps
    past the training horizon. ``regret_value`` is the realized regret
    statistic against the best fixed comparator.
    """
    if ledger.iterates is None:
        raise TraceMissingError("master inequality check needs stored iterates")
    X = as_feature_matrix(X)
    n = ledger.n
    if X.shape[0] < n + tau:
        raise InvalidParamError(f"need at least n + tau = {n + tau} samples, got {X.shape[0]}")
    if tau < 1:
        raise InvalidTauError("tau must be >= 1")
    w_star = np.asarray(w_star, dtype=float)
    G, R = loss.lipschitz_G, loss.domain.radius_R

    f_iter = np.array([expected_risk(loss, stationary, model, w) for w in ledger.iterates])
    f_star = expected_risk(loss, stationary, model, w_star)
    lhs = math.fsum(f_iter - f_star)

    fw_star = np.array([loss.value(w_star, X[t], _labels_at(y, t)) for t in range(n + tau)])
    fw_shifted = np.array(
        [loss.value(ledger.iterates[t], X[t + tau], _labels_at(y, t + tau)) for t in range(n)]
    )
    term1 = math.fsum(ledger.step_losses - fw_star[:n])
    term3 = (
        math.fsum(fw_shifted[n - tau:] if tau <= n else fw_shifted)
        - math.fsum(ledger.step_losses[:tau])
        + math.fsum(fw_star[:tau])
        - math.fsum(fw_star[n:n + tau])
    )
    mixing_sum = math.fsum(
        f_iter[t] - fw_shifted[t] + fw_star[t + tau] - f_star for t in range(n)
    )
    rhs = (
        regret_value
        + G * tau * ledger.kappa_sum
        + 2.0 * tau * G * R
        + mixing_sum
    )
    return MasterInequalityReport(
        tau=tau,
        lhs=lhs,
        rhs=rhs,
        term1=term1,
        term1_bound=regret_value,
        term3=term3,
        term3_bound=2.0 * tau * G * R,
    )


@dataclass
class MartingaleDiagnostics:
    """Block decomposition of the centered risk sum at lag tau."""

    tau: int
    index_sets: list
    Z_values: list
    M_n: float
    S: np.ndarray
    S_hat: np.ndarray
    identity_gap: float
    shat_bound: float
    conditional_means: list | None = None
    conditional_bound: float | None = None

    @property
    def block_sizes(self) -> np.ndarray:
        return np.array([len(s) for s in self.index_sets])

    @property
    def identity_ok(self) -> bool:
        return abs(self.identity_gap) <= 1e-10

    @property
    def shat_ok(self) -> bool:
        return float(self.S_hat.sum()) <= self.shat_bound + 1e-8

    @property
    def conditional_ok(self) -> bool:
        if self.conditional_means is None:
            return True
        worst = max((float(np.max(c)) for c in self.conditional_means if len(c)), default=0.0)
        return worst <= self.conditional_bound + 1e-10


def block_decomposition(
    ledger: RunLedger,
    loss: LossModel,
    X,
    y,
    w_star,
    tau: int,
    model: MarkovProcessModel,
    stationary: StationaryModel,
    regret_value: float,
    path_states=None,
    exact_conditional: bool = False,
) -> MartingaleDiagnostics:
    """Build the interleaved block sums and verify their exact identities.

    The n centered summands are split into tau interleaved blocks; their
    reassembled total must match the direct sum exactly, the per-block
    realized sums must respect the stability bound, and (for finite chains)
    each block increment's exact conditional mean must stay below the
    worst-case mixing term.
    """
    if ledger.iterates is None:
        raise TraceMissingError("block decomposition needs stored iterates")
    if tau < 1:
        raise InvalidTauError("tau must be >= 1")
    X = as_feature_matrix(X)
    n = ledger.n
    if tau > n:
        raise InvalidParamError(f"tau must be <= n = {n}, got {tau}")
    if X.shape[0] < n + tau - 1:
        raise InvalidParamError(f"need at least n + tau - 1 = {n + tau - 1} samples")
    w_star = np.asarray(w_star, dtype=float)
    G, R = loss.lipschitz_G, loss.domain.radius_R

    f_iter = np.array([expected_risk(loss, stationary, model, w) for w in ledger.iterates])
    f_star = expected_risk(loss, stationary, model, w_star)
    fw_star = np.array(
        [loss.value(w_star, X[t], _labels_at(y, t)) for t in range(n + tau - 1)]
    )
    fw_shift = np.array(
        [loss.value(ledger.iterates[t], X[t + tau - 1], _labels_at(y, t + tau - 1)) for t in range(n)]
    )
    M_direct = math.fsum(f_iter - f_star - fw_shift + fw_star[tau - 1:n + tau - 1])

    base = n // tau
    remainder = n - tau * base
    index_sets, Z_values, S, S_hat = [], [], [], []
    for i in range(1, tau + 1):
        size = base + 1 if i <= remainder else base
        ts = np.arange(1, size + 1)
        index_sets.append(ts)
        hyp = (ts - 1) * tau + i          # 1-based iterate index
        samp = ts * tau + i - 1           # 1-based sample index
        z = (
            f_iter[hyp - 1] - f_star
            + fw_star[samp - 1] - fw_shift[hyp - 1]
        )
        Z_values.append(z)
        S.append(math.fsum(f_iter[hyp - 1] - f_star))
        S_hat.append(math.fsum(fw_shift[hyp - 1] - fw_star[samp - 1]))
    M_blocks = math.fsum(math.fsum(z) for z in Z_values)

    diag = MartingaleDiagnostics(
        tau=tau,
        index_sets=index_sets,
        Z_values=Z_values,
        M_n=M_direct,
        S=np.array(S),
        S_hat=np.array(S_hat),
        identity_gap=M_blocks - M_direct,
        shat_bound=regret_value + 2.0 * (tau - 1) * G * R + (tau - 1) * G * ledger.kappa_sum,
    )
    if exact_conditional:
        if path_states is None:
            raise InvalidParamError("exact conditionals need the path state sequence")
        ys = model.labels
        per_state = np.empty((n, model.num_states))
        star_state = np.empty(model.num_states)
        for j in range(model.num_states):
            label = None if ys is None else float(ys[j])
            star_state[j] = loss.raw_value(w_star, model.emissions[j], label)
            for t in range(n):
                per_state[t, j] = loss.raw_value(ledger.iterates[t], model.emissions[j], label)
        Pt = np.linalg.matrix_power(model.transition, tau)
        init_law = model.initial @ np.linalg.matrix_power(model.transition, tau - 1)
        cond = []
        for i in range(1, tau + 1):
            ts = index_sets[i - 1]
            hyp = (ts - 1) * tau + i
            rows = np.empty((len(ts), model.num_states))
            for k, s in enumerate(hyp):
                rows[k] = init_law if s == 1 else Pt[int(path_states[s - 2])]
            gaps = (
                f_iter[hyp - 1] - f_star
                + rows @ star_state - np.sum(rows * per_state[hyp - 1], axis=1)
            )
            cond.append(gaps)
        diag.conditional_means = cond
        diag.conditional_bound = G * R * phi_coefficient(model, stationary, tau)
    return diag


# ---------------------------------------------------------------------------
# Monte-Carlo coverage of the high-probability bounds
# ---------------------------------------------------------------------------

ALGORITHMS = ("da-convex", "da-strong", "ogd-convex", "ogd-strong", "ftal-vaw", "bad-ftl")


def make_state(algorithm: str, loss: LossModel, params: dict | None = None):
    """Instantiate a learner state by its configuration name."""
    params = params or {}
    domain, G = loss.domain, loss.lipschitz_G
    if algorithm == "da-convex":
        return DualAveragingState(domain, G, mode="convex-sqrt", scale=params.get("scale"))
    if algorithm == "da-strong":
        return DualAveragingState(domain, G, mode="strongly-convex", lam=params["lambda"])
    if algorithm == "ogd-convex":
        return OnlineGradientDescentState(domain, G, mode="convex-sqrt")
    if algorithm == "ogd-strong":
        return OnlineGradientDescentState(domain, G, mode="strongly-convex", lam=params["lambda"])
    if algorithm == "ftal-vaw":
        return FtalVawState(
            domain,
            sigma=params.get("sigma", loss.scalar_strong_sigma),
            epsilon=params.get("epsilon", 1.0),
            feature_bound_X=loss.feature_bound_X,
        )
    if algorithm == "bad-ftl":
        return BadFtlState(domain)
    raise InvalidParamError(f"unknown algorithm: {algorithm!r}")


@dataclass
class CoverageSpec:
    """Everything one Monte-Carlo coverage experiment needs, picklable."""

    model: MarkovProcessModel
    loss: LossModel
    algorithm: str
    theorem_id: str
    n_train: int
    n_paths: int
    seed: int
    delta: float = 0.1
    tau: int | str = "auto"
    mixing: MixingProfile | None = None
    algo_params: dict = field(default_factory=dict)
    workers: int = 1


def stability_envelope(algorithm: str, loss: LossModel, lam: float, n: int) -> np.ndarray | None:
    """Per-step movement envelope the algorithm promises, if any."""
    t = np.arange(1, n + 1, dtype=float)
    if algorithm in ("da-convex", "ogd-convex"):
        return loss.domain.radius_R / np.sqrt(t)
    if algorithm in ("da-strong", "ogd-strong"):
        return loss.lipschitz_G / (lam * t)
    return None


def _coverage_path(spec: CoverageSpec, stationary, w_star, f_star, lambda_min, path_index):
    path = sample_path(spec.model, spec.n_train, 0, seed=spec.seed, path_index=path_index)
    loss = spec.loss
    state = make_state(spec.algorithm, loss, spec.algo_params)
    ledger = run_online(state, loss, path.xs, path.ys)
    w_emp = best_fixed_comparator(loss, path.xs, path.ys)
    realized = regret(ledger, loss, path.xs, path.ys, w_emp)
    excess = expected_risk(loss, stationary, spec.model, ledger.avg) - f_star
    envelope = stability_envelope(
        spec.algorithm, loss, spec.algo_params.get("lambda", loss.strong_lambda), ledger.n
    )
    env_violation = None
    if envelope is not None:
        env_violation = float(np.max(ledger.stability - envelope[: len(ledger.stability)]))
    inp = bounds_mod.BoundInputs(
        n=spec.n_train,
        delta=spec.delta,
        G=loss.lipschitz_G,
        R=loss.domain.radius_R,
        lam=spec.algo_params.get("lambda", loss.strong_lambda),
        L=loss.scalar_lipschitz_L,
        sigma=loss.scalar_strong_sigma,
        X=loss.feature_bound_X,
        d=loss.domain.dim,
        lambda_min_cov=lambda_min,
        mixing=spec.mixing if spec.mixing is not None else MixingProfile.iid(),
        kappa_sum=ledger.kappa_sum,
        regret_value=realized,
        epsilon=spec.algo_params.get("epsilon", 1.0),
        w_star_norm=float(np.linalg.norm(w_star)),
    )
    tau = bounds_mod.resolve_tau(inp, spec.theorem_id, spec.tau)
    report = bounds_mod.evaluate_bound(spec.theorem_id, inp, tau)
    return {
        "path_index": path_index,
        "seed": spec.seed,
        "n": spec.n_train,
        "algorithm": spec.algorithm,
        "regret": realized,
        "kappa_sum": ledger.kappa_sum,
        "excess_risk_exact": excess,
        "bound_total": report.total,
        "tau": tau,
        "delta_effective": report.delta_effective,
        "violated": bool(excess > report.total + 1e-12),
        "kappa_envelope_violation": env_violation,
    }


def monte_carlo_coverage(spec: CoverageSpec, stationary: StationaryModel | None = None):
    """Run seeded independent paths and report the bound violation rate.

    Results are keyed by path index and merged in order, so the output is
    identical for any worker count.
    """
    stat = stationary if stationary is not None else stationary_distribution(spec.model)
    w_star = minimize_expected_risk(spec.loss, stat, spec.model)
    f_star = expected_risk(spec.loss, stat, spec.model, w_star)
    args = (spec, stat, w_star, f_star, stat.lambda_min)
    indices = range(spec.n_paths)
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            records = list(pool.map(_coverage_worker, [(args, i) for i in indices]))
    else:
        records = [_coverage_path(*args, i) for i in indices]
    records.sort(key=lambda r: r["path_index"])
    violations = sum(r["violated"] for r in records)
    deltas = [r["delta_effective"] for r in records]
    summary = {
        "n_paths": spec.n_paths,
        "violation_fraction": violations / spec.n_paths,
        "mean_excess": math.fsum(r["excess_risk_exact"] for r in records) / spec.n_paths,
        "bound_mean": math.fsum(r["bound_total"] for r in records) / spec.n_paths,
        "delta": spec.delta,
        "delta_effective": deltas[0] if deltas else None,
        "allowance": None if deltas[0] is None else max(0.0, 1.0 - deltas[0]),
        "margin_3se": 3.0 * math.sqrt(spec.delta * (1.0 - spec.delta) / spec.n_paths),
    }
    return records, summary


def _coverage_worker(packed):
    args, index = packed
    return _coverage_path(*args, index)


# ---------------------------------------------------------------------------
# Second-order learner diagnostics
# ---------------------------------------------------------------------------

@dataclass
class FtalDiagnostics:
    """Per-step checks of the second-order learner's stability machinery.

    Margins are minima of (bound - observed); all must stay above the stated
    negative tolerances for the run to pass.
    """

    hazan_sum: float
    hazan_bound: float
    loss_stability_margin: float
    near_stability_margin: float
    dual_gap_max: float | None

    @property
    def hazan_ok(self) -> bool:
        return self.hazan_sum <= self.hazan_bound + 1e-10

    @property
    def loss_stability_ok(self) -> bool:
        return self.loss_stability_margin >= -1e-8

    @property
    def near_stability_ok(self) -> bool:
        return self.near_stability_margin >= -1e-8

    @property
    def dual_ok(self) -> bool:
        return self.dual_gap_max is None or self.dual_gap_max <= 1e-8


def ftal_diagnostics(
    ledger: RunLedger,
    loss: LossModel,
    X,
    y,
    taus=(1, 5, 20),
    epsilon: float = 1.0,
    dual_check_steps=None,
) -> FtalDiagnostics:
    """Replay a second-order run and check its per-step inequalities.

    Verifies the logarithmic bound on the summed dual-norm energies, the
    per-step loss-difference stability bound, the weighted-norm closeness of
    iterates tau steps apart, and (at sampled steps) that the played iterate
    minimizes the explicit quadratic form of the update.
    """
    if ledger.iterates is None or ledger.mahalanobis_sq is None:
        raise TraceMissingError("second-order diagnostics need stored iterates")
    X = as_feature_matrix(X)
    n = ledger.n
    d = X.shape[1]
    L, sig = loss.scalar_lipschitz_L, loss.scalar_strong_sigma
    msq = ledger.mahalanobis_sq
    m = np.sqrt(msq)
    msq_prefix = np.concatenate(([0.0], np.cumsum(msq)))
    m_prefix = np.concatenate(([0.0], np.cumsum(m)))

    hazan_sum = float(msq.sum())
    hazan_bound = d * math.log(loss.feature_bound_X**2 * n / epsilon + 1.0)

    loss_margin = np.inf
    for tau in taus:
        for t in range(n - tau):  # 0-based t plays against sample t + tau
            label = _labels_at(y, t + tau)
            lhs = loss.value(ledger.iterates[t], X[t + tau], label) - loss.value(
                ledger.iterates[t + tau], X[t + tau], label
            )
            rhs = (L * L / (2.0 * sig)) * (
                6.0 * tau * msq[t + tau]
                + 5.0 * (msq_prefix[t + tau] - msq_prefix[t + 1])
                + 3.0 * msq[t]
            )
            loss_margin = min(loss_margin, rhs - lhs)

    near_margin = np.inf
    A = epsilon * np.eye(d)
    for u in range(n):
        A += np.outer(X[u], X[u])
        for tau in taus:
            t = u - tau
            if t < 0:
                continue
            delta = ledger.iterates[t] - ledger.iterates[u]
            lhs = math.sqrt(max(float(delta @ A @ delta), 0.0))
            rhs = (3.0 * L / sig) * (m_prefix[u] - m_prefix[t]) + (2.0 * L / sig) * (
                m_prefix[u + 1] - m_prefix[t + 1]
            )
            near_margin = min(near_margin, rhs - lhs)

    dual_gap = None
    if dual_check_steps is not None:
        dual_gap = 0.0
        for t1 in dual_check_steps:  # 1-based step numbers
            if not 1 <= t1 <= n:
                raise InvalidParamError(f"dual check step {t1} outside [1, {n}]")
            idx = t1 - 1
            grad_sum = np.zeros(d)
            corr = np.zeros(d)
            A_full = epsilon * np.eye(d) + np.outer(X[idx], X[idx])
            for i in range(idx):
                w_i = ledger.iterates[i]
                grad_sum += loss.subgradient(w_i, X[i], _labels_at(y, i))
                corr += float(X[i] @ w_i) * X[i]
                A_full += np.outer(X[i], X[i])

            def vg(w):
                quad = A_full @ w
                v = float(grad_sum @ w) + 0.5 * sig * float(w @ quad) - sig * float(corr @ w)
                return v, grad_sum + sig * quad - sig * corr

            w_ref = minimize_convex_on_ball(
                vg, loss.domain.center, loss.domain.ball_radius, tol=1e-11,
            )
            dual_gap = max(dual_gap, float(np.linalg.norm(w_ref - ledger.iterates[idx])))

    return FtalDiagnostics(
        hazan_sum=hazan_sum,
        hazan_bound=hazan_bound,
        loss_stability_margin=float(loss_margin) if math.isfinite(loss_margin) else 0.0,
        near_stability_margin=float(near_margin) if math.isfinite(near_margin) else 0.0,
        dual_gap_max=dual_gap,
    )
