"""Term-by-term evaluation of the generalization bounds.

Each evaluator reproduces one displayed bound exactly, split into named
terms whose sum is the reported total. Block lengths are selected either on
the full integer grid or by the closed-form rules attached to geometric and
algebraic mixing profiles; the unspecified universal constants of those
closed forms are never needed because the chosen block length is substituted
back into the parent bound's explicit-constant form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DeltaTooLargeError, InvalidParamError, InvalidTauError
from .process import MixingProfile


@dataclass
class BoundInputs:
    """Constants a bound evaluation consumes.

    ``regret_value`` is the realized (or bounding) regret statistic,
    ``kappa_sum`` the summed per-step stability, and ``w_star_norm`` the
    Euclidean norm of the comparator for the linear-prediction bound.
    """

    n: int
    delta: float = 0.1
    k_test: int = 1
    G: float = 1.0
    R: float = 1.0
    lam: float = 0.0
    L: float = 1.0
    sigma: float = 1.0
    X: float = 1.0
    d: int = 1
    lambda_min_cov: float = 0.0
    mixing: MixingProfile = field(default_factory=MixingProfile.iid)
    kappa_sum: float = 0.0
    regret_value: float = 0.0
    epsilon: float = 1.0
    w_star_norm: float = 0.0

    def __post_init__(self):
        if self.n < 1:
            raise InvalidParamError(f"n must be >= 1, got {self.n}")
        if not 0.0 < self.delta < 1.0:
            raise InvalidParamError(f"delta must be in (0, 1), got {self.delta}")
        for name in ("G", "R", "L", "sigma", "X", "kappa_sum", "epsilon"):
            if getattr(self, name) < 0:
                raise InvalidParamError(f"{name} must be nonnegative")

    @property
    def K_n(self) -> float:
        """Summed stability measured in units of the domain bound."""
        return self.kappa_sum / self.R


@dataclass
class BoundReport:
    """One bound evaluated at a block length, split into named terms."""

    theorem_id: str
    tau: int
    terms: dict
    total: float
    delta_effective: float | None

    def __post_init__(self):
        if self.tau < 1:
            raise InvalidTauError(f"tau must be >= 1, got {self.tau}")
        if abs(self.total - math.fsum(self.terms.values())) > 1e-12 * max(1.0, abs(self.total)):
            raise InvalidParamError("bound total does not equal the sum of its terms")


def _check_tau(tau) -> None:
    if np.any(np.asarray(tau) < 1):
        raise InvalidTauError("tau must be >= 1")


def _report(theorem_id, tau, terms, delta_effective) -> BoundReport:
    terms = {k: float(v) for k, v in terms.items()}
    return BoundReport(
        theorem_id=theorem_id,
        tau=int(tau),
        terms=terms,
        total=math.fsum(terms.values()),
        delta_effective=delta_effective,
    )


# ---------------------------------------------------------------------------
# Term builders (vectorized over tau so grid search stays cheap)
# ---------------------------------------------------------------------------

def _terms_regret_to_expected(inp: BoundInputs, tau):
    n, G, R = inp.n, inp.G, inp.R
    return {
        "regret_term": inp.regret_value / n + 0.0 * np.asarray(tau, dtype=float),
        "stability_term": (tau - 1) * G * inp.kappa_sum / n,
        "boundary_term": 2.0 * (tau - 1) * G * R / n,
        "mixing_term": inp.mixing.beta(tau) * G * R,
    }


def _terms_expected_generalization(inp: BoundInputs, tau):
    n, k, G, R = inp.n, inp.k_test, inp.G, inp.R
    if k < 1:
        raise InvalidParamError("k_test must be >= 1 for the test-risk bound")
    return {
        "regret_term": inp.regret_value / n + 0.0 * np.asarray(tau, dtype=float),
        "stability_term": (tau - 1) * G * R * inp.kappa_sum / n,
        "boundary_term": (tau - 1) * G * R * (2.0 / n + 1.0 / k),
        "mixing_term": 2.0 * inp.mixing.beta(tau) * G * R,
    }


def _terms_highprob_convex_phi(inp: BoundInputs, tau):
    n, G, R, delta = inp.n, inp.G, inp.R, inp.delta
    tau = np.asarray(tau, dtype=float)
    return {
        "regret_term": inp.regret_value / n + 0.0 * tau,
        "stability_term": (tau - 1) * G * inp.kappa_sum / n,
        "martingale_term": 2.0 * G * R * np.sqrt((2.0 * tau / n) * np.log(tau / delta)),
        "mixing_term": inp.mixing.phi(tau) * G * R,
        "boundary_term": 2.0 * (tau - 1) * G * R / n,
    }


def _terms_highprob_convex_beta(inp: BoundInputs, tau):
    n, G, R, delta = inp.n, inp.G, inp.R, inp.delta
    tau = np.asarray(tau, dtype=float)
    return {
        "regret_term": inp.regret_value / n + 0.0 * tau,
        "stability_term": (tau - 1) * G * inp.kappa_sum / n,
        "martingale_term": 2.0 * G * R * np.sqrt((2.0 * tau / n) * np.log(2.0 * tau / delta)),
        "mixing_term": 2.0 * inp.mixing.beta(tau) * G * R / delta,
        "boundary_term": 2.0 * (tau - 1) * G * R / n,
    }


def _require_freedman_regime(inp: BoundInputs) -> None:
    if inp.delta >= 1.0 / math.e:
        raise DeltaTooLargeError(f"delta must be < 1/e, got {inp.delta}")
    if inp.n < 3:
        raise InvalidParamError(f"n must be >= 3, got {inp.n}")


def _terms_highprob_strong_phi(inp: BoundInputs, tau):
    _require_freedman_regime(inp)
    if inp.lam <= 0:
        raise InvalidParamError("the strongly convex bound needs lam > 0")
    n, G, R, delta, lam = inp.n, inp.G, inp.R, inp.delta, inp.lam
    tau = np.asarray(tau, dtype=float)
    log_td = np.log(tau / delta)
    return {
        "regret_term": 2.0 * inp.regret_value / n + 0.0 * tau,
        "stability_term": 2.0 * (tau - 1) * G * inp.kappa_sum / n,
        "boundary_term": 4.0 * (tau - 1) * G * R / n,
        "martingale_term": (32.0 * G * G * tau / (lam * n)) * log_td
        + (12.0 * tau * R * G / n) * log_td,
        "mixing_term": 2.0 * R * G * inp.mixing.phi(tau),
    }


def _terms_highprob_strong_beta(inp: BoundInputs, tau):
    _require_freedman_regime(inp)
    if inp.lam <= 0:
        raise InvalidParamError("the strongly convex bound needs lam > 0")
    n, G, R, delta, lam = inp.n, inp.G, inp.R, inp.delta, inp.lam
    tau = np.asarray(tau, dtype=float)
    return {
        "regret_term": 2.0 * inp.regret_value / n + 0.0 * tau,
        "stability_term": 2.0 * (tau - 1) * G * inp.kappa_sum / n,
        "boundary_term": 4.0 * (tau - 1) * G * R / n,
        "martingale_term": (32.0 * G * G * tau / (lam * n)) * np.log(tau / delta)
        + (12.0 * tau * R * G / n) * np.log(2.0 * tau / delta),
        "mixing_term": 2.0 * R * G * inp.mixing.beta(tau) / delta,
    }


def _terms_linear_generalization(inp: BoundInputs, tau):
    _require_freedman_regime(inp)
    if inp.lambda_min_cov <= 0:
        raise InvalidParamError("the linear-prediction bound needs lambda_min_cov > 0")
    n, delta = inp.n, inp.delta
    L2, sig = inp.L * inp.L, inp.sigma
    tau = np.asarray(tau, dtype=float)
    log_n = math.log(inp.X**2 * n + 1.0)
    log_td = np.log(tau / delta)
    return {
        "regret_term": (9.0 * L2 * inp.d / (sig * n)) * log_n + 0.0 * tau,
        "stability_term": (14.0 * tau * L2 * inp.d / (sig * n)) * log_n,
        "comparator_term": (sig / n) * inp.w_star_norm**2 + 0.0 * tau,
        "martingale_term": (32.0 * L2 * inp.X**2 * tau / (sig * n * inp.lambda_min_cov)) * log_td
        + (8.0 * tau * L2 / (sig * n)) * (3.0 * log_td + 1.0),
        "mixing_term": (4.0 * L2 / sig) * inp.mixing.phi(tau),
    }


_THEOREMS = {
    "regret-to-expected": (_terms_regret_to_expected, None),
    "expected-generalization": (_terms_expected_generalization, None),
    "highprob-convex-phi": (_terms_highprob_convex_phi, lambda d, n: 1.0 - d),
    "highprob-convex-beta": (_terms_highprob_convex_beta, lambda d, n: 1.0 - 2.0 * d),
    "highprob-strong-phi": (_terms_highprob_strong_phi, lambda d, n: 1.0 - 4.0 * d * math.log(n)),
    "highprob-strong-beta": (_terms_highprob_strong_beta, lambda d, n: 1.0 - 5.0 * d * math.log(n)),
    "linear-generalization": (_terms_linear_generalization, lambda d, n: 1.0 - 4.0 * d * math.log(n)),
}

THEOREM_IDS = tuple(_THEOREMS)


def evaluate_bound(theorem_id: str, inp: BoundInputs, tau: int) -> BoundReport:
    """Evaluate one bound at a fixed block length."""
    if theorem_id not in _THEOREMS:
        raise InvalidParamError(f"unknown theorem id: {theorem_id!r}")
    _check_tau(tau)
    builder, deff = _THEOREMS[theorem_id]
    terms = builder(inp, tau)
    return _report(
        theorem_id, tau, terms,
        None if deff is None else deff(inp.delta, inp.n),
    )


def expected_bound_convex(inp: BoundInputs, tau: int) -> BoundReport:
    """Expected stationary excess risk of the averaged predictor."""
    return evaluate_bound("regret-to-expected", inp, tau)


def generalization_expected(inp: BoundInputs, tau: int) -> BoundReport:
    """Expected future risk over a test tail of length k."""
    return evaluate_bound("expected-generalization", inp, tau)


def highprob_convex_phi(inp: BoundInputs, tau: int) -> BoundReport:
    """High-probability excess risk for convex losses, worst-case mixing."""
    return evaluate_bound("highprob-convex-phi", inp, tau)


def highprob_convex_beta(inp: BoundInputs, tau: int) -> BoundReport:
    """High-probability excess risk for convex losses, averaged mixing."""
    return evaluate_bound("highprob-convex-beta", inp, tau)


def highprob_strong_phi(inp: BoundInputs, tau: int) -> BoundReport:
    """Fast-rate bound when the expected risk is strongly convex."""
    return evaluate_bound("highprob-strong-phi", inp, tau)


def highprob_strong_beta(inp: BoundInputs, tau: int) -> BoundReport:
    """Fast-rate bound under averaged mixing only."""
    return evaluate_bound("highprob-strong-beta", inp, tau)


def linear_generalization(inp: BoundInputs, tau: int) -> BoundReport:
    """Bound for the feature-stabilized second-order learner (epsilon = 1)."""
    return evaluate_bound("linear-generalization", inp, tau)


def ftal_regret_bound(inp: BoundInputs) -> float:
    """Closed-form regret bound of the second-order learner."""
    return (9.0 * inp.L**2 * inp.d / (2.0 * inp.sigma)) * math.log(
        inp.X**2 * inp.n / inp.epsilon + 1.0
    ) + 0.5 * inp.sigma * inp.epsilon * inp.w_star_norm**2


def stationary_to_test_adjustment(inp: BoundInputs, tau: int, which: str = "phi") -> float:
    """Additive conversion from stationary excess risk to future risk."""
    _check_tau(tau)
    if inp.k_test < 1:
        raise InvalidParamError("k_test must be >= 1")
    coeff = inp.mixing.phi(tau) if which == "phi" else inp.mixing.beta(tau)
    return float(coeff) * inp.G * inp.R + (tau - 1) * inp.G * inp.R / inp.k_test


def azuma_tail(b_bound: float, n: int, tau: int, gamma: float) -> float:
    """Tail mass of one block's bounded-difference sum at deviation gamma."""
    _check_tau(tau)
    if b_bound <= 0 or n < 1:
        raise InvalidParamError("need b_bound > 0 and n >= 1")
    return math.exp(-tau * gamma * gamma / (8.0 * n * b_bound * b_bound))


def freedman_threshold(V: float, b: float, delta: float, n: int) -> float:
    """Deviation level a variance-V martingale exceeds with mass 4 delta log n."""
    if delta >= 1.0 / math.e:
        raise DeltaTooLargeError(f"delta must be < 1/e, got {delta}")
    if n < 3:
        raise InvalidParamError(f"n must be >= 3, got {n}")
    if V < 0 or b < 0:
        raise InvalidParamError("V and b must be nonnegative")
    log_inv = math.log(1.0 / delta)
    return max(2.0 * math.sqrt(V), 3.0 * b * math.sqrt(log_inv)) * math.sqrt(log_inv)


# ---------------------------------------------------------------------------
# Block-length selection
# ---------------------------------------------------------------------------

@dataclass
class TauSelection:
    """Grid argmin of a bound plus the profile's closed-form block length."""

    tau: int
    report: BoundReport
    tau_closed_form: int | None
    report_closed_form: BoundReport | None


def closed_form_tau(inp: BoundInputs) -> int | None:
    """Closed-form block length attached to the mixing profile, if any.

    Geometric profiles use (log n / (2 phi1))^(1/s) when they certify the
    worst-case coefficient and (1.5 log n / beta1)^(1/s) when they certify
    only the averaged one; algebraic profiles use
    phi0^(1/(theta+1)) (n / K_n)^(1/(theta+1)). Values are rounded up and
    clamped to [1, n]; tabulated profiles have no closed form.
    """
    prof = inp.mixing
    n = inp.n
    if prof.kind == "iid":
        raw = 1.0
    elif prof.kind == "geometric":
        if prof.phi1 <= 0:
            return None
        if prof.family == "phi":
            raw = (math.log(n) / (2.0 * prof.phi1)) ** (1.0 / prof.s)
        else:
            raw = (1.5 * math.log(n) / prof.phi1) ** (1.0 / prof.s)
    elif prof.kind == "algebraic":
        k_n = inp.K_n
        if k_n <= 0:
            return n
        raw = prof.phi0 ** (1.0 / (prof.theta + 1.0)) * (n / k_n) ** (1.0 / (prof.theta + 1.0))
    else:
        return None
    return int(min(max(math.ceil(raw - 1e-12), 1), n))


def optimize_tau(theorem_id: str, inp: BoundInputs) -> TauSelection:
    """Minimize a bound over the integer block-length grid [1, n].

    Also evaluates the profile's closed-form block length and checks the
    grid minimum never exceeds it.
    """
    if theorem_id not in _THEOREMS:
        raise InvalidParamError(f"unknown theorem id: {theorem_id!r}")
    builder, _ = _THEOREMS[theorem_id]
    taus = np.arange(1, inp.n + 1, dtype=float)
    terms = builder(inp, taus)
    totals = np.zeros_like(taus)
    for v in terms.values():
        totals += np.broadcast_to(np.asarray(v, dtype=float), taus.shape)
    best = int(taus[int(np.argmin(totals))])
    report = evaluate_bound(theorem_id, inp, best)
    tau_cf = closed_form_tau(inp)
    report_cf = None
    if tau_cf is not None:
        report_cf = evaluate_bound(theorem_id, inp, tau_cf)
        if report.total > report_cf.total + 1e-12:
            raise InvalidParamError("grid minimum exceeds the closed-form evaluation")
    return TauSelection(tau=best, report=report, tau_closed_form=tau_cf, report_closed_form=report_cf)


def resolve_tau(inp: BoundInputs, theorem_id: str, tau_setting) -> int:
    """Resolve a block-length setting: an integer, or "auto".

    "auto" takes the profile's closed-form rule when one exists (the
    corollary recipe) and otherwise falls back to the grid minimizer.
    """
    if tau_setting == "auto":
        cf = closed_form_tau(inp)
        if cf is not None:
            return cf
        return optimize_tau(theorem_id, inp).tau
    tau = int(tau_setting)
    _check_tau(tau)
    return tau
