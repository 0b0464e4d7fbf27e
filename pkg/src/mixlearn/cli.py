"""Config-driven command line: simulate | train | bounds | verify | experiment.

Outputs are deterministic for a fixed (config, seed): runs are keyed by path
index, floats are written in shortest round-trip form, and JSON keys are
sorted, so repeated invocations and different worker counts produce
byte-identical files. Exit codes: 0 success, 2 config error, 3 verification
failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import bounds as bounds_mod
from .evaluate import (
    ALGORITHMS,
    CoverageSpec,
    block_decomposition,
    ftal_diagnostics,
    lemma1_check,
    make_state,
    master_inequality_check,
    minimize_expected_risk,
    monte_carlo_coverage,
    stability_envelope,
)
from .exceptions import ConfigError, MixlearnError
from .experiments import EXPERIMENT_NAMES, probe_hypotheses, run_experiment
from .learners import best_fixed_comparator, regret, run_online
from .losses import Domain, make_loss
from .process import (
    BETA_TIME_HORIZON,
    MixingProfile,
    beta_coefficient,
    from_config as process_from_config,
    phi_coefficient,
    sample_path,
    stationary_distribution,
    sticky_features,
    sticky_process,
    three_state_demo,
)

RUNS_CSV_HEADER = [
    "seed", "n", "algorithm", "regret", "kappa_sum",
    "excess_risk_exact", "bound_total", "violated",
]


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

_TOP_KEYS = {
    "name", "process", "loss", "algorithm", "n_train", "n_test", "delta",
    "tau", "n_paths", "seed", "output_dir", "theorem",
}
_LOSS_KEYS = {"kind", "base", "lam", "radius_R", "center", "shift"}
_ALGO_KEYS = {"name", "epsilon", "lambda", "sigma", "scale"}

_DEFAULT_THEOREM = {
    "da-convex": "highprob-convex-phi",
    "ogd-convex": "highprob-convex-phi",
    "da-strong": "highprob-strong-phi",
    "ogd-strong": "highprob-strong-phi",
    "ftal-vaw": "linear-generalization",
    "bad-ftl": "highprob-convex-phi",
}


@dataclass
class ExperimentConfig:
    """Validated experiment description (one structured file per run)."""

    name: str
    process: object
    loss: dict
    algorithm: dict
    n_train: int
    n_test: int = 0
    delta: float = 0.1
    tau: object = "auto"
    n_paths: int = 1
    seed: int = 0
    output_dir: str = "out"
    theorem: str | None = None


def _fail(msg: str) -> ConfigError:
    return ConfigError(msg)


def validate_config(raw: dict) -> ExperimentConfig:
    """Check types, ranges, and reject unknown keys."""
    if not isinstance(raw, dict):
        raise _fail("config must be a JSON object")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise _fail(f"unknown config keys: {sorted(unknown)}")
    for key in ("process", "loss", "algorithm", "n_train"):
        if key not in raw:
            raise _fail(f"config missing required key: {key!r}")
    loss_spec = raw["loss"]
    if not isinstance(loss_spec, dict) or set(loss_spec) - _LOSS_KEYS:
        raise _fail(f"loss spec must be a dict with keys from {sorted(_LOSS_KEYS)}")
    if "kind" not in loss_spec or "radius_R" not in loss_spec:
        raise _fail("loss spec needs 'kind' and 'radius_R'")
    algo_spec = raw["algorithm"]
    if not isinstance(algo_spec, dict) or set(algo_spec) - _ALGO_KEYS:
        raise _fail(f"algorithm spec must be a dict with keys from {sorted(_ALGO_KEYS)}")
    if algo_spec.get("name") not in ALGORITHMS:
        raise _fail(f"algorithm name must be one of {ALGORITHMS}")
    cfg = ExperimentConfig(
        name=str(raw.get("name", "experiment")),
        process=raw["process"],
        loss=loss_spec,
        algorithm=algo_spec,
        n_train=int(raw["n_train"]),
        n_test=int(raw.get("n_test", 0)),
        delta=float(raw.get("delta", 0.1)),
        tau=raw.get("tau", "auto"),
        n_paths=int(raw.get("n_paths", 1)),
        seed=int(raw.get("seed", 0)),
        output_dir=str(raw.get("output_dir", "out")),
        theorem=raw.get("theorem"),
    )
    if cfg.n_train < 1 or cfg.n_test < 0 or cfg.n_paths < 1 or cfg.seed < 0:
        raise _fail("n_train >= 1, n_test >= 0, n_paths >= 1, seed >= 0 required")
    if not 0.0 < cfg.delta < 1.0:
        raise _fail(f"delta must be in (0, 1), got {cfg.delta}")
    if cfg.tau != "auto":
        try:
            cfg.tau = int(cfg.tau)
        except (TypeError, ValueError):
            raise _fail("tau must be an integer or \"auto\"") from None
        if cfg.tau < 1:
            raise _fail("tau must be >= 1")
    theorem = cfg.theorem or _DEFAULT_THEOREM[algo_spec["name"]]
    if theorem not in bounds_mod.THEOREM_IDS:
        raise _fail(f"unknown theorem id: {theorem!r}")
    cfg.theorem = theorem
    return cfg


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise _fail(f"cannot read config {path!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise _fail(f"config {path!r} is not valid JSON: {exc}") from exc
    return validate_config(raw)


def build_problem(cfg: ExperimentConfig):
    """Materialize (model, stationary, loss, mixing profile) from a config."""
    try:
        model = process_from_config(cfg.process)
    except MixlearnError as exc:
        raise _fail(f"bad process spec: {exc}") from exc
    stationary = stationary_distribution(model)
    spec = cfg.loss
    center = spec.get("center")
    domain = Domain(
        center=np.asarray(center, dtype=float) if center is not None else np.zeros(model.dim),
        radius_R=float(spec["radius_R"]),
    )
    try:
        loss = make_loss(
            spec["kind"], model, domain,
            lam=float(spec.get("lam", 0.0)),
            base=spec.get("base", "squared"),
            shift=spec.get("shift", "auto"),
        )
    except MixlearnError as exc:
        raise _fail(f"bad loss spec: {exc}") from exc
    mixing = MixingProfile.from_markov(model, stationary, k_max=max(50, 2 * BETA_TIME_HORIZON))
    return model, stationary, loss, mixing


# ---------------------------------------------------------------------------
# Deterministic writers
# ---------------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, header: list[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_simulate(cfg: ExperimentConfig, workers: int, fmt: str) -> int:
    model, stationary, _, _ = build_problem(cfg)
    out = Path(cfg.output_dir)
    rows = []
    for i in range(cfg.n_paths):
        path = sample_path(model, cfg.n_train, cfg.n_test, seed=cfg.seed, path_index=i)
        for t in range(cfg.n_train + cfg.n_test):
            row = [i, t + 1, int(path.states[t])]
            row.extend(path.xs[t])
            if path.ys is not None:
                row.append(path.ys[t])
            rows.append(row)
    header = ["path_index", "t", "state"] + [f"x{j}" for j in range(model.dim)]
    if model.labels is not None:
        header.append("y")
    write_csv(out / "paths.csv", header, rows)

    ks = range(1, 51)
    mix_rows = [
        [k, phi_coefficient(model, stationary, k), beta_coefficient(model, stationary, k)]
        for k in ks
    ]
    write_csv(out / "mixing.csv", ["k", "phi", "beta"], mix_rows)
    stationary_start = bool(
        float(np.abs(model.initial - stationary.pi).sum()) <= 1e-10
    )
    summary = {
        "name": cfg.name,
        "seed": cfg.seed,
        "n_train": cfg.n_train,
        "n_test": cfg.n_test,
        "n_paths": cfg.n_paths,
        "metadata": {
            "beta_time_sup_horizon": None if stationary_start else BETA_TIME_HORIZON,
            "beta_horizon_capped": not stationary_start,
        },
    }
    write_json(out / "summary.json", summary)
    _emit(summary, fmt)
    return 0


def _coverage_from_config(cfg: ExperimentConfig, workers: int):
    model, stationary, loss, mixing = build_problem(cfg)
    algo = dict(cfg.algorithm)
    name = algo.pop("name")
    spec = CoverageSpec(
        model=model, loss=loss, algorithm=name, theorem_id=cfg.theorem,
        n_train=cfg.n_train, n_paths=cfg.n_paths, seed=cfg.seed,
        delta=cfg.delta, tau=cfg.tau, mixing=mixing, algo_params=algo,
        workers=workers,
    )
    return spec, stationary


def cmd_train(cfg: ExperimentConfig, workers: int, fmt: str) -> int:
    spec, stationary = _coverage_from_config(cfg, workers)
    records, summary = monte_carlo_coverage(spec, stationary)
    out = Path(cfg.output_dir)
    rows = [
        [r["path_index"], r["n"], r["algorithm"], r["regret"], r["kappa_sum"],
         r["excess_risk_exact"], r["bound_total"], r["violated"]]
        for r in records
    ]
    write_csv(out / "runs.csv", RUNS_CSV_HEADER, rows)
    summary = dict(summary)
    summary["base_seed"] = cfg.seed
    summary["name"] = cfg.name
    write_json(out / "summary.json", summary)
    _emit(summary, fmt)
    return 0


def cmd_bounds(cfg: ExperimentConfig, workers: int, fmt: str) -> int:
    model, stationary, loss, mixing = build_problem(cfg)
    algo = cfg.algorithm
    n, G, R = cfg.n_train, loss.lipschitz_G, loss.domain.radius_R
    lam = float(algo.get("lambda", loss.strong_lambda or 1.0))
    env = stability_envelope(algo["name"], loss, lam, n)
    kappa_sum = float(env.sum()) if env is not None else 0.0
    if algo["name"] in ("da-convex", "ogd-convex"):
        regret_bound = 2.0 * G * R * math.sqrt(n)
    elif algo["name"] in ("da-strong", "ogd-strong"):
        regret_bound = (G * G / (2.0 * lam)) * (1.0 + math.log(n))
    else:
        regret_bound = bounds_mod.ftal_regret_bound(bounds_mod.BoundInputs(
            n=n, L=loss.scalar_lipschitz_L, sigma=max(loss.scalar_strong_sigma, 1e-12),
            X=loss.feature_bound_X, d=loss.domain.dim,
            epsilon=float(algo.get("epsilon", 1.0)),
        ))
    inp = bounds_mod.BoundInputs(
        n=n, delta=cfg.delta, k_test=max(cfg.n_test, 1), G=G, R=R, lam=lam,
        L=loss.scalar_lipschitz_L, sigma=max(loss.scalar_strong_sigma, 1e-12),
        X=loss.feature_bound_X, d=loss.domain.dim,
        lambda_min_cov=stationary.lambda_min, mixing=mixing,
        kappa_sum=kappa_sum, regret_value=regret_bound,
        epsilon=float(algo.get("epsilon", 1.0)),
    )
    if cfg.tau == "auto":
        sel = bounds_mod.optimize_tau(cfg.theorem, inp)
        report = sel.report
        extra = {
            "tau_closed_form": sel.tau_closed_form,
            "total_closed_form": None
            if sel.report_closed_form is None else sel.report_closed_form.total,
        }
    else:
        report = bounds_mod.evaluate_bound(cfg.theorem, inp, cfg.tau)
        extra = {}
    payload = {
        "theorem_id": report.theorem_id,
        "tau": report.tau,
        "terms": report.terms,
        "total": report.total,
        "delta_effective": report.delta_effective,
        **extra,
    }
    write_json(Path(cfg.output_dir) / "bounds.json", payload)
    if fmt == "json":
        print(json.dumps(_jsonable(payload), indent=2, sort_keys=True))
    else:
        print(f"theorem: {report.theorem_id}   tau: {report.tau}")
        for key in sorted(report.terms):
            print(f"  {key:<18} {report.terms[key]:.6e}")
        print(f"  {'total':<18} {report.total:.6e}")
        if report.delta_effective is not None:
            print(f"  confidence >= {report.delta_effective:.6f}")
    return 0


def _verify_suites(suite: str) -> list[dict]:
    """Exact-check suites over the shipped chains at desk scale."""
    checks: list[dict] = []
    n, seeds, taus = 200, (0, 1, 2), (1, 2, 3, 5, 10)

    setups = []
    sticky = sticky_process(0.2)
    setups.append(("sticky", sticky, make_loss("linear", sticky, Domain(np.zeros(1), 2.0))))
    demo = three_state_demo()
    setups.append(("3state", demo, make_loss("squared", demo, Domain(np.zeros(2), 2.0))))

    def add(check, chain, margin, passed):
        checks.append({
            "check": check, "chain": chain,
            "margin": float(margin), "passed": bool(passed),
        })

    for chain, model, loss in setups:
        stationary = stationary_distribution(model)
        w_star = minimize_expected_risk(loss, stationary, model)
        probes = probe_hypotheses(loss.domain, n_random=4)
        if suite in ("lemma1", "all"):
            worst = -np.inf
            for w in probes:
                for v in probes:
                    for tau in taus:
                        rep = lemma1_check(model, stationary, loss, w, v, tau)
                        worst = max(worst, rep.max_gap - rep.phi_bound,
                                    rep.pi_avg_abs_gap - rep.beta_bound)
            add("lemma1", chain, worst, worst <= 1e-10)
        if suite in ("master", "blocks", "stability", "all"):
            for seed in seeds:
                path = sample_path(model, n + max(taus), 0, seed=9_000 + seed)
                X, y = path.xs, path.ys
                Xn = X[:n]
                yn = None if y is None else y[:n]
                ledger = run_online(make_state("da-convex", loss), loss, Xn, yn,
                                    store_iterates=True)
                w_emp = best_fixed_comparator(loss, Xn, yn)
                realized = regret(ledger, loss, Xn, yn, w_emp)
                if suite in ("stability", "all"):
                    env = stability_envelope("da-convex", loss, 0.0, n)
                    margin = float(np.max(ledger.stability - env[: len(ledger.stability)]))
                    add("stability-envelope", chain, margin, margin <= 1e-9)
                for tau in taus:
                    if suite in ("master", "all"):
                        rep = master_inequality_check(
                            ledger, loss, X, y, w_star, tau, model, stationary, realized
                        )
                        margin = max(rep.lhs - rep.rhs, rep.term1 - rep.term1_bound,
                                     rep.term3 - rep.term3_bound)
                        add("master-inequality", chain, margin, rep.holds)
                    if suite in ("blocks", "all"):
                        diag = block_decomposition(
                            ledger, loss, X, y, w_star, tau, model, stationary,
                            realized, path_states=path.states, exact_conditional=True,
                        )
                        margin = max(abs(diag.identity_gap) - 1e-10,
                                     float(diag.S_hat.sum()) - diag.shat_bound)
                        add("block-decomposition", chain, margin,
                            diag.identity_ok and diag.shat_ok and diag.conditional_ok)

    if suite in ("hazan", "stability", "all"):
        model = sticky_features(0.2, 2)
        loss = make_loss("logistic", model, Domain(np.zeros(2), 2.0))
        for seed in seeds:
            path = sample_path(model, n, 0, seed=9_500 + seed)
            ledger = run_online(make_state("ftal-vaw", loss, {"epsilon": 1.0}),
                                loss, path.xs, path.ys, store_iterates=True)
            diag = ftal_diagnostics(ledger, loss, path.xs, path.ys, taus=(1, 3),
                                    epsilon=1.0, dual_check_steps=(1, 5, 50, 200))
            if suite in ("hazan", "all"):
                add("hazan-logdet-sum", "sticky-features",
                    diag.hazan_sum - diag.hazan_bound, diag.hazan_ok)
            add("second-order-stability", "sticky-features",
                max(-diag.loss_stability_margin, -diag.near_stability_margin) - 1e-8,
                diag.loss_stability_ok and diag.near_stability_ok)
            add("dual-form-agreement", "sticky-features",
                diag.dual_gap_max - 1e-8, diag.dual_ok)
    return checks


VERIFY_SUITES = ("lemma1", "master", "blocks", "stability", "hazan", "all")


def cmd_verify(suite: str, out_dir: str, fmt: str) -> int:
    if suite not in VERIFY_SUITES:
        raise _fail(f"unknown verify suite {suite!r}; choose from {VERIFY_SUITES}")
    checks = _verify_suites(suite)
    payload = {
        "suite": suite,
        "checks": checks,
        "failures": sum(not c["passed"] for c in checks),
    }
    write_json(Path(out_dir) / f"verify_{suite}.json", payload)
    if fmt == "json":
        print(json.dumps(_jsonable(payload), indent=2, sort_keys=True))
    else:
        for c in checks:
            mark = "PASS" if c["passed"] else "FAIL"
            print(f"[{mark}] {c['check']:<24} {c['chain']:<16} margin={c['margin']:+.3e}")
        print(f"{payload['failures']} failure(s) in {len(checks)} checks")
    return 0 if payload["failures"] == 0 else 3


def cmd_experiment(name: str, out_dir: str, workers: int, fmt: str) -> int:
    if name not in EXPERIMENT_NAMES:
        raise _fail(f"unknown experiment {name!r}; choose from {EXPERIMENT_NAMES}")
    report = run_experiment(name, workers=workers)
    write_json(Path(out_dir) / f"{name}_report.json", report)
    if fmt == "json":
        print(json.dumps(_jsonable(report), indent=2, sort_keys=True))
    else:
        for c in report["criteria"]:
            mark = "PASS" if c["passed"] else "FAIL"
            print(f"[{mark}] {c['id']}: {c['description']} ({c['detail']})")
    failed = sum(not c["passed"] for c in report["criteria"])
    return 0 if failed == 0 else 3


def _emit(obj, fmt: str) -> None:
    if fmt == "json":
        print(json.dumps(_jsonable(obj), indent=2, sort_keys=True))


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mixlearn",
        description="Stable online learning on dependent streams, with verifiable bounds.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="path to a JSON experiment config")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--paths", type=int, default=None, help="override the path count")
        p.add_argument("--out", default=None, help="override the output directory")
        p.add_argument("--workers", type=int, default=1, help="Monte-Carlo worker count")
        p.add_argument("--format", choices=("csv", "json"), default="csv",
                       help="stdout format (files are always written)")

    common(sub.add_parser("simulate", help="write sample paths and exact mixing tables"))
    common(sub.add_parser("train", help="run online learning paths and bound checks"))
    common(sub.add_parser("bounds", help="evaluate a bound term-by-term"))
    vp = sub.add_parser("verify", help="run the exact-check suites")
    vp.add_argument("suite", nargs="?", default="all", help=f"one of {VERIFY_SUITES}")
    common(vp, needs_config=False)
    ep = sub.add_parser("experiment", help="run a named acceptance experiment")
    ep.add_argument("name", help=f"one of {EXPERIMENT_NAMES}")
    common(ep, needs_config=False)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    workers = int(os.environ.get("MIXLEARN_WORKERS", args.workers))
    try:
        if args.command in ("simulate", "train", "bounds"):
            cfg = load_config(args.config)
            if args.seed is not None:
                cfg.seed = args.seed
            if args.paths is not None:
                cfg.n_paths = args.paths
            if args.out is not None:
                cfg.output_dir = args.out
            cfg = validate_config({
                k: getattr(cfg, k) for k in (
                    "name", "process", "loss", "algorithm", "n_train", "n_test",
                    "delta", "tau", "n_paths", "seed", "output_dir", "theorem",
                )
            })
            handler = {"simulate": cmd_simulate, "train": cmd_train, "bounds": cmd_bounds}
            return handler[args.command](cfg, workers, args.format)
        if args.command == "verify":
            return cmd_verify(args.suite, args.out or "out", args.format)
        if args.command == "experiment":
            return cmd_experiment(args.name, args.out or "out", workers, args.format)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except MixlearnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
