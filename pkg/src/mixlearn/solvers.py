"""Exact ball-constrained quadratic solves and projected-gradient descent."""

from __future__ import annotations

import numpy as np

from .exceptions import NonConvergedError, SingularSystemError


def project_ball(w: np.ndarray, center: np.ndarray, radius: float) -> np.ndarray:
    """Euclidean projection onto the closed ball; identity inside."""
    diff = w - center
    norm = float(np.linalg.norm(diff))
    if norm <= radius:
        return w.astype(float, copy=True)
    return center + (radius / norm) * diff


def minimize_quadratic_on_ball(
    H: np.ndarray,
    b: np.ndarray,
    center: np.ndarray,
    radius: float,
    kkt_tol: float = 1e-10,
) -> tuple[np.ndarray, float, float]:
    """Minimize <b, w> + 0.5 w^T H w over ||w - center|| <= radius.

    H must be symmetric positive definite, so the problem has a unique
    solution and no hard case. Solved through the eigendecomposition of H:
    either the unconstrained minimizer is feasible, or the boundary
    multiplier is located by safeguarded Newton bisection on the secular
    equation. Returns (w, multiplier, kkt_residual).
    """
    H = np.asarray(H, dtype=float)
    b = np.asarray(b, dtype=float)
    center = np.asarray(center, dtype=float)
    try:
        lam, Q = np.linalg.eigh(H)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - eigh on sym matrix
        raise SingularSystemError("eigendecomposition of the quadratic term failed") from exc
    if lam[0] <= 0.0:
        raise SingularSystemError("quadratic term is not positive definite")
    # Recenter: with u = w - center the linear term becomes b + H center.
    beta = Q.T @ (b + H @ center)

    def u_of(mu: float) -> np.ndarray:
        return Q @ (-beta / (lam + mu))

    def norm_of(mu: float) -> float:
        return float(np.sqrt(np.sum((beta / (lam + mu)) ** 2)))

    mu = 0.0
    if norm_of(0.0) > radius:
        # Secular equation: find mu > 0 with ||u(mu)|| = radius. Newton on
        # 1/||u|| - 1/radius converges monotonically; bisection safeguards.
        lo, hi = 0.0, float(np.linalg.norm(beta)) / radius
        mu = 0.5 * hi
        for _ in range(200):
            d2 = (lam + mu) ** 2
            nrm2 = float(np.sum(beta**2 / d2))
            nrm = np.sqrt(nrm2)
            if nrm > radius:
                lo = mu
            else:
                hi = mu
            phi = 1.0 / nrm - 1.0 / radius
            dphi = float(np.sum(beta**2 / (d2 * (lam + mu)))) / (nrm2 * nrm)
            step = phi / dphi
            nxt = mu + step
            if not lo < nxt < hi:
                nxt = 0.5 * (lo + hi)
            if abs(nxt - mu) <= 1e-16 * max(1.0, mu):
                mu = nxt
                break
            mu = nxt
    u = u_of(mu)
    w = center + u
    grad = H @ w + b + mu * u
    residual = float(np.linalg.norm(grad, ord=np.inf))
    residual += abs(mu) * abs(float(np.linalg.norm(u)) - radius)
    scale = max(1.0, float(np.linalg.norm(b)), float(np.abs(lam).max()) * max(1.0, radius))
    if residual > kkt_tol * scale:
        raise NonConvergedError(f"ball-constrained solve residual {residual:.3e} above tolerance")
    return w, mu, residual


def minimize_convex_on_ball(
    value_and_grad,
    center: np.ndarray,
    radius: float,
    x0: np.ndarray | None = None,
    tol: float = 1e-10,
    max_iter: int = 200_000,
    lipschitz: float | None = None,
) -> np.ndarray:
    """Accelerated projected gradient on a Euclidean ball.

    ``value_and_grad(w) -> (f, g)``. The step size backtracks with a small
    relative slack (so float cancellation near the optimum cannot collapse
    it) and regrows between iterations; momentum restarts whenever the
    objective increases, which keeps strongly convex problems in the linear
    regime. Terminates when the gradient-mapping norm at a unit-capped
    reference step falls below ``tol``; raises ``NonConvergedError`` at the
    iteration cap.
    """
    center = np.asarray(center, dtype=float)
    x = project_ball(np.asarray(x0, dtype=float) if x0 is not None else center, center, radius)
    y = x.copy()
    t_acc = 1.0
    step = 1.0 / lipschitz if lipschitz else 1.0
    f_x = value_and_grad(x)[0]
    coarse = max(tol, 1e-6)
    budget = max_iter
    # Phase 1: accelerated descent with restarts down to a coarse tolerance.
    for _ in range(max_iter):
        budget -= 1
        fy, gy = value_and_grad(y)
        while True:
            cand = project_ball(y - step * gy, center, radius)
            fc, gc = value_and_grad(cand)
            diff = cand - y
            surrogate = fy + float(gy @ diff) + float(diff @ diff) / (2.0 * step)
            slack = 1e-12 * (abs(fy) + abs(fc)) + 1e-300
            if lipschitz is not None or fc <= surrogate + slack or step <= 1e-14:
                break
            step *= 0.5
        x_new = cand
        ref = min(step, 1.0)
        mapping = float(
            np.linalg.norm(x_new - project_ball(x_new - ref * gc, center, radius))
        )
        if mapping <= coarse * ref:
            x = x_new
            break
        if fc > f_x:
            y = x_new.copy()
            t_acc = 1.0
        else:
            t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_acc * t_acc))
            y = project_ball(x_new + ((t_acc - 1.0) / t_new) * (x_new - x), center, radius)
            t_acc = t_new
        x, f_x = x_new, fc
        step = min(step * 1.25, 1e3)
    else:
        raise NonConvergedError(
            f"projected gradient stalled above coarse tolerance {coarse} in {max_iter} iterations"
        )
    if tol >= coarse:
        return x
    # Phase 2: plain fixed-step iteration. It contracts in iterate space, so
    # the per-step move (which equals the gradient mapping) decays without
    # the function-value cancellation that limits the accelerated phase.
    ref = min(step, 1.0)
    stall, best_move = 0, np.inf
    for _ in range(max(budget, 1000)):
        g = value_and_grad(x)[1]
        x_new = project_ball(x - ref * g, center, radius)
        move = float(np.linalg.norm(x_new - x))
        x = x_new
        if move <= tol * ref:
            return x
        if move >= best_move:
            stall += 1
            if stall >= 200:
                break
        else:
            best_move, stall = move, 0
    raise NonConvergedError(f"projected gradient did not reach tolerance {tol} in {max_iter} iterations")
