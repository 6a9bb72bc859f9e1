"""Method of Moving Asymptotes.

Each step builds the separable convex approximation around the current point
and solves it through its dual. The multipliers are found by projected Newton
iterations (one multiplier per constraint, so the dual is tiny), with a cyclic
bisection fallback when Newton stops making progress.

The subproblem carries the usual elastic variables ``y_i >= 0`` with cost
``c y_i + d y_i^2 / 2`` so that it stays feasible when the linearized
constraints cannot all be met inside the move limits.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

KKT_TOL = 1e-9


class MMAError(RuntimeError):
    pass


@dataclass(frozen=True)
class MmaParams:
    asyinit: float = 0.5
    asyincr: float = 1.2
    asydecr: float = 0.7
    albefa: float = 0.1
    move: float = 0.2
    raa0: float = 1e-5
    # closest approach of an asymptote, as a fraction of the box width
    asymin: float = 1e-4
    c: float = 1000.0
    d: float = 1.0
    max_newton: int = 100
    max_bisection_sweeps: int = 200


@dataclass
class MmaState:
    lb: np.ndarray
    ub: np.ndarray
    low: np.ndarray
    upp: np.ndarray
    xold1: np.ndarray
    xold2: np.ndarray
    params: MmaParams = field(default_factory=MmaParams)
    iteration: int = 0
    lam: np.ndarray | None = None
    kkt_residual: float = 0.0

    @property
    def frozen(self) -> np.ndarray:
        return self.ub <= self.lb


def mma_init(x0, lb, ub, params: MmaParams | None = None) -> MmaState:
    params = params or MmaParams()
    x0 = np.asarray(x0, dtype=float)
    lb = np.broadcast_to(np.asarray(lb, dtype=float), x0.shape).copy()
    ub = np.broadcast_to(np.asarray(ub, dtype=float), x0.shape).copy()
    if np.any(lb > ub):
        raise ValueError("lower bound exceeds upper bound")
    if np.any(x0 < lb) or np.any(x0 > ub):
        raise ValueError("x0 lies outside the bounds")
    span = ub - lb
    return MmaState(
        lb=lb, ub=ub,
        low=x0 - params.asyinit * span, upp=x0 + params.asyinit * span,
        xold1=x0.copy(), xold2=x0.copy(), params=params,
    )


def _update_asymptotes(state: MmaState, x, xmami):
    prm = state.params
    if state.iteration < 2:
        low = x - prm.asyinit * xmami
        upp = x + prm.asyinit * xmami
    else:
        osc = (x - state.xold1) * (state.xold1 - state.xold2)
        factor = np.ones_like(x)
        factor[osc > 0] = prm.asyincr
        factor[osc < 0] = prm.asydecr
        low = x - factor * (state.xold1 - state.low)
        upp = x + factor * (state.upp - state.xold1)
        low = np.clip(low, x - 10 * xmami, x - prm.asymin * xmami)
        upp = np.clip(upp, x + prm.asymin * xmami, x + 10 * xmami)
    return low, upp


def _approx_coeffs(grad, ux2, xl2, raa0_term):
    pos = np.maximum(grad, 0.0)
    neg = np.maximum(-grad, 0.0)
    p = ux2 * (1.001 * pos + 0.001 * neg + raa0_term)
    q = xl2 * (0.001 * pos + 1.001 * neg + raa0_term)
    return p, q


class _Dual:
    """Concave dual of the separable subproblem as a function of the multipliers."""

    def __init__(self, p0, q0, P, Q, b, low, upp, alpha, beta, c, d):
        self.p0, self.q0, self.P, self.Q, self.b = p0, q0, P, Q, b
        self.low, self.upp, self.alpha, self.beta = low, upp, alpha, beta
        self.c, self.d = c, d

    def primal(self, lam):
        pj = self.p0 + lam @ self.P
        qj = self.q0 + lam @ self.Q
        sp_, sq = np.sqrt(pj), np.sqrt(qj)
        x = (sp_ * self.low + sq * self.upp) / (sp_ + sq)
        x = np.clip(x, self.alpha, self.beta)
        y = np.maximum(0.0, (lam - self.c) / self.d)
        return x, y, pj, qj

    def evaluate(self, lam, hessian=False):
        x, y, pj, qj = self.primal(lam)
        ux = self.upp - x
        xl = x - self.low
        value = np.sum(pj / ux + qj / xl) + np.sum(self.c * y + 0.5 * self.d * y**2 - lam * y) - lam @ self.b
        grad = self.P @ (1.0 / ux) + self.Q @ (1.0 / xl) - y - self.b
        if not hessian:
            return value, grad, x, y
        inner = (x > self.alpha) & (x < self.beta)
        G = self.P[:, inner] / ux[inner] ** 2 - self.Q[:, inner] / xl[inner] ** 2
        D = 2 * pj[inner] / ux[inner] ** 3 + 2 * qj[inner] / xl[inner] ** 3
        H = -(G / D) @ G.T
        H[np.diag_indices_from(H)] -= np.where(lam > self.c, 1.0 / self.d, 0.0)
        return value, grad, x, y, H


def _kkt_residual(lam, grad):
    r = np.where(lam > 0, np.abs(grad), np.maximum(grad, 0.0))
    return float(np.max(r)) if r.size else 0.0


def _solve_dual_newton(dual: _Dual, lam, prm: MmaParams):
    value, grad, _, _, H = dual.evaluate(lam, hessian=True)
    for _ in range(prm.max_newton):
        res = _kkt_residual(lam, grad)
        if res <= KKT_TOL:
            return lam, res
        free = (lam > 0) | (grad > 0)
        step = np.zeros_like(lam)
        Hf = H[np.ix_(free, free)]
        reg = 1e-14 * max(1.0, float(np.max(np.abs(np.diag(Hf))))) if Hf.size else 0.0
        try:
            step[free] = np.linalg.solve(Hf - reg * np.eye(Hf.shape[0]), -grad[free])
        except np.linalg.LinAlgError:
            step[free] = grad[free]
        if grad @ step <= 0:
            step = np.where(free, grad, 0.0)
        t = 1.0
        improved = False
        for _ in range(60):
            trial = np.maximum(lam + t * step, 0.0)
            tv, tg, _, _, tH = dual.evaluate(trial, hessian=True)
            if tv >= value + 1e-4 * (grad @ (trial - lam)) or _kkt_residual(trial, tg) < res * 0.5:
                improved = True
                break
            t *= 0.5
        if not improved:
            return lam, res
        lam, value, grad, H = trial, tv, tg, tH
    return lam, _kkt_residual(lam, grad)


def _solve_dual_bisection(dual: _Dual, lam, prm: MmaParams):
    # each coordinate of the dual gradient is non-increasing in its own multiplier
    lam = lam.copy()
    res = np.inf
    for _ in range(prm.max_bisection_sweeps):
        for i in range(lam.size):
            def g_i(v):
                trial = lam.copy()
                trial[i] = v
                return dual.evaluate(trial)[1][i]

            if g_i(0.0) <= 0:
                lam[i] = 0.0
                continue
            hi = max(1.0, 2 * lam[i])
            while g_i(hi) > 0:
                hi *= 2
                if hi > 1e300:
                    raise MMAError(f"multiplier {i} unbounded in the dual subproblem")
            lo = 0.0
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                if g_i(mid) > 0:
                    lo = mid
                else:
                    hi = mid
                if hi - lo <= 1e-16 * max(1.0, hi):
                    break
            lam[i] = 0.5 * (lo + hi)
        res = _kkt_residual(lam, dual.evaluate(lam)[1])
        if res <= KKT_TOL:
            break
    return lam, res


def mma_step(state: MmaState, x, f0, df0, g=None, dg=None) -> np.ndarray:
    """Return the next iterate and advance ``state``.

    ``g`` holds the constraint values (feasible when <= 0) and ``dg`` their
    gradients with shape ``(m, n)``.
    """
    prm = state.params
    x = np.asarray(x, dtype=float)
    df0 = np.asarray(df0, dtype=float)
    g = np.zeros(0) if g is None else np.atleast_1d(np.asarray(g, dtype=float))
    dg = np.zeros((0, x.size)) if dg is None else np.atleast_2d(np.asarray(dg, dtype=float))
    if not (np.all(np.isfinite(df0)) and np.all(np.isfinite(dg)) and np.all(np.isfinite(g))):
        raise MMAError("non-finite objective or constraint gradient")
    if dg.shape != (g.size, x.size):
        raise ValueError(f"constraint gradient shape {dg.shape} does not match ({g.size}, {x.size})")

    frozen = state.frozen
    live = ~frozen
    xmami = np.maximum(state.ub - state.lb, 1e-5)
    low, upp = _update_asymptotes(state, x, xmami)
    low[frozen] = x[frozen]
    upp[frozen] = x[frozen]

    alpha = np.maximum.reduce([state.lb, low + prm.albefa * (x - low), x - prm.move * xmami])
    beta = np.minimum.reduce([state.ub, upp - prm.albefa * (upp - x), x + prm.move * xmami])

    xl, ux = x[live] - low[live], upp[live] - x[live]
    raa0_term = prm.raa0 / xmami[live]
    p0, q0 = _approx_coeffs(df0[live], ux**2, xl**2, raa0_term)
    P, Q = _approx_coeffs(dg[:, live], ux**2, xl**2, raa0_term)
    b = P @ (1.0 / ux) + Q @ (1.0 / xl) - g

    dual = _Dual(p0, q0, P, Q, b, low[live], upp[live], alpha[live], beta[live], prm.c, prm.d)
    m = g.size
    lam0 = state.lam if state.lam is not None and state.lam.shape == (m,) else np.ones(m)
    if m:
        lam, res = _solve_dual_newton(dual, lam0, prm)
        if res > KKT_TOL:
            lam, res = _solve_dual_bisection(dual, lam, prm)
        if res > KKT_TOL:
            raise MMAError(f"subproblem did not converge (KKT residual {res:.3e})")
    else:
        lam, res = np.zeros(0), 0.0

    x_new = x.copy()
    x_new[live] = dual.primal(lam)[0]

    state.xold2 = state.xold1
    state.xold1 = x.copy()
    state.low, state.upp = low, upp
    state.lam = lam
    state.kkt_residual = res
    state.iteration += 1
    return x_new
