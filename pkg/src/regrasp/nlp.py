"""Local constrained minimization: augmented Lagrangian over a box.

The outer loop maintains multiplier estimates for equality and inequality
constraints and a growing quadratic penalty; each inner subproblem is a
bound-constrained smooth minimization handed to a projected quasi-Newton
solver (L-BFGS-B). Problems here are small (<= ~16 variables), dense, and
solved many times, so robustness and determinism matter more than scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize as _scipy_minimize

from .errors import InputError
from .kinematics import numeric_gradient

PENALTY_START = 10.0
PENALTY_GROWTH = 10.0
PENALTY_CAP = 1e8

STATUS_CONVERGED = "converged"
STATUS_CONSTRAINT_MET = "constraint-tolerance-met"
STATUS_ITERATION_LIMIT = "iteration-limit"
STATUS_NUMERIC_FAILURE = "numeric-failure"

OK_STATUSES = (STATUS_CONVERGED, STATUS_CONSTRAINT_MET)


@dataclass
class NLPProblem:
    """Constrained minimization instance.

    ``objective`` and every constraint take a 1-D float vector of length
    ``dim``. Equalities target 0, inequalities target <= 0. Gradients are
    optional analytic callbacks; when absent, central differences with step
    ``grad_step`` are used on the augmented Lagrangian.
    """

    dim: int
    objective: callable
    eq_constraints: list = field(default_factory=list)
    ineq_constraints: list = field(default_factory=list)
    lower: np.ndarray = None
    upper: np.ndarray = None
    objective_grad: callable = None
    eq_grads: list = None
    ineq_grads: list = None
    grad_step: float = 1e-6

    def __post_init__(self):
        self.lower = np.full(self.dim, -np.inf) if self.lower is None else np.asarray(self.lower, dtype=float)
        self.upper = np.full(self.dim, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float)
        if self.lower.shape != (self.dim,) or self.upper.shape != (self.dim,):
            raise InputError("NLPProblem: bound shapes must match dim")
        if np.any(self.lower > self.upper):
            raise InputError("NLPProblem: lower > upper")

    def has_analytic_grads(self):
        if self.objective_grad is None:
            return False
        if self.eq_constraints and (self.eq_grads is None or any(g is None for g in self.eq_grads)):
            return False
        if self.ineq_constraints and (self.ineq_grads is None or any(g is None for g in self.ineq_grads)):
            return False
        return True


@dataclass
class NLPSolution:
    x: np.ndarray
    objective_value: float
    max_eq_violation: float
    max_ineq_violation: float
    status: str
    iterations: int
    clipped_start: bool = False
    n_objective_evals: int = 0
    n_constraint_evals: int = 0
    objective_trace: list = field(default_factory=list)

    @property
    def ok(self):
        return self.status in OK_STATUSES

    @property
    def max_violation(self):
        return max(self.max_eq_violation, self.max_ineq_violation)


class _NonFinite(Exception):
    pass


def _eval_all(problem, x, counters):
    f = float(problem.objective(x))
    counters[0] += 1
    c = np.array([fn(x) for fn in problem.eq_constraints], dtype=float)
    g = np.array([fn(x) for fn in problem.ineq_constraints], dtype=float)
    counters[1] += len(c) + len(g)
    if not (np.isfinite(f) and np.all(np.isfinite(c)) and np.all(np.isfinite(g))):
        raise _NonFinite
    return f, c, g


def _violation(c, g):
    veq = float(np.max(np.abs(c))) if c.size else 0.0
    vineq = float(np.max(np.maximum(g, 0.0))) if g.size else 0.0
    return veq, vineq


def minimize(problem: NLPProblem, x0, *, max_outer=60, feas_tol=1e-4, opt_tol=1e-6, inner_maxiter=60) -> NLPSolution:
    """Minimize ``problem`` starting from ``x0``.

    Returns the best feasible iterate found (constraint violations within
    ``feas_tol``); when the start point is feasible the returned objective is
    never worse than the starting one. Non-finite evaluations yield a
    ``numeric-failure`` status rather than an exception. Deterministic for
    identical inputs.
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (problem.dim,):
        raise InputError("minimize: x0 shape mismatch")
    clipped = bool(np.any(x0 < problem.lower) or np.any(x0 > problem.upper))
    x = np.clip(x0, problem.lower, problem.upper)

    counters = [0, 0]
    trace = []

    def _fail(xbad):
        return NLPSolution(
            x=xbad,
            objective_value=np.nan,
            max_eq_violation=np.inf,
            max_ineq_violation=np.inf,
            status=STATUS_NUMERIC_FAILURE,
            iterations=0,
            clipped_start=clipped,
            n_objective_evals=counters[0],
            n_constraint_evals=counters[1],
            objective_trace=trace,
        )

    try:
        f0, c0, g0 = _eval_all(problem, x, counters)
    except _NonFinite:
        return _fail(x)

    n_eq, n_ineq = len(c0), len(g0)
    lam = np.zeros(n_eq)
    mu = np.zeros(n_ineq)
    rho = PENALTY_START

    veq, vineq = _violation(c0, g0)
    best = (x.copy(), f0) if max(veq, vineq) <= feas_tol else None
    if best is not None:
        trace.append(f0)

    analytic = problem.has_analytic_grads()

    def al_value(z, lam, mu, rho):
        f, c, g = _eval_all(problem, z, counters)
        val = f
        if n_eq:
            val += float(lam @ c) + 0.5 * rho * float(c @ c)
        if n_ineq:
            t = np.maximum(0.0, mu + rho * g)
            val += float(np.sum(t * t - mu * mu)) / (2.0 * rho)
        return val, f, c, g

    def al_grad(z, c, g, lam, mu, rho):
        grad = np.asarray(problem.objective_grad(z), dtype=float).copy()
        for i, gradfn in enumerate(problem.eq_grads or []):
            grad += (lam[i] + rho * c[i]) * np.asarray(gradfn(z), dtype=float)
        for j, gradfn in enumerate(problem.ineq_grads or []):
            t = mu[j] + rho * g[j]
            if t > 0:
                grad += t * np.asarray(gradfn(z), dtype=float)
        return grad

    status = STATUS_ITERATION_LIMIT
    outer = 0
    x_prev = None
    try:
        for outer in range(1, max_outer + 1):

            def fun(z, lam=lam, mu=mu, rho=rho):
                val, f, c, g = al_value(z, lam, mu, rho)
                if analytic:
                    grad = al_grad(z, c, g, lam, mu, rho)
                else:
                    grad = numeric_gradient(lambda y: al_value(y, lam, mu, rho)[0], z, h=problem.grad_step)
                return val, grad

            res = _scipy_minimize(
                fun,
                x,
                jac=True,
                method="L-BFGS-B",
                bounds=list(zip(problem.lower, problem.upper)),
                options={"maxiter": inner_maxiter, "ftol": 1e-12, "gtol": 1e-8},
            )
            x = np.clip(res.x, problem.lower, problem.upper)
            f, c, g = _eval_all(problem, x, counters)
            veq, vineq = _violation(c, g)
            feasible = max(veq, vineq) <= feas_tol

            if feasible and (best is None or f < best[1]):
                best = (x.copy(), f)
            trace.append(best[1] if best is not None else f)

            if feasible and x_prev is not None:
                dx = float(np.max(np.abs(x - x_prev)))
                df = abs(f - f_prev)
                if dx <= opt_tol * (1.0 + float(np.max(np.abs(x)))) or df <= opt_tol * (1.0 + abs(f)):
                    status = STATUS_CONVERGED
                    break
            if feasible and n_eq == 0 and n_ineq == 0:
                # unconstrained-in-the-box: one inner solve is the answer
                status = STATUS_CONVERGED if res.success else STATUS_CONSTRAINT_MET
                break

            x_prev, f_prev = x.copy(), f
            if n_eq:
                lam = lam + rho * c
            if n_ineq:
                mu = np.maximum(0.0, mu + rho * g)
            rho = min(rho * PENALTY_GROWTH, PENALTY_CAP)
        else:
            status = STATUS_CONSTRAINT_MET if max(veq, vineq) <= feas_tol else STATUS_ITERATION_LIMIT
    except _NonFinite:
        return _fail(x)

    if best is not None:
        x_ret, _ = best
        f, c, g = _eval_all(problem, x_ret, counters)
        veq, vineq = _violation(c, g)
        if status == STATUS_ITERATION_LIMIT:
            status = STATUS_CONSTRAINT_MET
    else:
        x_ret = x

    return NLPSolution(
        x=x_ret,
        objective_value=f,
        max_eq_violation=veq,
        max_ineq_violation=vineq,
        status=status,
        iterations=outer,
        clipped_start=clipped,
        n_objective_evals=counters[0],
        n_constraint_evals=counters[1],
        objective_trace=trace,
    )
