"""Numerical backend: lowers a ConicProgram to cvxpy and solves it.

Clarabel is the default solver (interior point, tight tolerances for the
rank-1 dual test); SCS is available as a first-order fallback.  Solver
output is never trusted blindly: solve() re-checks every constraint of the
original program numerically and downgrades 'optimal' to 'near_optimal'
when residuals exceed 10 * abs_tol relative to the constraint's data scale.
"""

from __future__ import annotations

import os
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .conic import (
    ConicProgram,
    MatrixVar,
    ScalarVar,
    canonicalize,
    linear_block_values,
    matrix_constraint_value,
    objective_value,
)

__all__ = ["SolveSettings", "Solution", "ResidualReport", "solve", "verify_residuals"]

STATUSES = ("optimal", "near_optimal", "infeasible", "unbounded", "numerical_failure")


@dataclass(frozen=True)
class SolveSettings:
    abs_tol: float = 1e-8
    rel_tol: float = 1e-8
    max_iters: int = 50000
    verbose: bool | None = None  # None: controlled by LIPCERT_SOLVER_VERBOSE
    solver: str = "clarabel"

    def resolved_verbose(self) -> bool:
        if self.verbose is not None:
            return self.verbose
        return os.environ.get("LIPCERT_SOLVER_VERBOSE", "") == "1"


@dataclass
class Solution:
    status: str
    objective: float
    variable_values: dict | None  # populated iff status is optimal/near_optimal
    solve_time_s: float
    iterations: int
    residual_pass: bool = True
    max_violation: float = 0.0


@dataclass
class ResidualReport:
    violations: dict = field(default_factory=dict)  # constraint/variable -> raw violation
    psd_min_eig: dict = field(default_factory=dict)
    passed: bool = True
    tol: float = 0.0

    @property
    def max_violation(self) -> float:
        return max(self.violations.values(), default=0.0)


def _full_coeff(a, s: int):
    """svec coefficients -> coefficients over the full column-major vec.

    Off-diagonal weight is split across (i, j) and (j, i) so the result is
    independent of the flattening order used for the symmetric variable.
    """
    a = sp.coo_matrix(a)
    iu_i, iu_j = np.triu_indices(s)
    i = iu_i[a.col]
    j = iu_j[a.col]
    diag = i == j
    rows = np.concatenate([a.row[diag], a.row[~diag], a.row[~diag]])
    cols = np.concatenate(
        [i[diag] * (s + 1), i[~diag] + j[~diag] * s, j[~diag] + i[~diag] * s]
    )
    vals = np.concatenate([a.data[diag], 0.5 * a.data[~diag], 0.5 * a.data[~diag]])
    return sp.csr_matrix((vals, (rows, cols)), shape=(a.shape[0], s * s))


def _lower(program: ConicProgram):
    import cvxpy as cp

    decls = program.declarations()
    exprs = {}
    constraints = []
    for decl in decls.values():
        if isinstance(decl, ScalarVar):
            exprs[decl.name] = cp.Variable(decl.size, name=decl.name, nonneg=decl.nonneg)
        elif decl.cone == "psd":
            exprs[decl.name] = cp.Variable((decl.size, decl.size), name=decl.name, PSD=True)
        else:
            var = cp.Variable((decl.size, decl.size), name=decl.name, symmetric=True)
            if decl.cone == "entrywise_nonneg":
                constraints.append(var >= 0)
            exprs[decl.name] = var

    def flat_expr(var_name, coeff):
        decl = decls[var_name]
        if isinstance(decl, MatrixVar):
            return _full_coeff(coeff, decl.size) @ cp.vec(exprs[var_name], order="F")
        return sp.csr_matrix(coeff) @ exprs[var_name]

    for blk in program.linear_blocks:
        expr = cp.Constant(blk.offset)
        for var, a in blk.coeffs.items():
            expr = expr + flat_expr(var, a)
        constraints.append(expr == 0 if blk.sense == "eq" else expr >= 0)

    for mc in program.matrix_constraints:
        expr = cp.Constant(mc.const if sp.issparse(mc.const) else np.asarray(mc.const, dtype=float))
        for term in mc.congruence:
            x = exprs[term.var]
            expr = expr + term.coeff * (term.b.T @ x @ term.b)
        for term in mc.scalar_terms:
            mat = term.mat.toarray() if sp.issparse(term.mat) else np.asarray(term.mat, dtype=float)
            expr = expr + cp.multiply(exprs[term.var][term.index], cp.Constant(mat))
        if mc.cone == "psd":
            constraints.append(expr >> 0)
        else:
            constraints.append(expr >= 0)

    obj_expr = cp.Constant(program.objective.offset)
    for var, c in program.objective.terms.items():
        obj_expr = obj_expr + flat_expr(var, sp.csr_matrix(np.atleast_2d(c)))
    obj_expr = cp.sum(obj_expr)
    objective = cp.Minimize(obj_expr) if program.objective.sense == "min" else cp.Maximize(obj_expr)
    return cp.Problem(objective, constraints), exprs


def _status_of(cp_status: str) -> str:
    import cvxpy as cp

    return {
        cp.OPTIMAL: "optimal",
        cp.OPTIMAL_INACCURATE: "near_optimal",
        cp.INFEASIBLE: "infeasible",
        cp.INFEASIBLE_INACCURATE: "infeasible",
        cp.UNBOUNDED: "unbounded",
        cp.UNBOUNDED_INACCURATE: "unbounded",
    }.get(cp_status, "numerical_failure")


def solve(program: ConicProgram, settings: SolveSettings | None = None) -> Solution:
    import cvxpy as cp

    settings = settings or SolveSettings()
    if not program.canonical:
        program = canonicalize(program)
    problem, exprs = _lower(program)

    if settings.solver == "clarabel":
        solver, opts = cp.CLARABEL, {
            "max_iter": settings.max_iters,
            "tol_gap_abs": settings.abs_tol,
            "tol_gap_rel": settings.rel_tol,
            "tol_feas": min(settings.abs_tol, settings.rel_tol),
        }
    elif settings.solver == "scs":
        solver, opts = cp.SCS, {
            "max_iters": settings.max_iters,
            "eps_abs": settings.abs_tol,
            "eps_rel": settings.rel_tol,
        }
    else:
        raise ValueError(f"unknown solver {settings.solver!r}")

    t0 = time.perf_counter()
    try:
        with warnings.catch_warnings():
            # the residual check below supersedes cvxpy's inaccuracy warning
            warnings.filterwarnings("ignore", message="Solution may be inaccurate")
            problem.solve(solver=solver, verbose=settings.resolved_verbose(), **opts)
    except cp.SolverError:
        return Solution("numerical_failure", float("nan"), None, time.perf_counter() - t0, 0)
    wall = time.perf_counter() - t0

    status = _status_of(problem.status)
    stats = problem.solver_stats
    solve_time = wall if stats is None or stats.solve_time is None else float(stats.solve_time)
    iterations = 0 if stats is None or stats.num_iters is None else int(stats.num_iters)

    values = None
    if status in ("optimal", "near_optimal"):
        values = {}
        for name, expr in exprs.items():
            val = expr.value
            if val is None:
                status = "numerical_failure"
                values = None
                break
            val = np.asarray(val, dtype=float)
            if val.ndim == 2:
                val = 0.5 * (val + val.T)
            values[name] = val

    objective = float("nan")
    if values is not None:
        # recomputed from the program, not read off the solver report
        objective = objective_value(program.objective, values)

    sol = Solution(status, objective, values, solve_time, iterations)
    if status in ("optimal", "near_optimal") and values:
        report = verify_residuals(program, sol, tol=10.0 * settings.abs_tol)
        sol.residual_pass = report.passed
        sol.max_violation = report.max_violation
        if status == "optimal" and not report.passed:
            sol.status = "near_optimal"
    return sol


def verify_residuals(program: ConicProgram, solution, tol: float = 1e-7) -> ResidualReport:
    """Independent feasibility check of a solution against the program.

    Raw violations are compared against tol * (1 + data scale of the
    constraint), which keeps the pass criterion meaningful across badly
    scaled instances.
    """
    values = solution.variable_values if isinstance(solution, Solution) else dict(solution)
    report = ResidualReport(tol=tol)
    ok = True

    for blk in program.linear_blocks:
        r = linear_block_values(blk, values)
        viol = float(np.max(np.abs(r))) if blk.sense == "eq" else float(max(0.0, np.max(-r, initial=0.0)))
        report.violations[blk.name] = viol
        scale = 1.0 + (float(np.max(np.abs(blk.offset))) if blk.offset.size else 0.0)
        ok &= viol <= tol * scale

    for mc in program.matrix_constraints:
        val = matrix_constraint_value(mc, values)
        const = mc.const.toarray() if sp.issparse(mc.const) else np.asarray(mc.const, dtype=float)
        scale = 1.0 + (float(np.max(np.abs(const))) if const.size else 0.0)
        if mc.cone == "psd":
            lam_min = float(np.linalg.eigvalsh(0.5 * (val + val.T))[0])
            report.psd_min_eig[mc.name] = lam_min
            viol = max(0.0, -lam_min)
        else:
            viol = float(max(0.0, -np.min(val)))
        report.violations[mc.name] = viol
        ok &= viol <= tol * scale

    for decl in program.matrix_vars:
        x = values.get(decl.name)
        if x is None:
            continue
        if decl.cone == "psd":
            lam_min = float(np.linalg.eigvalsh(0.5 * (x + x.T))[0])
            report.psd_min_eig[decl.name] = lam_min
            viol = max(0.0, -lam_min)
        elif decl.cone == "entrywise_nonneg":
            viol = float(max(0.0, -np.min(x)))
        else:
            continue
        report.violations[f"var:{decl.name}"] = viol
        ok &= viol <= tol * (1.0 + float(np.max(np.abs(x))))

    report.passed = bool(ok)
    return report
