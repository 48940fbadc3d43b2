"""Certificate pipeline.

Combines the pieces into a single verdict: reduce the model around the
nominal input, solve the primal for a certified deviation bound, solve the
dual and test its solution matrix for rank one, extract and verify the
worst-case input when the bound is tight, and run projected gradient
ascent for an empirical lower bound.  The classifier is certified robust
when the deviation bound does not exceed the score margin at w0.
"""

from __future__ import annotations

import json
import tempfile
import time
from dataclasses import dataclass, field

import numpy as np

from . import model as model_mod
from .backend import SolveSettings, Solution, solve
from .model import FnnModel, TargetSpec, forward
from .multipliers import MultiplierClass
from .reduction import ReducedModel, build_reduced, reduce, trivial_partition
from .sdp import (
    build_dual,
    build_primal,
    compress_instance,
    denormalize_gamma,
    denormalize_input,
    expand_input,
    normalize_instance,
)

__all__ = [
    "Certificate",
    "ExactnessReport",
    "SolveFailure",
    "upper_bound",
    "exactness_check",
    "verify_worst_case",
    "lower_bound_pgd",
    "robustness_certificate",
]

GAP_TOL = 1e-4      # relative primal/dual agreement required to claim tightness
BALL_TOL = 1e-6     # relative slack allowed on |w* - w0| <= eps
VALUE_TOL = 1e-4    # relative slack allowed on | |G(w*) - z0| - gamma |


class SolveFailure(RuntimeError):
    """Solver did not return a usable solution; the program was dumped to disk."""

    def __init__(self, message: str, dump_path: str | None = None):
        super().__init__(message)
        self.dump_path = dump_path


@dataclass(frozen=True)
class ExactnessReport:
    rank_one: bool
    ratio: float          # |lambda_2| / lambda_1 of the dual matrix
    h: np.ndarray         # first column scaled so h[0] = 1

    def split(self, m: int):
        """(h2, h3) = (input block, residual activation block) of h."""
        return self.h[1 : 1 + m], self.h[1 + m :]


@dataclass
class Certificate:
    gamma_upper: float
    gamma_dual: float | None
    duality_gap: float | None
    exact: bool
    w_star: np.ndarray | None
    lower_bound: float | None
    n_r: int
    multiplier_class: str
    margin_value: float | None
    robust_verdict: str   # "certified_robust" | "not_certified"
    rank_ratio: float | None = None
    timings: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "gamma_upper": self.gamma_upper,
            "gamma_dual": self.gamma_dual,
            "duality_gap": self.duality_gap,
            "exact": self.exact,
            "w_star": None if self.w_star is None else [float(x) for x in self.w_star],
            "lower_bound": self.lower_bound,
            "n_r": self.n_r,
            "multiplier_class": self.multiplier_class,
            "margin_value": self.margin_value,
            "robust_verdict": self.robust_verdict,
            "rank_ratio": self.rank_ratio,
            "timings": {k: float(v) for k, v in self.timings.items()},
        }


def _reduced_instance(model: FnnModel, target: TargetSpec, do_reduce: bool) -> ReducedModel:
    if do_reduce:
        return reduce(model, target)
    return build_reduced(model, trivial_partition(model.n))


def _dump_program(program) -> str:
    fd, path = tempfile.mkstemp(prefix="lipcert_sdp_", suffix=".json")
    with open(fd, "w") as fh:
        json.dump(program.to_json_dict(), fh)
    return path


def _solve_or_raise(program, settings: SolveSettings, what: str) -> Solution:
    sol = solve(program, settings)
    if sol.status not in ("optimal", "near_optimal"):
        path = _dump_program(program)
        raise SolveFailure(f"{what} solve failed with status {sol.status!r}; "
                           f"program dumped to {path}", path)
    return sol


def _presolve(rm: ReducedModel, target: TargetSpec, z0, compress: bool, normalize: bool):
    """Compression then normalization; both exact.  Returns solve-side data."""
    rm_s, target_s, basis = rm, target, None
    if compress:
        packed = compress_instance(rm, target)
        if packed is not None:
            rm_s, target_s, basis = packed
    z0_s, scaling = z0, None
    if normalize:
        packed = normalize_instance(rm_s, target_s, z0)
        if packed is not None:
            rm_s, target_s, z0_s, scaling = packed
    return rm_s, target_s, z0_s, basis, scaling


def upper_bound(
    model: FnnModel,
    target: TargetSpec,
    mclass: MultiplierClass = MultiplierClass.NN,
    do_reduce: bool = True,
    *,
    compress: bool = True,
    normalize: bool = True,
    settings: SolveSettings | None = None,
):
    """Certified bound on max |G(w) - G(w0)| over the eps-ball.

    Returns (gamma, reduced_model, solution).  The reduced model is the
    uncompressed one; compression and normalization are internal changes of
    coordinates that do not weaken the bound.
    """
    settings = settings or SolveSettings()
    rm = _reduced_instance(model, target, do_reduce)
    z0 = forward(model, target.w0)
    rm_s, target_s, z0_s, _, scaling = _presolve(rm, target, z0, compress, normalize)
    prog = build_primal(rm_s, target_s, z0_s, mclass)
    sol = _solve_or_raise(prog, settings, "primal")
    gamma = float(np.sqrt(max(sol.objective, 0.0)))
    if scaling is not None:
        gamma = denormalize_gamma(scaling, gamma)
    return gamma, rm, sol


def exactness_check(h_mat: np.ndarray, rank_tol: float = 1e-6) -> ExactnessReport:
    """Rank-1 test of the dual solution matrix.

    The matrix must have unit (0, 0) entry; its scaled first column is the
    candidate [1; w*; p*] vector when the test passes.
    """
    h_mat = np.asarray(h_mat, dtype=float)
    evals = np.linalg.eigvalsh(0.5 * (h_mat + h_mat.T))[::-1]
    lam1 = float(evals[0])
    if lam1 <= 0.0:
        raise ValueError("dual matrix has no positive leading eigenvalue")
    h00 = h_mat[0, 0]
    if abs(h00 - 1.0) > 1e-6:
        raise ValueError(f"dual matrix has H[0,0] = {h00}, expected 1")
    ratio = float(abs(evals[1]) / lam1) if evals.size > 1 else 0.0
    rank_one = ratio <= rank_tol
    h = h_mat[:, 0] / h00
    if rank_one:
        resid = np.linalg.norm(h_mat - np.outer(h, h)) / max(np.linalg.norm(h_mat), 1e-300)
        if resid > 10.0 * max(rank_tol, ratio):
            raise AssertionError(
                f"rank-1 factor does not reproduce the dual matrix (residual {resid:.2e})")
    return ExactnessReport(rank_one=rank_one, ratio=ratio, h=h)


def verify_worst_case(
    model: FnnModel,
    target: TargetSpec,
    w_star,
    gamma: float,
    ball_tol: float = BALL_TOL,
    value_tol: float = VALUE_TOL,
) -> dict:
    """Check a claimed worst case: inside the ball, deviation matches gamma."""
    w_star = np.asarray(w_star, dtype=float)
    dist = float(np.linalg.norm(w_star - target.w0))
    deviation = float(np.linalg.norm(forward(model, w_star) - forward(model, target.w0)))
    ball_ok = dist <= target.eps * (1.0 + ball_tol) + 1e-15
    value_ok = abs(deviation - gamma) <= value_tol * (1.0 + gamma)
    return {
        "ok": bool(ball_ok and value_ok),
        "ball_ok": bool(ball_ok),
        "value_ok": bool(value_ok),
        "distance": dist,
        "deviation": deviation,
    }


def lower_bound_pgd(
    model: FnnModel,
    target: TargetSpec,
    restarts: int = 50,
    steps: int = 300,
    seed: int = 0,
    step_frac: float = 0.1,
    extra_starts=None,
):
    """Projected gradient ascent on |G(w) - G(w0)|^2 over the eps-ball.

    Always a valid lower bound: every iterate stays inside the ball and the
    returned value is an exactly evaluated deviation.  Returns (bound, w).
    """
    w0 = target.w0
    eps = target.eps
    z0 = forward(model, w0)
    if eps == 0.0:
        return 0.0, w0.copy()
    rng = np.random.default_rng(seed)
    m = model.m

    def project(w):
        d = w - w0
        nd = np.linalg.norm(d)
        if nd > eps:
            return w0 + d * (eps / nd)
        return w

    def value_grad(w):
        q = model.w_in @ w + model.b_in
        p = np.maximum(q, 0.0)
        g = model.w_out @ p - z0
        # subgradient: active-set mask of the ReLU
        grad = 2.0 * (model.w_in.T @ ((q > 0.0) * (model.w_out.T @ g)))
        return float(g @ g), grad

    starts = []
    for k in range(restarts):
        d = rng.standard_normal(m)
        nd = np.linalg.norm(d)
        if nd == 0.0:
            continue
        # alternate boundary starts with interior ones
        r = eps if k % 2 == 0 else eps * float(rng.uniform()) ** (1.0 / m)
        starts.append(w0 + d * (r / nd))
    for w in extra_starts or []:
        starts.append(project(np.asarray(w, dtype=float)))

    best_val = 0.0
    best_w = w0.copy()
    for w in starts:
        val, grad = value_grad(w)
        step = eps * step_frac
        for _ in range(steps):
            gn = np.linalg.norm(grad)
            if gn == 0.0:
                break
            cand = project(w + (step / gn) * grad)
            cval, cgrad = value_grad(cand)
            if cval > val:
                w, val, grad = cand, cval, cgrad
            else:
                step *= 0.5
                if step < 1e-12 * eps:
                    break
        if val > best_val:
            best_val, best_w = val, w
    return float(np.sqrt(best_val)), best_w


def robustness_certificate(
    model: FnnModel,
    target: TargetSpec,
    mclass: MultiplierClass = MultiplierClass.NN,
    do_reduce: bool = True,
    *,
    compress: bool = True,
    normalize: bool = True,
    settings: SolveSettings | None = None,
    rank_tol: float = 1e-6,
    pgd_restarts: int = 50,
    pgd_steps: int = 300,
    seed: int = 0,
) -> Certificate:
    """Full pipeline: bound, tightness test, worst case, lower bound, verdict."""
    settings = settings or SolveSettings()
    timings = {}
    t_total = time.perf_counter()

    t0 = time.perf_counter()
    rm = _reduced_instance(model, target, do_reduce)
    z0 = forward(model, target.w0)
    timings["reduce_s"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    rm_s, target_s, z0_s, basis, scaling = _presolve(rm, target, z0, compress, normalize)
    timings["compress_s"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    psol = _solve_or_raise(build_primal(rm_s, target_s, z0_s, mclass), settings, "primal")
    gamma_upper = float(np.sqrt(max(psol.objective, 0.0)))
    if scaling is not None:
        gamma_upper = denormalize_gamma(scaling, gamma_upper)
    timings["primal_s"] = time.perf_counter() - t0

    # the dual does not depend on the multiplier class, so its certificate
    # can only confirm tightness of a bound that matches the dual value
    t0 = time.perf_counter()
    gamma_dual = None
    duality_gap = None
    rank_ratio = None
    exact = False
    w_star = None
    try:
        dsol = _solve_or_raise(build_dual(rm_s, target_s, z0_s), settings, "dual")
    except SolveFailure:
        dsol = None
    if dsol is not None:
        gamma_dual = float(np.sqrt(max(dsol.objective, 0.0)))
        if scaling is not None:
            gamma_dual = denormalize_gamma(scaling, gamma_dual)
        duality_gap = abs(gamma_upper - gamma_dual)
        try:
            report = exactness_check(dsol.variable_values["h"], rank_tol)
            rank_ratio = report.ratio
        except ValueError:
            report = None
        gap_ok = duality_gap <= GAP_TOL * (1.0 + gamma_upper)
        if report is not None and report.rank_one and gap_ok:
            w_cand = report.h[1 : 1 + rm_s.m]
            if scaling is not None:
                w_cand = denormalize_input(scaling, w_cand)
            if basis is not None:
                w_cand = expand_input(basis, w_cand)
            check = verify_worst_case(model, target, w_cand, gamma_upper)
            if check["ok"]:
                exact = True
                w_star = w_cand
    timings["dual_s"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    lower = None
    if pgd_restarts > 0:
        extra = [w_star] if exact else None
        lower, _ = lower_bound_pgd(
            model, target, restarts=pgd_restarts, steps=pgd_steps, seed=seed,
            extra_starts=extra)
    timings["pgd_s"] = time.perf_counter() - t0

    margin_value = None
    if model.l >= 2:
        margin_value = model_mod.margin(model, target.w0)
    verdict = "certified_robust" if (
        margin_value is not None and gamma_upper <= margin_value
    ) else "not_certified"

    timings["total_s"] = time.perf_counter() - t_total
    return Certificate(
        gamma_upper=gamma_upper,
        gamma_dual=gamma_dual,
        duality_gap=duality_gap,
        exact=exact,
        w_star=w_star,
        lower_bound=lower,
        n_r=rm.n_r,
        multiplier_class=mclass.value,
        margin_value=margin_value,
        robust_verdict=verdict,
        rank_ratio=rank_ratio,
        timings=timings,
    )
