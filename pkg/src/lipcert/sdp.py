"""SDP builders for the certified Lipschitz bound of a reduced network.

With x = [s; w; p] and G_r(w) = a_mat @ w + c0 + w_out_h @ relu(q),
q = w_in_h @ w + b_in_h, the primal asks for the smallest l_sq with

    F1^T D(l_sq, tau) F1 + F2^T Pi F2 <= 0,
    D = diag(-l_sq + tau eps^2, -tau I_m, I_l),
    F1 = [[1, 0, 0], [-w0, I, 0], [c0 - z0, a_mat, w_out_h]],
    F2 = [[1, 0, 0], [b_in_h, w_in_h, 0], [0, 0, I]],

over a multiplier class for Pi.  The backend receives the inequality as
-LHS >= 0 (PSD block of size 1 + m + n_r).  The dual maximizes
<B B^T, H> over PSD H of the same size with H[0,0] = 1, the ball trace
inequality, complementary-slackness equalities on the residual diagonal
and the entrywise cone M H M^T >= 0, M = [[1, 0, 0], [-b_in_h, -w_in_h, I],
[0, 0, I]].  A rank-1 H certifies exactness and carries the worst case in
its second block.

compress_instance() is an exactness-preserving presolve: the programs see
w only through rows of [a_mat; w_in_h] and w0 plus isotropic terms, so an
orthonormal basis of that rowspace replaces m by r <= l + n_r + 1 without
changing the optimum or the multiplier variables.  Solutions map back via
expand_dual_matrix / expand_input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .conic import (
    CongruenceTerm,
    ConicProgram,
    ScalarMatrixTerm,
    canonicalize,
    functional_from_matrix,
    sym_flat_index,
)
from .model import TargetSpec
from .multipliers import MultiplierClass, multiplier_structure
from .reduction import ReducedModel

__all__ = [
    "InstanceScaling",
    "build_primal",
    "build_dual",
    "compress_instance",
    "denormalize_dual_matrix",
    "denormalize_gamma",
    "denormalize_input",
    "expand_dual_matrix",
    "expand_input",
    "normalize_instance",
]


def _instance_parts(rm: ReducedModel, target: TargetSpec, z0):
    z0 = np.asarray(z0, dtype=float)
    if z0.shape != (rm.l,):
        raise ValueError(f"z0 must have length {rm.l}")
    if target.w0.shape != (rm.m,):
        raise ValueError(f"w0 must have length {rm.m}")
    a_mat = rm.w_out_t @ rm.w_in_t  # (l, m) affine input-output map
    return a_mat, rm.c0 - z0


def _f2_matrix(rm: ReducedModel) -> np.ndarray:
    m, n_r = rm.m, rm.n_r
    f2 = np.zeros((2 * n_r + 1, 1 + m + n_r))
    f2[0, 0] = 1.0
    f2[1:n_r + 1, 0] = rm.b_in_h
    f2[1:n_r + 1, 1:m + 1] = rm.w_in_h
    f2[n_r + 1:, m + 1:] = np.eye(n_r)
    return f2


def _relu_cone_factor(rm: ReducedModel) -> np.ndarray:
    # M = [[1, 0, 0], [-b, -W, I], [0, 0, I]] with M = E @ F2
    m, n_r = rm.m, rm.n_r
    mm = np.zeros((2 * n_r + 1, 1 + m + n_r))
    mm[0, 0] = 1.0
    mm[1:n_r + 1, 0] = -rm.b_in_h
    mm[1:n_r + 1, 1:m + 1] = -rm.w_in_h
    mm[1:n_r + 1, m + 1:] = np.eye(n_r)
    mm[n_r + 1:, m + 1:] = np.eye(n_r)
    return mm


def build_primal(rm: ReducedModel, target: TargetSpec, z0, mclass=MultiplierClass.NN) -> ConicProgram:
    """Upper-bound SDP; minimizes l_sq = L^2 over (l_sq, tau, multiplier)."""
    a_mat, r0 = _instance_parts(rm, target, z0)
    m, l, n_r = rm.m, rm.l, rm.n_r
    size = 1 + m + n_r

    prog = ConicProgram()
    prog.add_scalar_var("l_sq", nonneg=True)
    prog.add_scalar_var("tau", nonneg=True)
    multiplier_structure(prog, mclass, n_r)

    # -LHS of the LMI, required PSD
    e00 = sp.coo_matrix(([1.0], ([0], [0])), shape=(size, size))
    # tau multiplies F1mid^T F1mid - eps^2 e00, F1mid = [-w0, I_m, 0]
    w0 = target.w0
    rows = [0] + [0] * m + list(range(1, m + 1)) + list(range(1, m + 1))
    cols = [0] + list(range(1, m + 1)) + [0] * m + list(range(1, m + 1))
    vals = [float(w0 @ w0) - target.eps ** 2] + (-w0).tolist() + (-w0).tolist() + [1.0] * m
    tau_mat = sp.coo_matrix((vals, (rows, cols)), shape=(size, size))

    f1_bot = np.hstack([r0[:, None], a_mat, rm.w_out_h])  # (l, size)
    const = -(f1_bot.T @ f1_bot)

    prog.add_matrix_constraint(
        "lmi",
        "psd",
        size,
        congruence=(CongruenceTerm(-1.0, "pi", _f2_matrix(rm)),),
        scalar_terms=(
            ScalarMatrixTerm("l_sq", 0, e00),
            ScalarMatrixTerm("tau", 0, tau_mat),
        ),
        const=const,
    )
    prog.set_objective("min", {"l_sq": [1.0]})
    return canonicalize(prog)


def build_dual(rm: ReducedModel, target: TargetSpec, z0) -> ConicProgram:
    """Dual SDP over PSD H; its optimum matches the NN-class primal."""
    a_mat, r0 = _instance_parts(rm, target, z0)
    m, n_r = rm.m, rm.n_r
    size = 1 + m + n_r
    flat = lambda i, j: sym_flat_index(i, j, size)

    prog = ConicProgram()
    prog.add_matrix_var("h", size, "psd")

    prog.add_linear_block(
        "h00", "eq",
        {"h": sp.coo_matrix(([1.0], ([0], [flat(0, 0)])), shape=(1, size * (size + 1) // 2))},
        np.array([-1.0]),
    )

    # ball inequality: (eps^2 - w0.w0) H00 + 2 w0.H[0,1:m+1] - tr(H22) >= 0
    w0 = target.w0
    cols = [flat(0, 0)] + [flat(0, 1 + j) for j in range(m)] + [flat(1 + j, 1 + j) for j in range(m)]
    vals = [target.eps ** 2 - float(w0 @ w0)] + (2.0 * w0).tolist() + [-1.0] * m
    prog.add_linear_block(
        "ball", "ge",
        {"h": sp.coo_matrix((vals, ([0] * len(cols), cols)), shape=(1, size * (size + 1) // 2))},
        np.zeros(1),
    )

    # diag(-b H13 - W H23 + H33) = 0 on the residual block
    if n_r:
        rows, cols, vals = [], [], []
        for i in range(n_r):
            rows.append(i)
            cols.append(flat(0, 1 + m + i))
            vals.append(-float(rm.b_in_h[i]))
            for k in range(m):
                rows.append(i)
                cols.append(flat(1 + k, 1 + m + i))
                vals.append(-float(rm.w_in_h[i, k]))
            rows.append(i)
            cols.append(flat(1 + m + i, 1 + m + i))
            vals.append(1.0)
        prog.add_linear_block(
            "complementarity", "eq",
            {"h": sp.coo_matrix((vals, (rows, cols)), shape=(n_r, size * (size + 1) // 2))},
            np.zeros(n_r),
        )

    prog.add_matrix_constraint(
        "relu_cone",
        "nonneg",
        2 * n_r + 1,
        congruence=(CongruenceTerm(1.0, "h", _relu_cone_factor(rm).T),),
    )

    b_mat = np.vstack([r0[None, :], a_mat.T, rm.w_out_h.T])  # (size, l)
    prog.set_objective("max", {"h": functional_from_matrix(b_mat @ b_mat.T)})
    return canonicalize(prog)


# --- input-subspace compression ------------------------------------------------


def compress_instance(rm: ReducedModel, target: TargetSpec):
    """Orthonormal basis reduction of the input space.

    Returns (rm_c, target_c, basis) with basis (m, r), or None when the
    rowspace of [a_mat; w_in_h; w0] is not smaller than m.
    """
    a_mat = rm.w_out_t @ rm.w_in_t
    stack = np.vstack([a_mat, rm.w_in_h, target.w0[None, :]])
    basis = scipy.linalg.orth(stack.T)
    r = basis.shape[1]
    if r >= rm.m or r == 0:
        return None
    rm_c = ReducedModel(
        w_in_t=rm.w_in_t @ basis,
        b_in_t=rm.b_in_t,
        w_out_t=rm.w_out_t,
        w_in_h=rm.w_in_h @ basis,
        b_in_h=rm.b_in_h,
        w_out_h=rm.w_out_h,
        n_r=rm.n_r,
        partition=rm.partition,
        m=r,
        l=rm.l,
        c0=rm.c0,
    )
    target_c = TargetSpec(basis.T @ target.w0, target.eps)
    return rm_c, target_c, basis


def expand_input(basis: np.ndarray, w_c) -> np.ndarray:
    return basis @ np.asarray(w_c, dtype=float)


def expand_dual_matrix(basis: np.ndarray, h_c: np.ndarray, n_r: int) -> np.ndarray:
    """Lift a compressed dual matrix back to size 1 + m + n_r."""
    m, r = basis.shape
    t = np.zeros((1 + m + n_r, 1 + r + n_r))
    t[0, 0] = 1.0
    t[1:m + 1, 1:r + 1] = basis
    t[m + 1:, r + 1:] = np.eye(n_r)
    return t @ np.asarray(h_c, dtype=float) @ t.T


# --- instance normalization -----------------------------------------------------


@dataclass(frozen=True)
class InstanceScaling:
    """Back-maps of normalize_instance: w = w0 + eps u, p = d * p', G = sigma G'."""

    w0: np.ndarray
    eps: float
    d: np.ndarray
    sigma: float


def normalize_instance(rm: ReducedModel, target: TargetSpec, z0):
    """Exact change of coordinates that equilibrates the program data.

    Shifts and scales the input so the ball becomes the unit ball at the
    origin, rescales each residual row of [w_in_h, b_in_h] to unit norm
    (ReLU is positively homogeneous, so row scales move to w_out_h), and
    divides the output map by the spectral norm of the objective data.
    Bounds transform as gamma = sigma * gamma'; the NN-class optimum is
    preserved exactly because that multiplier set is closed under positive
    diagonal congruence.  Returns (rm_n, target_n, z0_n, scaling) or None
    when eps = 0.
    """
    z0 = np.asarray(z0, dtype=float)
    eps, w0 = target.eps, target.w0
    if eps == 0.0:
        return None
    w_in_t = eps * rm.w_in_t
    b_in_t = rm.w_in_t @ w0 + rm.b_in_t
    w_in_h = eps * rm.w_in_h
    b_in_h = rm.w_in_h @ w0 + rm.b_in_h
    d = np.sqrt(np.sum(w_in_h ** 2, axis=1) + b_in_h ** 2)
    d = np.where(d > 0.0, d, 1.0)
    w_in_h = w_in_h / d[:, None]
    b_in_h = b_in_h / d
    w_out_h = rm.w_out_h * d[None, :]

    a_mat = rm.w_out_t @ w_in_t
    r0 = rm.w_out_t @ b_in_t - z0
    sigma = float(np.linalg.norm(np.vstack([r0[None, :], a_mat.T, w_out_h.T]), 2))
    if sigma == 0.0:
        sigma = 1.0
    w_out_t = rm.w_out_t / sigma
    rm_n = ReducedModel(
        w_in_t=w_in_t,
        b_in_t=b_in_t,
        w_out_t=w_out_t,
        w_in_h=w_in_h,
        b_in_h=b_in_h,
        w_out_h=w_out_h / sigma,
        n_r=rm.n_r,
        partition=rm.partition,
        m=rm.m,
        l=rm.l,
        c0=w_out_t @ b_in_t,
    )
    target_n = TargetSpec(np.zeros(rm.m), 1.0)
    return rm_n, target_n, z0 / sigma, InstanceScaling(w0=w0, eps=eps, d=d, sigma=sigma)


def denormalize_gamma(scaling: InstanceScaling, gamma_n: float) -> float:
    return scaling.sigma * gamma_n


def denormalize_input(scaling: InstanceScaling, u) -> np.ndarray:
    return scaling.w0 + scaling.eps * np.asarray(u, dtype=float)


def denormalize_dual_matrix(scaling: InstanceScaling, h_n: np.ndarray) -> np.ndarray:
    """Map a dual matrix of the normalized instance back to original coordinates."""
    h_n = np.asarray(h_n, dtype=float)
    m = scaling.w0.shape[0]
    n_r = scaling.d.shape[0]
    t = np.zeros((1 + m + n_r, 1 + m + n_r))
    t[0, 0] = 1.0
    t[1:m + 1, 0] = scaling.w0
    t[1:m + 1, 1:m + 1] = scaling.eps * np.eye(m)
    t[m + 1:, m + 1:] = np.diag(scaling.d)
    return t @ h_n @ t.T
