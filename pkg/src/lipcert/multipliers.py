"""Multiplier classes certifying nonnegativity over the ReLU graph.

A symmetric Pi of size 2n+1 is a valid multiplier when
[1; q; relu(q)]^T Pi [1; q; relu(q)] >= 0 for every q.  Three nested
parameterizations are supported:

* NN:  Pi = E^T (Q + J-block) E with Q symmetric entrywise nonnegative and
       J a free diagonal placed in the off-diagonal (q, p) blocks,
       E = [[1, 0, 0], [0, -I, I], [0, 0, I]].
* OZF: Pi = [[0, 0, 0], [0, 0, M], [0, M^T, -M-M^T]] with M doubly
       hyperdominant (nonpositive off-diagonal, nonnegative row/col sums).
* FAZ: Pi = [[0, -nu^T, (nu+eta)^T], [., 0, L+T], [., ., -2(L+T)]] with
       nu, eta >= 0, L free diagonal, T a nonnegative combination of
       (e_i - e_j)(e_i - e_j)^T.

OZF and FAZ embed into NN (embed_inclusion), which orders the induced
SDP bounds.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .conic import ConicProgram, sym_flat_index, sym_flat_size
from .model import relu_vec

__all__ = [
    "MultiplierClass",
    "NnParam",
    "OzfParam",
    "FazParam",
    "e_matrix",
    "t_matrix",
    "pair_index",
    "assemble_pi",
    "validate_param",
    "membership_test",
    "embed_inclusion",
    "multiplier_structure",
    "param_from_values",
]


class MultiplierClass(enum.Enum):
    NN = "nn"
    OZF = "ozf"
    FAZ = "faz"

    @classmethod
    def parse(cls, tag: str) -> "MultiplierClass":
        try:
            return cls(tag.lower())
        except ValueError:
            raise ValueError(f"unknown multiplier class {tag!r}") from None


@dataclass(frozen=True)
class NnParam:
    q_mat: np.ndarray   # (2n+1, 2n+1), symmetric entrywise nonnegative
    j_diag: np.ndarray  # (n,), free


@dataclass(frozen=True)
class OzfParam:
    m_mat: np.ndarray  # (n, n), doubly hyperdominant


@dataclass(frozen=True)
class FazParam:
    nu: np.ndarray           # (n,), nonnegative
    eta: np.ndarray          # (n,), nonnegative
    lambda_diag: np.ndarray  # (n,), free
    t_weights: np.ndarray    # (n*(n-1)//2,), nonnegative, pairs (i, j) i<j lexicographic


def e_matrix(n: int) -> np.ndarray:
    """Invertible congruence [[1, 0, 0], [0, -I, I], [0, 0, I]] of size 2n+1."""
    e = np.zeros((2 * n + 1, 2 * n + 1))
    e[0, 0] = 1.0
    e[1:n + 1, 1:n + 1] = -np.eye(n)
    e[1:n + 1, n + 1:] = np.eye(n)
    e[n + 1:, n + 1:] = np.eye(n)
    return e


def pair_index(i: int, j: int, n: int) -> int:
    """Flat position of the unordered pair (i, j), i < j, in lexicographic order."""
    if not (0 <= i < j < n):
        raise ValueError("need 0 <= i < j < n")
    return i * n - i * (i + 1) // 2 + (j - i - 1)


def t_matrix(t_weights, n: int) -> np.ndarray:
    """T = sum_{i<j} t_ij (e_i - e_j)(e_i - e_j)^T."""
    t_weights = np.asarray(t_weights, dtype=float)
    if t_weights.shape != (n * (n - 1) // 2,):
        raise ValueError("t_weights has the wrong length")
    t = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            lam = t_weights[pair_index(i, j, n)]
            t[i, i] += lam
            t[j, j] += lam
            t[i, j] -= lam
            t[j, i] -= lam
    return t


def _check_shape(arr, shape, what):
    arr = np.asarray(arr, dtype=float)
    if arr.shape != shape:
        raise ValueError(f"{what} must have shape {shape}, got {arr.shape}")
    return arr


def assemble_pi(mclass: MultiplierClass, param, n: int) -> np.ndarray:
    """Numeric Pi for a parameterization; linear in the parameters."""
    s = 2 * n + 1
    if mclass is MultiplierClass.NN:
        q = _check_shape(param.q_mat, (s, s), "q_mat")
        j = _check_shape(param.j_diag, (n,), "j_diag")
        r = q.copy()
        idx = np.arange(n)
        r[1 + idx, 1 + n + idx] += j
        r[1 + n + idx, 1 + idx] += j
        e = e_matrix(n)
        return e.T @ r @ e
    if mclass is MultiplierClass.OZF:
        m = _check_shape(param.m_mat, (n, n), "m_mat")
        pi = np.zeros((s, s))
        pi[1:n + 1, n + 1:] = m
        pi[n + 1:, 1:n + 1] = m.T
        pi[n + 1:, n + 1:] = -(m + m.T)
        return pi
    if mclass is MultiplierClass.FAZ:
        nu = _check_shape(param.nu, (n,), "nu")
        eta = _check_shape(param.eta, (n,), "eta")
        lam = _check_shape(param.lambda_diag, (n,), "lambda_diag")
        smat = np.diag(lam) + t_matrix(param.t_weights, n)
        pi = np.zeros((s, s))
        pi[0, 1:n + 1] = -nu
        pi[1:n + 1, 0] = -nu
        pi[0, n + 1:] = nu + eta
        pi[n + 1:, 0] = nu + eta
        pi[1:n + 1, n + 1:] = smat
        pi[n + 1:, 1:n + 1] = smat
        pi[n + 1:, n + 1:] = -2.0 * smat
        return pi
    raise ValueError(f"unknown multiplier class {mclass!r}")


def validate_param(mclass: MultiplierClass, param, n: int, tol: float = 0.0) -> None:
    """Raise if the parameterization violates its class constraints."""
    if mclass is MultiplierClass.NN:
        q = _check_shape(param.q_mat, (2 * n + 1, 2 * n + 1), "q_mat")
        _check_shape(param.j_diag, (n,), "j_diag")
        if not np.allclose(q, q.T, atol=max(tol, 1e-12)):
            raise ValueError("q_mat must be symmetric")
        if np.min(q) < -tol:
            raise ValueError("q_mat must be entrywise nonnegative")
    elif mclass is MultiplierClass.OZF:
        m = _check_shape(param.m_mat, (n, n), "m_mat")
        off = m - np.diag(np.diag(m))
        if np.max(off) > tol:
            raise ValueError("m_mat off-diagonal must be nonpositive")
        if n and (np.min(m.sum(axis=1)) < -tol or np.min(m.sum(axis=0)) < -tol):
            raise ValueError("m_mat row and column sums must be nonnegative")
    elif mclass is MultiplierClass.FAZ:
        for name in ("nu", "eta", "t_weights"):
            arr = np.asarray(getattr(param, name), dtype=float)
            if arr.size and np.min(arr) < -tol:
                raise ValueError(f"{name} must be nonnegative")
        _check_shape(param.lambda_diag, (n,), "lambda_diag")
        _check_shape(param.t_weights, (n * (n - 1) // 2,), "t_weights")
    else:
        raise ValueError(f"unknown multiplier class {mclass!r}")


def membership_test(pi, n: int, samples: int = 10000, seed: int = 0, tol: float = 1e-9) -> bool:
    """Sampled check of [1; q; relu(q)]^T Pi [1; q; relu(q)] >= -tol.

    Half the draws are standard normal, half standard Cauchy clipped to
    [-100, 100]; the clip keeps f64 rounding of the quadratic form below tol.
    """
    pi = np.asarray(pi, dtype=float)
    if pi.shape != (2 * n + 1, 2 * n + 1):
        raise ValueError("pi size does not match n")
    rng = np.random.default_rng(seed)
    k = samples // 2
    q = np.vstack(
        [
            rng.standard_normal((k, n)),
            np.clip(rng.standard_cauchy((samples - k, n)), -100.0, 100.0),
        ]
    )
    v = np.hstack([np.ones((samples, 1)), q, relu_vec(q)])
    forms = np.einsum("ij,jk,ik->i", v, pi, v)
    return bool(np.min(forms) >= -tol)


def embed_inclusion(mclass: MultiplierClass, param, n: int) -> NnParam:
    """Rewrite an OZF or FAZ parameterization as an NN one with identical Pi.

    The (q, p) cross block splits into -offdiag (into Q, nonnegative for
    valid inputs) and -diag (into J).
    """
    s = 2 * n + 1
    q = np.zeros((s, s))
    if mclass is MultiplierClass.OZF:
        m = _check_shape(param.m_mat, (n, n), "m_mat")
        smat = m
        j = -np.diag(m).copy()
    elif mclass is MultiplierClass.FAZ:
        nu = _check_shape(param.nu, (n,), "nu")
        eta = _check_shape(param.eta, (n,), "eta")
        smat = np.diag(param.lambda_diag) + t_matrix(param.t_weights, n)
        j = -np.diag(smat).copy()
        q[0, 1:n + 1] = nu
        q[1:n + 1, 0] = nu
        q[0, n + 1:] = eta
        q[n + 1:, 0] = eta
    else:
        raise ValueError(f"embed_inclusion needs an OZF or FAZ source, got {mclass!r}")
    off = -(smat - np.diag(np.diag(smat)))
    q[1:n + 1, n + 1:] += off
    q[n + 1:, 1:n + 1] += off.T
    return NnParam(q_mat=q, j_diag=j)


# --- decision-variable structure for the SDP builders -------------------------
#
# Variables are named after the parameter fields; 'pi' is a free symmetric
# matrix tied to them by the 'pi_def' equality block.


def multiplier_structure(program: ConicProgram, mclass: MultiplierClass, n: int) -> str:
    s = 2 * n + 1
    program.add_matrix_var("pi", s, "free_symmetric")
    pi_rows = sym_flat_size(s)

    def pf(i, j):
        return sym_flat_index(i, j, s)

    rows_pi, cols_pi, vals_pi = [], [], []
    terms = {}

    def put(var, triplets):
        rows, cols, vals = terms.setdefault(var, ([], [], []))
        for r, c, v in triplets:
            rows.append(r)
            cols.append(c)
            vals.append(v)

    # every pi entry appears once on the left of pi_def
    for k in range(pi_rows):
        rows_pi.append(k)
        cols_pi.append(k)
        vals_pi.append(1.0)

    if mclass is MultiplierClass.NN:
        program.add_matrix_var("q_mat", s, "entrywise_nonneg")
        if n:
            program.add_scalar_var("j_diag", size=n)
        qf = pf  # q_mat has the same size as pi
        # pi = E^T (q_mat + J) E expanded blockwise
        put("q_mat", [(pf(0, 0), qf(0, 0), -1.0)])
        for i in range(n):
            put("q_mat", [(pf(0, 1 + i), qf(0, 1 + i), 1.0)])
            put("q_mat", [(pf(0, 1 + n + i), qf(0, 1 + i), -1.0),
                          (pf(0, 1 + n + i), qf(0, 1 + n + i), -1.0)])
        for i in range(n):
            for j in range(i, n):
                put("q_mat", [(pf(1 + i, 1 + j), qf(1 + i, 1 + j), -1.0)])
        for i in range(n):
            for j in range(n):
                r = pf(1 + i, 1 + n + j)
                put("q_mat", [(r, qf(1 + i, 1 + j), 1.0), (r, qf(1 + i, 1 + n + j), 1.0)])
                if i == j:
                    put("j_diag", [(r, i, 1.0)])
        for i in range(n):
            for j in range(i, n):
                r = pf(1 + n + i, 1 + n + j)
                put("q_mat", [
                    (r, qf(1 + i, 1 + j), -1.0),
                    (r, qf(1 + i, 1 + n + j), -1.0),
                    (r, qf(1 + j, 1 + n + i), -1.0),
                    (r, qf(1 + n + i, 1 + n + j), -1.0),
                ])
                if i == j:
                    put("j_diag", [(r, i, -2.0)])

    elif mclass is MultiplierClass.OZF:
        if n:
            program.add_scalar_var("m_mat", size=n * n)
        for i in range(n):
            for j in range(n):
                put("m_mat", [(pf(1 + i, 1 + n + j), i * n + j, -1.0)])
        for i in range(n):
            for j in range(i, n):
                r = pf(1 + n + i, 1 + n + j)
                put("m_mat", [(r, i * n + j, 1.0), (r, j * n + i, 1.0)])
        if n:
            rows, cols, vals = [], [], []
            k = 0
            for i in range(n):
                for j in range(n):
                    if i != j:
                        rows.append(k)
                        cols.append(i * n + j)
                        vals.append(-1.0)
                        k += 1
            program.add_linear_block(
                "dhd_offdiag", "ge",
                {"m_mat": sp.coo_matrix((vals, (rows, cols)), shape=(k, n * n))},
                np.zeros(k),
            )
            row_sum = sp.coo_matrix(
                (np.ones(n * n), (np.repeat(np.arange(n), n), np.arange(n * n))),
                shape=(n, n * n),
            )
            col_sum = sp.coo_matrix(
                (np.ones(n * n), (np.tile(np.arange(n), n), np.arange(n * n))),
                shape=(n, n * n),
            )
            program.add_linear_block("dhd_rowsum", "ge", {"m_mat": row_sum}, np.zeros(n))
            program.add_linear_block("dhd_colsum", "ge", {"m_mat": col_sum}, np.zeros(n))

    elif mclass is MultiplierClass.FAZ:
        if n:
            program.add_scalar_var("nu", size=n, nonneg=True)
            program.add_scalar_var("eta", size=n, nonneg=True)
            program.add_scalar_var("lambda_diag", size=n)
        n_pairs = n * (n - 1) // 2
        if n_pairs:
            program.add_scalar_var("t_weights", size=n_pairs, nonneg=True)

        def s_entries(i, j, scale):
            # triplet contributions of scale * S[i, j], S = diag(lam) + T(t)
            out = []
            if i == j:
                out.append(("lambda_diag", i, scale))
                for k2 in range(n):
                    if k2 != i:
                        out.append(("t_weights", pair_index(min(i, k2), max(i, k2), n), scale))
            else:
                out.append(("t_weights", pair_index(min(i, j), max(i, j), n), -scale))
            return out

        for i in range(n):
            put("nu", [(pf(0, 1 + i), i, 1.0)])
            put("nu", [(pf(0, 1 + n + i), i, -1.0)])
            put("eta", [(pf(0, 1 + n + i), i, -1.0)])
        for i in range(n):
            for j in range(n):
                for var, idx, v in s_entries(i, j, -1.0):
                    put(var, [(pf(1 + i, 1 + n + j), idx, v)])
        for i in range(n):
            for j in range(i, n):
                for var, idx, v in s_entries(i, j, 2.0):
                    put(var, [(pf(1 + n + i, 1 + n + j), idx, v)])
    else:
        raise ValueError(f"unknown multiplier class {mclass!r}")

    sizes = {"q_mat": pi_rows, "j_diag": n, "m_mat": n * n,
             "nu": n, "eta": n, "lambda_diag": n, "t_weights": n * (n - 1) // 2}
    coeffs = {"pi": sp.coo_matrix((vals_pi, (rows_pi, cols_pi)), shape=(pi_rows, pi_rows))}
    for var, (rows, cols, vals) in terms.items():
        coeffs[var] = sp.coo_matrix((vals, (rows, cols)), shape=(pi_rows, sizes[var]))
    program.add_linear_block("pi_def", "eq", coeffs, np.zeros(pi_rows))
    return "pi"


def param_from_values(mclass: MultiplierClass, n: int, values: dict):
    """Extract the solved multiplier parameterization from solver values."""
    if mclass is MultiplierClass.NN:
        return NnParam(
            q_mat=np.asarray(values["q_mat"], dtype=float),
            j_diag=np.asarray(values.get("j_diag", np.zeros(n)), dtype=float).reshape(n),
        )
    if mclass is MultiplierClass.OZF:
        flat = np.asarray(values.get("m_mat", np.zeros(0)), dtype=float)
        return OzfParam(m_mat=flat.reshape(n, n))
    if mclass is MultiplierClass.FAZ:
        n_pairs = n * (n - 1) // 2
        return FazParam(
            nu=np.asarray(values.get("nu", np.zeros(0)), dtype=float).reshape(n),
            eta=np.asarray(values.get("eta", np.zeros(0)), dtype=float).reshape(n),
            lambda_diag=np.asarray(values.get("lambda_diag", np.zeros(0)), dtype=float).reshape(n),
            t_weights=np.asarray(values.get("t_weights", np.zeros(0)), dtype=float).reshape(n_pairs),
        )
    raise ValueError(f"unknown multiplier class {mclass!r}")
