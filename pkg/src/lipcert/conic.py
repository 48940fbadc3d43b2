"""Solver-agnostic conic program container.

Variables are sized scalar groups (free or nonnegative) and symmetric
matrices on a cone (psd, entrywise_nonneg, free_symmetric).  Symmetric
matrices are stored by their upper triangle in row-major order.  Constraints
come in two forms:

* LinearBlock: batched affine rows  sum_v A_v x_v + offset (=|>=) 0,
  with one sparse coefficient matrix per referenced variable.
* MatrixConstraint: a symmetric matrix expression
      const + sum_k c_k * B_k^T X_k B_k + sum_j A_j x_j
  required to be PSD or entrywise nonnegative.  Keeping the congruence
  factors B_k unexpanded is what makes large input dimensions cheap to
  represent.

canonicalize() produces the frozen normal form the backend expects.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

__all__ = [
    "ScalarVar",
    "MatrixVar",
    "LinearBlock",
    "CongruenceTerm",
    "ScalarMatrixTerm",
    "MatrixConstraint",
    "Objective",
    "ConicProgram",
    "canonicalize",
    "sym_flat_size",
    "sym_flat_index",
    "sym_to_flat",
    "flat_to_sym",
    "functional_from_matrix",
]

MATRIX_CONES = ("psd", "entrywise_nonneg", "free_symmetric")


# --- symmetric storage helpers ----------------------------------------------


def sym_flat_size(s: int) -> int:
    return s * (s + 1) // 2


def sym_flat_index(i: int, j: int, s: int) -> int:
    """Flat position of entry (i, j) in row-major upper-triangle storage."""
    if i > j:
        i, j = j, i
    return (i * (2 * s - i - 1)) // 2 + j


def sym_to_flat(mat: np.ndarray) -> np.ndarray:
    s = mat.shape[0]
    iu = np.triu_indices(s)
    return np.asarray(mat, dtype=float)[iu]


def flat_to_sym(flat: np.ndarray, s: int) -> np.ndarray:
    out = np.zeros((s, s))
    iu = np.triu_indices(s)
    out[iu] = flat
    out.T[iu] = flat
    return out


def functional_from_matrix(c_mat: np.ndarray) -> np.ndarray:
    """Flat coefficients f with <C, X> = f @ svec(X); off-diagonals count twice."""
    c_mat = 0.5 * (np.asarray(c_mat, dtype=float) + np.asarray(c_mat, dtype=float).T)
    s = c_mat.shape[0]
    scaled = 2.0 * c_mat - np.diag(np.diag(c_mat))
    return scaled[np.triu_indices(s)]


# --- declarations ------------------------------------------------------------


@dataclass(frozen=True)
class ScalarVar:
    name: str
    size: int = 1
    nonneg: bool = False


@dataclass(frozen=True)
class MatrixVar:
    name: str
    size: int
    cone: str

    def __post_init__(self):
        if self.cone not in MATRIX_CONES:
            raise ValueError(f"unknown matrix cone {self.cone!r}")


@dataclass(frozen=True)
class LinearBlock:
    name: str
    sense: str  # "eq" | "ge"
    coeffs: dict  # var name -> scipy.sparse (rows x flat_dim)
    offset: np.ndarray

    @property
    def rows(self) -> int:
        return self.offset.shape[0]


@dataclass(frozen=True)
class CongruenceTerm:
    coeff: float
    var: str
    b: np.ndarray  # (var_size, constraint_size); contributes coeff * B^T X B


@dataclass(frozen=True)
class ScalarMatrixTerm:
    var: str
    index: int
    mat: object  # symmetric dense or scipy.sparse; contributes mat * x[index]


@dataclass(frozen=True)
class MatrixConstraint:
    name: str
    cone: str  # "psd" | "nonneg"
    size: int
    congruence: tuple
    scalar_terms: tuple
    const: object


@dataclass(frozen=True)
class Objective:
    sense: str  # "min" | "max"
    terms: dict  # var name -> flat coefficient vector
    offset: float = 0.0


def _flat_dim(decl) -> int:
    if isinstance(decl, ScalarVar):
        return decl.size
    return sym_flat_size(decl.size)


@dataclass
class ConicProgram:
    scalar_vars: list = field(default_factory=list)
    matrix_vars: list = field(default_factory=list)
    linear_blocks: list = field(default_factory=list)
    matrix_constraints: list = field(default_factory=list)
    objective: Objective | None = None
    canonical: bool = False

    # -- construction --

    def _check_mutable(self):
        if self.canonical:
            raise ValueError("canonical programs are frozen")

    def add_scalar_var(self, name, size=1, nonneg=False) -> str:
        self._check_mutable()
        if size < 1:
            raise ValueError("scalar groups must have size >= 1")
        self.scalar_vars.append(ScalarVar(name, int(size), bool(nonneg)))
        return name

    def add_matrix_var(self, name, size, cone) -> str:
        self._check_mutable()
        self.matrix_vars.append(MatrixVar(name, int(size), cone))
        return name

    def add_linear_block(self, name, sense, coeffs, offset) -> None:
        self._check_mutable()
        if sense not in ("eq", "ge"):
            raise ValueError(f"unknown sense {sense!r}")
        offset = np.atleast_1d(np.asarray(offset, dtype=float))
        coeffs = {v: sp.csr_matrix(a) for v, a in coeffs.items()}
        for v, a in coeffs.items():
            if a.shape[0] != offset.shape[0]:
                raise ValueError(f"coefficient rows for {v!r} do not match offset")
        self.linear_blocks.append(LinearBlock(name, sense, coeffs, offset))

    def add_matrix_constraint(self, name, cone, size, congruence=(), scalar_terms=(), const=None) -> None:
        self._check_mutable()
        if cone not in ("psd", "nonneg"):
            raise ValueError(f"unknown constraint cone {cone!r}")
        if const is None:
            const = np.zeros((size, size))
        self.matrix_constraints.append(
            MatrixConstraint(name, cone, int(size), tuple(congruence), tuple(scalar_terms), const)
        )

    def set_objective(self, sense, terms, offset=0.0) -> None:
        self._check_mutable()
        if sense not in ("min", "max"):
            raise ValueError(f"unknown objective sense {sense!r}")
        terms = {v: np.atleast_1d(np.asarray(c, dtype=float)) for v, c in terms.items()}
        self.objective = Objective(sense, terms, float(offset))

    # -- lookup --

    def declarations(self) -> dict:
        decls = {}
        for v in list(self.scalar_vars) + list(self.matrix_vars):
            if v.name in decls and decls[v.name] != v:
                raise ValueError(f"variable {v.name!r} declared twice with different shapes")
            decls[v.name] = v
        return decls

    def variable_names(self):
        return list(self.declarations())

    def validate(self) -> None:
        decls = self.declarations()

        def check_ref(ctx, var, dim=None):
            if var not in decls:
                raise ValueError(f"{ctx} references unbound variable {var!r}")
            if dim is not None and _flat_dim(decls[var]) != dim:
                raise ValueError(f"{ctx}: coefficient width does not match {var!r}")

        for blk in self.linear_blocks:
            for var, a in blk.coeffs.items():
                check_ref(f"linear block {blk.name!r}", var, a.shape[1])
        for mc in self.matrix_constraints:
            for term in mc.congruence:
                check_ref(f"matrix constraint {mc.name!r}", term.var)
                decl = decls[term.var]
                if not isinstance(decl, MatrixVar):
                    raise ValueError(f"congruence term in {mc.name!r} needs a matrix variable")
                if term.b.shape != (decl.size, mc.size):
                    raise ValueError(f"congruence factor shape mismatch in {mc.name!r}")
            for term in mc.scalar_terms:
                check_ref(f"matrix constraint {mc.name!r}", term.var)
                decl = decls[term.var]
                if not isinstance(decl, ScalarVar) or not (0 <= term.index < decl.size):
                    raise ValueError(f"scalar term in {mc.name!r} has a bad index")
        if self.objective is None:
            raise ValueError("program has no objective")
        for var, c in self.objective.terms.items():
            check_ref("objective", var, c.shape[0])

    # -- serialization (debug dumps) --

    def to_json_dict(self) -> dict:
        def dense(a):
            return (a.toarray() if sp.issparse(a) else np.asarray(a)).tolist()

        def coo(a):
            a = sp.coo_matrix(a)
            return {
                "shape": list(a.shape),
                "rows": a.row.tolist(),
                "cols": a.col.tolist(),
                "vals": a.data.tolist(),
            }

        return {
            "scalar_vars": [
                {"name": v.name, "size": v.size, "sign": "nonneg" if v.nonneg else "free"}
                for v in self.scalar_vars
            ],
            "matrix_vars": [
                {"name": v.name, "size": v.size, "cone": v.cone} for v in self.matrix_vars
            ],
            "linear_blocks": [
                {
                    "name": b.name,
                    "sense": b.sense,
                    "offset": b.offset.tolist(),
                    "coeffs": {v: coo(a) for v, a in sorted(b.coeffs.items())},
                }
                for b in self.linear_blocks
            ],
            "matrix_constraints": [
                {
                    "name": c.name,
                    "cone": c.cone,
                    "size": c.size,
                    "const": dense(c.const),
                    "congruence": [
                        {"coeff": t.coeff, "var": t.var, "b": dense(t.b)} for t in c.congruence
                    ],
                    "scalar_terms": [
                        {"var": t.var, "index": t.index, "mat": dense(t.mat)} for t in c.scalar_terms
                    ],
                }
                for c in self.matrix_constraints
            ],
            "objective": {
                "sense": self.objective.sense,
                "offset": self.objective.offset,
                "terms": {v: c.tolist() for v, c in sorted(self.objective.terms.items())},
            },
            "canonical": self.canonical,
        }


# --- numeric evaluation (shared by the residual checker and tests) -----------


def linear_block_values(block: LinearBlock, values: dict) -> np.ndarray:
    out = block.offset.copy()
    for var, a in block.coeffs.items():
        out = out + a @ _flat_value(var, values)
    return out


def matrix_constraint_value(mc: MatrixConstraint, values: dict) -> np.ndarray:
    out = mc.const.toarray() if sp.issparse(mc.const) else np.array(mc.const, dtype=float)
    for term in mc.congruence:
        x = np.asarray(values[term.var], dtype=float)
        out = out + term.coeff * (term.b.T @ x @ term.b)
    for term in mc.scalar_terms:
        x = np.atleast_1d(np.asarray(values[term.var], dtype=float))[term.index]
        mat = term.mat.toarray() if sp.issparse(term.mat) else np.asarray(term.mat, dtype=float)
        out = out + float(x) * mat
    return out


def objective_value(obj: Objective, values: dict) -> float:
    total = obj.offset
    for var, c in obj.terms.items():
        total += float(c @ _flat_value(var, values))
    return total


def _flat_value(var: str, values: dict) -> np.ndarray:
    val = np.asarray(values[var], dtype=float)
    if val.ndim == 2:
        return sym_to_flat(val)
    return np.atleast_1d(val)


# --- canonical form -----------------------------------------------------------


def _block_signature(block: LinearBlock):
    parts = [block.sense, block.offset.tobytes()]
    for var in sorted(block.coeffs):
        a = sp.coo_matrix(block.coeffs[var])
        parts.append((var, a.row.tobytes(), a.col.tobytes(), a.data.tobytes()))
    return tuple(parts)


def _matrix_signature(mc: MatrixConstraint):
    const = mc.const.toarray() if sp.issparse(mc.const) else np.asarray(mc.const, dtype=float)
    congr = tuple(sorted((t.var, t.coeff, t.b.tobytes()) for t in mc.congruence))
    scal = tuple(
        sorted(
            (t.var, t.index, (t.mat.toarray() if sp.issparse(t.mat) else np.asarray(t.mat)).tobytes())
            for t in mc.scalar_terms
        )
    )
    return (mc.cone, mc.size, const.tobytes(), congr, scal)


def canonicalize(program: ConicProgram) -> ConicProgram:
    """Sorted, deduplicated, frozen normal form; idempotent."""
    program.validate()

    decls = program.declarations()
    scalar_vars = sorted((d for d in decls.values() if isinstance(d, ScalarVar)), key=lambda v: v.name)
    matrix_vars = sorted((d for d in decls.values() if isinstance(d, MatrixVar)), key=lambda v: v.name)

    blocks = []
    seen = set()
    for blk in sorted(program.linear_blocks, key=lambda b: b.name):
        zero_mask = np.ones(blk.rows, dtype=bool)
        for a in blk.coeffs.values():
            zero_mask &= np.asarray((a != 0).sum(axis=1)).ravel() == 0
        # structurally zero rows are dropped unless the offset contradicts them
        bad = (np.abs(blk.offset) > 0) if blk.sense == "eq" else (blk.offset < 0)
        keep = ~zero_mask | bad
        if not np.any(keep):
            continue
        coeffs = {v: a[keep] for v, a in blk.coeffs.items()}
        coeffs = {v: a for v, a in coeffs.items() if a.nnz > 0}
        blk = LinearBlock(blk.name, blk.sense, coeffs, blk.offset[keep])
        sig = _block_signature(blk)
        if sig in seen:
            continue
        seen.add(sig)
        blocks.append(blk)

    mcs = []
    seen_m = set()
    for mc in sorted(program.matrix_constraints, key=lambda c: c.name):
        sig = _matrix_signature(mc)
        if sig in seen_m:
            continue
        seen_m.add(sig)
        mcs.append(mc)

    obj = Objective(
        program.objective.sense,
        {v: c.copy() for v, c in sorted(program.objective.terms.items())},
        program.objective.offset,
    )
    out = ConicProgram(scalar_vars, matrix_vars, blocks, mcs, obj, canonical=True)
    return out
