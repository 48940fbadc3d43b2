"""Exact ReLU elimination around a target input.

Interval bounds on the preactivation q = w_in @ w + b_in over the ball
||w - w0|| <= eps split the hidden units into always-active (N+), always-off
(N0) and residual (Nr) sets.  Active units collapse into an affine term,
off units drop, and only the residual units keep their ReLU:

    G_r(w) = w_out_t @ (w_in_t @ w + b_in_t) + w_out_h @ relu(w_in_h @ w + b_in_h)

which agrees with G on the whole ball.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import FnnModel, TargetSpec, relu_vec

__all__ = [
    "IndexPartition",
    "ReducedModel",
    "preactivation_bounds",
    "partition_indices",
    "trivial_partition",
    "build_reduced",
    "reduce",
    "reduced_forward",
    "reduced_to_json_dict",
    "reduced_from_json_dict",
]


@dataclass(frozen=True)
class IndexPartition:
    """Disjoint, exhaustive split of hidden-unit indices (0-based, sorted)."""

    n_plus: tuple
    n_zero: tuple
    n_res: tuple

    def __post_init__(self):
        for name in ("n_plus", "n_zero", "n_res"):
            idx = tuple(int(i) for i in getattr(self, name))
            if list(idx) != sorted(set(idx)):
                raise ValueError(f"{name} must be sorted and duplicate-free")
            object.__setattr__(self, name, idx)
        combined = self.n_plus + self.n_zero + self.n_res
        if len(set(combined)) != len(combined):
            raise ValueError("partition sets must be disjoint")

    def validate(self, n: int) -> None:
        combined = sorted(self.n_plus + self.n_zero + self.n_res)
        if combined != list(range(n)):
            raise ValueError(f"partition does not cover 0..{n - 1}")

    @property
    def sizes(self):
        return len(self.n_plus), len(self.n_zero), len(self.n_res)


@dataclass(frozen=True)
class ReducedModel:
    """Affine part (tilde), residual ReLU part (hat) and bookkeeping."""

    w_in_t: np.ndarray   # (|N+|, m)
    b_in_t: np.ndarray   # (|N+|,)
    w_out_t: np.ndarray  # (l, |N+|)
    w_in_h: np.ndarray   # (n_r, m)
    b_in_h: np.ndarray   # (n_r,)
    w_out_h: np.ndarray  # (l, n_r)
    n_r: int
    partition: IndexPartition
    m: int
    l: int
    c0: np.ndarray       # w_out_t @ b_in_t, (l,)

    def __post_init__(self):
        for name in ("w_in_t", "b_in_t", "w_out_t", "w_in_h", "b_in_h", "w_out_h", "c0"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        k = len(self.partition.n_plus)
        if self.w_in_t.shape != (k, self.m) or self.w_out_t.shape != (self.l, k):
            raise ValueError("tilde matrices do not match the N+ selection")
        if self.w_in_h.shape != (self.n_r, self.m) or self.w_out_h.shape != (self.l, self.n_r):
            raise ValueError("hat matrices do not match the Nr selection")


def preactivation_bounds(model: FnnModel, target: TargetSpec):
    """Lower/upper bounds of each q_i over the eps-ball around w0."""
    if target.w0.shape != (model.m,):
        raise ValueError("w0 length does not match model input dimension")
    q0 = model.w_in @ target.w0 + model.b_in
    row_norms = np.linalg.norm(model.w_in, axis=1)
    return q0 - target.eps * row_norms, q0 + target.eps * row_norms


def partition_indices(lo, hi) -> IndexPartition:
    """N+ = {lo >= 0}, N0 = {hi <= 0} \\ N+, Nr = rest.

    A degenerate unit with lo = hi = 0 lands in N+ (identity on {0}).
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if lo.shape != hi.shape or lo.ndim != 1:
        raise ValueError("lo and hi must be equal-length vectors")
    if np.any(lo > hi):
        raise ValueError("lo must be <= hi")
    plus = lo >= 0.0
    zero = (hi <= 0.0) & ~plus
    res = ~plus & ~zero
    return IndexPartition(
        tuple(np.flatnonzero(plus)),
        tuple(np.flatnonzero(zero)),
        tuple(np.flatnonzero(res)),
    )


def trivial_partition(n: int) -> IndexPartition:
    """All units residual: reduction machinery reproduces the full network."""
    return IndexPartition((), (), tuple(range(n)))


def build_reduced(model: FnnModel, partition: IndexPartition) -> ReducedModel:
    partition.validate(model.n)
    plus = list(partition.n_plus)
    res = list(partition.n_res)
    w_in_t = model.w_in[plus, :]
    b_in_t = model.b_in[plus]
    w_out_t = model.w_out[:, plus]
    return ReducedModel(
        w_in_t=w_in_t,
        b_in_t=b_in_t,
        w_out_t=w_out_t,
        w_in_h=model.w_in[res, :],
        b_in_h=model.b_in[res],
        w_out_h=model.w_out[:, res],
        n_r=len(res),
        partition=partition,
        m=model.m,
        l=model.l,
        c0=w_out_t @ b_in_t,
    )


def reduce(model: FnnModel, target: TargetSpec) -> ReducedModel:
    """Partition by interval bounds and eliminate the decided units."""
    lo, hi = preactivation_bounds(model, target)
    return build_reduced(model, partition_indices(lo, hi))


def reduced_forward(rm: ReducedModel, w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.shape != (rm.m,):
        raise ValueError(f"input must have length {rm.m}")
    affine = rm.w_out_t @ (rm.w_in_t @ w + rm.b_in_t)
    return affine + rm.w_out_h @ relu_vec(rm.w_in_h @ w + rm.b_in_h)


# --- JSON form (reduce subcommand) ------------------------------------------
#
# Residual ReLU core in the model schema (n = n_r) plus the affine tilde
# blocks and the partition as 1-based index arrays.


def reduced_to_json_dict(rm: ReducedModel) -> dict:
    return {
        "n": rm.n_r,
        "m": rm.m,
        "l": rm.l,
        "w_in": rm.w_in_h.tolist(),
        "b_in": rm.b_in_h.tolist(),
        "w_out": rm.w_out_h.tolist(),
        "b_out": [0.0] * rm.l,
        "w_in_t": rm.w_in_t.tolist(),
        "b_in_t": rm.b_in_t.tolist(),
        "w_out_t": rm.w_out_t.tolist(),
        "partition": {
            "n_plus": [i + 1 for i in rm.partition.n_plus],
            "n_zero": [i + 1 for i in rm.partition.n_zero],
            "n_res": [i + 1 for i in rm.partition.n_res],
        },
    }


def reduced_from_json_dict(obj: dict) -> ReducedModel:
    part = obj["partition"]
    partition = IndexPartition(
        tuple(i - 1 for i in part["n_plus"]),
        tuple(i - 1 for i in part["n_zero"]),
        tuple(i - 1 for i in part["n_res"]),
    )
    m = int(obj["m"])
    l = int(obj["l"])
    n_r = int(obj["n"])
    k = len(partition.n_plus)
    w_in_t = np.asarray(obj["w_in_t"], dtype=float).reshape(k, m)
    b_in_t = np.asarray(obj["b_in_t"], dtype=float).reshape(k)
    w_out_t = np.asarray(obj["w_out_t"], dtype=float).reshape(l, k)
    return ReducedModel(
        w_in_t=w_in_t,
        b_in_t=b_in_t,
        w_out_t=w_out_t,
        w_in_h=np.asarray(obj["w_in"], dtype=float).reshape(n_r, m),
        b_in_h=np.asarray(obj["b_in"], dtype=float).reshape(n_r),
        w_out_h=np.asarray(obj["w_out"], dtype=float).reshape(l, n_r),
        n_r=n_r,
        partition=partition,
        m=m,
        l=l,
        c0=w_out_t @ b_in_t,
    )
