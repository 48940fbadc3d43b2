"""One-hidden-layer ReLU network: container, evaluation, classification margin.

The network is G(w) = w_out @ relu(w_in @ w + b_in) + b_out with b_out
forced to zero (a nonzero output bias cancels in G(w) - G(w0) and is
dropped on construction with a warning).
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

__all__ = [
    "FnnModel",
    "TargetSpec",
    "relu_vec",
    "relu_triple_check",
    "forward",
    "classify",
    "margin",
    "gen_random",
    "model_to_json_dict",
    "model_from_json_dict",
    "load_model",
    "save_model",
    "load_input",
]


def _as_float_array(x, shape_hint=None):
    a = np.asarray(x, dtype=float)
    if shape_hint is not None and a.shape != shape_hint:
        raise ValueError(f"expected shape {shape_hint}, got {a.shape}")
    if a.size and not np.all(np.isfinite(a)):
        raise ValueError("non-finite entries are not allowed")
    return a


@dataclass(frozen=True)
class FnnModel:
    """Weights of a single hidden-layer ReLU network (all dense float64)."""

    w_in: np.ndarray   # (n, m)
    b_in: np.ndarray   # (n,)
    w_out: np.ndarray  # (l, n)
    b_out: np.ndarray | None = None  # (l,), forced to zero

    def __post_init__(self):
        w_in = _as_float_array(self.w_in)
        if w_in.ndim != 2:
            raise ValueError("w_in must be a matrix")
        n, m = w_in.shape
        b_in = _as_float_array(self.b_in, (n,))
        w_out = _as_float_array(self.w_out)
        if w_out.ndim != 2 or w_out.shape[1] != n:
            raise ValueError(f"w_out must have {n} columns")
        l = w_out.shape[0]
        b_out = np.zeros(l) if self.b_out is None else _as_float_array(self.b_out, (l,))
        if np.any(b_out != 0.0):
            warnings.warn("nonzero b_out has no effect on G(w) - G(w0); zeroing it")
            b_out = np.zeros(l)
        for name, arr in (("w_in", w_in), ("b_in", b_in), ("w_out", w_out), ("b_out", b_out)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if min(n, m, l) < 1:
            raise ValueError("all dimensions must be positive")

    @property
    def n(self) -> int:
        return self.w_in.shape[0]

    @property
    def m(self) -> int:
        return self.w_in.shape[1]

    @property
    def l(self) -> int:
        return self.w_out.shape[0]


@dataclass(frozen=True)
class TargetSpec:
    """Certification target: center input w0 and ball radius eps."""

    w0: np.ndarray
    eps: float

    def __post_init__(self):
        w0 = _as_float_array(self.w0)
        if w0.ndim != 1:
            raise ValueError("w0 must be a vector")
        w0.setflags(write=False)
        object.__setattr__(self, "w0", w0)
        eps = float(self.eps)
        if not np.isfinite(eps) or eps < 0:
            raise ValueError("eps must be finite and >= 0")
        object.__setattr__(self, "eps", eps)


def relu_vec(q):
    """Elementwise max(q, 0)."""
    return np.maximum(np.asarray(q, dtype=float), 0.0)


def relu_triple_check(p, q, tol=0.0):
    """True iff (p, q) satisfies p - q >= 0, p >= 0, p*(p - q) = 0 up to tol."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError("p and q must have the same length")
    return bool(
        np.all(p - q >= -tol)
        and np.all(p >= -tol)
        and np.all(np.abs(p * (p - q)) <= tol)
    )


def forward(model: FnnModel, w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.shape != (model.m,):
        raise ValueError(f"input must have length {model.m}")
    return model.w_out @ relu_vec(model.w_in @ w + model.b_in)


def classify(model: FnnModel, w) -> int:
    """Predicted class as a 1-based index; ties resolve to the smallest index."""
    return int(np.argmax(forward(model, w))) + 1


def margin(model: FnnModel, w0) -> float:
    """Robustness margin (1/sqrt(2)) * min_{j != i*} (z_{i*} - z_j) at z = G(w0)."""
    if model.l < 2:
        raise ValueError("margin needs at least two output classes")
    z = forward(model, w0)
    i_star = int(np.argmax(z))
    gaps = np.delete(z[i_star] - z, i_star)
    return float(np.min(gaps) / np.sqrt(2.0))


def gen_random(n: int, m: int, l: int, seed: int, scale: float = 1.0) -> FnnModel:
    """Seeded random model with i.i.d. uniform [-scale, scale] weights, b_out = 0."""
    if min(n, m, l) < 1:
        raise ValueError("all dimensions must be positive")
    rng = np.random.default_rng(seed)
    w_in = rng.uniform(-scale, scale, size=(n, m))
    b_in = rng.uniform(-scale, scale, size=n)
    w_out = rng.uniform(-scale, scale, size=(l, n))
    return FnnModel(w_in, b_in, w_out, np.zeros(l))


# --- JSON model format -----------------------------------------------------
#
# {"n": int, "m": int, "l": int,
#  "w_in": [[...m floats...] x n], "b_in": [...n...],
#  "w_out": [[...n floats...] x l], "b_out": [...l...]}
#
# Row-major nested lists; NaN/Inf rejected.


def _reject_constants(value):
    raise ValueError(f"non-finite JSON constant {value!r} is not allowed")


def model_to_json_dict(model: FnnModel) -> dict:
    return {
        "n": model.n,
        "m": model.m,
        "l": model.l,
        "w_in": model.w_in.tolist(),
        "b_in": model.b_in.tolist(),
        "w_out": model.w_out.tolist(),
        "b_out": model.b_out.tolist(),
    }


def model_from_json_dict(obj: dict) -> FnnModel:
    try:
        n, m, l = int(obj["n"]), int(obj["m"]), int(obj["l"])
        w_in = _as_float_array(obj["w_in"], (n, m))
        b_in = _as_float_array(obj["b_in"], (n,))
        w_out = _as_float_array(obj["w_out"], (l, n))
        b_out = _as_float_array(obj["b_out"], (l,))
    except KeyError as e:
        raise ValueError(f"model JSON is missing field {e.args[0]!r}") from None
    return FnnModel(w_in, b_in, w_out, b_out)


def load_model(path) -> FnnModel:
    with open(path) as fh:
        obj = json.load(fh, parse_constant=_reject_constants)
    return model_from_json_dict(obj)


def save_model(model: FnnModel, path) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_json_dict(model), fh, indent=1)
        fh.write("\n")


def load_input(path) -> np.ndarray:
    """Read an input vector file {"w0": [...]} and return w0."""
    with open(path) as fh:
        obj = json.load(fh, parse_constant=_reject_constants)
    if "w0" not in obj:
        raise ValueError("input JSON must contain field 'w0'")
    w0 = _as_float_array(obj["w0"])
    if w0.ndim != 1:
        raise ValueError("w0 must be a flat list of numbers")
    return w0
