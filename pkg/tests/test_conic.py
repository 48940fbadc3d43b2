"""Conic program container: symmetric storage, validation, canonical form."""

import numpy as np
import pytest
import scipy.sparse as sp

from lipcert.conic import (
    ConicProgram,
    canonicalize,
    flat_to_sym,
    functional_from_matrix,
    sym_flat_index,
    sym_flat_size,
    sym_to_flat,
)


def test_sym_flat_size():
    assert [sym_flat_size(s) for s in (1, 2, 3, 4)] == [1, 3, 6, 10]


def test_sym_flat_index_consistency():
    s = 5
    seen = set()
    for i in range(s):
        for j in range(i, s):
            k = sym_flat_index(i, j, s)
            assert k == sym_flat_index(j, i, s)
            seen.add(k)
    assert seen == set(range(sym_flat_size(s)))


def test_sym_round_trip():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((6, 6))
    a = a + a.T
    flat = sym_to_flat(a)
    assert flat.shape == (sym_flat_size(6),)
    np.testing.assert_array_equal(flat_to_sym(flat, 6), a)
    # flat order agrees with sym_flat_index
    for i in range(6):
        for j in range(i, 6):
            assert flat[sym_flat_index(i, j, 6)] == a[i, j]


def test_functional_from_matrix_is_trace_pairing():
    rng = np.random.default_rng(1)
    c = rng.standard_normal((4, 4))
    x = rng.standard_normal((4, 4))
    x = x + x.T
    f = functional_from_matrix(c)
    inner = float(np.sum(0.5 * (c + c.T) * x))
    assert f @ sym_to_flat(x) == pytest.approx(inner)


def _toy_program():
    p = ConicProgram()
    p.add_scalar_var("t", 1)
    p.add_matrix_var("x", 2, "psd")
    p.add_linear_block("fix", "eq", {"t": sp.csr_matrix(np.ones((1, 1)))}, np.array([-1.0]))
    p.add_matrix_constraint(
        "shift",
        "psd",
        2,
        congruence=(),
        scalar_terms=(),
        const=np.eye(2),
    )
    p.set_objective("min", {"t": np.ones(1)})
    return p


def test_canonicalize_idempotent():
    p = _toy_program()
    c1 = canonicalize(p)
    c2 = canonicalize(c1) if not c1.canonical else c1
    assert c1.canonical
    # canonical program is frozen
    with pytest.raises(ValueError):
        c1.add_scalar_var("u")
    assert c2 is c1 or c2.to_json_dict() == c1.to_json_dict()


def test_canonicalize_dedups_constraints():
    p = _toy_program()
    p.add_linear_block("fix2", "eq", {"t": sp.csr_matrix(np.ones((1, 1)))}, np.array([-1.0]))
    c = canonicalize(p)
    assert len(c.linear_blocks) == 1


def test_canonicalize_drops_zero_rows_keeps_contradictions():
    p = _toy_program()
    a = sp.csr_matrix(np.zeros((3, 1)))
    # rows: 0 == 0 (drop), 0 == 1 (keep, contradiction), 0 >= -1 via ge later
    p.add_linear_block("z", "eq", {"t": a}, np.array([0.0, 1.0, 0.0]))
    p.add_linear_block("g", "ge", {"t": a}, np.array([0.0, -2.0, 5.0]))
    c = canonicalize(p)
    blocks = {b.name: b for b in c.linear_blocks}
    assert blocks["z"].rows == 1 and blocks["z"].offset[0] == 1.0
    assert blocks["g"].rows == 1 and blocks["g"].offset[0] == -2.0


def test_validate_unbound_variable():
    p = _toy_program()
    p.add_linear_block("bad", "eq", {"nope": sp.csr_matrix(np.ones((1, 1)))}, np.zeros(1))
    with pytest.raises(ValueError, match="unbound"):
        p.validate()


def test_validate_width_mismatch():
    p = _toy_program()
    p.add_linear_block("bad", "eq", {"x": sp.csr_matrix(np.ones((1, 2)))}, np.zeros(1))
    with pytest.raises(ValueError, match="width"):
        p.validate()


def test_validate_requires_objective():
    p = ConicProgram()
    p.add_scalar_var("t")
    with pytest.raises(ValueError, match="objective"):
        p.validate()


def test_bad_cone_names():
    p = ConicProgram()
    with pytest.raises(ValueError):
        p.add_matrix_var("x", 2, "orthant")
    p.add_matrix_var("x", 2, "psd")
    with pytest.raises(ValueError):
        p.add_matrix_constraint("c", "soc", 2)
    with pytest.raises(ValueError):
        p.set_objective("argmin", {})


def test_json_dump_structure():
    c = canonicalize(_toy_program())
    obj = c.to_json_dict()
    assert obj["canonical"] is True
    assert {v["name"] for v in obj["scalar_vars"]} == {"t"}
    assert obj["matrix_vars"][0]["cone"] == "psd"
    assert obj["objective"]["sense"] == "min"
    names = [b["name"] for b in obj["linear_blocks"]]
    assert names == sorted(names)
