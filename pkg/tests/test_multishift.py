import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vnlab.calculus import eval_poly_on_tuple
from vnlab.errors import (
    ArityMismatch,
    NonCommutingTuple,
    NonUnitaryWeights,
    NotDiagonalRule,
    PathDependence,
    RuleDomainTooSmall,
    SchemaError,
)
from vnlab.lattice import Box, MultiIndex
from vnlab.linalg import op_norm_dense
from vnlab.multishift import (
    Classical,
    CommutingTuple,
    Diagonal,
    SeededUnitary,
    Table,
    WeightFamily,
    build_truncated_multishift,
    classical_from_potential,
    constant_weight_family,
    decompose_diagonal,
    diagonal_from_classical,
    fiber_permutation,
    gauge_unitary_family,
    tensor_tuple,
    unitary_intertwiner,
    unweighted_family,
    unweighted_shift,
    validate_weights,
    weights_from_json,
    weights_to_json,
)
from vnlab.poly import MultiPoly, random_poly
from vnlab.vncheck import VaropoulosConfig, varopoulos_matrices

N = np.array([[0, 1], [0, 0]])
I2 = np.eye(2)


def rejected_table() -> WeightFamily:
    entries = {
        (MultiIndex((0, 0)), 0): N, (MultiIndex((0, 0)), 1): I2,
        (MultiIndex((0, 1)), 0): I2, (MultiIndex((1, 0)), 1): I2,
    }
    return WeightFamily(2, 2, Table(Box((2, 2)), entries))


def varopoulos_family(c=0.05):
    return constant_weight_family(varopoulos_matrices(VaropoulosConfig.default(c)), contractive=True)


def commutator_norm(t: CommutingTuple) -> float:
    ops = t.dense()
    return max(
        (op_norm_dense(ops[i] @ ops[j] - ops[j] @ ops[i]) for i in range(t.d) for j in range(i + 1, t.d)),
        default=0.0,
    )


def test_varopoulos_constant_rule_accepted():
    rep = validate_weights(varopoulos_family(), Box.cube(3, 3))
    assert rep.accepted and rep.contractive_ok
    assert rep.max_commutation_defect <= 1e-15
    assert rep.max_weight_norm <= 1


def test_diagonal_rule_from_potentials_accepted(rng):
    fams = [classical_from_potential(rng.uniform(0.3, 1.2, (5, 5))) for _ in range(3)]
    w = diagonal_from_classical(fams)
    rep = validate_weights(w, Box((3, 3)))
    assert rep.accepted
    # brute-force scalar identity on the same box
    tab = w.materialize(Box((4, 4)))
    big = Box((4, 4))
    for a in Box((3, 3)):
        r = big.rank(a)
        lhs = tab[0, r + big.strides[1]] @ tab[1, r]
        rhs = tab[1, r + big.strides[0]] @ tab[0, r]
        assert np.allclose(lhs, rhs, atol=1e-14)


def test_rejected_table_defect():
    rep = validate_weights(rejected_table(), Box((1, 1)))
    assert not rep.accepted
    assert rep.max_commutation_defect == pytest.approx(op_norm_dense(I2 - N))


def test_table_domain_too_small():
    with pytest.raises(RuleDomainTooSmall):
        validate_weights(rejected_table(), Box((2, 2)))


def test_non_contractive_flag():
    w = constant_weight_family([2 * I2, I2], contractive=True)
    rep = validate_weights(w, Box((2, 2)))
    assert rep.contractive_ok is False and not rep.accepted


def test_weight_lookup():
    w = varopoulos_family()
    assert np.allclose(w.weight((2, 1, 0), 1), w.rule.matrices[1])
    fam = classical_from_potential(np.arange(1, 17, dtype=float).reshape(4, 4))
    # phi(alpha + e_0) / phi(alpha) with phi[a0, a1] = 4 a0 + a1 + 1
    assert fam.weight((1, 2), 0)[0, 0] == pytest.approx(11 / 7)


def test_unweighted_shift_d1_is_jordan():
    t = build_truncated_multishift(WeightFamily(1, 1, Classical(Box((3,)), np.ones((1, 3)))), Box((3,)))
    assert np.array_equal(t.dense()[0].real, [[0, 0, 0], [1, 0, 0], [0, 1, 0]])


def test_classical_pair_commutes_entrywise(rng):
    fam = classical_from_potential(rng.uniform(0.5, 1.5, (3, 3)))
    t = build_truncated_multishift(fam, Box((2, 2)))
    a, b = t.dense()
    assert np.allclose(a @ b, b @ a, atol=1e-15)


def test_constant_rule_is_tensor_with_shift():
    box = Box((3, 4, 2))
    mats = varopoulos_matrices(VaropoulosConfig.default(0.1))
    t = build_truncated_multishift(constant_weight_family(mats), box)
    kron_t = tensor_tuple(CommutingTuple(mats), unweighted_shift(box))
    perm = fiber_permutation(4, box.volume)
    for a, b in zip(t.dense(), kron_t.dense()):
        moved = np.zeros_like(b)
        moved[np.ix_(perm, perm)] = b
        assert np.array_equal(a, moved)


def test_tensor_with_identity_and_norms(rng):
    mats = [rng.standard_normal((3, 3)) for _ in range(2)]
    c = mats[0] @ mats[1]
    a = CommutingTuple([mats[0], mats[0] @ mats[0]])
    ident = CommutingTuple([np.eye(2), np.eye(2)])
    t = tensor_tuple(a, ident)
    assert np.allclose(t.dense()[0], np.kron(mats[0], np.eye(2)))
    b = CommutingTuple([c, c @ c])
    t = tensor_tuple(a, b)
    for x, y, z in zip(a.dense(), b.dense(), t.dense()):
        assert op_norm_dense(z) == pytest.approx(op_norm_dense(x) * op_norm_dense(y), rel=1e-10)
    with pytest.raises(ArityMismatch):
        tensor_tuple(a, CommutingTuple([c]))


def test_tuple_rejects_non_commuting():
    with pytest.raises(NonCommutingTuple):
        CommutingTuple([N, N.T])


def test_build_rejects_bad_weights():
    w = constant_weight_family([N, I2 + N.T])
    with pytest.raises(NonCommutingTuple):
        build_truncated_multishift(w, Box((3, 3)))


def test_intertwiner_identity_case():
    w = WeightFamily(2, 2, SeededUnitary(3))
    rep = unitary_intertwiner(w, w, Box((3, 3)))
    assert np.allclose(rep.blocks, np.eye(2), atol=1e-14)


def test_intertwiner_powers_of_q():
    q = WeightFamily(2, 2, SeededUnitary(9)).rule.unitaries(1, 2)[0]
    box = Box((3, 4))
    rep = unitary_intertwiner(unweighted_family(2, 2), constant_weight_family([q, q]), box)
    for k, alpha in enumerate(box):
        assert np.allclose(rep.blocks[k], np.linalg.matrix_power(q, alpha.order), atol=1e-13)


@pytest.mark.parametrize("make", [
    lambda: (WeightFamily(3, 3, SeededUnitary(1)), WeightFamily(3, 3, SeededUnitary(2))),
    lambda: (gauge_unitary_family(Box((4, 4, 4)), 2, 5), gauge_unitary_family(Box((4, 4, 4)), 2, 6)),
])
def test_intertwiner_residuals(make):
    w, wt = make()
    rep = unitary_intertwiner(w, wt, Box((4, 4, 4)))
    assert rep.path_defect <= 1e-10
    assert rep.unitarity_defect <= 1e-10
    assert rep.intertwining_residual <= 1e-9
    # U T_j = T~_j U on the densified truncation
    box = Box((4, 4, 4))
    t = build_truncated_multishift(w, box).dense()
    tt = build_truncated_multishift(wt, box).dense()
    u = np.zeros((box.volume * w.n,) * 2, dtype=complex)
    for k in range(box.volume):
        u[k * w.n:(k + 1) * w.n, k * w.n:(k + 1) * w.n] = rep.blocks[k]
    for a, b in zip(t, tt):
        assert np.abs(u @ a - b @ u).max() <= 1e-9


def test_intertwiner_errors():
    with pytest.raises(NonUnitaryWeights):
        unitary_intertwiner(varopoulos_family(), varopoulos_family(), Box((2, 2, 2)))
    # unitary but not commuting: the recursion is path dependent
    q = gauge_unitary_family(Box((2, 2)), 2, 1).rule.entries
    bad = dict(q)
    bad[(MultiIndex((0, 0)), 0)] = np.array([[0, 1], [1, 0]])
    with pytest.raises(PathDependence):
        unitary_intertwiner(WeightFamily(2, 2, Table(Box((2, 2)), bad)), unweighted_family(2, 2), Box((2, 2)))


def test_decompose_constant_diagonal():
    tables = np.zeros((2, 1, 6))
    tables[0] = 1.0
    tables[1] = 0.5
    w = WeightFamily(1, 2, Diagonal(Box((6,)), tables))
    dec = decompose_diagonal(w, Box((6,)))
    assert [c.materialize(Box((6,)))[0, 0, 0, 0] for c in dec.components] == [1.0, 0.5]
    assert dec.max_norm_defect <= 1e-8
    p = MultiPoly(1, {(1,): 1, (2,): 0.3})
    whole = op_norm_dense(eval_poly_on_tuple(p, build_truncated_multishift(w, Box((6,)))).dense())
    parts = [op_norm_dense(eval_poly_on_tuple(p, build_truncated_multishift(c, Box((6,)))).dense())
             for c in dec.components]
    assert whole == pytest.approx(max(parts), abs=1e-12)


def test_decompose_n1_returns_family(rng):
    fam = classical_from_potential(rng.uniform(0.5, 1.0, (4, 4)))
    dec = decompose_diagonal(fam, Box((3, 3)))
    assert dec.components == [fam]


def test_decompose_norm_of_first_variable(rng):
    fams = [classical_from_potential(rng.uniform(0.5, 1.0, (5, 5))) for _ in range(2)]
    w = diagonal_from_classical(fams)
    box = Box((4, 4))
    t = build_truncated_multishift(w, box)
    weights = w.materialize(box)
    interior = box.grid()[:, 0] < 3
    expected = np.abs(np.diagonal(weights[0], axis1=1, axis2=2))[interior].max()
    assert op_norm_dense(t.dense()[0]) == pytest.approx(expected, rel=1e-12)
    dec = decompose_diagonal(w, box)
    assert dec.max_norm_defect <= 1e-8
    perm = dec.permutation
    assert sorted(perm.tolist()) == list(range(box.volume * 2))


def test_decompose_rejects_other_rules():
    with pytest.raises(NotDiagonalRule):
        decompose_diagonal(varopoulos_family(), Box((2, 2, 2)))


@pytest.mark.parametrize("family", [
    lambda: varopoulos_family(),
    lambda: rejected_table(),
    lambda: WeightFamily(3, 2, SeededUnitary(4)),
    lambda: classical_from_potential(np.arange(1.0, 10.0).reshape(3, 3)),
    lambda: diagonal_from_classical([classical_from_potential(np.ones((3, 3)) * k) for k in (1, 2)]),
])
def test_weights_json_roundtrip(family):
    w = family()
    again = weights_from_json(weights_to_json(w))
    box = Box((2,) * w.d)
    assert again.kind == w.kind
    assert np.array_equal(again.materialize(box), w.materialize(box))


def test_weights_json_errors():
    doc = weights_to_json(rejected_table())
    doc["rule"]["entries"][2]["matrix"] = [[{"re": 1.0}]]
    with pytest.raises(SchemaError) as err:
        weights_from_json(doc)
    assert err.value.path == "$.rule.entries[2].matrix"


families = st.sampled_from(["varopoulos", "unitary", "gauge", "diagonal"])


def make_family(kind, d, seed):
    rng = np.random.default_rng(seed)
    if kind == "varopoulos":
        return varopoulos_family(float(rng.uniform(0.01, 0.5)))
    if kind == "unitary":
        return WeightFamily(d, 2, SeededUnitary(seed))
    if kind == "gauge":
        return gauge_unitary_family(Box((5,) * d), 2, seed)
    return diagonal_from_classical([classical_from_potential(rng.uniform(0.2, 2.0, (6,) * d)) for _ in range(2)])


@settings(max_examples=25, deadline=None)
@given(families, st.integers(2, 3), st.integers(0, 1000), st.lists(st.integers(1, 4), min_size=3, max_size=3))
def test_truncation_commutes_exactly(kind, d, seed, sides):
    w = make_family(kind, d, seed)
    box = Box(sides[:w.d])
    t = build_truncated_multishift(w, box)
    max_weight = validate_weights(w, box).max_weight_norm
    assert commutator_norm(t) <= 1e-12 * max_weight**2


@settings(max_examples=15, deadline=None)
@given(families, st.integers(1, 3), st.integers(0, 1000))
def test_compression_monotone(kind, d, seed):
    w = make_family(kind, max(d, 2) if kind != "varopoulos" else 3, seed)
    p = random_poly(np.random.default_rng(seed), w.d, 4)
    norms = []
    for m in (1, 2, 3, 4):
        t = build_truncated_multishift(w, Box.cube(m, w.d))
        norms.append(op_norm_dense(eval_poly_on_tuple(p, t).dense()))
    assert all(b >= a - 1e-8 for a, b in zip(norms, norms[1:]))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 1000))
def test_contractive_weights_give_contractions(seed):
    rng = np.random.default_rng(seed)
    fams = [classical_from_potential(np.cumprod(rng.uniform(0.3, 1.0, (6, 6)), axis=0)) for _ in range(2)]
    w = diagonal_from_classical(fams)
    box = Box((4, 4))
    if validate_weights(w, box).max_weight_norm <= 1:
        t = build_truncated_multishift(w, box)
        assert all(op_norm_dense(op) <= 1 + 1e-10 for op in t.dense())
