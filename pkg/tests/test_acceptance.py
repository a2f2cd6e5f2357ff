"""Acceptance criteria, one test each.

Every test records a ``PASS``/``FAIL`` line that the terminal summary
prints under "acceptance criteria"; the assertion follows the line so a
failing criterion still reports what was measured.
"""

import json
import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, FIXTURES
from vnlab import cli, vncheck
from vnlab.calculus import eval_poly_on_tuple
from vnlab.lattice import Box
from vnlab.linalg import kron, op_norm_dense, op_norm_sparse
from vnlab.multishift import (
    CommutingTuple,
    build_truncated_multishift,
    classical_from_potential,
    constant_weight_family,
    decompose_diagonal,
    diagonal_from_classical,
    gauge_unitary_family,
    tensor_tuple,
    unitary_intertwiner,
    unweighted_shift,
    validate_weights,
    weights_from_json,
)
from vnlab.poly import MultiPoly, polydisc_sup, random_matrix_poly, random_poly, varopoulos_kaijser
from vnlab.vncheck import (
    HOLDS,
    VIOLATED,
    CheckConfig,
    VaropoulosConfig,
    pv_closed_form,
    random_commuting_pair,
    random_contraction,
    suite_verdicts,
    varopoulos_matrices,
    varopoulos_tuple,
    witness_lower_bound,
)

PV = varopoulos_kaijser()


def record(number: int, ok: bool, detail: str):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def load_family(name: str):
    return weights_from_json(json.loads((FIXTURES / name).read_text()))


def test_counterexample_reproduced(tmp_path):
    vncheck._cached_sup.cache_clear()
    out = tmp_path / "example.json"
    start = time.perf_counter()
    code = cli.main(["--output", str(out), "reproduce-example", "--c", "0.05"])
    elapsed = time.perf_counter() - start
    doc = json.loads(out.read_text())
    rep = doc["report"]
    lhs, sup = rep["lhs"]["value"], rep["sup"]
    bound = 6 * 0.95**2
    ok = (
        code == 0
        and lhs >= bound - 1e-12
        and sup["lower"] - 1e-12 <= 5 <= sup["upper"]
        and sup["upper"] - sup["lower"] <= 1e-2
        and rep["verdict"] == VIOLATED
        and rep["margin"] >= 0.40
        and elapsed < 5
    )
    record(1, ok, (
        f"|p_V(A)| = {lhs:.6f} (bound {bound:.4f}), sup in [{sup['lower']:.6f}, {sup['upper']:.6f}], "
        f"{rep['verdict']} with margin {rep['margin']:.4f}, {elapsed:.2f} s"
    ))


def test_threshold_located():
    vncheck._cached_sup.cache_clear()
    start = time.perf_counter()
    res = vncheck.sweep_c(np.linspace(0.05, 0.12, 200), PV, CheckConfig())
    elapsed = time.perf_counter() - start
    target = 1 / (6 + math.sqrt(30))
    found = res.bound_boundary
    ok = found is not None and abs(found - target) <= 1e-3 and elapsed < 60
    record(2, ok, f"boundary {found} vs 1/(6+sqrt(30)) = {target:.6f}, {elapsed:.2f} s")


def test_oracle_agreement():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        cfg = VaropoulosConfig.random(rng)
        value = eval_poly_on_tuple(PV, varopoulos_tuple(cfg)).dense()
        worst = max(worst, float(np.abs(value - pv_closed_form(cfg)).max()))
    record(3, worst <= 1e-10, f"max entrywise defect over 100 configurations {worst:.2e}")


def test_classical_suites():
    rng = np.random.default_rng(7)
    cfg = CheckConfig(threads=vncheck.default_threads())
    details, ok = [], True
    for d, make in ((1, lambda: CommutingTuple([random_contraction(rng, int(rng.integers(1, 7)))])),
                    (2, lambda: random_commuting_pair(rng, int(rng.integers(1, 7))))):
        tuples = [make() for _ in range(500)]
        polys = [random_poly(rng, d, int(rng.integers(1, 5))) for _ in range(50)]
        res = suite_verdicts(tuples, polys, cfg)
        counts = res["counts"]
        ok &= counts[VIOLATED] == 0
        details.append(
            f"d={d}: {counts[HOLDS]} hold, {counts[VIOLATED]} violated, {counts['inconclusive']} inconclusive, "
            f"max |p(T)| - sup upper {res['max_excess']:.2e}"
        )
    record(4, ok, "; ".join(details))


def test_structural_invariants():
    rng = np.random.default_rng(31)
    diag = load_family("diagonal_weights.json")
    families = [
        constant_weight_family(varopoulos_matrices(VaropoulosConfig.default(0.05)), contractive=True),
        load_family("unitary_a.json"),
        gauge_unitary_family(Box((5, 5)), 2, 3),
        diag,
    ]

    commute = 0.0
    for w in families:
        # validation reads one layer beyond the box, so stay inside the fixture's domain
        box = Box.cube(3, w.d)
        t = build_truncated_multishift(w, box)
        scale = validate_weights(w, box).max_weight_norm ** 2
        ops = t.dense()
        res = max(op_norm_dense(ops[i] @ ops[j] - ops[j] @ ops[i]) for i in range(t.d) for j in range(i + 1, t.d))
        commute = max(commute, res / scale)

    monotone = True
    for w in families:
        p = random_poly(rng, w.d, int(rng.integers(1, 5)))
        norms = [op_norm_dense(eval_poly_on_tuple(p, build_truncated_multishift(w, Box.cube(m, w.d))).dense())
                 for m in (1, 2, 3, 4)]
        monotone &= all(b >= a - 1e-10 for a, b in zip(norms, norms[1:]))

    kron_defect = 0.0
    for _ in range(20):
        a = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        b = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        kron_defect = max(kron_defect, abs(op_norm_dense(kron(a, b)) - op_norm_dense(a) * op_norm_dense(b)))
    s = unweighted_shift(Box.cube(3, 3))
    a = vncheck.varopoulos_tuple(VaropoulosConfig.default(0.05))
    both = tensor_tuple(a, s)
    for alpha in ((1, 0, 0), (1, 1, 0), (0, 2, 1), (1, 1, 1)):
        mono = MultiPoly.monomial(alpha)
        lhs = op_norm_dense(eval_poly_on_tuple(mono, both).dense())
        rhs = op_norm_dense(eval_poly_on_tuple(mono, a).dense()) * op_norm_dense(eval_poly_on_tuple(mono, s).dense())
        kron_defect = max(kron_defect, abs(lhs - rhs))

    inter = unitary_intertwiner(load_family("unitary_a.json"), load_family("unitary_b.json"), Box((3, 3, 3)))

    classical = [classical_from_potential(rng.uniform(0.3, 2.0, (6, 6, 6))) for _ in range(3)]
    decomp = [decompose_diagonal(diag, Box((4, 4))),
              decompose_diagonal(diagonal_from_classical(classical), Box((3, 3, 3)))]
    decomp_defect = max(x.max_norm_defect for x in decomp)

    ok = (commute <= 1e-12 and monotone and kron_defect <= 1e-8 and inter.path_defect <= 1e-9
          and inter.intertwining_residual <= 1e-9 and decomp_defect <= 1e-8)
    record(5, ok, (
        f"commutator/max|A|^2 {commute:.1e}, box monotone {monotone}, Kronecker defect {kron_defect:.1e}, "
        f"intertwiner path {inter.path_defect:.1e} residual {inter.intertwining_residual:.1e}, "
        f"decomposition defect {decomp_defect:.1e}"
    ))


def test_operator_valued_witness():
    c = 0.02
    a = varopoulos_tuple(VaropoulosConfig.default(c))
    bounds = []
    start = time.perf_counter()
    for m in (8, 16, 24, 32, 40):
        r = 1 - 2 / m
        bounds.append(witness_lower_bound(a, (r, r, r), Box.cube(m, 3), PV))
    witness_time = time.perf_counter() - start

    # not gating: a short power iteration on the largest truncation
    start = time.perf_counter()
    t = build_truncated_multishift(constant_weight_family(a.dense(), contractive=True), Box.cube(40, 3))
    est = op_norm_sparse(eval_poly_on_tuple(PV, t).operator, tol=1e-10, max_iter=100, seed=0)
    power_time = time.perf_counter() - start

    target = 6 * (1 - c) ** 2
    monotone = all(y >= x for x, y in zip(bounds, bounds[1:]))
    ok = monotone and max(bounds) > 5
    record(6, ok, (
        "witness bounds " + ", ".join(f"m={m}: {b:.4f}" for m, b in zip((8, 16, 24, 32, 40), bounds))
        + f" ({witness_time:.1f} s); 100 power steps at m=40 give {est.value:.4f} ({power_time:.1f} s); "
        f"gap to 6(1-c)^2 = {target:.4f} is {target - max(max(bounds), est.value):.4f}"
    ))


def test_matrix_vn_on_shifts():
    rng = np.random.default_rng(99)
    grids = {1: 256, 2: 96, 3: 32}
    verdicts = []
    for k in range(20):
        d = 1 + k % 3
        t = unweighted_shift(Box.cube(6 if k % 2 else 4, d))
        pm = random_matrix_poly(rng, d, 2, int(rng.integers(1, 5)))
        cfg = CheckConfig(grid_n=grids[d], sup_target_width=None)
        verdicts.append(vncheck.check_matrix_vn(t, pm, cfg).verdict)
    violated = verdicts.count(VIOLATED)
    record(7, violated == 0, (
        f"{verdicts.count(HOLDS)} hold, {violated} violated, {verdicts.count('inconclusive')} inconclusive "
        "over 20 random 2x2 polynomials"
    ))


def test_sup_certification():
    from test_poly import brute_torus_max

    rng = np.random.default_rng(5)
    grids = {1: 200, 2: 64, 3: 24}
    excess, widening = -math.inf, 0
    for k in range(50):
        d = 1 + k % 3
        p = random_poly(rng, d, int(rng.integers(1, 5)))
        coarse = polydisc_sup(p, grid_n=grids[d], target_width=None)
        fine = polydisc_sup(p, grid_n=2 * grids[d], target_width=None)
        excess = max(excess, brute_torus_max(p, 4 * grids[d]) - coarse.upper)
        if fine.width > coarse.width + 1e-15:
            widening += 1
    ok = excess <= 1e-12 and widening == 0
    record(8, ok, f"max brute-force excess over upper bound {excess:.2e}; {widening} brackets widened on doubling")
