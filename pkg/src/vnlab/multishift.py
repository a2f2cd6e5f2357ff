"""Operator-weighted multishifts on truncation boxes.

A weight family assigns an ``n x n`` matrix ``A[j](alpha)`` to every fiber
``alpha`` of N^d and axis ``j``; the multishift ``T_j`` sends fiber
``alpha`` to fiber ``alpha + e_j`` through that matrix. On a box the
tuple is compressed: blocks whose image leaves the box are dropped.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import (
    ArityMismatch,
    NonCommutingTuple,
    NonUnitaryWeights,
    NotDiagonalRule,
    PathDependence,
    RuleDomainTooSmall,
    SchemaError,
)
from .lattice import Box, MultiIndex
from .linalg import SparseBlockOperator, kron, op_norm_dense, op_norms_dense, schur_bound
from .poly import matrix_from_json, matrix_to_json

COMMUTE_TOL = 1e-10
VALIDATE_TOL = 1e-12
UNITARY_TOL = 1e-12


# --------------------------------------------------------------------------
# weight rules


@dataclass(frozen=True)
class Constant:
    """``A[j](alpha) = matrices[j]`` for every alpha."""

    matrices: tuple

    def materialize(self, box: Box, d: int, n: int) -> np.ndarray:
        mats = np.asarray(self.matrices, dtype=np.complex128).reshape(d, 1, n, n)
        return np.broadcast_to(mats, (d, box.volume, n, n)).copy()


def _restrict(table: np.ndarray, declared: Box, box: Box) -> np.ndarray:
    """Pick the fibers of ``box`` out of data laid out in rank order of ``declared``.

    ``table`` has the fiber axis last.
    """
    if not declared.contains_box(box):
        raise RuleDomainTooSmall(f"rule declared on {declared} cannot cover {box}")
    ranks = declared.ranks_of(box.grid())
    return table[..., ranks]


@dataclass(frozen=True)
class Diagonal:
    """``A[j](alpha) = diag(tables[0][j][alpha], ..., tables[n-1][j][alpha])``.

    ``tables`` has shape ``(n, d, volume(shape))`` in rank order of ``shape``.
    """

    shape: Box
    tables: np.ndarray

    def materialize(self, box: Box, d: int, n: int) -> np.ndarray:
        w = _restrict(np.asarray(self.tables), self.shape, box)  # (n, d, vol)
        out = np.zeros((d, box.volume, n, n), dtype=np.complex128)
        idx = np.arange(n)
        out[:, :, idx, idx] = np.transpose(w, (1, 2, 0))
        return out


@dataclass(frozen=True)
class Classical:
    """Scalar weights ``w[j](alpha)``; ``weights`` has shape ``(d, volume(shape))``."""

    shape: Box
    weights: np.ndarray

    def materialize(self, box: Box, d: int, n: int) -> np.ndarray:
        w = _restrict(np.asarray(self.weights), self.shape, box)
        return w.reshape(d, box.volume, 1, 1).astype(np.complex128)


@dataclass(frozen=True)
class Table:
    """Explicit ``(alpha, j) -> matrix`` entries over ``shape``; absent entries are zero."""

    shape: Box
    entries: dict = field(hash=False)

    def materialize(self, box: Box, d: int, n: int) -> np.ndarray:
        if not self.shape.contains_box(box):
            raise RuleDomainTooSmall(f"table declared on {self.shape} cannot cover {box}")
        out = np.zeros((d, box.volume, n, n), dtype=np.complex128)
        for (alpha, j), mat in self.entries.items():
            if alpha in box:
                out[j, box.rank(alpha)] = mat
        return out


@dataclass(frozen=True)
class SeededUnitary:
    """``A[j](alpha) = Q_j`` with pairwise commuting unitaries drawn from ``seed``.

    All ``Q_j`` share the eigenvectors of one seeded Hermitian matrix, with
    independent seeded eigenphases per axis.
    """

    seed: int

    def unitaries(self, d: int, n: int) -> np.ndarray:
        rng = np.random.default_rng(self.seed)
        g = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        _, vecs = np.linalg.eigh(g + g.conj().T)
        phases = rng.uniform(0.0, 2 * np.pi, size=(d, n))
        return np.einsum("ik,jk,lk->jil", vecs, np.exp(1j * phases), vecs.conj())

    def materialize(self, box: Box, d: int, n: int) -> np.ndarray:
        q = self.unitaries(d, n)
        return np.broadcast_to(q[:, None], (d, box.volume, n, n)).copy()


@dataclass(frozen=True)
class WeightFamily:
    d: int
    n: int
    rule: object
    contractive: bool = False

    def materialize(self, box: Box) -> np.ndarray:
        """All weights on ``box`` as an array ``(d, volume, n, n)``, fibers in rank order."""
        if box.d != self.d:
            raise ArityMismatch(f"box of arity {box.d} for a family of arity {self.d}")
        return self.rule.materialize(box, self.d, self.n)

    def weight(self, alpha: Sequence[int], j: int) -> np.ndarray:
        alpha = MultiIndex(alpha)
        box = Box(a + 1 for a in alpha)
        return self.materialize(box)[j, box.volume - 1]

    @property
    def kind(self) -> str:
        return _KIND_NAMES[type(self.rule)]


_KIND_NAMES = {
    Constant: "constant", Diagonal: "diagonal", Classical: "classical",
    Table: "table", SeededUnitary: "seeded_unitary",
}


def constant_weight_family(matrices: Sequence, contractive: bool = False) -> WeightFamily:
    mats = tuple(np.asarray(m, dtype=np.complex128) for m in matrices)
    return WeightFamily(len(mats), mats[0].shape[0], Constant(mats), contractive)


def unweighted_family(d: int, n: int = 1) -> WeightFamily:
    return constant_weight_family([np.eye(n)] * d)


def classical_from_potential(phi: np.ndarray) -> WeightFamily:
    """Scalar weights ``w[j](alpha) = phi(alpha + e_j) / phi(alpha)``.

    ``phi`` is indexed ``phi[alpha_0, alpha_1, ...]``; the family is declared
    on the box one smaller in every axis. Such weights always satisfy the
    commuting identity.
    """
    phi = np.asarray(phi)
    d = phi.ndim
    shape = Box(m - 1 for m in phi.shape)
    grid = shape.grid()
    base = phi[tuple(grid.T)]
    weights = np.stack([phi[tuple((grid + np.eye(d, dtype=int)[j]).T)] / base for j in range(d)])
    return WeightFamily(d, 1, Classical(shape, weights))


def diagonal_from_classical(families: Sequence[WeightFamily]) -> WeightFamily:
    """Stack ``n`` classical families on a common declared box into one diagonal family."""
    shape = families[0].rule.shape
    d = families[0].d
    tables = np.stack([f.materialize(shape)[:, :, 0, 0] for f in families])
    return WeightFamily(d, len(families), Diagonal(shape, tables))


def gauge_unitary_family(shape: Box, n: int, seed: int) -> WeightFamily:
    """Unitary weights ``A[j](alpha) = W(alpha + e_j) W(alpha)^*`` for seeded unitaries ``W``.

    These depend genuinely on alpha and satisfy the commuting identity.
    """
    rng = np.random.default_rng(seed)
    big = shape.expanded(1)
    g = rng.standard_normal((big.volume, n, n)) + 1j * rng.standard_normal((big.volume, n, n))
    w, _ = np.linalg.qr(g)
    entries = {}
    for alpha in shape:
        for j in range(shape.d):
            beta = list(alpha)
            beta[j] += 1
            entries[(alpha, j)] = w[big.rank(beta)] @ w[big.rank(alpha)].conj().T
    return WeightFamily(shape.d, n, Table(shape, entries))


# --------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class ValidationReport:
    box: Box
    max_weight_norm: float
    max_commutation_defect: float
    accepted: bool
    contractive_ok: bool | None = None

    def to_json(self) -> dict:
        return {
            "box": list(self.box.sides),
            "max_weight_norm": self.max_weight_norm,
            "max_commutation_defect": self.max_commutation_defect,
            "contractive_ok": self.contractive_ok,
            "accepted": self.accepted,
        }


def _commutation_defects(weights: np.ndarray, big: Box, box: Box) -> np.ndarray:
    d = weights.shape[0]
    ranks = big.ranks_of(box.grid())
    strides = big.strides
    defects = [np.zeros(1)]
    for i in range(d):
        for j in range(i + 1, d):
            lhs = weights[i, ranks + strides[j]] @ weights[j, ranks]
            rhs = weights[j, ranks + strides[i]] @ weights[i, ranks]
            defects.append(op_norms_dense(lhs - rhs))
    return np.concatenate(defects)


def validate_weights(w: WeightFamily, box: Box) -> ValidationReport:
    """Check boundedness and the commuting identity on ``box``.

    Weights are read on ``box`` grown by one in every axis, since the
    identity at alpha involves ``alpha + e_i`` and ``alpha + e_j``.
    """
    big = box.expanded(1)
    weights = w.materialize(big)
    inner = big.ranks_of(box.grid())
    max_norm = float(op_norms_dense(weights[:, inner]).max(initial=0.0))
    defect = float(_commutation_defects(weights, big, box).max())
    accepted = defect <= VALIDATE_TOL * max_norm**2
    contractive_ok = None
    if w.contractive:
        contractive_ok = max_norm <= 1 + VALIDATE_TOL
        accepted = accepted and contractive_ok
    return ValidationReport(box, max_norm, defect, accepted, contractive_ok)


# --------------------------------------------------------------------------
# tuples


class CommutingTuple:
    """d commuting operators, all dense arrays or all :class:`SparseBlockOperator`."""

    def __init__(self, operators: Sequence, description: str = "", tol: float = COMMUTE_TOL):
        ops = list(operators)
        if not ops:
            raise ValueError("a tuple needs at least one operator")
        self.sparse = isinstance(ops[0], SparseBlockOperator)
        if self.sparse:
            if not all(isinstance(t, SparseBlockOperator) and t.box == ops[0].box
                       and t.fiber_dim == ops[0].fiber_dim for t in ops):
                raise ValueError("sparse tuple members must share box and fiber dimension")
        else:
            ops = [np.asarray(t, dtype=np.complex128) for t in ops]
            shape = ops[0].shape
            if len(shape) != 2 or shape[0] != shape[1] or any(t.shape != shape for t in ops):
                raise ValueError("dense tuple members must be square of equal size")
            for t in ops:
                t.setflags(write=False)
        self.operators = tuple(ops)
        self.description = description
        self._norms = None
        self.commutation_residual = self._residual()
        scale = max(1.0, max(self.norms()) ** 2)
        if self.commutation_residual > tol * scale:
            raise NonCommutingTuple(
                f"commutator residual {self.commutation_residual:.3e} exceeds {tol:g} * {scale:.3g}"
            )

    @property
    def d(self) -> int:
        return len(self.operators)

    @property
    def dim(self) -> int:
        return self.operators[0].shape[0]

    def __getitem__(self, j):
        return self.operators[j]

    def __len__(self):
        return len(self.operators)

    def _residual(self) -> float:
        # Frobenius (dense) or Schur (sparse) norms bound the operator norm from above
        worst = 0.0
        for i in range(self.d):
            for j in range(i + 1, self.d):
                if self.sparse:
                    a, b = self.operators[i].to_scipy(), self.operators[j].to_scipy()
                    worst = max(worst, schur_bound(sp.csr_matrix(a @ b - b @ a)))
                else:
                    a, b = self.operators[i], self.operators[j]
                    worst = max(worst, float(np.linalg.norm(a @ b - b @ a)))
        return worst

    def norms(self) -> list[float]:
        if self._norms is None:
            if self.sparse:
                self._norms = [t.norm_bound() for t in self.operators]
            else:
                self._norms = [op_norm_dense(t) for t in self.operators]
        return self._norms

    def is_contractive(self, tol: float = 1e-10) -> bool:
        return max(self.norms()) <= 1 + tol

    def dense(self) -> list[np.ndarray]:
        if self.sparse:
            return [t.to_dense() for t in self.operators]
        return list(self.operators)

    def densified(self) -> "CommutingTuple":
        if not self.sparse:
            return self
        return CommutingTuple(self.dense(), self.description)

    def digest(self) -> str:
        h = hashlib.sha256()
        for t in self.operators:
            if self.sparse:
                h.update(t.sources.tobytes() + t.targets.tobytes() + t.blocks.tobytes())
            else:
                h.update(np.ascontiguousarray(t).tobytes())
        return h.hexdigest()[:16]


def build_truncated_multishift(w: WeightFamily, box: Box, validate: bool = True) -> CommutingTuple:
    """Compress the multishift with weights ``w`` to the fibers of ``box``.

    With ``validate`` the weights are first checked on the box one smaller
    in each axis, which reads exactly the weights ``box`` uses.
    """
    if box.d != w.d:
        raise ArityMismatch(f"box of arity {box.d} for a family of arity {w.d}")
    if validate and all(m >= 2 for m in box.sides):
        report = validate_weights(w, Box(m - 1 for m in box.sides))
        if not report.accepted:
            raise NonCommutingTuple(
                f"weights rejected: commutation defect {report.max_commutation_defect:.3e}"
            )
    weights = w.materialize(box)
    grid = box.grid()
    ranks = np.arange(box.volume)
    ops = []
    for j in range(w.d):
        inner = grid[:, j] < box.sides[j] - 1
        src = ranks[inner]
        ops.append(SparseBlockOperator(box, w.n, src, src + box.strides[j], weights[j, src]))
    return CommutingTuple(ops, description=f"multishift[{w.kind}] d={w.d} n={w.n} box={list(box.sides)}")


def unweighted_shift(box: Box) -> CommutingTuple:
    return build_truncated_multishift(unweighted_family(box.d), box)


def tensor_tuple(a: CommutingTuple, b: CommutingTuple) -> CommutingTuple:
    """``(A_1 (x) B_1, ..., A_d (x) B_d)`` for dense tuples."""
    if a.d != b.d:
        raise ArityMismatch(f"tensor of a {a.d}-tuple with a {b.d}-tuple")
    ops = [kron(x, y) for x, y in zip(a.dense(), b.dense())]
    return CommutingTuple(ops, description=f"({a.description}) (x) ({b.description})")


def fiber_permutation(n: int, volume: int) -> np.ndarray:
    """``perm`` with ``v_fiber_major[perm] = v_fiber_minor``.

    Fiber-major index ``rank * n + i`` corresponds to fiber-minor (Kronecker
    ``C^n (x) l^2(box)``) index ``i * volume + rank``.
    """
    i, r = np.divmod(np.arange(n * volume), volume)
    return r * n + i


# --------------------------------------------------------------------------
# unitary intertwiner


@dataclass
class IntertwinerReport:
    box: Box
    blocks: np.ndarray  # (volume, n, n), rank order
    path_defect: float
    unitarity_defect: float
    intertwining_residual: float

    def to_json(self) -> dict:
        return {
            "box": list(self.box.sides),
            "path_defect": self.path_defect,
            "unitarity_defect": self.unitarity_defect,
            "intertwining_residual": self.intertwining_residual,
        }


def _unitarity_defect(mats: np.ndarray) -> float:
    if len(mats) == 0:
        return 0.0
    n = mats.shape[-1]
    gram = np.conj(np.swapaxes(mats, -1, -2)) @ mats
    return float(op_norms_dense(gram - np.eye(n)).max())


def unitary_intertwiner(w: WeightFamily, wt: WeightFamily, box: Box) -> IntertwinerReport:
    """Block-diagonal unitary ``U`` with ``U T_j = T~_j U`` on the truncation.

    ``U_0 = I`` and ``U(alpha + e_j) = A~[j](alpha) U(alpha) A[j](alpha)^*``,
    filled level by level in ``|alpha|``. Every fiber reachable along
    several axes is recomputed along each of them; the spread is the path
    defect.
    """
    if w.d != wt.d or w.n != wt.n:
        raise ArityMismatch("families must share arity and fiber dimension")
    a = w.materialize(box)
    at = wt.materialize(box)
    if max(_unitarity_defect(a.reshape(-1, w.n, w.n)), _unitarity_defect(at.reshape(-1, w.n, w.n))) > UNITARY_TOL:
        raise NonUnitaryWeights("weights must be unitary within 1e-12")
    for fam in (w, wt):
        if all(m >= 2 for m in box.sides) and not validate_weights(fam, Box(m - 1 for m in box.sides)).accepted:
            raise PathDependence("input family violates the commuting identity")

    n, d = w.n, w.d
    grid = box.grid()
    levels = grid.sum(axis=1)
    u = np.zeros((box.volume, n, n), dtype=np.complex128)
    u[0] = np.eye(n)
    path_defect = 0.0
    for level in range(1, int(levels.max(initial=0)) + 1):
        ranks = np.nonzero(levels == level)[0]
        alphas = grid[ranks]
        first = np.full(len(ranks), -1)
        for j in range(d):
            has = alphas[:, j] > 0
            prev = ranks[has] - box.strides[j]
            cand = at[j, prev] @ u[prev] @ np.conj(np.swapaxes(a[j, prev], -1, -2))
            fresh = has & (first < 0)
            seen = has & (first >= 0)
            u[ranks[fresh]] = cand[fresh[has]]
            if seen.any():
                path_defect = max(path_defect, float(op_norms_dense(cand[seen[has]] - u[ranks[seen]]).max()))
            first[fresh] = j
    if path_defect > 1e-10:
        raise PathDependence(f"intertwiner depends on the path: defect {path_defect:.3e}")

    residual = 0.0
    for j in range(d):
        src = np.nonzero(grid[:, j] < box.sides[j] - 1)[0]
        if len(src):
            tgt = src + box.strides[j]
            diff = u[tgt] @ a[j, src] - at[j, src] @ u[src]
            residual = max(residual, float(op_norms_dense(diff).max()))
    return IntertwinerReport(box, u, path_defect, _unitarity_defect(u), residual)


# --------------------------------------------------------------------------
# diagonal decomposition


@dataclass
class DiagonalDecomposition:
    box: Box
    components: list  # n classical WeightFamily values
    permutation: np.ndarray
    max_norm_defect: float
    polys_checked: int

    def to_json(self) -> dict:
        return {
            "box": list(self.box.sides),
            "components": [weights_to_json(c) for c in self.components],
            "permutation": self.permutation.tolist(),
            "certificate": {"max_norm_defect": self.max_norm_defect, "polys_checked": self.polys_checked},
        }


def decompose_diagonal(w: WeightFamily, box: Box, polys: Sequence | None = None) -> DiagonalDecomposition:
    """Split a diagonal-weight multishift on ``box`` into ``n`` classical ones.

    The permutation sends fiber-major coordinates ``rank * n + k`` to the
    ``k``-th summand. The certificate compares ``|p(T)|`` with the largest
    ``|p(W_k)|`` over ``polys`` (by default ``z_1`` and a few seeded random
    polynomials of degree at most 4).
    """
    from .calculus import eval_poly_on_tuple
    from .poly import MultiPoly, random_poly

    if isinstance(w.rule, Classical):
        components = [w]
    elif isinstance(w.rule, Diagonal):
        weights = w.materialize(box)
        components = [
            WeightFamily(w.d, 1, Classical(box, weights[:, :, k, k]), w.contractive) for k in range(w.n)
        ]
    else:
        raise NotDiagonalRule(f"rule {w.kind!r} is not diagonal")

    if polys is None:
        rng = np.random.default_rng(0)
        polys = [MultiPoly.monomial([1] + [0] * (w.d - 1))] + [random_poly(rng, w.d, 4) for _ in range(4)]
    t = build_truncated_multishift(w, box)
    parts = [build_truncated_multishift(c, box) for c in components]
    defect = 0.0
    for p in polys:
        whole = op_norm_dense(eval_poly_on_tuple(p, t).dense())
        pieces = max(op_norm_dense(eval_poly_on_tuple(p, c).dense()) for c in parts)
        defect = max(defect, abs(whole - pieces))
    perm = np.argsort(fiber_permutation(w.n, box.volume))
    return DiagonalDecomposition(box, components, perm, defect, len(polys))


# --------------------------------------------------------------------------
# JSON


def _table_to_json(values: np.ndarray) -> list:
    return [{"re": float(v.real), "im": float(v.imag)} for v in np.asarray(values, dtype=complex).ravel()]


def _table_from_json(items, path: str) -> np.ndarray:
    try:
        return np.array([complex(x["re"], x.get("im", 0.0)) for x in items])
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"bad scalar table ({exc})", path) from exc


def weights_to_json(w: WeightFamily) -> dict:
    rule = w.rule
    if isinstance(rule, Constant):
        payload = {"matrices": [matrix_to_json(m) for m in rule.matrices]}
    elif isinstance(rule, Diagonal):
        payload = {"shape": list(rule.shape.sides),
                   "tables": [[_table_to_json(t) for t in per_k] for per_k in np.asarray(rule.tables)]}
    elif isinstance(rule, Classical):
        payload = {"shape": list(rule.shape.sides), "weights": [_table_to_json(t) for t in rule.weights]}
    elif isinstance(rule, Table):
        entries = sorted(rule.entries.items(), key=lambda kv: (tuple(reversed(kv[0][0])), kv[0][1]))
        payload = {"shape": list(rule.shape.sides),
                   "entries": [{"alpha": list(a), "axis": j, "matrix": matrix_to_json(m)}
                               for (a, j), m in entries]}
    else:
        payload = {"seed": rule.seed}
    out = {"d": w.d, "n": w.n, "rule": {"kind": w.kind, **payload}}
    if w.contractive:
        out["contractive"] = True
    return out


def weights_from_json(doc: dict) -> WeightFamily:
    """Parse a weight-family document; assumes it already passed the schema."""
    d, n = int(doc["d"]), int(doc["n"])
    rule = doc["rule"]
    kind = rule["kind"]
    contractive = bool(doc.get("contractive", False))
    if kind == "constant":
        mats = [matrix_from_json(m) for m in rule["matrices"]]
        if len(mats) != d or any(m.shape != (n, n) for m in mats):
            raise SchemaError(f"expected {d} matrices of shape {n}x{n}", "$.rule.matrices")
        return WeightFamily(d, n, Constant(tuple(mats)), contractive)
    if kind == "seeded_unitary":
        return WeightFamily(d, n, SeededUnitary(int(rule["seed"])), contractive)
    shape = Box(rule["shape"])
    if shape.d != d:
        raise SchemaError(f"shape has arity {shape.d}, expected {d}", "$.rule.shape")
    if kind == "classical":
        if n != 1:
            raise SchemaError("classical families have n = 1", "$.n")
        tabs = [_table_from_json(t, f"$.rule.weights[{j}]") for j, t in enumerate(rule["weights"])]
        if len(tabs) != d or any(len(t) != shape.volume for t in tabs):
            raise SchemaError(f"expected {d} tables of {shape.volume} weights", "$.rule.weights")
        return WeightFamily(d, 1, Classical(shape, np.stack(tabs)), contractive)
    if kind == "diagonal":
        tables = np.array([
            [_table_from_json(t, f"$.rule.tables[{k}][{j}]") for j, t in enumerate(per_k)]
            for k, per_k in enumerate(rule["tables"])
        ])
        if tables.shape != (n, d, shape.volume):
            raise SchemaError(f"expected tables of shape {(n, d, shape.volume)}, got {tables.shape}", "$.rule.tables")
        return WeightFamily(d, n, Diagonal(shape, tables), contractive)
    entries = {}
    for i, e in enumerate(rule["entries"]):
        alpha = MultiIndex(e["alpha"])
        j = int(e["axis"])
        m = matrix_from_json(e["matrix"])
        path = f"$.rule.entries[{i}]"
        if alpha not in shape:
            raise SchemaError(f"alpha {tuple(alpha)} outside declared shape", path + ".alpha")
        if not 0 <= j < d:
            raise SchemaError(f"axis {j} out of range", path + ".axis")
        if m.shape != (n, n):
            raise SchemaError(f"matrix of shape {m.shape}, expected {(n, n)}", path + ".matrix")
        entries[(alpha, j)] = m
    return WeightFamily(d, n, Table(shape, entries), contractive)
