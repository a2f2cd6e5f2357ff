"""Polynomials evaluated on commuting tuples.

Monomials ``T^alpha`` are built along a prefix tree: every ``alpha`` is
reached from ``alpha - e_j`` (``j`` the first nonzero axis) by one product,
so each distinct monomial costs a single multiplication. Dense tuples give
dense matrices; sparse tuples give matrix-free ``LinearOperator`` values
whose products are applied to vectors on demand.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator

from .errors import ArityMismatch, DimensionMismatch, DimensionTooLarge
from .lattice import MultiIndex
from .linalg import MAX_DENSE_DIM
from .multishift import CommutingTuple
from .poly import MatrixPoly, MultiPoly


def _parent(alpha: MultiIndex) -> tuple[int, MultiIndex]:
    j = next(k for k, a in enumerate(alpha) if a)
    prev = list(alpha)
    prev[j] -= 1
    return j, MultiIndex(prev)


def _closure(alphas) -> list[MultiIndex]:
    """Every alpha with all its prefix-tree ancestors, ancestors first."""
    seen = set()
    stack = [MultiIndex(a) for a in alphas]
    while stack:
        a = stack.pop()
        if a in seen:
            continue
        seen.add(a)
        if a.order:
            stack.append(_parent(a)[1])
    return sorted(seen, key=lambda a: (a.order, tuple(reversed(a))))


def dense_monomials(t: CommutingTuple, alphas) -> dict[MultiIndex, np.ndarray]:
    """``{alpha: T^alpha}`` for ``alphas`` and their ancestors."""
    ops = t.dense()
    out: dict[MultiIndex, np.ndarray] = {}
    for a in _closure(alphas):
        if not a.order:
            out[a] = np.eye(t.dim, dtype=np.complex128)
        else:
            j, prev = _parent(a)
            out[a] = ops[j] @ out[prev]
    return out


def _apply_monomials(apply_j, alphas, v: np.ndarray) -> dict[MultiIndex, np.ndarray]:
    out: dict[MultiIndex, np.ndarray] = {}
    for a in _closure(alphas):
        if not a.order:
            out[a] = v
        else:
            j, prev = _parent(a)
            out[a] = apply_j(j, out[prev])
    return out


def _check_arity(p, t: CommutingTuple):
    if p.d != t.d:
        raise ArityMismatch(f"polynomial of arity {p.d} on a {t.d}-tuple")


def sparse_poly_apply(p: MultiPoly, t: CommutingTuple, v, adjoint: bool = False) -> np.ndarray:
    """``p(T) v`` (or ``p(T)* v``) without forming ``p(T)``.

    ``v`` may be a vector or a ``(dim, k)`` block of vectors. The adjoint
    uses ``p(T)* = sum conj(a_alpha) (T*)^alpha``.
    """
    _check_arity(p, t)
    v = np.asarray(v, dtype=np.complex128)
    if v.shape[0] != t.dim:
        raise DimensionMismatch(f"vector of length {v.shape[0]} for a tuple of dimension {t.dim}")
    ops = t.operators
    if t.sparse:
        mats = [op.to_scipy() for op in ops]
        if adjoint:
            mats = [m.conj().T.tocsr() for m in mats]
    else:
        mats = [op.conj().T if adjoint else op for op in ops]

    def apply_j(j, x):
        return mats[j] @ x

    powers = _apply_monomials(apply_j, [a for a, _ in p.terms], v)
    out = np.zeros_like(v)
    for a, c in p.terms:
        out += (c.conjugate() if adjoint else c) * powers[a]
    return out


@dataclass(frozen=True)
class OperatorPolynomialValue:
    """``p(T)``: a dense array, or a ``LinearOperator`` for sparse tuples."""

    operator: object
    poly_digest: str
    tuple_digest: str
    sparse: bool

    @property
    def shape(self) -> tuple[int, int]:
        return self.operator.shape

    def dense(self) -> np.ndarray:
        if not self.sparse:
            return self.operator
        dim = self.shape[0]
        if dim > MAX_DENSE_DIM:
            raise DimensionTooLarge(f"refusing to densify an operator of dimension {dim}")
        return self.operator.matmat(np.eye(dim, dtype=np.complex128))

    def matvec(self, v) -> np.ndarray:
        return self.operator @ np.asarray(v)


def eval_poly_on_tuple(p: MultiPoly, t: CommutingTuple) -> OperatorPolynomialValue:
    """``sum_alpha a_alpha T^alpha``, with ``T^0 = I``."""
    _check_arity(p, t)
    if t.sparse:
        dim = t.dim
        op = LinearOperator(
            (dim, dim), dtype=np.complex128,
            matvec=lambda v: sparse_poly_apply(p, t, v),
            rmatvec=lambda v: sparse_poly_apply(p, t, v, adjoint=True),
            matmat=lambda v: sparse_poly_apply(p, t, v),
            rmatmat=lambda v: sparse_poly_apply(p, t, v, adjoint=True),
        )
        return OperatorPolynomialValue(op, p.digest(), t.digest(), True)
    powers = dense_monomials(t, [a for a, _ in p.terms])
    out = np.zeros((t.dim, t.dim), dtype=np.complex128)
    for a, c in p.terms:
        out += c * powers[a]
    return OperatorPolynomialValue(out, p.digest(), t.digest(), False)


def _matrix_apply(pm: MatrixPoly, t: CommutingTuple, v: np.ndarray, adjoint: bool) -> np.ndarray:
    # v is laid out coefficient-index major: entry i * dim + k
    dim = t.dim
    v = np.asarray(v, dtype=np.complex128)
    squeeze = v.ndim == 1
    blocks = v.reshape(pm.m, dim, -1)
    out = np.zeros_like(blocks)
    for i in range(pm.m):
        for j in range(pm.m):
            # block (i, j) maps component j to component i; its adjoint maps i to j
            src, dst = (i, j) if adjoint else (j, i)
            entry = pm.entry(i, j)
            if entry.terms:
                out[dst] += sparse_poly_apply(entry, t, blocks[src], adjoint=adjoint)
    out = out.reshape(pm.m * dim, -1)
    return out[:, 0] if squeeze else out


def eval_matrix_poly_on_tuple(pm: MatrixPoly, t: CommutingTuple) -> OperatorPolynomialValue:
    """``sum_alpha C_alpha (x) T^alpha`` on ``C^m (x) H``; block ``(i, j)`` is ``p_ij(T)``."""
    _check_arity(pm, t)
    if t.sparse:
        dim = pm.m * t.dim
        op = LinearOperator(
            (dim, dim), dtype=np.complex128,
            matvec=lambda v: _matrix_apply(pm, t, v, False),
            rmatvec=lambda v: _matrix_apply(pm, t, v, True),
            matmat=lambda v: _matrix_apply(pm, t, v, False),
            rmatmat=lambda v: _matrix_apply(pm, t, v, True),
        )
        return OperatorPolynomialValue(op, pm.digest(), t.digest(), True)
    powers = dense_monomials(t, [a for a, _ in pm.terms])
    out = np.zeros((pm.m * t.dim,) * 2, dtype=np.complex128)
    for a, block in pm.terms:
        out += np.kron(block, powers[a])
    return OperatorPolynomialValue(out, pm.digest(), t.digest(), False)


def conjugate_tuple(t: CommutingTuple) -> CommutingTuple:
    """``(T_1*, ..., T_d*)``, again a commuting tuple."""
    if t.sparse:
        return CommutingTuple([op.adjoint() for op in t.operators], f"({t.description})*")
    return CommutingTuple([op.conj().T for op in t.operators], f"({t.description})*")
