"""Dense complex matrices, Kronecker products and operator norms.

Dense matrices are plain complex ``numpy`` arrays. Operator norms of dense
matrices come from a one-sided (Hestenes) Jacobi SVD that works on stacks
of matrices at once; sparse block operators get a matrix-free power
iteration on ``M* M``.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, aslinearoperator

from .errors import DimensionMismatch, DimensionTooLarge, ShapeMismatch
from .lattice import Box

MAX_DENSE_DIM = 2048
# above this size the pure-numpy Jacobi sweeps get slow; LAPACK takes over
JACOBI_MAX_DIM = 128
_JACOBI_TOL = 1e-15
_JACOBI_MAX_SWEEPS = 80


def as_matrix(m) -> np.ndarray:
    a = np.asarray(m, dtype=np.complex128)
    if a.ndim != 2:
        raise ShapeMismatch(f"expected a 2-d matrix, got shape {a.shape}")
    return a


def matmul(a, b) -> np.ndarray:
    a, b = as_matrix(a), as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def add(a, b) -> np.ndarray:
    a, b = as_matrix(a), as_matrix(b)
    if a.shape != b.shape:
        raise ShapeMismatch(f"cannot add {a.shape} and {b.shape}")
    return a + b


def scale(s: complex, a) -> np.ndarray:
    return complex(s) * as_matrix(a)


def adjoint(a) -> np.ndarray:
    return as_matrix(a).conj().T


def kron(a, b) -> np.ndarray:
    return np.kron(as_matrix(a), as_matrix(b))


@functools.lru_cache(maxsize=None)
def _round_robin(n: int) -> tuple[tuple[np.ndarray, np.ndarray], ...]:
    # circle-method tournament: each round is a set of disjoint column pairs
    players = list(range(n + (n % 2)))
    size = len(players)
    rounds = []
    for _ in range(size - 1):
        pairs = [
            tuple(sorted((players[i], players[size - 1 - i])))
            for i in range(size // 2)
        ]
        pairs = [pq for pq in pairs if pq[1] < n]
        if pairs:
            p, q = zip(*pairs)
            rounds.append((np.array(p), np.array(q)))
        players = [players[0], players[-1]] + players[1:-1]
    return tuple(rounds)


def jacobi_svd(a, compute_v: bool = False):
    """Singular values (descending) of ``a`` or of a stack ``(..., m, n)``.

    One-sided Jacobi: columns are rotated pairwise, disjoint pairs at a time,
    until every pair is orthogonal to relative precision. With
    ``compute_v`` the accumulated right rotations are returned too, so that
    ``a @ v[..., :, k]`` has norm ``s[..., k]``.
    """
    g = np.array(a, dtype=np.complex128)
    if g.ndim < 2:
        raise ShapeMismatch("jacobi_svd needs at least a 2-d array")
    m, n = g.shape[-2:]
    transposed = n > m
    if transposed:
        g = np.conj(np.swapaxes(g, -1, -2))
        m, n = n, m
    batch = g.shape[:-2]
    # rows of h are the columns of g
    h = np.ascontiguousarray(np.swapaxes(g.reshape((-1, m, n)), -1, -2))
    v = np.broadcast_to(np.eye(n, dtype=np.complex128), h.shape[:1] + (n, n)).copy() if compute_v else None

    # pairs whose inner product is negligible next to the whole matrix are left alone
    floor = 1e-30 * np.einsum("bkm,bkm->b", h.conj(), h).real[:, None]
    schedule = _round_robin(n)
    for _ in range(_JACOBI_MAX_SWEEPS):
        rotated = False
        for p, q in schedule:
            hp = h[:, p]
            hq = h[:, q]
            alpha = np.einsum("bkm,bkm->bk", hp.conj(), hp).real
            beta = np.einsum("bkm,bkm->bk", hq.conj(), hq).real
            gamma = np.einsum("bkm,bkm->bk", hp.conj(), hq)
            agam = np.abs(gamma)
            active = (agam > _JACOBI_TOL * np.sqrt(alpha * beta)) & (agam > floor)
            if not active.any():
                continue
            rotated = True
            safe = np.where(active, agam, 1.0)
            zeta = (beta - alpha) / (2.0 * safe)
            t = np.where(zeta >= 0, 1.0, -1.0) / (np.abs(zeta) + np.hypot(1.0, zeta))
            cs = 1.0 / np.hypot(1.0, t)
            sn = cs * t
            cs = np.where(active, cs, 1.0)[:, :, None]
            sn = np.where(active, sn, 0.0)[:, :, None]
            phase = np.where(active, gamma / safe, 1.0).conj()[:, :, None]
            hq = hq * phase
            h[:, p] = cs * hp - sn * hq
            h[:, q] = sn * hp + cs * hq
            if compute_v:
                vp = v[:, p]
                vq = v[:, q] * phase
                v[:, p] = cs * vp - sn * vq
                v[:, q] = sn * vp + cs * vq
        if not rotated:
            break

    s = np.sqrt(np.einsum("bkm,bkm->bk", h.conj(), h).real)
    order = np.argsort(-s, axis=-1, kind="stable")
    s = np.take_along_axis(s, order, axis=-1)
    if not compute_v:
        return s.reshape(batch + (n,))
    if transposed:
        # rows of h are sigma_k * (right singular vectors of the original)
        u = np.take_along_axis(h, order[:, :, None], axis=1)
        v_out = u / np.where(s > 0, s, 1.0)[:, :, None]
        return s.reshape(batch + (n,)), np.swapaxes(v_out, -1, -2).reshape(batch + (m, n))
    # v holds right singular vectors as rows here
    v = np.take_along_axis(v, order[:, :, None], axis=1)
    return s.reshape(batch + (n,)), np.swapaxes(v, -1, -2).reshape(batch + (n, n))


def op_norm_dense(m) -> float:
    """Largest singular value of a dense matrix."""
    a = as_matrix(m)
    if max(a.shape) > MAX_DENSE_DIM:
        raise DimensionTooLarge(f"dense norm limited to dimension {MAX_DENSE_DIM}, got {a.shape}")
    if a.size == 0:
        return 0.0
    if min(a.shape) > JACOBI_MAX_DIM:
        return float(np.linalg.svd(a, compute_uv=False)[0])
    return float(jacobi_svd(a)[0])


def op_norms_dense(stack) -> np.ndarray:
    """Largest singular value of each matrix in a ``(..., m, n)`` stack."""
    a = np.asarray(stack, dtype=np.complex128)
    if max(a.shape[-2:]) > MAX_DENSE_DIM:
        raise DimensionTooLarge(f"dense norm limited to dimension {MAX_DENSE_DIM}")
    if min(a.shape[-2:]) > JACOBI_MAX_DIM:
        return np.linalg.svd(a, compute_uv=False)[..., 0]
    return jacobi_svd(a)[..., 0]


def top_right_singular_vector(m) -> tuple[float, np.ndarray]:
    """``(sigma_max, x)`` with ``|x| = 1`` and ``|m x| = sigma_max``."""
    a = as_matrix(m)
    if min(a.shape) > JACOBI_MAX_DIM:
        _, s, vh = np.linalg.svd(a)
        return float(s[0]), vh[0].conj()
    s, v = jacobi_svd(a, compute_v=True)
    x = v[:, 0]
    if a.shape[1] > a.shape[0] and s[0] == 0:
        x = np.zeros(a.shape[1], dtype=np.complex128)
        x[0] = 1.0
    return float(s[0]), x / np.linalg.norm(x)


def schur_bound(m: sp.spmatrix) -> float:
    """``sqrt(max row sum * max column sum)`` of ``|m|``; bounds the 2-norm."""
    if m.nnz == 0:
        return 0.0
    a = abs(sp.csr_matrix(m))
    rows = np.asarray(a.sum(axis=1)).max()
    cols = np.asarray(a.sum(axis=0)).max()
    return float(np.sqrt(rows * cols))


class SparseBlockOperator:
    """Operator on ``C^n (x) l^2(box)`` given by ``n x n`` blocks between fibers.

    Block ``k`` maps fiber ``sources[k]`` to fiber ``targets[k]`` (both
    ranks in ``box``). A vector is laid out fiber-major: entry
    ``rank * n + i`` is component ``i`` of fiber ``rank``.
    """

    def __init__(self, box: Box, fiber_dim: int, sources, targets, blocks):
        self.box = box
        self.fiber_dim = n = int(fiber_dim)
        self.sources = np.asarray(sources, dtype=np.int64).reshape(-1)
        self.targets = np.asarray(targets, dtype=np.int64).reshape(-1)
        self.blocks = np.asarray(blocks, dtype=np.complex128).reshape((-1, n, n))
        if not (len(self.sources) == len(self.targets) == len(self.blocks)):
            raise ShapeMismatch("sources, targets and blocks must have equal length")
        vol = box.volume
        if len(self.sources) and (
            self.sources.min() < 0 or self.targets.min() < 0
            or self.sources.max() >= vol or self.targets.max() >= vol
        ):
            raise ShapeMismatch("block fiber rank outside the box")
        keys = self.targets * vol + self.sources
        if len(np.unique(keys)) != len(keys):
            raise ShapeMismatch("a (source, target) pair appears more than once")
        self.blocks.setflags(write=False)
        self._matrix = None

    @property
    def dim(self) -> int:
        return self.fiber_dim * self.box.volume

    @property
    def shape(self) -> tuple[int, int]:
        return (self.dim, self.dim)

    def to_scipy(self) -> sp.bsr_matrix:
        if self._matrix is None:
            n, vol = self.fiber_dim, self.box.volume
            if len(self.blocks) == 0:
                self._matrix = sp.bsr_matrix((self.dim, self.dim), blocksize=(n, n), dtype=np.complex128)
            else:
                order = np.lexsort((self.sources, self.targets))
                indptr = np.searchsorted(self.targets[order], np.arange(vol + 1))
                self._matrix = sp.bsr_matrix(
                    (self.blocks[order], self.sources[order], indptr),
                    shape=(self.dim, self.dim),
                )
        return self._matrix

    def matvec(self, x) -> np.ndarray:
        x = np.asarray(x)
        if x.shape[0] != self.dim:
            raise DimensionMismatch(f"vector of length {x.shape[0]} for operator of dimension {self.dim}")
        return self.to_scipy() @ x

    def rmatvec(self, x) -> np.ndarray:
        """Apply the adjoint."""
        x = np.asarray(x)
        if x.shape[0] != self.dim:
            raise DimensionMismatch(f"vector of length {x.shape[0]} for operator of dimension {self.dim}")
        return self.to_scipy().conj().T @ x

    def adjoint(self) -> "SparseBlockOperator":
        return SparseBlockOperator(
            self.box, self.fiber_dim, self.targets, self.sources,
            np.conj(np.swapaxes(self.blocks, 1, 2)),
        )

    def to_dense(self) -> np.ndarray:
        return self.to_scipy().toarray()

    def as_linear_operator(self) -> LinearOperator:
        return aslinearoperator(self.to_scipy())

    def norm_bound(self) -> float:
        """Upper bound on the operator norm.

        Exact when every fiber is a source at most once and a target at most
        once (shift patterns), since the operator is then an orthogonal sum
        of its blocks.
        """
        if len(self.blocks) == 0:
            return 0.0
        block_norms = op_norms_dense(self.blocks)
        if len(np.unique(self.sources)) == len(self.sources) and len(np.unique(self.targets)) == len(self.targets):
            return float(block_norms.max())
        vol = self.box.volume
        rows = np.bincount(self.targets, weights=block_norms, minlength=vol).max()
        cols = np.bincount(self.sources, weights=block_norms, minlength=vol).max()
        return float(np.sqrt(rows * cols))


@dataclass(frozen=True)
class NormEstimate:
    value: float
    converged: bool
    iterations: int


def _as_operator(op) -> LinearOperator:
    if isinstance(op, SparseBlockOperator):
        return op.as_linear_operator()
    if isinstance(op, LinearOperator):
        return op
    if sp.issparse(op):
        return aslinearoperator(op)
    return aslinearoperator(as_matrix(op))


def op_norm_sparse(op, tol: float = 1e-10, max_iter: int = 5000, seed: int = 0) -> NormEstimate:
    """Power iteration on ``M* M`` with a seeded start vector.

    ``value`` is the largest ``|M x|`` seen over unit iterates, hence always
    a lower bound on ``|M|``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    m = _as_operator(op)
    rng = np.random.default_rng(seed)
    ncols = m.shape[1]
    x = np.ones(ncols, dtype=np.complex128)
    x += 0.1 * (rng.standard_normal(ncols) + 1j * rng.standard_normal(ncols))
    x /= np.linalg.norm(x)

    best = 0.0
    prev = None
    streak = 0
    for it in range(1, max_iter + 1):
        y = m.matvec(x)
        est = float(np.linalg.norm(y))
        best = max(best, est)
        if est == 0.0:
            return NormEstimate(0.0, True, it)
        if prev is not None and abs(est - prev) < tol * est:
            streak += 1
            if streak >= 3:
                return NormEstimate(best, True, it)
        else:
            streak = 0
        prev = est
        z = m.rmatvec(y)
        zn = np.linalg.norm(z)
        if zn == 0.0:
            return NormEstimate(best, True, it)
        x = z / zn
    return NormEstimate(best, False, max_iter)
