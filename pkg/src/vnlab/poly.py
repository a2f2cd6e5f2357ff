"""Polynomials in d commuting variables with scalar or matrix coefficients.

The polydisc sup-norm is certified on the torus ``|z_j| = 1``: polynomials
attain their sup over the closed polydisc on the distinguished boundary,
so only the d angles need searching. ``polydisc_sup`` returns a bracket
``lower <= sup <= upper``; ``lower`` is a value actually attained, ``upper``
comes from per-cell Taylor bounds around every grid point.
"""

from __future__ import annotations

import cmath
import hashlib
import json
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import ArityMismatch, ShapeMismatch
from .lattice import MultiIndex
from .linalg import as_matrix, op_norm_dense, op_norms_dense

MAX_GRID_POINTS = 256**3
_TOP_STARTS = 8
_CHUNK = 1 << 18
# relative gains below this are evaluation rounding, not progress
_NOISE = 8 * np.finfo(float).eps


def _term_key(alpha: MultiIndex):
    # rank order with axis 0 fastest
    return tuple(reversed(alpha))


class MultiPoly:
    """``p(z) = sum_alpha a_alpha z^alpha`` with complex coefficients."""

    __slots__ = ("d", "_terms", "_hash")

    def __init__(self, d: int, terms: Mapping[Sequence[int], complex] | None = None):
        if d < 1:
            raise ValueError("arity must be at least 1")
        self.d = int(d)
        acc: dict[MultiIndex, complex] = {}
        for alpha, coeff in (terms or {}).items():
            alpha = MultiIndex(alpha)
            if len(alpha) != self.d:
                raise ArityMismatch(f"term {tuple(alpha)} in a polynomial of arity {self.d}")
            acc[alpha] = acc.get(alpha, 0j) + complex(coeff)
        self._terms = tuple(
            (alpha, acc[alpha]) for alpha in sorted(acc, key=_term_key) if acc[alpha] != 0
        )
        self._hash = None

    @classmethod
    def constant(cls, d: int, value: complex = 1.0) -> "MultiPoly":
        return cls(d, {(0,) * d: value})

    @classmethod
    def monomial(cls, alpha: Sequence[int], coeff: complex = 1.0) -> "MultiPoly":
        return cls(len(alpha), {tuple(alpha): coeff})

    @property
    def terms(self) -> tuple[tuple[MultiIndex, complex], ...]:
        return self._terms

    @property
    def degree(self) -> int:
        return max((a.order for a, _ in self._terms), default=0)

    def coeff(self, alpha: Sequence[int]) -> complex:
        return dict(self._terms).get(MultiIndex(alpha), 0j)

    def conj(self) -> "MultiPoly":
        return MultiPoly(self.d, {a: c.conjugate() for a, c in self._terms})

    def __mul__(self, s) -> "MultiPoly":
        return MultiPoly(self.d, {a: c * complex(s) for a, c in self._terms})

    __rmul__ = __mul__

    def __add__(self, other: "MultiPoly") -> "MultiPoly":
        if other.d != self.d:
            raise ArityMismatch("cannot add polynomials of different arity")
        out = dict(self._terms)
        for a, c in other.terms:
            out[a] = out.get(a, 0j) + c
        return MultiPoly(self.d, out)

    def __eq__(self, other):
        return isinstance(other, MultiPoly) and self.d == other.d and self._terms == other._terms

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self.d, self._terms))
        return self._hash

    def __call__(self, z) -> complex:
        return eval_scalar(self, z)

    def __repr__(self):
        body = " + ".join(f"({c:g})*z^{tuple(a)}" for a, c in self._terms) or "0"
        return f"MultiPoly(d={self.d}: {body})"

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(poly_to_json(self), sort_keys=True).encode()).hexdigest()[:16]


class MatrixPoly:
    """An ``m x m`` matrix of polynomials, stored as ``sum_alpha C_alpha z^alpha``."""

    __slots__ = ("d", "m", "_terms")

    def __init__(self, d: int, m: int, terms: Mapping[Sequence[int], object] | None = None):
        self.d = int(d)
        self.m = int(m)
        acc: dict[MultiIndex, np.ndarray] = {}
        for alpha, block in (terms or {}).items():
            alpha = MultiIndex(alpha)
            if len(alpha) != self.d:
                raise ArityMismatch(f"term {tuple(alpha)} in a polynomial of arity {self.d}")
            block = as_matrix(block)
            if block.shape != (self.m, self.m):
                raise ShapeMismatch(f"coefficient block of shape {block.shape}, expected {(self.m, self.m)}")
            acc[alpha] = acc.get(alpha, 0) + block
        self._terms = tuple(
            (alpha, acc[alpha]) for alpha in sorted(acc, key=_term_key) if np.any(acc[alpha] != 0)
        )
        for _, block in self._terms:
            block.setflags(write=False)

    @classmethod
    def from_scalar(cls, p: MultiPoly) -> "MatrixPoly":
        return cls(p.d, 1, {a: [[c]] for a, c in p.terms})

    @classmethod
    def from_entries(cls, entries: Sequence[Sequence[MultiPoly]]) -> "MatrixPoly":
        """Build from the entry polynomials ``p_ij``."""
        m = len(entries)
        d = entries[0][0].d
        terms: dict[MultiIndex, np.ndarray] = {}
        for i, row in enumerate(entries):
            if len(row) != m:
                raise ShapeMismatch("entry table must be square")
            for j, pij in enumerate(row):
                if pij.d != d:
                    raise ArityMismatch("entry polynomials must share arity")
                for a, c in pij.terms:
                    terms.setdefault(a, np.zeros((m, m), dtype=np.complex128))[i, j] += c
        return cls(d, m, terms)

    @property
    def terms(self) -> tuple[tuple[MultiIndex, np.ndarray], ...]:
        return self._terms

    @property
    def degree(self) -> int:
        return max((a.order for a, _ in self._terms), default=0)

    def entry(self, i: int, j: int) -> MultiPoly:
        return MultiPoly(self.d, {a: b[i, j] for a, b in self._terms})

    def __eq__(self, other):
        return (
            isinstance(other, MatrixPoly) and (self.d, self.m) == (other.d, other.m)
            and len(self._terms) == len(other._terms)
            and all(a == b and np.array_equal(x, y) for (a, x), (b, y) in zip(self._terms, other._terms))
        )

    def __hash__(self):
        return hash((self.d, self.m, tuple((a, b.tobytes()) for a, b in self._terms)))

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(poly_to_json(self), sort_keys=True).encode()).hexdigest()[:16]


def varopoulos_kaijser() -> MultiPoly:
    """``z1^2 + z2^2 + z3^2 - 2 z1 z2 - 2 z2 z3 - 2 z3 z1``."""
    return MultiPoly(3, {
        (2, 0, 0): 1, (0, 2, 0): 1, (0, 0, 2): 1,
        (1, 1, 0): -2, (0, 1, 1): -2, (1, 0, 1): -2,
    })


def random_poly(rng: np.random.Generator, d: int, degree: int, n_terms: int | None = None) -> MultiPoly:
    """Random complex-Gaussian coefficients on a random support of degree <= ``degree``."""
    from .lattice import multi_indices_up_to

    support = multi_indices_up_to(d, degree)
    if n_terms is None:
        n_terms = int(rng.integers(1, len(support) + 1))
    chosen = rng.choice(len(support), size=min(n_terms, len(support)), replace=False)
    coeffs = rng.standard_normal(len(chosen)) + 1j * rng.standard_normal(len(chosen))
    return MultiPoly(d, {support[k]: c for k, c in zip(sorted(chosen), coeffs)})


def random_matrix_poly(rng: np.random.Generator, d: int, m: int, degree: int) -> MatrixPoly:
    from .lattice import multi_indices_up_to

    support = multi_indices_up_to(d, degree)
    k = int(rng.integers(1, len(support) + 1))
    chosen = sorted(rng.choice(len(support), size=k, replace=False))
    return MatrixPoly(d, m, {
        support[i]: rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m)) for i in chosen
    })


def eval_scalar(p: MultiPoly, z: Sequence[complex]) -> complex:
    if len(z) != p.d:
        raise ArityMismatch(f"point of arity {len(z)} for a polynomial of arity {p.d}")
    powers: dict[tuple[int, int], complex] = {}

    def power(j, e):
        if (j, e) not in powers:
            powers[(j, e)] = 1 + 0j if e == 0 else power(j, e - 1) * z[j]
        return powers[(j, e)]

    total = 0j
    for alpha, coeff in p.terms:
        mono = 1 + 0j
        for j, e in enumerate(alpha):
            if e:
                mono *= power(j, e)
        total += coeff * mono
    return total


def eval_matrix(P: MatrixPoly, z: Sequence[complex]) -> np.ndarray:
    if len(z) != P.d:
        raise ArityMismatch(f"point of arity {len(z)} for a polynomial of arity {P.d}")
    out = np.zeros((P.m, P.m), dtype=np.complex128)
    for alpha, block in P.terms:
        out += block * math.prod(complex(z[j]) ** e for j, e in enumerate(alpha))
    return out


def _coeff_norms(p) -> list[float]:
    if isinstance(p, MultiPoly):
        return [abs(c) for _, c in p.terms]
    return [op_norm_dense(b) for _, b in p.terms]


def coeff_upper_bound(p) -> float:
    """``sum_alpha |a_alpha|``; dominates the polydisc sup-norm."""
    return float(sum(_coeff_norms(p)))


@dataclass(frozen=True)
class SupBracket:
    lower: float
    upper: float
    witness: tuple[float, ...]  # torus angles where ``lower`` is attained

    @property
    def width(self) -> float:
        return self.upper - self.lower


class _TorusFunction:
    """``theta -> P(e^{i theta})`` with per-cell upper bounds, vectorized."""

    def __init__(self, p):
        if isinstance(p, MultiPoly):
            p = MatrixPoly.from_scalar(p)
        self.d, self.m = p.d, p.m
        self.scalar = p.m == 1
        if p.terms:
            self.alphas = np.array([a for a, _ in p.terms], dtype=np.int64)
            self.coeffs = np.stack([b for _, b in p.terms]).reshape(len(p.terms), -1)
        else:
            self.alphas = np.zeros((0, self.d), dtype=np.int64)
            self.coeffs = np.zeros((0, self.m * self.m), dtype=np.complex128)
        # value and the d partial derivatives in one product
        self._stacked = np.concatenate(
            [self.coeffs] + [1j * self.alphas[:, k:k + 1] * self.coeffs for k in range(self.d)], axis=1
        )
        norms = np.array(_coeff_norms(p)) if p.terms else np.zeros(0)
        orders = self.alphas.sum(axis=1)
        self.lipschitz = float(np.sum(norms * orders))
        self.curvature = float(np.sum(norms * orders**2))
        if self.scalar:
            # |p|^2 = sum a_s conj(a_t) e^{i (s - t) theta}: second-derivative bound
            diff = np.abs(self.alphas[:, None, :] - self.alphas[None, :, :]).sum(axis=-1)
            self.sq_curvature = float(np.sum(np.outer(norms, norms) * diff**2))

    def _norms(self, vals: np.ndarray) -> np.ndarray:
        if self.scalar:
            return np.abs(vals[:, 0])
        return op_norms_dense(vals.reshape(-1, self.m, self.m))

    def cell_bounds(self, phases: np.ndarray, r: float):
        """Values and upper bounds over cubes of half-side ``r``.

        ``phases[k, t] = e^{i alpha_t . theta_k}`` at the cube centers.
        """
        mm = self.m * self.m
        out = phases @ self._stacked
        vals = out[:, :mm]
        grads = out[:, mm:].reshape(len(out), self.d, mm)
        if self.scalar:
            g = vals[:, 0]
            sq = (g * g.conj()).real
            dsq = 2.0 * (g.conj()[:, None] * grads[:, :, 0]).real
            bound = sq + r * np.abs(dsq).sum(axis=1) + 0.5 * self.sq_curvature * r * r
            return np.sqrt(sq), np.sqrt(np.maximum(bound, 0.0))
        norms = self._norms(vals)
        # Frobenius norm dominates the operator norm
        dsum = np.sqrt((np.abs(grads) ** 2).sum(axis=-1)).sum(axis=1)
        return norms, norms + r * dsum + 0.5 * self.curvature * r * r

    def phases_at(self, theta: np.ndarray) -> np.ndarray:
        return np.exp(1j * (np.atleast_2d(theta) @ self.alphas.T))

    def value_norms(self, theta: np.ndarray) -> np.ndarray:
        return self._norms(self.phases_at(theta) @ self.coeffs)


def _grid_scan(f: _TorusFunction, n: int, radius: float):
    """Evaluate on the full n^d grid in rank order.

    Returns the per-cell upper bounds, the top grid values and their ranks.
    """
    d = f.d
    total = n**d
    table = np.exp(2j * np.pi * np.arange(n) / n)
    # axis_tables[k][i, t] = e^{i alpha_tk * 2 pi i / n}
    axis_tables = [table[(np.arange(n)[:, None] * f.alphas[:, k]) % n] for k in range(d)]
    ub = np.empty(total)
    best_vals = np.empty(0)
    best_ranks = np.empty(0, dtype=np.int64)
    for start in range(0, total, _CHUNK):
        ranks = np.arange(start, min(start + _CHUNK, total))
        phases = None
        rest = ranks
        for k in range(d):
            rest, i = np.divmod(rest, n)
            phases = axis_tables[k][i] if phases is None else phases * axis_tables[k][i]
        vals, bounds = f.cell_bounds(phases, radius)
        ub[start:start + len(ranks)] = bounds
        k = min(_TOP_STARTS, len(vals))
        top = np.argpartition(-vals, k - 1)[:k]
        best_vals = np.concatenate([best_vals, vals[top]])
        best_ranks = np.concatenate([best_ranks, ranks[top]])
        order = np.lexsort((best_ranks, -best_vals))[:_TOP_STARTS]
        best_vals, best_ranks = best_vals[order], best_ranks[order]
    return ub, best_vals, best_ranks


def _coordinate_ascent(f: _TorusFunction, starts: np.ndarray, step: float, sweeps: int):
    theta = starts.copy()
    vals = f.value_norms(theta)
    d = f.d
    for _ in range(sweeps):
        for k in range(d):
            shift = np.zeros(d)
            shift[k] = step
            up = f.value_norms(theta + shift)
            down = f.value_norms(theta - shift)
            gain = vals * (1 + _NOISE)
            take_up = (up > gain) & (up >= down)
            take_down = (down > gain) & ~take_up
            theta[take_up, k] += step
            theta[take_down, k] -= step
            vals = np.where(take_up, up, np.where(take_down, down, vals))
        step /= 2
    return theta, vals


def polydisc_sup(
    p,
    grid_n: int = 200,
    refine_steps: int = 20,
    target_width: float | None = None,
    max_cells: int = 4_000_000,
) -> SupBracket:
    """Bracket ``sup_{|z_j| <= 1} |p(z)|`` (operator norm for matrix polynomials).

    The torus is covered by ``grid_n^d`` cubes of half-side ``r = pi/grid_n``
    centered at grid points. For scalar ``p`` each cube gets a second-order
    bound on ``|p|^2``,

        |p|^2(c + h) <= |p|^2(c) + r * sum_k |d_k |p|^2(c)| + r^2/2 * K,
        K = sum_{s,t} |a_s| |a_t| |s - t|_1^2,

    whose first-order term vanishes at interior maxima. Matrix polynomials
    use ``|P(c)| + r * sum_k |d_k P(c)|_F + r^2/2 * sum_a |a_a| |a|^2``.
    ``upper`` is the largest cube bound, capped by the global Lipschitz
    bound ``lower + L * pi * sqrt(d) / grid_n`` with ``L = sum |a_a| |a|``.
    With ``target_width`` set, cubes whose bound exceeds
    ``lower + target_width`` are bisected along every axis until they drop
    below it or ``max_cells`` evaluations have been spent.
    """
    if grid_n < 8:
        raise ValueError("grid_n must be at least 8")
    f = _TorusFunction(p)
    d = f.d
    if not len(f.alphas):
        return SupBracket(0.0, 0.0, (0.0,) * d)
    if grid_n**d > MAX_GRID_POINTS:
        raise ValueError(f"grid of {grid_n}^{d} points exceeds {MAX_GRID_POINTS}")

    radius = math.pi / grid_n
    ub, best_vals, best_ranks = _grid_scan(f, grid_n, radius)
    spacing = 2 * math.pi / grid_n
    starts = ((best_ranks[:, None] // grid_n ** np.arange(d)) % grid_n) * spacing
    theta, vals = _coordinate_ascent(f, starts.astype(float), radius, refine_steps)
    i = int(np.argmax(vals))
    lower, witness = float(vals[i]), theta[i]
    if best_vals[0] >= lower:
        lower, witness = float(best_vals[0]), starts[0]

    upper = float(ub.max())
    if target_width is not None and upper - lower > target_width:
        upper, lower, witness = _subdivide(f, ub, grid_n, radius, lower, witness, target_width, max_cells)

    upper = min(upper, lower + f.lipschitz * radius * math.sqrt(d), coeff_upper_bound(p))
    upper = max(upper, lower)
    witness = tuple(float(t) for t in np.mod(witness, 2 * math.pi))
    return SupBracket(lower, upper, witness)


def _subdivide(f, ub, grid_n, radius, lower, witness, target_width, max_cells):
    d = f.d
    active_ranks = np.nonzero(ub > lower + target_width)[0]
    settled = float(ub[ub <= lower + target_width].max(initial=-np.inf))
    centers = ((active_ranks[:, None] // grid_n ** np.arange(d)) % grid_n) * (2 * math.pi / grid_n)
    bounds = ub[active_ranks]
    signs = np.array(np.meshgrid(*([[-1.0, 1.0]] * d), indexing="ij")).reshape(d, -1).T
    spent = 0
    r = radius
    while len(centers) and spent + len(centers) * len(signs) <= max_cells:
        r /= 2
        centers = (centers[:, None, :] + r * signs[None]).reshape(-1, d)
        spent += len(centers)
        vals, bounds = f.cell_bounds(f.phases_at(centers), r)
        i = int(np.argmax(vals))
        if vals[i] > lower * (1 + _NOISE):
            lower, witness = float(vals[i]), centers[i]
        keep = bounds > lower + target_width
        settled = max(settled, float(bounds[~keep].max(initial=-np.inf)))
        centers, bounds = centers[keep], bounds[keep]
    upper = max(settled, float(bounds.max(initial=-np.inf)))
    return upper, lower, witness


def _cplx(z: complex) -> dict:
    return {"re": float(z.real), "im": float(z.imag)}


def matrix_to_json(m) -> list:
    return [[_cplx(complex(x)) for x in row] for row in np.asarray(m)]


def matrix_from_json(rows) -> np.ndarray:
    return np.array([[complex(x["re"], x.get("im", 0.0)) for x in row] for row in rows], dtype=np.complex128)


def poly_to_json(p) -> dict:
    if isinstance(p, MultiPoly):
        return {"d": p.d, "terms": [{"alpha": list(a), **_cplx(c)} for a, c in p.terms]}
    return {
        "d": p.d, "m": p.m,
        "terms": [{"alpha": list(a), "block": matrix_to_json(b)} for a, b in p.terms],
    }


def poly_from_json(doc: dict):
    """Parse either JSON polynomial form; blocks make it a :class:`MatrixPoly`.

    Repeated exponents are summed.
    """
    d = int(doc["d"])
    terms = doc["terms"]
    if any("block" in t for t in terms) or "m" in doc:
        blocks: dict[tuple, np.ndarray] = {}
        for t in terms:
            b = matrix_from_json(t["block"])
            key = tuple(t["alpha"])
            blocks[key] = blocks[key] + b if key in blocks else b
        m = int(doc.get("m") or next(iter(blocks.values())).shape[0])
        return MatrixPoly(d, m, blocks)
    coeffs: dict[tuple, complex] = {}
    for t in terms:
        key = tuple(t["alpha"])
        coeffs[key] = coeffs.get(key, 0j) + complex(t["re"], t.get("im", 0.0))
    return MultiPoly(d, coeffs)


def torus_point(angles: Sequence[float]) -> tuple[complex, ...]:
    return tuple(cmath.exp(1j * t) for t in angles)
