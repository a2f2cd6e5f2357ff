"""Verdicts on von Neumann's inequality ``|p(T)| <= sup_{polydisc} |p|``.

A check compares the norm of ``p(T)`` (dense SVD, or a power-iteration
lower bound for sparse tuples) with a certified bracket on the polydisc
sup-norm and returns one of three verdicts:

* ``violated``: the norm exceeds the sup's upper bound,
* ``holds``: the norm is at most the sup's lower bound and is exact or converged,
* ``inconclusive``: anything in between.
"""

from __future__ import annotations

import functools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .calculus import dense_monomials, eval_matrix_poly_on_tuple, eval_poly_on_tuple, sparse_poly_apply
from .errors import ArityMismatch, InvalidConfig
from .lattice import Box
from .linalg import op_norm_dense, op_norm_sparse, op_norms_dense, top_right_singular_vector
from .multishift import CommutingTuple, build_truncated_multishift, constant_weight_family
from .poly import MatrixPoly, MultiPoly, SupBracket, poly_to_json, polydisc_sup, random_poly, varopoulos_kaijser

HOLDS, VIOLATED, INCONCLUSIVE = "holds", "violated", "inconclusive"


@dataclass(frozen=True)
class CheckConfig:
    grid_n: int = 200
    refine_steps: int = 20
    sup_target_width: float | None = 1e-3
    report_tol: float = 1e-9
    contractive_tol: float = 1e-10
    power_tol: float = 1e-10
    power_max_iter: int = 5000
    seed: int = 0
    dense_limit: int = 1024
    threads: int = 1

    def to_json(self) -> dict:
        return {
            "grid_n": self.grid_n, "refine_steps": self.refine_steps,
            "sup_target_width": self.sup_target_width, "report_tol": self.report_tol,
            "power_tol": self.power_tol, "power_max_iter": self.power_max_iter, "seed": self.seed,
        }


@functools.lru_cache(maxsize=4096)
def _cached_sup(p, grid_n: int, refine_steps: int, target_width) -> SupBracket:
    return polydisc_sup(p, grid_n=grid_n, refine_steps=refine_steps, target_width=target_width)


def certified_sup(p, cfg: CheckConfig) -> SupBracket:
    """Sup bracket for ``p``; computed once per polynomial and precision setting."""
    return _cached_sup(p, cfg.grid_n, cfg.refine_steps, cfg.sup_target_width)


@dataclass(frozen=True)
class LhsNorm:
    value: float
    method: str  # "dense-svd" or "power-iteration"
    converged: bool


@dataclass
class VnReport:
    polynomial: dict
    tuple_info: dict
    lhs: LhsNorm
    sup: SupBracket
    verdict: str
    margin: float
    contractive: bool
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {
            "polynomial": self.polynomial,
            "tuple": self.tuple_info,
            "lhs": {"value": self.lhs.value, "method": self.lhs.method, "converged": self.lhs.converged},
            "sup": {"lower": self.sup.lower, "upper": self.sup.upper, "witness": list(self.sup.witness)},
            "verdict": self.verdict,
            "margin": self.margin,
            "contractive": self.contractive,
        }
        out.update(self.extra)
        return out


def decide(lhs: LhsNorm, sup: SupBracket, contractive: bool, tol: float) -> tuple[str, float]:
    """Verdict and margin for a norm against a sup bracket.

    A power-iteration value is a lower bound on the norm, so it can
    certify a violation on its own, but a hold needs convergence.
    """
    if not contractive:
        return INCONCLUSIVE, sup.lower - lhs.value
    if lhs.value > sup.upper + tol:
        return VIOLATED, lhs.value - sup.upper
    if lhs.value <= sup.lower + tol and (lhs.method == "dense-svd" or lhs.converged):
        return HOLDS, sup.lower - lhs.value
    return INCONCLUSIVE, sup.lower - lhs.value


def _tuple_info(t: CommutingTuple) -> dict:
    return {
        "description": t.description, "d": t.d, "dim": t.dim,
        "representation": "sparse" if t.sparse else "dense",
        "digest": t.digest(), "max_norm": max(t.norms()),
    }


def _poly_info(p) -> dict:
    return {"digest": p.digest(), "degree": p.degree, **poly_to_json(p)}


def _lhs_norm(value, cfg: CheckConfig) -> LhsNorm:
    if not value.sparse or value.shape[0] <= cfg.dense_limit:
        return LhsNorm(op_norm_dense(value.dense()), "dense-svd", True)
    est = op_norm_sparse(value.operator, tol=cfg.power_tol, max_iter=cfg.power_max_iter, seed=cfg.seed)
    return LhsNorm(est.value, "power-iteration", est.converged)


def _report(p, t: CommutingTuple, lhs: LhsNorm, cfg: CheckConfig) -> VnReport:
    sup = certified_sup(p, cfg)
    contractive = t.is_contractive(cfg.contractive_tol)
    verdict, margin = decide(lhs, sup, contractive, cfg.report_tol)
    return VnReport(_poly_info(p), _tuple_info(t), lhs, sup, verdict, margin, contractive)


def check_vn(t: CommutingTuple, p: MultiPoly, cfg: CheckConfig = CheckConfig()) -> VnReport:
    """Adjudicate ``|p(T)| <= sup |p|`` for one polynomial."""
    if p.d != t.d:
        raise ArityMismatch(f"polynomial of arity {p.d} on a {t.d}-tuple")
    return _report(p, t, _lhs_norm(eval_poly_on_tuple(p, t), cfg), cfg)


def check_matrix_vn(t: CommutingTuple, pm: MatrixPoly, cfg: CheckConfig = CheckConfig()) -> VnReport:
    """Matrix version: ``|(p_ij(T))| <= sup |(p_ij(z))|``."""
    if pm.d != t.d:
        raise ArityMismatch(f"polynomial of arity {pm.d} on a {t.d}-tuple")
    return _report(pm, t, _lhs_norm(eval_matrix_poly_on_tuple(pm, t), cfg), cfg)


def check_vn_many(t: CommutingTuple, polys: Sequence[MultiPoly], cfg: CheckConfig = CheckConfig()) -> list[VnReport]:
    """``check_vn`` for many polynomials on one dense tuple, norms batched."""
    if t.sparse or t.dim > 128:
        return [check_vn(t, p, cfg) for p in polys]
    for p in polys:
        if p.d != t.d:
            raise ArityMismatch(f"polynomial of arity {p.d} on a {t.d}-tuple")
    powers = dense_monomials(t, {a for p in polys for a, _ in p.terms})
    stack = np.zeros((len(polys), t.dim, t.dim), dtype=np.complex128)
    for k, p in enumerate(polys):
        for a, c in p.terms:
            stack[k] += c * powers[a]
    norms = op_norms_dense(stack) if len(polys) else []
    return [_report(p, t, LhsNorm(float(v), "dense-svd", True), cfg) for p, v in zip(polys, norms)]


# --------------------------------------------------------------------------
# the Varopoulos family

SIGNS = np.array([[1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float)


@dataclass(frozen=True)
class VaropoulosConfig:
    """``c`` in (0, 1) and three planar vectors ``X_j`` of length ``1 - c``."""

    c: float
    xs: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if not 0 < self.c < 1:
            raise InvalidConfig(f"c must lie in (0, 1), got {self.c}")
        if len(self.xs) != 3:
            raise InvalidConfig("three vectors X_1, X_2, X_3 are required")
        for j, (x, y) in enumerate(self.xs):
            if abs(math.hypot(x, y) - (1 - self.c)) > 1e-12:
                raise InvalidConfig(f"X_{j + 1} has length {math.hypot(x, y)}, expected {1 - self.c}")

    @classmethod
    def default(cls, c: float) -> "VaropoulosConfig":
        return cls.from_angles(c, (0.0, 2 * math.pi / 3, 4 * math.pi / 3))

    @classmethod
    def from_angles(cls, c: float, angles: Sequence[float]) -> "VaropoulosConfig":
        r = 1 - c
        return cls(c, tuple((r * math.cos(t), r * math.sin(t)) for t in angles))

    @classmethod
    def random(cls, rng: np.random.Generator) -> "VaropoulosConfig":
        c = float(rng.uniform(0.01, 0.99))
        return cls.from_angles(c, rng.uniform(0, 2 * math.pi, size=3))


def varopoulos_matrix(x: float, y: float) -> np.ndarray:
    v = np.zeros((4, 4), dtype=np.complex128)
    v[0, 1] = v[1, 3] = x
    v[0, 2] = v[2, 3] = y
    return v


def varopoulos_matrices(cfg: VaropoulosConfig) -> list[np.ndarray]:
    return [cfg.c * np.eye(4) + varopoulos_matrix(x, y) for x, y in cfg.xs]


def varopoulos_tuple(cfg: VaropoulosConfig) -> CommutingTuple:
    """``A_j = c I + V_j``, three commuting invertible contractions."""
    return CommutingTuple(varopoulos_matrices(cfg), description=f"varopoulos c={cfg.c!r}")


def pv_closed_form(cfg: VaropoulosConfig) -> np.ndarray:
    """``p_V(A_1, A_2, A_3)`` assembled entry by entry from the sign matrix."""
    c = cfg.c
    x = np.array([v[0] for v in cfg.xs])
    y = np.array([v[1] for v in cfg.xs])
    xsum = x[:, None] + x[None, :]
    ysum = y[:, None] + y[None, :]
    inner = np.outer(x, x) + np.outer(y, y)
    out = np.zeros((4, 4), dtype=np.complex128)
    out[np.diag_indices(4)] = c * c * SIGNS.sum()
    out[0, 1] = out[1, 3] = c * np.sum(SIGNS * xsum)
    out[0, 2] = out[2, 3] = c * np.sum(SIGNS * ysum)
    out[0, 3] = np.sum(SIGNS * inner)
    return out


def norm_lower_bound(c: float) -> float:
    """``6 (1 - c)^2``, the (1,4) entry of ``p_V(A)`` for the default vectors."""
    return 6 * (1 - c) ** 2


def threshold() -> float:
    """Largest ``c`` with ``6 (1 - c)^2 >= 5``."""
    return 1 / (6 + math.sqrt(30))


# --------------------------------------------------------------------------
# tensor witness


def geometric_vector(w: Sequence[complex], box: Box) -> np.ndarray:
    """Normalized ``(conj(w)^alpha)`` over the fibers of ``box`` in rank order."""
    grid = box.grid()
    vals = np.prod(np.conj(np.asarray(w, dtype=np.complex128))[None, :] ** grid, axis=1)
    return vals / np.linalg.norm(vals)


def witness_lower_bound(a: CommutingTuple, w: Sequence[complex], box: Box, p: MultiPoly) -> float:
    """Lower bound on ``|p(A (x) S_box)|`` from one test vector.

    ``kappa`` is nearly an eigenvector of every ``S_j*`` with eigenvalue
    ``conj(w_j)``, so ``p(A (x) S)* (x (x) kappa)`` is close to
    ``p(A w)* x (x) kappa``; ``x`` is chosen to make ``|p(A w)* x|``
    maximal. The returned norm is exact for that vector.
    """
    if any(abs(z) > 1 + 1e-12 for z in w):
        raise ValueError("w must lie in the closed polydisc")
    mats = a.dense()
    scaled = CommutingTuple([complex(z) * m for z, m in zip(w, mats)], a.description)
    paw = eval_poly_on_tuple(p, scaled).dense()
    _, x = top_right_singular_vector(paw.conj().T)
    kappa = geometric_vector(w, box)
    t = build_truncated_multishift(constant_weight_family(mats), box, validate=False)
    v = np.outer(kappa, x).reshape(-1)  # fiber-major
    return float(np.linalg.norm(sparse_poly_apply(p, t, v, adjoint=True)))


# --------------------------------------------------------------------------
# threshold sweep


@dataclass
class SweepResult:
    rows: list[dict]
    bound_boundary: float | None
    verdict_boundary: float | None
    sup: SupBracket

    def to_json(self) -> dict:
        return {
            "rows": self.rows,
            "sup": {"lower": self.sup.lower, "upper": self.sup.upper, "witness": list(self.sup.witness)},
            "bound_boundary": self.bound_boundary,
            "verdict_boundary": self.verdict_boundary,
            "threshold": threshold(),
        }

    def summary(self) -> str:
        def fmt(v):
            return "none in range" if v is None else f"{v:.6f}"

        return "\n".join([
            f"sup bracket [{self.sup.lower:.6f}, {self.sup.upper:.6f}]",
            f"6(1-c)^2 exceeds the sup upper bound up to c = {fmt(self.bound_boundary)}",
            f"computed norm certifies a violation up to c = {fmt(self.verdict_boundary)}",
            f"1/(6+sqrt(30)) = {threshold():.6f}",
        ])


def _boundary(cs: Sequence[float], flags: Sequence[bool]) -> float | None:
    """Midpoint between the last flagged value of an initial flagged run and its successor."""
    if not flags or not flags[0]:
        return None
    k = 0
    while k + 1 < len(flags) and flags[k + 1]:
        k += 1
    if k + 1 == len(flags):
        return float(cs[k])
    return 0.5 * (cs[k] + cs[k + 1])


def sweep_c(c_values: Sequence[float], p: MultiPoly | None = None, cfg: CheckConfig = CheckConfig()) -> SweepResult:
    """Check the Varopoulos tuple at each ``c`` (default vectors)."""
    p = varopoulos_kaijser() if p is None else p
    cs = sorted(float(c) for c in c_values)
    sup = certified_sup(p, cfg)
    rows = []
    for c in cs:
        rep = check_vn(varopoulos_tuple(VaropoulosConfig.default(c)), p, cfg)
        rows.append({
            "c": c, "lhs": rep.lhs.value, "norm_bound": norm_lower_bound(c),
            "sup_lower": rep.sup.lower, "sup_upper": rep.sup.upper,
            "verdict": rep.verdict, "margin": rep.margin,
        })
    bound_flags = [r["norm_bound"] > sup.upper for r in rows]
    verdict_flags = [r["verdict"] == VIOLATED for r in rows]
    return SweepResult(rows, _boundary(cs, bound_flags), _boundary(cs, verdict_flags), sup)


# --------------------------------------------------------------------------
# random tuples


def random_contraction(rng: np.random.Generator, n: int) -> np.ndarray:
    """Gaussian matrix rescaled to a norm drawn uniformly from (0, 1]."""
    g = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return g * (1.0 - float(rng.uniform())) / op_norm_dense(g)


def random_commuting_pair(rng: np.random.Generator, n: int) -> CommutingTuple:
    """``(q_1(C), q_2(C))`` for a random matrix ``C``, each rescaled into the unit ball."""
    c = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    one = CommutingTuple([c])
    ops = []
    for _ in range(2):
        q = random_poly(rng, 1, 3)
        m = eval_poly_on_tuple(q, one).dense()
        norm = op_norm_dense(m)
        if norm == 0:
            m, norm = np.eye(n, dtype=np.complex128), 1.0
        ops.append(m * (1.0 - float(rng.uniform())) / norm)
    return CommutingTuple(ops, description=f"commuting pair n={n}")


def suite_verdicts(tuples: Sequence[CommutingTuple], polys: Sequence[MultiPoly], cfg: CheckConfig) -> dict:
    """Verdict counts over every (tuple, polynomial) pair."""
    for p in polys:
        certified_sup(p, cfg)
    with ThreadPoolExecutor(max_workers=max(1, cfg.threads)) as pool:
        batches = list(pool.map(lambda t: check_vn_many(t, polys, cfg), tuples))
    counts = {HOLDS: 0, VIOLATED: 0, INCONCLUSIVE: 0}
    worst = -math.inf
    for batch in batches:
        for rep in batch:
            counts[rep.verdict] += 1
            worst = max(worst, rep.lhs.value - rep.sup.upper)
    return {"counts": counts, "max_excess": worst}


def default_threads() -> int:
    return int(os.environ.get("VNLAB_THREADS", os.cpu_count() or 1))


def with_overrides(cfg: CheckConfig, **kw) -> CheckConfig:
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
