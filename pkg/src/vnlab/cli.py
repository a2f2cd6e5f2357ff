"""Command-line front end.

Exit codes: 0 success (or ``holds``), 1 malformed input, 2 rejected
weights, 3 ``violated``, 4 ``inconclusive``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from importlib import resources
from pathlib import Path

import numpy as np
from jsonschema import Draft202012Validator

from . import vncheck
from .errors import (
    InvalidConfig,
    NonCommutingTuple,
    NonUnitaryWeights,
    PathDependence,
    RuleDomainTooSmall,
    SchemaError,
    VnLabError,
)
from .lattice import Box
from .multishift import (
    CommutingTuple,
    build_truncated_multishift,
    decompose_diagonal,
    unitary_intertwiner,
    validate_weights,
    weights_from_json,
)
from .poly import MatrixPoly, matrix_from_json, poly_from_json, varopoulos_kaijser

log = logging.getLogger("vnlab")

EXIT_OK, EXIT_INPUT, EXIT_REJECTED, EXIT_VIOLATED, EXIT_INCONCLUSIVE = 0, 1, 2, 3, 4
VERDICT_EXIT = {vncheck.HOLDS: EXIT_OK, vncheck.VIOLATED: EXIT_VIOLATED, vncheck.INCONCLUSIVE: EXIT_INCONCLUSIVE}


def load_schema(name: str) -> dict:
    text = resources.files("vnlab").joinpath("schemas", f"{name}.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def json_path(parts) -> str:
    out = "$"
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else f".{p}"
    return out


def validate_document(doc, schema_name: str):
    """Raise ``SchemaError`` at the deepest offending location, if any."""
    validator = Draft202012Validator(load_schema(schema_name))
    errors = sorted(validator.iter_errors(doc), key=lambda e: (-len(e.absolute_path), json_path(e.absolute_path)))
    if not errors:
        return
    err = _deepest_cause(errors[0])
    raise SchemaError(err.message, json_path(err.absolute_path))


def _deepest_cause(err):
    # oneOf failures report the root; follow the branch whose kind matched
    while err.context:
        branches: dict = {}
        for e in err.context:
            branches.setdefault(e.relative_schema_path[0], []).append(e)
        matched = [b for b in branches.values() if not any(e.validator == "const" for e in b)]
        pool = [e for b in (matched or branches.values()) for e in b]
        err = max(pool, key=lambda e: len(e.absolute_path))
    return err


def read_json(path: str, schema_name: str):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    validate_document(doc, schema_name)
    return doc


def dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def emit(obj, args, schema_name: str):
    validate_document(obj, schema_name)
    text = dump(obj)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def parse_box(text: str | None, d: int) -> Box:
    if text is None:
        return Box.cube(4, d)
    sides = [int(s) for s in text.split(",")]
    if len(sides) == 1:
        sides = sides * d
    if len(sides) != d:
        raise SchemaError(f"box {text!r} has {len(sides)} sides for arity {d}", "--box")
    return Box(sides)


def check_config(args) -> vncheck.CheckConfig:
    return vncheck.CheckConfig(
        grid_n=args.grid_n, refine_steps=args.refine_steps,
        sup_target_width=args.sup_width if args.sup_width > 0 else None,
        power_tol=args.power_tol, power_max_iter=args.power_max_iter,
        seed=args.seed, threads=args.threads,
    )


# --------------------------------------------------------------------------
# commands


def cmd_validate(args) -> int:
    w = weights_from_json(read_json(args.weights, "weights"))
    report = validate_weights(w, parse_box(args.box, w.d))
    emit(report.to_json(), args, "validation-report")
    return EXIT_OK if report.accepted else EXIT_REJECTED


def _load_tuple(args) -> CommutingTuple:
    sources = [s for s in (args.varopoulos is not None, args.weights, args.tuple) if s]
    if len(sources) != 1:
        raise SchemaError("give exactly one of --varopoulos, --weights, --tuple", "argv")
    if args.varopoulos is not None:
        try:
            return vncheck.varopoulos_tuple(vncheck.VaropoulosConfig.default(args.varopoulos))
        except InvalidConfig as exc:
            raise SchemaError(str(exc), "--varopoulos") from exc
    if args.weights:
        w = weights_from_json(read_json(args.weights, "weights"))
        return build_truncated_multishift(w, parse_box(args.box, w.d))
    doc = read_json(args.tuple, "tuple")
    ops = []
    for j, m in enumerate(doc["operators"]):
        mat = matrix_from_json(m) if all(len(r) == len(m) for r in m) else None
        if mat is None:
            raise SchemaError("operator must be square", f"$.operators[{j}]")
        ops.append(mat)
    if any(m.shape != ops[0].shape for m in ops):
        raise SchemaError("operators must share one size", "$.operators")
    return CommutingTuple(ops, doc.get("description", Path(args.tuple).stem))


def _load_poly(args):
    if args.pv == bool(args.poly):
        raise SchemaError("give exactly one of --pv, --poly", "argv")
    if args.pv:
        return varopoulos_kaijser()
    doc = read_json(args.poly, "polynomial")
    d = doc["d"]
    for i, t in enumerate(doc["terms"]):
        if len(t["alpha"]) != d:
            raise SchemaError(f"alpha has {len(t['alpha'])} entries, expected {d}", f"$.terms[{i}].alpha")
        if "block" in t:
            m = doc["m"]
            if len(t["block"]) != m or any(len(r) != m for r in t["block"]):
                raise SchemaError(f"block must be {m}x{m}", f"$.terms[{i}].block")
    return poly_from_json(doc)


def cmd_check(args) -> int:
    t = _load_tuple(args)
    p = _load_poly(args)
    if p.d != t.d:
        raise SchemaError(f"polynomial arity {p.d} does not match tuple arity {t.d}", "$.d")
    cfg = check_config(args)
    if isinstance(p, MatrixPoly):
        report = vncheck.check_matrix_vn(t, p, cfg)
    else:
        report = vncheck.check_vn(t, p, cfg)
    out = report.to_json()
    out["config"] = cfg.to_json()
    emit(out, args, "report")
    return VERDICT_EXIT[report.verdict]


def cmd_sweep(args) -> int:
    if args.steps < 2:
        raise SchemaError("--steps must be at least 2", "--steps")
    cs = np.linspace(args.c_from, args.c_to, args.steps)
    if cs.min() <= 0 or cs.max() >= 1:
        raise SchemaError("c values must lie in (0, 1)", "--c-from")
    cfg = check_config(args)
    result = vncheck.sweep_c(cs, cfg=cfg)
    out = result.to_json()
    out["config"] = cfg.to_json()
    emit(out, args, "sweep")
    sys.stderr.write(result.summary() + "\n")
    return EXIT_OK


def cmd_intertwine(args) -> int:
    wa = weights_from_json(read_json(args.weights_a, "weights"))
    wb = weights_from_json(read_json(args.weights_b, "weights"))
    try:
        report = unitary_intertwiner(wa, wb, parse_box(args.box, wa.d))
    except (NonUnitaryWeights, PathDependence) as exc:
        log.error("%s", exc)
        return EXIT_REJECTED
    emit(report.to_json(), args, "intertwine-report")
    return EXIT_OK


def cmd_decompose(args) -> int:
    w = weights_from_json(read_json(args.weights, "weights"))
    result = decompose_diagonal(w, parse_box(args.box, w.d))
    emit(result.to_json(), args, "decompose-report")
    return EXIT_OK


def reproduce_example(c: float, cfg: vncheck.CheckConfig) -> dict:
    """Build the Varopoulos tuple at ``c``, compare with the closed form and check ``p_V``."""
    vcfg = vncheck.VaropoulosConfig.default(c)
    t = vncheck.varopoulos_tuple(vcfg)
    p = varopoulos_kaijser()
    from .calculus import eval_poly_on_tuple

    oracle = float(np.abs(eval_poly_on_tuple(p, t).dense() - vncheck.pv_closed_form(vcfg)).max())
    report = vncheck.check_vn(t, p, cfg)
    bound = vncheck.norm_lower_bound(c)
    reproduced = (
        report.verdict == vncheck.VIOLATED
        and report.lhs.value >= bound - 1e-12
        and report.sup.lower - 1e-12 <= 5 <= report.sup.upper + 1e-12
        and oracle <= 1e-10
    )
    return {
        "c": c, "norm_bound": bound, "oracle_defect": oracle,
        "report": report.to_json(), "reproduced": reproduced,
    }


def cmd_reproduce_example(args) -> int:
    out = reproduce_example(args.c, check_config(args))
    emit(out, args, "example-report")
    rep = out["report"]
    sys.stderr.write(
        f"|p_V(A)| = {rep['lhs']['value']:.6f} >= 6(1-c)^2 = {out['norm_bound']:.6f}; "
        f"sup in [{rep['sup']['lower']:.6f}, {rep['sup']['upper']:.6f}]; "
        f"verdict {rep['verdict']} with margin {rep['margin']:.4f}\n"
    )
    return EXIT_OK if out["reproduced"] else EXIT_INCONCLUSIVE


# --------------------------------------------------------------------------
# parser


def _env_int(name: str, default: int) -> int:
    value = os.environ.get(name)
    return int(value) if value not in (None, "") else default


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vnlab", description="von Neumann inequality laboratory")
    parser.add_argument("--threads", type=int, default=_env_int("VNLAB_THREADS", os.cpu_count() or 1),
                        help="worker threads (env VNLAB_THREADS)")
    parser.add_argument("--seed", type=int, default=_env_int("VNLAB_SEED", 0), help="seed (env VNLAB_SEED)")
    parser.add_argument("--output", "-o", help="write JSON here instead of stdout")
    parser.add_argument("--debug", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def precision(p):
        p.add_argument("--grid-n", type=int, default=200, help="torus grid points per axis")
        p.add_argument("--refine-steps", type=int, default=20)
        p.add_argument("--sup-width", type=float, default=1e-3,
                       help="bisect cells until the sup bracket is this narrow (0 disables)")
        p.add_argument("--power-tol", type=float, default=1e-10)
        p.add_argument("--power-max-iter", type=int, default=5000)

    p = sub.add_parser("validate", help="check boundedness and commutation of a weight family")
    p.add_argument("weights")
    p.add_argument("--box", help="sides m1,...,md (one value means a cube)")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("check", help="adjudicate the inequality for one tuple and polynomial")
    p.add_argument("--varopoulos", type=float, metavar="C", help="built-in Varopoulos tuple at c")
    p.add_argument("--weights", help="weight family JSON; checks its truncated multishift")
    p.add_argument("--tuple", help="dense tuple JSON")
    p.add_argument("--pv", action="store_true", help="built-in Varopoulos-Kaijser polynomial")
    p.add_argument("--poly", help="polynomial JSON")
    p.add_argument("--box")
    precision(p)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("sweep", help="scan c for the Varopoulos family")
    p.add_argument("--c-from", type=float, default=0.05)
    p.add_argument("--c-to", type=float, default=0.12)
    p.add_argument("--steps", type=int, default=200)
    precision(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("intertwine", help="unitary equivalence of two unitary weight families")
    p.add_argument("weights_a")
    p.add_argument("weights_b")
    p.add_argument("--box")
    p.set_defaults(func=cmd_intertwine)

    p = sub.add_parser("decompose", help="split diagonal weights into classical multishifts")
    p.add_argument("weights")
    p.add_argument("--box")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("reproduce-example", help="end-to-end Varopoulos counterexample")
    p.add_argument("--c", type=float, default=0.05)
    precision(p)
    p.set_defaults(func=cmd_reproduce_example)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.debug else logging.WARNING, format="vnlab: %(message)s")
    if args.threads < 1:
        args.threads = 1
    try:
        return args.func(args)
    except SchemaError as exc:
        sys.stderr.write(dump({"error": exc.message, "path": exc.path}))
        return EXIT_INPUT
    except NonCommutingTuple as exc:
        sys.stderr.write(dump({"error": str(exc), "path": "$"}))
        return EXIT_REJECTED
    except RuleDomainTooSmall as exc:
        sys.stderr.write(dump({"error": str(exc), "path": "--box"}))
        return EXIT_INPUT
    except (VnLabError, ValueError) as exc:
        sys.stderr.write(dump({"error": f"{type(exc).__name__}: {exc}", "path": "$"}))
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
