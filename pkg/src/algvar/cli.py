"""Command-line interface: load model files, run checks, emit reports.

Exit codes: 0 when the requested check passes (for ``classify``: fully
variational), 1 on a failed/degenerate check, 2 on usage or model errors.
Structured output is versioned JSON; identical model + seed produce
byte-identical documents.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .algebroid import (
    RegularityError,
    Report,
    local_exactness_check,
    validate_structure,
)
from .jets import EvaluationError
from .model import ModelError, ModelFile, load
from .morphism import check_morphism, reduction_check, sode_related
from .sode import (
    Classification,
    HelmholtzReport,
    classify_full,
    helmholtz_residuals,
)
from .variational import (
    DegenerateLagrangianError,
    ReconstructionError,
    el_residual,
    reconstruct_lagrangian,
    sode_from_lagrangian,
)

SCHEMA_ID = "algvar.report/1"

REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema", "model", "command", "tolerance", "seed", "checks", "exit_code"],
    "properties": {
        "schema": {"const": SCHEMA_ID},
        "model": {"type": "string"},
        "command": {"type": "string"},
        "tolerance": {"type": "number"},
        "seed": {"type": "integer"},
        "count": {"type": "integer"},
        "classification": {"type": ["string", "null"]},
        "exit_code": {"type": "integer", "enum": [0, 1]},
        "checks": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "passed"],
                "properties": {
                    "id": {"type": "string"},
                    "passed": {"type": "boolean"},
                    "error": {"type": "string"},
                    "classification": {"type": ["string", "null"]},
                    "max_residual": {"type": "number"},
                    "blocks": {
                        "type": "object",
                        "additionalProperties": {
                            "type": "object",
                            "required": ["passed", "max_residual", "entries"],
                            "properties": {
                                "passed": {"type": "boolean"},
                                "max_residual": {"type": "number"},
                                "entries": {"type": "array", "items": {"type": "object"}},
                            },
                        },
                    },
                    "entries": {"type": "array", "items": {"type": "object"}},
                },
            },
        },
    },
}


def _entry_dict(e) -> dict:
    out = {
        "condition": e.condition,
        "indices": list(e.indices),
        "point": list(e.point),
        "residual": e.residual,
        "scale": e.scale,
    }
    if e.label is not None:
        out["label"] = e.label
    return out


def _report_payload(rep: Report) -> dict:
    return {
        "passed": rep.passed,
        "max_residual": rep.max_residual,
        "tolerance": rep.tolerance,
        "errors": rep.errors,
        "entries": [_entry_dict(e) for e in rep.entries],
    }


def _hreport_payload(rep: HelmholtzReport) -> dict:
    blocks = {}
    for name, entries in rep.blocks.items():
        blocks[name] = {
            "passed": rep.block_passes(name),
            "max_residual": rep.block_max(name),
            "entries": [_entry_dict(e) for e in entries],
        }
    return {
        "passed": rep.all_pass(),
        "tolerance": rep.tolerance,
        "classification": str(rep.classification) if rep.classification else None,
        "degenerate_points": rep.degenerate_points,
        "errors": rep.errors,
        "blocks": blocks,
    }


def _emit(args, payload: dict, text_lines: list[str]) -> None:
    if args.format == "structured":
        print(json.dumps(payload, indent=2, sort_keys=False))
    else:
        for line in text_lines:
            print(line)


def _block_summary(rep: HelmholtzReport) -> list[str]:
    lines = []
    for name in rep.blocks:
        status = "pass" if rep.block_passes(name) else "FAIL"
        lines.append(
            f"  {name}: max residual {rep.block_max(name):.3e} "
            f"({len(rep.blocks[name])} entries) {status}"
        )
    if rep.degenerate_points:
        lines.append(f"  degenerate multiplier at {len(rep.degenerate_points)} point(s)")
    return lines


def cmd_validate(model: ModelFile, args) -> int:
    E = model.require("E")
    rep = validate_structure(E, model.sampling.base_points(E), model.tolerance)
    payload = {"check": "structure", **_report_payload(rep)}
    text = [
        f"structure equations over {len(rep.entries)} entries:",
        f"  anchor compatibility: max residual {rep.max_for('anchor'):.3e}",
        f"  Jacobi cyclic sum:    max residual {rep.max_for('jacobi'):.3e}",
        "PASS" if rep.passed else "FAIL",
    ]
    _emit(args, payload, text)
    return 0 if rep.passed else 1


def cmd_helmholtz(model: ModelFile, args) -> int:
    E = model.require("E")
    gamma = model.require("sode")
    F = model.require("multiplier")
    pts = model.sampling.full_points(E, exclude_y_ball=0.1)
    rep = helmholtz_residuals(E, gamma, F, pts, model.tolerance)
    ok = rep.all_pass(("R1", "R2", "R3")) and not rep.degenerate_points
    _emit(args, {"check": "helmholtz", **_hreport_payload(rep)},
          ["Helmholtz conditions:"] + _block_summary(rep) + ["PASS" if ok else "FAIL"])
    return 0 if ok else 1


def cmd_classify(model: ModelFile, args) -> int:
    E = model.require("E")
    gamma = model.require("sode")
    F = model.require("multiplier")
    pts = model.sampling.full_points(E, exclude_y_ball=0.1)
    rep = classify_full(E, gamma, F, pts, model.tolerance)
    _emit(args, {"check": "classify", **_hreport_payload(rep)},
          [str(rep.classification)] + _block_summary(rep))
    return 0 if rep.classification == Classification.VARIATIONAL else 1


def cmd_derive_sode(model: ModelFile, args) -> int:
    E = model.require("E")
    L = model.require("lagrangian")
    pts = model.sampling.full_points(E)
    rows = []
    try:
        for pt in pts:
            gamma = sode_from_lagrangian(E, L, pt)
            rows.append({"point": [float(v) for v in pt], "Gamma": [float(g) for g in gamma]})
    except DegenerateLagrangianError as exc:
        _emit(args, {"check": "derive-sode", "passed": False, "error": str(exc)},
              [f"degenerate Lagrangian: {exc}"])
        return 1
    text = [f"Gamma at {len(rows)} points (showing up to 5):"]
    for row in rows[:5]:
        text.append(f"  {row['point']} -> {row['Gamma']}")
    _emit(args, {"check": "derive-sode", "passed": True, "rows": rows}, text)
    return 0


def cmd_el_residual(model: ModelFile, args) -> int:
    E = model.require("E")
    L = model.require("lagrangian")
    gamma = model.require("sode")
    pts = model.sampling.full_points(E)
    worst = 0.0
    rows = []
    for pt in pts:
        res = el_residual(E, L, gamma, pt)
        rows.append({"point": [float(v) for v in pt], "residual": [float(r) for r in res]})
        if res.size:
            worst = max(worst, float(np.max(np.abs(res))))
    ok = worst <= model.tolerance
    _emit(args, {"check": "el-residual", "passed": ok, "max_residual": worst, "rows": rows},
          [f"Euler-Lagrange residual: max {worst:.3e}", "PASS" if ok else "FAIL"])
    return 0 if ok else 1


def _infer_mode(E) -> str | None:
    if E.m == 0:
        return "zero_anchor"
    if E.m == E.n:
        return "full_rank_square"
    return None


def cmd_reconstruct(model: ModelFile, args) -> int:
    E = model.require("E")
    gamma = model.require("sode")
    F = model.require("multiplier")
    mode = args.mode or _infer_mode(E)
    if mode is None:
        print(
            "reconstruct: cannot infer a mode (need a zero anchor or m = n); "
            "pass --mode",
            file=sys.stderr,
        )
        return 2
    if args.basepoint is not None:
        try:
            parts = [p for p in args.basepoint.split(",") if p.strip()]
            basepoint = np.array([float(v) for v in parts])
        except ValueError:
            print(f"bad --basepoint '{args.basepoint}'", file=sys.stderr)
            return 2
        if basepoint.shape != (E.m,):
            print(f"--basepoint needs {E.m} comma-separated values", file=sys.stderr)
            return 2
    else:
        basepoint = np.zeros(E.m)
    try:
        rec = reconstruct_lagrangian(
            E, gamma, F, basepoint, mode,
            box=(model.sampling.lo, model.sampling.hi),
            seed=model.sampling.seed,
        )
    except ReconstructionError as exc:
        _emit(args, {"check": "reconstruct", "passed": False, "error": str(exc),
                     "diagnostics": getattr(exc, "diagnostics", {})},
              [f"reconstruction failed: {exc}"])
        return 1
    pts = model.sampling.full_points(E)[:5]
    samples = [
        {"point": [float(v) for v in pt], "L": rec.value_at(pt)} for pt in pts
    ]
    _emit(args, {"check": "reconstruct", "passed": True, "mode": mode,
                 "basepoint": [float(v) for v in basepoint], "samples": samples},
          [f"reconstructed Lagrangian ({mode}), pinned to 0 at the basepoint"]
          + [f"  L{s['point']} = {s['L']:.6f}" for s in samples])
    return 0


def cmd_morphism_check(model: ModelFile, args) -> int:
    psi = model.require("morphism")
    src, tgt = model.require("source"), model.require("target")
    pts = model.sampling.full_points(src.E)
    checks = []
    rep = check_morphism(psi, pts[:, : src.E.m], model.tolerance)
    checks.append(("morphism", rep.passed, _report_payload(rep)))
    if src.sode is not None and tgt.sode is not None:
        rel = sode_related(psi, src.sode, tgt.sode, pts, model.tolerance)
        checks.append(("sode_related", rel.passed, _report_payload(rel)))
        if tgt.multiplier is not None:
            red = reduction_check(psi, src.sode, tgt.sode, tgt.multiplier, pts, model.tolerance)
            payload = {
                "target_classification": str(red.target_classification),
                "report": _hreport_payload(red.report),
            }
            checks.append(("reduction", red.passed, payload))
    ok = all(c[1] for c in checks)
    payload = {"check": "morphism-check",
               "checks": [{"id": c[0], "passed": c[1], **c[2]} for c in checks],
               "passed": ok}
    text = [f"  {c[0]}: {'pass' if c[1] else 'FAIL'}" for c in checks]
    _emit(args, payload, ["morphism checks:"] + text + ["PASS" if ok else "FAIL"])
    return 0 if ok else 1


def cmd_report(model: ModelFile, args) -> int:
    checks: list[dict] = []
    classification = None
    ok = True

    def add(check_id: str, passed: bool, payload: dict):
        nonlocal ok
        ok = ok and passed
        checks.append({"id": check_id, "passed": passed, **payload})

    if model.E is not None:
        E = model.E
        rep = validate_structure(E, model.sampling.base_points(E), model.tolerance)
        add("structure", rep.passed, _report_payload(rep))
        if model.section is not None:
            try:
                rep = local_exactness_check(
                    E, model.section, model.sampling.base_points(E), model.tolerance
                )
                add("exactness", rep.passed, _report_payload(rep))
            except RegularityError as exc:
                add("exactness", False, {"error": str(exc)})
        if model.sode is not None and model.multiplier is not None:
            pts = model.sampling.full_points(E, exclude_y_ball=0.1)
            rep = classify_full(E, model.sode, model.multiplier, pts, model.tolerance)
            classification = str(rep.classification)
            add(
                "classify",
                rep.classification == Classification.VARIATIONAL,
                _hreport_payload(rep),
            )
        if model.sode is not None and model.lagrangian is not None:
            pts = model.sampling.full_points(E)
            worst = 0.0
            for pt in pts:
                res = el_residual(E, model.lagrangian, model.sode, pt)
                if res.size:
                    worst = max(worst, float(np.max(np.abs(res))))
            add("el-residual", worst <= model.tolerance, {"max_residual": worst})
    if model.morphism is not None:
        src, tgt = model.source, model.target
        pts = model.sampling.full_points(src.E)
        rep = check_morphism(model.morphism, pts[:, : src.E.m], model.tolerance)
        add("morphism", rep.passed, _report_payload(rep))
        if src.sode is not None and tgt.sode is not None:
            rel = sode_related(model.morphism, src.sode, tgt.sode, pts, model.tolerance)
            add("sode_related", rel.passed, _report_payload(rel))
            if tgt.multiplier is not None:
                red = reduction_check(
                    model.morphism, src.sode, tgt.sode, tgt.multiplier, pts, model.tolerance
                )
                add("reduction", red.passed, {
                    "target_classification": str(red.target_classification),
                    "report": _hreport_payload(red.report),
                })
    doc = {
        "schema": SCHEMA_ID,
        "model": model.name,
        "command": "report",
        "tolerance": model.tolerance,
        "seed": model.sampling.seed,
        "count": model.sampling.count,
        "classification": classification,
        "checks": checks,
        "exit_code": 0 if ok else 1,
    }
    text = json.dumps(doc, indent=2, sort_keys=False)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 0 if ok else 1


COMMANDS = {
    "validate": cmd_validate,
    "helmholtz": cmd_helmholtz,
    "classify": cmd_classify,
    "derive-sode": cmd_derive_sode,
    "el-residual": cmd_el_residual,
    "reconstruct": cmd_reconstruct,
    "morphism-check": cmd_morphism_check,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="algvar",
        description="Helmholtz conditions and variationality of SODEs on Lie algebroids",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("model", help="path to a model file")
        p.add_argument("--points", type=int, default=None, help="sample-point count")
        p.add_argument("--tol", type=float, default=None, help="tolerance override")
        p.add_argument("--seed", type=int, default=None, help="sampling seed override")
        p.add_argument(
            "--format", choices=("text", "structured"), default="text",
            help="output format",
        )
        if name == "reconstruct":
            p.add_argument("--mode", choices=("zero_anchor", "full_rank_square"))
            p.add_argument("--basepoint", help="comma-separated base coordinates")
        if name == "report":
            p.add_argument("--output", "-o", help="write the JSON document to a file")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        model = load(args.model)
    except (ModelError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.tol is not None:
        model.tolerance = args.tol
    if args.seed is not None:
        model.sampling.seed = args.seed
    if args.points is not None:
        model.sampling.count = args.points
        model.sampling.points = None
    try:
        return COMMANDS[args.command](model, args)
    except ModelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RegularityError as exc:
        print(f"regularity violation: {exc}", file=sys.stderr)
        return 1
    except EvaluationError as exc:
        print(f"evaluation error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
