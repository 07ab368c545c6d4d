"""Command line entry point: solve, analyze, verify and sweep subcommands.

Exit codes: 0 when every asserted verdict passes, 1 when any fails, 2 when
any is inconclusive or the run could not be completed.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .errors import CritlabError, InvalidParams
from .mesh import export_mesh, generate_mesh, import_mesh
from .report import (build_report, clean, read_field_csv, write_artifacts, write_branch_csv,
                     write_field_csv, write_json)
from .scenario import (analyze, exit_code, load_config, output_dir_for, result_from_values,
                       run_scenario, solve_scenario, sweep)
from .solver import Branch

def _print(payload) -> None:
    print(json.dumps(clean(payload), indent=2, sort_keys=True))


def _summary(verdicts) -> dict:
    return {v.name: v.status + ("" if v.asserted else " (census)") for v in verdicts}


def cmd_solve(args) -> int:
    cfg = load_config(args.config)
    out = output_dir_for(cfg, args.out)
    out.mkdir(parents=True, exist_ok=True)
    domain, mesh, res, branch = solve_scenario(cfg)
    write_field_csv(out / "field.csv", mesh, res.u)
    export_mesh(mesh, out / "mesh.txt")
    write_branch_csv(out / "branch.csv", branch)
    info = {"lambda": res.lam, "u_max": res.u_max, "residual": res.residual_norm,
            "newton_iters": res.newton_iters, "positive": res.positive,
            "n_vertices": mesh.n_vertices, "out_dir": str(out)}
    write_json(out / "solve.json", info)
    _print(info)
    return 0


def _load_mesh(cfg, domain, field_path: Path, mesh_path):
    if mesh_path is None and (field_path.parent / "mesh.txt").exists():
        mesh_path = field_path.parent / "mesh.txt"
    if mesh_path is not None:
        return import_mesh(mesh_path, h=float(cfg.mesh_h), domain=domain)
    # the mesher is deterministic, so the config reproduces the saved vertices
    return generate_mesh(domain, float(cfg.mesh_h))


def _read_branch(path: Path) -> Branch | None:
    if not path.exists():
        return None
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return None
    return Branch([float(r["lambda"]) for r in rows], [float(r["u_max"]) for r in rows],
                  [int(r["iters"]) for r in rows], [])


def cmd_analyze(args) -> int:
    cfg = load_config(args.config)
    field_path = Path(args.field)
    domain = cfg.domain_obj()
    mesh = _load_mesh(cfg, domain, field_path, args.mesh)
    xy, u = read_field_csv(field_path)
    if len(u) != mesh.n_vertices or np.abs(xy - mesh.vertices).max() > 1e-9:
        raise InvalidParams("field CSV does not match the mesh vertices")
    nl = cfg.nonlinearity_obj()
    res = result_from_values(mesh, nl, u)
    branch = _read_branch(field_path.parent / "branch.csv") or Branch([nl.lam], [res.u_max], [0], [])
    an = analyze(cfg, domain, mesh, res, branch)
    report = build_report(an)
    out = output_dir_for(cfg, args.out)
    write_artifacts(an, report, out)
    _print({"verdicts": _summary(an.verdicts), "out_dir": str(out)})
    return exit_code(an.verdicts)


def cmd_verify(args) -> int:
    cfg = load_config(args.config)
    r = run_scenario(cfg, write=True, out_dir=args.out)
    _print({"verdicts": _summary(r.verdicts), "artifacts": r.artifacts,
            "error": r.report.get("error")})
    return r.exit_code


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    values = [_parse_value(v) for v in args.values]
    rows = sweep(cfg, args.param, values, write=True, out_dir=args.out)
    _print({"parameter": args.param, "rows": rows,
            "table": str(output_dir_for(cfg, args.out) / "sweep.csv")})
    codes = {int(r.get("exit_code") or 0) for r in rows}
    return 1 if 1 in codes else (2 if 2 in codes else 0)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="critlab", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve the scenario and write field.csv, mesh.txt, branch.csv")
    s.add_argument("config", type=Path)
    s.add_argument("--out", type=Path, default=None)
    s.set_defaults(func=cmd_solve)

    a = sub.add_parser("analyze", help="run the verdict pipeline on a saved field")
    a.add_argument("config", type=Path)
    a.add_argument("--field", type=Path, required=True, help="CSV with columns x,y,u")
    a.add_argument("--mesh", type=Path, default=None,
                   help="mesh file (default: mesh.txt next to the field, else regenerate)")
    a.add_argument("--out", type=Path, default=None)
    a.set_defaults(func=cmd_analyze)

    v = sub.add_parser("verify", help="solve and run the full verdict pipeline")
    v.add_argument("config", type=Path)
    v.add_argument("--out", type=Path, default=None)
    v.set_defaults(func=cmd_verify)

    w = sub.add_parser("sweep", help="run one scenario per parameter value")
    w.add_argument("config", type=Path)
    w.add_argument("--param", required=True, help="dotted path, e.g. domain.params.w")
    w.add_argument("--values", nargs="*", default=[], help="values (parsed as JSON when possible)")
    w.add_argument("--out", type=Path, default=None)
    w.set_defaults(func=cmd_sweep)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return int(args.func(args))
    except (CritlabError, OSError, ValueError, KeyError) as exc:
        print(f"critlab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
