"""Command-line driver: ``snmasm {gen,solve,compare}``.

Exit codes: 0 success, 2 bad configuration or usage, 3 solver did not
converge, 1 any other failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .discretization import (
    GENERATORS, ConfigError, assemble, gen_problem, save_spec, spec_from_dict,
)
from .eigensolver import SolverError, SolverOptions, newton_solve
from .export import FORMATS, export_flux
from .multilevel import CoarsenOptions, MultilevelHierarchy
from .schwarz import SchwarzError, hierarchical_partition, make_ras

EXIT_OK, EXIT_ERROR, EXIT_CONFIG, EXIT_NONCONVERGED = 0, 1, 2, 3

PC_CHOICES = ("none", "ras", "masm", "masm-sub")

# run settings: (default, type); CLI flags override a config's "run" block
RUN_DEFAULTS = {
    "threads": (1, int),
    "np1": (1, int),
    "np2": (1, int),
    "overlap": (0, int),
    "local_solver": ("sor", str),
    "sor_sweeps": (2, int),
    "sor_omega": (1.0, float),
    "pc": ("masm-sub", str),
    "levels": (10, int),
    "theta": (0.08, float),
    "coarsest_size": (200, int),
    "coarsen_block": (0, int),
    "pre_its": (1, int),
    "post_its": (1, int),
    "newton_rtol": (1e-6, float),
    "gmres_rtol": (1e-1, float),
    "gmres_restart": (30, int),
    "max_newton": (50, int),
}


def _common_parser():
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global")
    g.add_argument("--config", type=Path, help="problem/run configuration JSON")
    g.add_argument("--threads", type=int, help="worker threads (default 1)")
    g.add_argument("--deterministic", action="store_true",
                   help="fixed-order reductions (always on; accepted for scripts)")
    g.add_argument("--seed", type=int, default=0, help="seed for randomized checks")
    g.add_argument("--output", type=Path, default=Path("."), help="output directory")
    return p


def _problem_args(p):
    p.add_argument("--problem", choices=sorted(GENERATORS),
                   help="built-in generator instead of --config")
    p.add_argument("--params", default="{}", help="generator parameters as JSON")


def _solver_args(p):
    g = p.add_argument_group("partition")
    g.add_argument("--np1", type=int, help="outer partition count")
    g.add_argument("--np2", type=int, help="inner partition count")
    g.add_argument("--overlap", type=int, help="overlap layers")
    g.add_argument("--local-solver", choices=("sor", "lu"))
    g.add_argument("--sor-sweeps", type=int)
    g.add_argument("--sor-omega", type=float)
    g = p.add_argument_group("preconditioner")
    g.add_argument("--levels", type=int, help="maximum level count")
    g.add_argument("--theta", type=float, help="strength threshold")
    g.add_argument("--coarsest-size", type=int)
    g.add_argument("--coarsen-block", type=int, help="block coarsened by masm-sub")
    g.add_argument("--pre-its", type=int)
    g.add_argument("--post-its", type=int)
    g = p.add_argument_group("solver")
    g.add_argument("--newton-rtol", type=float)
    g.add_argument("--gmres-rtol", type=float)
    g.add_argument("--gmres-restart", type=int)
    g.add_argument("--max-newton", type=int)
    g.add_argument("--no-timing", action="store_true", help="write all times as 0")


def build_parser():
    common = _common_parser()
    parser = argparse.ArgumentParser(prog="snmasm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", parents=[common], help="write a generator's config")
    gen.add_argument("kind", choices=sorted(GENERATORS))
    gen.add_argument("--params", default="{}", help="generator parameters as JSON")
    gen.add_argument("--name", default="problem.json", help="file name inside --output")

    solve = sub.add_parser("solve", parents=[common], help="solve one k-eigenvalue problem")
    _problem_args(solve)
    _solver_args(solve)
    solve.add_argument("--pc", choices=PC_CHOICES)
    solve.add_argument("--flux", choices=FORMATS, help="also export the scalar flux")

    cmp_ = sub.add_parser("compare", parents=[common], help="sweep subdomain counts and pcs")
    _problem_args(cmp_)
    _solver_args(cmp_)
    cmp_.add_argument("--np-list", default="2,4,8,16", help="comma-separated subdomain counts")
    cmp_.add_argument("--pc-list", default="masm,masm-sub", help="comma-separated pcs")
    return parser


# configuration --------------------------------------------------------------

def _load_problem(args):
    if (args.config is None) == (args.problem is None):
        raise ConfigError("problem", "give exactly one of --config or --problem")
    if args.problem is not None:
        return gen_problem(args.problem, _json_arg(args.params, "params")), {}
    try:
        doc = json.loads(args.config.read_text())
    except OSError as exc:
        raise ConfigError("config", f"cannot read {args.config}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"{args.config}: {exc}") from exc
    run = doc.get("run", {}) if isinstance(doc, dict) else {}
    return spec_from_dict(doc), run


def _json_arg(text, key):
    try:
        value = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(key, f"invalid JSON: {exc}") from exc
    if not isinstance(value, dict):
        raise ConfigError(key, "expected a JSON object")
    return value


def resolve_run(args, run):
    """Merge defaults, the config's ``run`` block and explicit flags."""
    unknown = set(run) - set(RUN_DEFAULTS)
    if unknown:
        raise ConfigError(f"run.{sorted(unknown)[0]}", "unknown run setting")
    out = {}
    for key, (default, kind) in RUN_DEFAULTS.items():
        flag = getattr(args, key, None)
        if flag is not None:
            out[key] = flag
        elif key in run:
            try:
                out[key] = kind(run[key])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"run.{key}", f"expected {kind.__name__}") from exc
        else:
            out[key] = default
    if out["pc"] not in PC_CHOICES:
        raise ConfigError("run.pc", f"expected one of {PC_CHOICES}")
    return out


def solver_options(cfg):
    try:
        return SolverOptions(newton_rtol=cfg["newton_rtol"], gmres_rtol=cfg["gmres_rtol"],
                             gmres_restart=cfg["gmres_restart"], max_newton=cfg["max_newton"])
    except ValueError as exc:
        raise ConfigError("solver", str(exc)) from exc


def coarsen_options(cfg):
    try:
        return CoarsenOptions(theta=cfg["theta"], max_levels=cfg["levels"],
                              coarsest_size=cfg["coarsest_size"], pre_its=cfg["pre_its"],
                              post_its=cfg["post_its"], coarsen_block=cfg["coarsen_block"],
                              overlap=cfg["overlap"], local_solver=cfg["local_solver"],
                              sor_sweeps=cfg["sor_sweeps"], sor_omega=cfg["sor_omega"],
                              threads=cfg["threads"])
    except ValueError as exc:
        raise ConfigError("preconditioner", str(exc)) from exc


def build_preconditioner(kind, system, partition, cfg):
    """Preconditioner object, not yet set up (the solver times its setup)."""
    if kind == "none":
        return None
    if kind == "ras":
        return make_ras(system.P, system.layout, partition, cfg["overlap"],
                        cfg["local_solver"], cfg["sor_sweeps"], cfg["sor_omega"],
                        cfg["threads"])
    mode = "masm" if kind == "masm" else "masm_sub"
    return MultilevelHierarchy(system.P, system.layout, partition.vertex_owner, mode,
                               coarsen_options(cfg))


def _report_dict(report, no_timing):
    d = report.without_timing() if no_timing else report.to_dict()
    for k in d:
        if k.startswith("time_"):
            d[k] = round(d[k], 3)
    return d


def _write_json(path, doc):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=False) + "\n")
    return path


# commands ---------------------------------------------------------------------

def cmd_gen(args):
    spec = gen_problem(args.kind, _json_arg(args.params, "params"))
    args.output.mkdir(parents=True, exist_ok=True)
    path = save_spec(spec, args.output / args.name)
    print(path)
    return EXIT_OK


def cmd_solve(args):
    spec, run = _load_problem(args)
    cfg = resolve_run(args, run)
    system = assemble(spec, threads=cfg["threads"])
    partition = hierarchical_partition(spec.mesh, cfg["np1"], cfg["np2"])
    pc = build_preconditioner(cfg["pc"], system, partition, cfg)
    out = args.output
    try:
        state, report = newton_solve(system, pc, solver_options(cfg))
    except SolverError as exc:
        if exc.report is not None:
            _write_json(out / "report.json", _report_dict(exc.report, args.no_timing))
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    _write_json(out / "report.json", _report_dict(report, args.no_timing))
    if isinstance(pc, MultilevelHierarchy):
        _write_json(out / "hierarchy.json", pc.summary())
    if args.flux:
        export_flux(system.scalar_flux(state.psi), spec.mesh, out / f"flux.{args.flux}")
    print(f"k = {state.k:.10f}  newton = {report.iter_newton}  "
          f"gmres/newton = {report.iter_gmres_avg:.2f}  pc = {cfg['pc']}")
    return EXIT_OK


def _int_list(text, key):
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(key, "expected comma-separated integers") from exc
    if not values:
        raise ConfigError(key, "empty list")
    return values


def cmd_compare(args):
    spec, run = _load_problem(args)
    cfg = resolve_run(args, run)
    np_list = _int_list(args.np_list, "np-list")
    pc_list = [p.strip() for p in args.pc_list.split(",") if p.strip()]
    for pc_name in pc_list:
        if pc_name not in PC_CHOICES:
            raise ConfigError("pc-list", f"unknown preconditioner {pc_name!r}")
    system = assemble(spec, threads=cfg["threads"])
    rows, coarsened = [], {}
    status = EXIT_OK
    for pc_name in pc_list:
        baseline = None
        for n_parts in np_list:
            np1 = cfg["np1"] if n_parts % cfg["np1"] == 0 else 1
            partition = hierarchical_partition(spec.mesh, np1, n_parts // np1)
            pc = build_preconditioner(pc_name, system, partition, cfg)
            row = {"np": n_parts, "pc": pc_name}
            try:
                state, report = newton_solve(system, pc, solver_options(cfg))
            except SolverError as exc:
                print(f"error: np={n_parts} pc={pc_name}: {exc}", file=sys.stderr)
                status = EXIT_NONCONVERGED
                row.update(converged=False)
                rows.append(row)
                continue
            rep = _report_dict(report, args.no_timing)
            if baseline is None:
                baseline = (n_parts, report.time_total)
            scale = n_parts / baseline[0]
            eff = 100.0 * baseline[1] / (scale * report.time_total) if report.time_total else 0.0
            row.update({k: rep[k] for k in ("iter_newton", "iter_gmres_avg", "time_pcsetup",
                                            "time_pcapply", "time_ksp", "time_total")})
            row.update(eff=0.0 if args.no_timing else round(eff, 1), final_k=rep["final_k"],
                       converged=True)
            rows.append(row)
            if isinstance(pc, MultilevelHierarchy):
                coarsened[pc_name] = pc.coarsened_rows
    doc = {"rows": rows, "coarsened_rows": coarsened, "eff_semantics": "desk_analog",
           "eff_baseline_np": np_list[0], "n_blocks": system.layout.n_blocks}
    _write_json(args.output / "compare.json", doc)
    _print_table(rows)
    return status


def _print_table(rows):
    cols = ("np", "pc", "iter_newton", "iter_gmres_avg", "time_pcsetup", "time_pcapply",
            "time_ksp", "time_total", "eff")
    print("  ".join(f"{c:>14}" for c in cols))
    for r in rows:
        cells = [round(v, 3) if isinstance(v, float) else v for v in (r.get(c, "-") for c in cols)]
        print("  ".join(f"{v!s:>14}" for v in cells))


COMMANDS = {"gen": cmd_gen, "solve": cmd_solve, "compare": cmd_compare}


def main(argv=None):
    args = build_parser().parse_args(argv)
    np.random.seed(args.seed)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SchwarzError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
