"""Command-line surface stringing the pipeline together.

Subcommands: gen, evolve, decompose, reconstruct, inpaint, mesh, metrics.
Exit codes: 0 success, 1 usage error, 2 runtime/numerical error. Diagnostics
and the resolved parameter echo go to stderr; result tables go to stdout.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import __version__
from .evolution import (
    BETA_MIN,
    EvolutionSchedule,
    ShapeCollapseError,
    VelocityKind,
    VelocityModel,
)
from .grid import ScalarGrid, SurfaceMissingError
from .gridio import FormatError, load_grid, load_record, read_seed_points, save_grid, save_record
from .inpaint import (
    InpaintingProblem,
    default_eps0,
    default_expansion_speed,
    format_inpainted_percentages,
    inpaint,
    inpainted_fraction,
    region_from_seeds,
)
from .meshio import export_mesh
from .metrics import (
    area,
    connected_components,
    detail_histogram,
    hausdorff,
    histogram_table,
    volume,
)
from .multiscale import imst_viscous, mst_decompose
from .phantoms import VesselSpec, make_primitive, make_vessel


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _vec3(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected x,y,z got {text!r}")
    return tuple(float(p) for p in parts)


def _interval(text: str):
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected a,b got {text!r}")
    return tuple(parts)


def _echo_params(name: str, params: dict):
    body = " ".join(f"{k}={v}" for k, v in params.items())
    print(f"[{name}] {body}", file=sys.stderr)


_MODELS = ("constant", "cmc", "mcm", "vpmc", "combined")


def _build_model(name: str, c: float, lam: float) -> VelocityModel:
    if name == "constant":
        return VelocityModel.constant(c)
    if name == "cmc":
        return VelocityModel.constant_minus_curvature(c, lam)
    if name == "mcm":
        return VelocityModel.constant_minus_curvature(0.0, 1.0)
    if name == "vpmc":
        return VelocityModel.volume_preserving()
    if name == "combined":
        return VelocityModel.combined_inpainting(c)
    raise UsageError(f"unknown model {name!r}")


def _add_schedule_args(p: argparse.ArgumentParser):
    p.add_argument("--levels", type=int, default=5, help="number of scale levels N")
    p.add_argument("--dt", type=float, default=None,
                   help=f"substep size (default {BETA_MIN:g} h^2, the MBO floor)")
    p.add_argument("--level-time", type=float, default=None,
                   help="duration of each level interval (default: one substep)")


def _resolve_schedule(args, h: float) -> EvolutionSchedule:
    dt = args.dt if args.dt is not None else BETA_MIN * h * h
    level_time = args.level_time if args.level_time is not None else dt
    return EvolutionSchedule.uniform(args.levels, level_time, dt)


def _add_model_args(p: argparse.ArgumentParser, default_model="vpmc"):
    p.add_argument("--model", choices=_MODELS, default=default_model)
    p.add_argument("--c", type=float, default=None,
                   help="normal speed (default 0.5 h/dt where needed)")
    p.add_argument("--lam", type=float, default=1.0, help="curvature weight for cmc")


def build_parser() -> _Parser:
    ap = _Parser(prog="shapescale",
                 description="Level-set multiscale shape decomposition, "
                             "reconstruction and tubular surface inpainting.")
    ap.add_argument("--version", action="version", version=f"shapescale {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a phantom field")
    g.add_argument("kind", choices=("sphere", "cube", "torus", "bumpy_sphere", "vessel"))
    g.add_argument("--dims", type=int, default=96, help="grid samples per axis")
    g.add_argument("--spacing", type=float, default=1.0)
    g.add_argument("--center", type=_vec3, default=None, help="x,y,z (default: domain center)")
    g.add_argument("--radius", type=float, default=None, help="sphere/bumpy radius (default 16h)")
    g.add_argument("--side", type=float, default=None, help="cube side (default 24h)")
    g.add_argument("--ring-radius", type=float, default=None, help="torus ring radius (default 16h)")
    g.add_argument("--tube-radius", type=float, default=None, help="torus tube radius (default 6h)")
    g.add_argument("--amp", type=float, default=0.12, help="bumpy sphere amplitude")
    g.add_argument("--freq", type=int, default=6, help="bumpy sphere frequency")
    g.add_argument("--centerline", default=None,
                   help="vessel centerline file, one 'x y z radius' line per vertex")
    g.add_argument("--chop", type=_interval, default=None, help="arclength interval a,b")
    g.add_argument("--stenosis", default=None,
                   help="arclength interval + factor a,b,f")
    g.add_argument("--out", required=True)

    e = sub.add_parser("evolve", help="run a level set motion")
    e.add_argument("--in", dest="infile", required=True)
    _add_model_args(e)
    _add_schedule_args(e)
    e.add_argument("--out", required=True, help="final node field")
    e.add_argument("--nodes-prefix", default=None, help="also write every node field")

    d = sub.add_parser("decompose", help="multiscale transform to a record file")
    d.add_argument("--in", dest="infile", required=True)
    _add_model_args(d)
    _add_schedule_args(d)
    d.add_argument("--out", required=True, help="record file")
    d.add_argument("--hist-prefix", default=None, help="write per-level detail histograms")
    d.add_argument("--hist-bins", type=int, default=21)
    d.add_argument("--save-levels", default=None,
                   help="prefix to write per-level fields (for reconstruct --levels-prefix)")

    r = sub.add_parser("reconstruct", help="inverse transform from a record file")
    r.add_argument("--record", required=True)
    r.add_argument("--to-level", type=int, default=0)
    r.add_argument("--eps", type=float, default=None,
                   help="viscosity (default 0 for viscosity-free records)")
    r.add_argument("--out", required=True)
    r.add_argument("--levels-prefix", default=None,
                   help="per-level fields from decompose --save-levels; prints the "
                        "per-level Hausdorff table")

    i = sub.add_parser("inpaint", help="recover missing surface inside a seeded region")
    i.add_argument("--in", dest="infile", required=True)
    i.add_argument("--seeds", required=True, help="file with one 'x y z' seed per line")
    i.add_argument("--radius", type=float, default=None, help="region ball radius (default 4h)")
    i.add_argument("--c", type=float, default=None, help="expansion speed (default 0.5 h/dt)")
    _add_schedule_args(i)
    i.add_argument("--eps0", type=float, default=None)
    i.add_argument("--gamma", type=float, default=0.7, help="eps decay per outer iteration")
    i.add_argument("--eps-min", type=float, default=0.0)
    i.add_argument("--stop-tol", type=float, default=None, help="default 0.5h")
    i.add_argument("--max-outer", type=int, default=30)
    i.add_argument("--out", required=True)
    i.add_argument("--report", default=None, help="write the iteration report to a file")

    m = sub.add_parser("mesh", help="export the zero level set as an OBJ mesh")
    m.add_argument("--in", dest="infile", required=True)
    m.add_argument("--out", required=True)

    t = sub.add_parser("metrics", help="volume/area/component table, Hausdorff vs --ref")
    t.add_argument("--in", dest="infile", required=True)
    t.add_argument("--ref", default=None)
    return ap


def _cmd_gen(args) -> int:
    dims = (args.dims,) * 3
    h = args.spacing
    center = args.center
    if center is None:
        center = tuple((n - 1) * h / 2.0 for n in dims)
    if args.kind == "vessel":
        if not args.centerline:
            raise UsageError("gen vessel requires --centerline")
        rows = np.loadtxt(args.centerline, ndmin=2)
        if rows.shape[1] != 4:
            raise FormatError("centerline file needs 4 columns: x y z radius")
        stenosis = None
        if args.stenosis:
            parts = [float(x) for x in args.stenosis.split(",")]
            if len(parts) != 3:
                raise UsageError("--stenosis expects a,b,factor")
            stenosis = tuple(parts)
        spec = VesselSpec(rows[:, :3], rows[:, 3], chop=args.chop, stenosis=stenosis)
        _echo_params("gen", {"kind": "vessel", "dims": args.dims, "spacing": h,
                             "chop": args.chop, "stenosis": stenosis})
        grid = make_vessel(spec, dims, h)
    else:
        params = {}
        if args.kind in ("sphere", "bumpy_sphere"):
            params["radius"] = args.radius if args.radius is not None else 16 * h
            params["center"] = center
        if args.kind == "bumpy_sphere":
            params["amp"] = args.amp
            params["freq"] = args.freq
        if args.kind == "cube":
            params["side"] = args.side if args.side is not None else 24 * h
            params["center"] = center
        if args.kind == "torus":
            params["ring_radius"] = args.ring_radius if args.ring_radius is not None else 16 * h
            params["tube_radius"] = args.tube_radius if args.tube_radius is not None else 6 * h
            params["center"] = center
        _echo_params("gen", {"kind": args.kind, "dims": args.dims, "spacing": h, **params})
        grid = make_primitive(args.kind, dims, h, **params)
    save_grid(args.out, grid)
    return 0


def _cmd_evolve(args) -> int:
    grid = load_grid(args.infile)
    h = grid.spacing
    schedule = _resolve_schedule(args, h)
    c = args.c if args.c is not None else default_expansion_speed(h, schedule.dt)
    model = _build_model(args.model, c, args.lam)
    _echo_params("evolve", {"model": args.model, "c": c, "lam": args.lam,
                            "levels": schedule.n_levels, "dt": schedule.dt,
                            "level_time": schedule.t_nodes[1] if schedule.n_levels else 0.0})
    from .evolution import evolve

    fields = evolve(grid, model, schedule)
    if args.nodes_prefix:
        for i, f in enumerate(fields):
            save_grid(f"{args.nodes_prefix}{i:03d}.field", f)
    save_grid(args.out, fields[-1])
    return 0


def _cmd_decompose(args) -> int:
    grid = load_grid(args.infile)
    h = grid.spacing
    schedule = _resolve_schedule(args, h)
    c = args.c if args.c is not None else default_expansion_speed(h, schedule.dt)
    model = _build_model(args.model, c, args.lam)
    _echo_params("decompose", {"model": args.model, "c": c, "lam": args.lam,
                               "levels": schedule.n_levels, "dt": schedule.dt})
    rec, fields = mst_decompose(grid, model, schedule, return_fields=True)
    save_record(args.out, rec)
    if args.save_levels:
        for i, f in enumerate(fields):
            save_grid(f"{args.save_levels}{i:03d}.field", f)
    if args.hist_prefix:
        for lvl in range(1, rec.n_levels + 1):
            edges, counts = detail_histogram(rec, lvl, args.hist_bins)
            with open(f"{args.hist_prefix}{lvl:03d}.hist", "w", encoding="ascii") as f:
                f.write(histogram_table(edges, counts) + "\n")
    for ds in rec.levels:
        print(f"level {ds.level}: alive={ds.n_alive} "
              f"max|w|={np.abs(ds.details[ds.alive]).max() if ds.n_alive else 0.0:.6g}")
    return 0


def _cmd_reconstruct(args) -> int:
    rec = load_record(args.record)
    eps = args.eps
    if eps is None:
        eps = 0.0 if rec.schedule.viscosity_free else default_eps0(rec.coarse.spacing)
    _echo_params("reconstruct", {"levels": rec.n_levels, "to_level": args.to_level,
                                 "eps": eps})
    out = imst_viscous(rec, args.to_level, eps)
    save_grid(args.out, out)
    if args.levels_prefix:
        h = rec.coarse.spacing
        vals = []
        for lvl in range(args.to_level, rec.n_levels):
            ref = load_grid(f"{args.levels_prefix}{lvl:03d}.field")
            ri = imst_viscous(rec, lvl, eps)
            vals.append(hausdorff(ref, ri) / h)
        table = ", ".join(f"{v:.2f}h" for v in vals)
        print(f"per-level Hausdorff (levels {args.to_level}..{rec.n_levels - 1}): {table}")
    return 0


def _cmd_inpaint(args) -> int:
    grid = load_grid(args.infile)
    h = grid.spacing
    schedule = _resolve_schedule(args, h)
    seeds = read_seed_points(args.seeds)
    radius = args.radius if args.radius is not None else 4 * h
    c = args.c if args.c is not None else default_expansion_speed(h, schedule.dt)
    eps0 = args.eps0 if args.eps0 is not None else default_eps0(h)
    _echo_params("inpaint", {"seeds": len(seeds), "radius": radius, "c": c,
                             "levels": schedule.n_levels, "dt": schedule.dt,
                             "eps0": eps0, "gamma": args.gamma, "eps_min": args.eps_min,
                             "stop_tol": args.stop_tol if args.stop_tol is not None else 0.5 * h,
                             "max_outer": args.max_outer})
    mask = region_from_seeds(grid, seeds, radius)
    problem = InpaintingProblem(grid, mask, c, schedule, eps0, args.gamma,
                                args.eps_min, args.stop_tol, args.max_outer)
    result, report = inpaint(problem)
    save_grid(args.out, result)
    frac = inpainted_fraction(result, grid, mask)
    print(format_inpainted_percentages([frac]))
    print(f"converged={report.converged} iterations={report.iterations}")
    if args.report:
        with open(args.report, "w", encoding="ascii") as f:
            f.write(report.lines() + "\n")
    return 0


def _cmd_mesh(args) -> int:
    grid = load_grid(args.infile)
    nv, nf = export_mesh(grid, args.out)
    _echo_params("mesh", {"vertices": nv, "faces": nf})
    return 0


def _cmd_metrics(args) -> int:
    grid = load_grid(args.infile)
    _echo_params("metrics", {"in": args.infile, "ref": args.ref})
    print(f"volume {volume(grid):.9g}")
    print(f"area {area(grid):.9g}")
    print(f"components {connected_components(grid)}")
    if args.ref:
        ref = load_grid(args.ref)
        print(f"hausdorff {hausdorff(grid, ref):.9g}")
    return 0


_COMMANDS = {
    "gen": _cmd_gen,
    "evolve": _cmd_evolve,
    "decompose": _cmd_decompose,
    "reconstruct": _cmd_reconstruct,
    "inpaint": _cmd_inpaint,
    "mesh": _cmd_mesh,
    "metrics": _cmd_metrics,
}


def run_cli(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except (OSError, ValueError, FormatError, SurfaceMissingError,
            ShapeCollapseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(run_cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
