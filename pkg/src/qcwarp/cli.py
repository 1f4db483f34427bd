"""Command-line interface.

Subcommands:
  register   run the deformation engine and/or the TPS baseline on a case
  case       emit a synthetic landmark CSV
  metrics    recompute quality metrics from an exported VTK field
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
import time
from pathlib import Path

import numpy as np

from . import fileio
from .admm import AdmmConfig, run
from .cases import CASE_NAMES, SyntheticCase, compute_metrics, gen_case
from .elliptic import constraint_tables
from .grid import BoundaryConditions, build_grid, snap_landmarks, tetrahedralize
from .tps import tps_field, tps_fit


@dataclasses.dataclass
class RunConfig:
    """Echoed verbatim into the output metadata."""

    levels: int = 4
    case: str | None = None
    landmarks: str | None = None
    method: str = "proposed"
    sigma: float = 0.0
    outer_tol: float = 1e-4
    pcg_tol: float = 1e-8
    rsub_tol: float = 1e-12
    max_iters: int = 200
    mu_init: float = 1.0
    seed: int = 0
    count: int = 50
    radius: float = 0.3
    outdir: str = "out"
    domain: list[float] | None = None
    skip_vtk: bool = False
    skip_trace: bool = False


def _add_case_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--case", choices=CASE_NAMES, help="synthetic case id")
    p.add_argument("--levels", type=int, default=4, help="grid refinement J (nodes per axis 2^J + 1)")
    p.add_argument("--seed", type=int, default=0, help="random seed (twist case)")
    p.add_argument("--count", type=int, default=50, help="landmark count (twist case)")
    p.add_argument("--radius", type=float, default=0.3, help="ball radius (rotate-ball case)")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qcwarp",
        description="Folding-free 3D landmark-matching deformation on the unit cube.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    reg = sub.add_parser("register", help="compute a landmark-matching map")
    _add_case_args(reg)
    reg.add_argument("--landmarks", help="landmark CSV (px,py,pz,qx,qy,qz per line)")
    reg.add_argument("--method", choices=("proposed", "tps", "both"), default="proposed")
    reg.add_argument("--sigma", type=float, default=0.0, help="extra smoothness weight")
    reg.add_argument("--outer-tol", type=float, default=1e-4)
    reg.add_argument("--pcg-tol", type=float, default=1e-8)
    reg.add_argument("--rsub-tol", type=float, default=1e-12)
    reg.add_argument("--max-iters", type=int, default=200)
    reg.add_argument("--mu-init", type=float, default=1.0)
    reg.add_argument("--outdir", default="out")
    reg.add_argument(
        "--domain",
        type=float,
        nargs=6,
        metavar=("XMIN", "XMAX", "YMIN", "YMAX", "ZMIN", "ZMAX"),
        help="input bounding box; coordinates are normalized to the unit cube",
    )
    reg.add_argument("--skip-vtk", action="store_true", help="do not write VTK fields")
    reg.add_argument("--skip-trace", action="store_true", help="do not write the energy CSV")

    case = sub.add_parser("case", help="emit a synthetic landmark CSV")
    _add_case_args(case)
    case.add_argument("--output", required=True, help="destination CSV path")

    met = sub.add_parser("metrics", help="recompute metrics from a saved field")
    met.add_argument("--field", required=True, help="VTK file from a register run")
    met.add_argument("--landmarks", required=True, help="landmark CSV used for the run")
    met.add_argument("--output", help="metrics JSON destination (default: stdout)")
    return parser


def _synthetic(args) -> SyntheticCase:
    return SyntheticCase(
        name=args.case,
        seed=args.seed,
        twist_count=args.count,
        ball_radius=args.radius,
    )


def _domain_transform(domain):
    if domain is None:
        return None
    box = np.asarray(domain, dtype=float).reshape(3, 2).T  # (2, 3) lo/hi
    lo, hi = box

    def denormalize(points):
        return lo + points * (hi - lo)

    return box, denormalize


def _cmd_register(args) -> int:
    cfg = RunConfig(
        levels=args.levels,
        case=args.case,
        landmarks=args.landmarks,
        method=args.method,
        sigma=args.sigma,
        outer_tol=args.outer_tol,
        pcg_tol=args.pcg_tol,
        rsub_tol=args.rsub_tol,
        max_iters=args.max_iters,
        mu_init=args.mu_init,
        seed=args.seed,
        count=args.count,
        radius=args.radius,
        outdir=args.outdir,
        domain=list(args.domain) if args.domain else None,
        skip_vtk=args.skip_vtk,
        skip_trace=args.skip_trace,
    )
    if (cfg.case is None) == (cfg.landmarks is None):
        print("register: give exactly one of --case or --landmarks", file=sys.stderr)
        return 2

    grid = build_grid(cfg.levels)
    mesh = tetrahedralize(grid)
    box = _domain_transform(cfg.domain)
    transform = box[1] if box else None

    if cfg.case:
        landmarks = gen_case(_synthetic(args), grid)
    else:
        pairs = fileio.load_landmarks(cfg.landmarks, domain=box[0] if box else None)
        landmarks = snap_landmarks(grid, pairs)

    outdir = Path(cfg.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    fileio.write_config_json(outdir / "config.json", dataclasses.asdict(cfg))
    boundary = BoundaryConditions.for_cube(grid)
    conflicts = constraint_tables(boundary, landmarks).boundary_conflicts

    if cfg.method in ("proposed", "both"):
        admm_cfg = AdmmConfig(
            sigma=cfg.sigma,
            outer_tol=cfg.outer_tol,
            mu_init=cfg.mu_init,
            max_outer_iters=cfg.max_iters,
            pcg_tol=cfg.pcg_tol,
            rsub_tol=cfg.rsub_tol,
        )
        f, trace = run(mesh, landmarks, admm_cfg, boundary)
        report = compute_metrics(
            mesh,
            f,
            landmarks,
            wall_time=trace.wall_time,
            boundary_conflicts=conflicts,
        )
        fileio.write_metrics_json(outdir / "metrics.json", report)
        if not cfg.skip_trace:
            fileio.write_trace_csv(outdir / "energy.csv", trace)
        if not cfg.skip_vtk:
            fileio.write_vtk(
                outdir / "proposed.vtk", mesh, f, points_transform=transform
            )
        status = "converged" if trace.converged else "iteration cap reached"
        print(
            f"proposed: {trace.iterations} iterations ({status}), "
            f"fold_count={report.fold_count}, max_K={report.max_K:.4f}, "
            f"min_det={report.min_det:.4f}, e_max={report.e_max:.3g}, "
            f"time={trace.wall_time:.2f}s"
        )
        if not trace.converged:
            print(
                f"proposed: final f_change={trace.records[-1].f_change:.3g} "
                f"above tol={cfg.outer_tol:.3g}"
            )

    if cfg.method in ("tps", "both"):
        t0 = time.perf_counter()
        model = tps_fit(np.stack([landmarks.source, landmarks.target], axis=1))
        f_tps = tps_field(model, grid)
        tps_time = time.perf_counter() - t0
        report = compute_metrics(
            mesh,
            f_tps,
            landmarks,
            wall_time=tps_time,
            boundary_conflicts=conflicts,
        )
        fileio.write_metrics_json(outdir / "metrics_tps.json", report)
        if not cfg.skip_vtk:
            fileio.write_vtk(outdir / "tps.vtk", mesh, f_tps, points_transform=transform)
        print(
            f"tps: fold_count={report.fold_count}, max_K={report.max_K:.4f}, "
            f"min_det={report.min_det:.4f}, e_max={report.e_max:.3g}, "
            f"time={tps_time:.2f}s"
        )
    return 0


def _cmd_case(args) -> int:
    if not args.case:
        print("case: --case is required", file=sys.stderr)
        return 2
    grid = build_grid(args.levels)
    landmarks = gen_case(_synthetic(args), grid)
    pairs = np.stack([landmarks.source, landmarks.target], axis=1)
    fileio.save_landmarks(
        args.output,
        pairs,
        header=f"case={args.case} levels={args.levels} seed={args.seed}",
    )
    print(f"wrote {len(pairs)} landmark pairs to {args.output}")
    return 0


def _cmd_metrics(args) -> int:
    grid, f = fileio.field_from_vtk(args.field)
    mesh = tetrahedralize(grid)
    pairs = fileio.load_landmarks(args.landmarks)
    landmarks = snap_landmarks(grid, pairs)
    report = compute_metrics(mesh, f, landmarks)
    if args.output:
        fileio.write_metrics_json(args.output, report)
        print(f"wrote {args.output}")
    else:
        import json

        print(json.dumps(dataclasses.asdict(report), indent=2))
    return 0


def run_cli(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "register":
            return _cmd_register(args)
        if args.command == "case":
            return _cmd_case(args)
        if args.command == "metrics":
            return _cmd_metrics(args)
    except (ValueError, OSError) as exc:
        print(f"qcwarp {args.command}: {exc}", file=sys.stderr)
        return 1
    return 2


def main() -> None:
    sys.exit(run_cli())
