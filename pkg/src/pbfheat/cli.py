"""Command-line front end: LUT generation, grid solves parallelized over
time steps, reproduction of the three bundled examples, audits, and heatmap
rendering.

Exit codes: 0 success, 1 usage, 2 validation or audit failure, 3 I/O.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path

import numpy as np

from . import report
from .core import FieldGrid, FieldResult, load_material, load_path, melt_segment_count
from .errors import AuditError, PbfError
from .quadrature import (
    FAMILY_CONTRIBUTION,
    FAMILY_FLUX,
    REF_ORDER_DEFAULT,
    TOL_DEFAULT,
    audit_lut,
    build_lut,
    load_lut,
    save_lut,
)
from .solver import evaluate_grid_step, evaluate_points, single_line
from .validation import FdConfig, convolution_audit, fd_solve, semigroup_audit

EXIT_OK, EXIT_USAGE, EXIT_FAIL, EXIT_IO = 0, 1, 2, 3

FLUX_LUT_NAME = "flux.lut"
CONTRIBUTION_LUT_NAME = "contribution.lut"


class _Parser(argparse.ArgumentParser):
    """argparse variant whose usage errors exit with code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_float(text):
    value = float(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return value


# --- parallel field evaluation ------------------------------------------------

_WORKER_PAYLOAD = None


def _init_worker(payload):
    global _WORKER_PAYLOAD
    _WORKER_PAYLOAD = payload


def _solve_step(args):
    idx, t = args
    p = _WORKER_PAYLOAD
    return idx, evaluate_grid_step(
        p["path"], p["material"], p["xs"], p["ys"], p["zs"], t,
        flux_lut=p["flux_lut"], contribution_lut=p["contribution_lut"],
        force_ref=p["force_ref"], ref_order=p["ref_order"],
    )


def solve_field(path, material, grid: FieldGrid, flux_lut=None, contribution_lut=None,
                force_ref=False, ref_order=REF_ORDER_DEFAULT, workers=1,
                provenance=None) -> FieldResult:
    """Evaluate the whole grid, one task per time step; output is identical
    for any worker count (steps are pure and collected in index order)."""
    payload = dict(path=path, material=material, xs=grid.xs, ys=grid.ys, zs=grid.zs,
                   flux_lut=flux_lut, contribution_lut=contribution_lut,
                   force_ref=force_ref, ref_order=ref_order)
    values = np.empty(grid.shape)
    tasks = list(enumerate(grid.ts))
    if workers <= 1:
        _init_worker(payload)
        for idx, t in tasks:
            values[idx] = _solve_step((idx, t))[1]
    else:
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker,
                                 initargs=(payload,)) as pool:
            for idx, field in pool.map(_solve_step, tasks,
                                       chunksize=max(1, len(tasks) // (workers * 4))):
                values[idx] = field
    prov = dict(provenance or {})
    prov.setdefault("force_ref", force_ref)
    prov.setdefault("ref_order", ref_order)
    prov["timestamp"] = time.time()
    return FieldResult(grid=grid, values=values, provenance=prov)


def max_field_result(result: FieldResult) -> FieldResult:
    """Max-over-time reduction, kept in the field schema with a single time
    row (the span end) and a provenance marker."""
    values = result.values.max(axis=0, keepdims=True)
    grid = FieldGrid(xs=result.grid.xs, ys=result.grid.ys, zs=result.grid.zs,
                     ts=result.grid.ts[-1:])
    prov = dict(result.provenance)
    prov["reduction"] = "max-over-time"
    return FieldResult(grid=grid, values=values, provenance=prov)


# --- shared helpers -----------------------------------------------------------

def _parse_axis(spec, scale):
    lo, hi, n = spec.split(":")
    lo, hi, n = float(lo), float(hi), int(n)
    if n < 1 or hi < lo:
        raise ValueError
    return np.linspace(lo * scale, hi * scale, n)


def _parse_grid(spec):
    try:
        parts = spec.split(",")
        if len(parts) != 3:
            raise ValueError
        return tuple(_parse_axis(p, 1e-3) for p in parts)
    except ValueError:
        raise PbfError(
            f"bad --grid {spec!r}; expected x0:x1:nx,y0:y1:ny,z0:z1:nz in mm"
        ) from None


def _parse_times(spec):
    try:
        return _parse_axis(spec, 1e-3)
    except ValueError:
        raise PbfError(f"bad --times {spec!r}; expected t0:t1:nt in ms") from None


def _read_text(fname):
    return Path(fname).read_text(encoding="utf-8")


def _load_inputs(path_file, material_file):
    mat_text = _read_text(material_file)
    path_text = _read_text(path_file)
    material, u_init = load_material(mat_text)
    path = load_path(path_text, material, u_init)
    prov = {
        "path_sha256": report.sha256_id(path_text.encode()),
        "material_sha256": report.sha256_id(mat_text.encode()),
    }
    return path, material, prov


def _load_luts(lut_dir, prov):
    if lut_dir is None:
        return None, None
    flux_p = Path(lut_dir) / FLUX_LUT_NAME
    contrib_p = Path(lut_dir) / CONTRIBUTION_LUT_NAME
    if not (flux_p.exists() and contrib_p.exists()):
        return None, None
    fb, cb = flux_p.read_bytes(), contrib_p.read_bytes()
    flux_lut, contribution_lut = load_lut(fb), load_lut(cb)
    prov["flux_lut_id"] = report.sha256_id(fb)
    prov["contribution_lut_id"] = report.sha256_id(cb)
    prov["tol"] = flux_lut.tol
    return flux_lut, contribution_lut


def _example_data(name):
    return (resources.files("pbfheat") / "data" / name).read_text(encoding="utf-8")


def _progress_printer(label):
    state = {"last": time.monotonic()}

    def cb(done, total):
        now = time.monotonic()
        if done == total or now - state["last"] > 10.0:
            state["last"] = now
            print(f"  {label}: {done}/{total} grid points", flush=True)

    return cb


# --- subcommands --------------------------------------------------------------

def cmd_gen_lut(args):
    schedule = None
    grids_flux = None
    grids_contrib = None
    if args.flux_grid:
        nt, nv = (int(v) for v in args.flux_grid.split(","))
        grids_flux = (np.logspace(-2, 2, nt), np.linspace(0.0, 50.0, nv))
    if args.contrib_grid:
        nt, ntf, nv = (int(v) for v in args.contrib_grid.split(","))
        grids_contrib = (np.logspace(-2, 2, nt), np.logspace(-2, 2, ntf),
                         np.linspace(0.0, 50.0, nv))
    out = Path(args.lut_dir)
    out.mkdir(parents=True, exist_ok=True)
    for family, grids, fname in (
        (FAMILY_FLUX, grids_flux, FLUX_LUT_NAME),
        (FAMILY_CONTRIBUTION, grids_contrib, CONTRIBUTION_LUT_NAME),
    ):
        t0 = time.monotonic()
        lut = build_lut(family, grids=grids, tol=args.tol, ref_order=args.ref_order,
                        order_schedule=schedule, workers=args.threads,
                        progress=_progress_printer(family))
        data = save_lut(lut)
        (out / fname).write_bytes(data)
        orders = lut.orders.reshape(-1)
        hist = {o: int((orders == o).sum()) for o in np.unique(orders)}
        print(f"{family}: {orders.size} grid points in {time.monotonic() - t0:.0f} s, "
              f"orders min {orders.min()} median {int(np.median(orders))} "
              f"max {orders.max()} -> {out / fname} ({report.sha256_id(data)})")
        print(f"  order histogram: {hist}")
    return EXIT_OK


def cmd_solve(args):
    path, material, prov = _load_inputs(args.path_file, args.material_file)
    flux_lut, contribution_lut = _load_luts(args.lut_dir, prov)
    if flux_lut is None and not args.force_ref_order:
        print("note: no LUTs found; using the reference quadrature order everywhere")
    xs, ys, zs = _parse_grid(args.grid)
    ts = _parse_times(args.times)
    grid = FieldGrid(xs=xs, ys=ys, zs=zs, ts=ts)
    t0 = time.monotonic()
    result = solve_field(path, material, grid, flux_lut=flux_lut,
                         contribution_lut=contribution_lut,
                         force_ref=args.force_ref_order or flux_lut is None,
                         ref_order=args.ref_order, workers=args.threads,
                         provenance=prov)
    wall = time.monotonic() - t0
    with open(args.out, "w", encoding="utf-8") as fh:
        report.write_field_csv(result, fh)
    print(f"solved {grid.shape} in {wall:.1f} s -> {args.out}")
    if args.max_field or args.figure or args.heatmap:
        mx = max_field_result(result)
        if args.max_field:
            with open(args.max_field, "w", encoding="utf-8") as fh:
                report.write_field_csv(mx, fh)
            print(f"max-over-time field -> {args.max_field}")
        if args.figure:
            report.save_maxfield_figure(mx, args.figure)
            print(f"figure -> {args.figure}")
        if args.heatmap:
            Path(args.heatmap).write_bytes(report.emit_heatmap(mx))
            print(f"heatmap -> {args.heatmap}")
    return EXIT_OK


def _example_config(n, full):
    if n == 2:
        nx, ny, nt = (401, 81, 2000) if full else (101, 21, 500)
    else:
        nx, ny, nt = (401, 81, 2000) if full else (101, 21, 500)
    return np.linspace(0.0, 20e-3, nx), np.linspace(0.0, 4e-3, ny), nt


def cmd_example(args):
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    material, u_init = load_material(_example_data("example.mat"))
    if args.n == 1:
        return _run_example1(args, out_dir, material, u_init)
    return _run_example_field(args, out_dir, material, u_init)


def _run_example1(args, out_dir, material, u_init):
    """Single line vs its uniform 4-segment partition on a 200 x 200 grid."""
    path_text = _example_data("example1.path")
    path = load_path(path_text, material, u_init)
    seg = path.segments[0]
    quarters = []
    from .core import BeamPath, Segment
    for k in range(4):
        t0, t1 = k * 2.5e-3, (k + 1) * 2.5e-3
        quarters.append(Segment(t_i=t0, t_f=t1, x_i=seg.v * t0, y_i=0.0,
                                x_f=seg.v * t1, y_f=0.0, P=seg.P,
                                sigma=seg.sigma, v=seg.v))
    partitioned = BeamPath(tuple(quarters), u_init)

    xs = np.arange(200) * 0.05e-3
    ts = (np.arange(200) + 1) * 0.05e-3
    grid = FieldGrid(xs=xs, ys=np.array([0.0]), zs=np.array([0.0]), ts=ts)
    prov = {"path_sha256": report.sha256_id(path_text.encode()),
            "material_sha256": report.sha256_id(_example_data("example.mat").encode())}
    t0 = time.monotonic()
    ref = solve_field(path, material, grid, force_ref=True, ref_order=800,
                      workers=args.threads, provenance=dict(prov, route="single-line"))
    part = solve_field(partitioned, material, grid, force_ref=True, ref_order=800,
                       workers=args.threads, provenance=dict(prov, route="4-segment"))
    wall = time.monotonic() - t0
    sup = float(np.max(np.abs(ref.values - part.values)))
    print(f"example 1: sup |u_ref - u_partitioned| = {sup:.4e} K "
          f"over the 200x200 grid (order 800, {wall:.1f} s)")

    with open(out_dir / "example1_field.csv", "w", encoding="utf-8") as fh:
        report.write_field_csv(part, fh)
    curves = {}
    for t_ms in (2.5, 5.0, 10.0):
        it = int(round(t_ms / 0.05)) - 1
        curves[f"t = {t_ms:g} ms"] = part.values[it, :, 0, 0]
    report.save_profiles_figure(xs, curves, out_dir / "example1_profiles.png",
                                title="temperature along the traversed line")
    print(f"wrote {out_dir / 'example1_field.csv'} and example1_profiles.png")
    return EXIT_OK


def _run_example_field(args, out_dir, material, u_init):
    n = args.n
    path_text = _example_data(f"example{n}.path")
    path = load_path(path_text, material, u_init)
    xs, ys, nt = _example_config(n, args.full)
    ts = path.t_end * np.arange(1, nt + 1) / nt
    grid = FieldGrid(xs=xs, ys=ys, zs=np.array([0.0]), ts=ts)
    prov = {"path_sha256": report.sha256_id(path_text.encode()),
            "material_sha256": report.sha256_id(_example_data("example.mat").encode())}
    flux_lut, contribution_lut = _load_luts(args.lut_dir, prov)
    if flux_lut is None and not args.force_ref_order:
        print("note: no LUTs found; using the reference quadrature order everywhere")
    if n == 2:
        print(f"example 2: {melt_segment_count(path)} melt segments, "
              f"{len(path.segments)} total, span {path.t_end * 1e3:.2f} ms")
    t0 = time.monotonic()
    result = solve_field(path, material, grid, flux_lut=flux_lut,
                         contribution_lut=contribution_lut,
                         force_ref=args.force_ref_order or flux_lut is None,
                         ref_order=args.ref_order, workers=args.threads,
                         provenance=prov)
    wall = time.monotonic() - t0
    mx = max_field_result(result)
    plane = mx.values[0, :, :, 0]
    i, j = np.unravel_index(int(plane.argmax()), plane.shape)
    print(f"solved {grid.shape} in {wall:.1f} s; "
          f"max {plane.max():.1f} K at x = {xs[i] * 1e3:.2f} mm, "
          f"y = {ys[j] * 1e3:.2f} mm")

    if n == 2:
        left = float(plane[xs < 10e-3].max())
        right = float(plane[xs >= 10e-3].max())
        print(f"left-half max {left:.1f} K, right-half max {right:.1f} K "
              f"(hot side = small slow spot)")
        ok = xs[i] < 10e-3 and left > right
    else:
        c, o = example3_region_maxima(xs, ys, plane)
        ratio = c / o
        print(f"centre-region max {c:.1f} K, outer-lines max {o:.1f} K, "
              f"ratio {ratio:.3f}")
        ok = ratio >= 1.10

    base = out_dir / f"example{n}_maxfield"
    with open(f"{base}.csv", "w", encoding="utf-8") as fh:
        report.write_field_csv(mx, fh)
    report.save_maxfield_figure(mx, f"{base}.png",
                                title=f"example {n}: max surface temperature")
    Path(f"{base}.ppm").write_bytes(report.emit_heatmap(mx))
    print(f"wrote {base}.csv/.png/.ppm")
    if not ok:
        raise AuditError(f"example {n} qualitative check failed")
    return EXIT_OK


def example3_region_maxima(xs, ys, plane):
    """(centre-region max, outer-long-lines max) for the hourglass field."""
    cmask = (np.abs(xs[:, None] - 10e-3) <= 2e-3) & (np.abs(ys[None, :] - 2e-3) <= 1.2e-3)
    omask = np.broadcast_to((ys[None, :] <= 0.7e-3) | (ys[None, :] >= 3.3e-3),
                            plane.shape)
    return float(plane[cmask].max()), float(plane[omask].max())


def cmd_audit(args):
    material, _ = load_material(_example_data("example.mat"))
    if args.kind == "lut":
        ok = True
        for fname in (FLUX_LUT_NAME, CONTRIBUTION_LUT_NAME):
            p = Path(args.lut_dir) / fname
            lut = load_lut(p.read_bytes())
            t0 = time.monotonic()
            dev, worst = audit_lut(lut, workers=args.threads,
                                   progress=_progress_printer(f"audit {lut.family}"))
            sound = dev < lut.tol
            ok = ok and sound
            print(f"{lut.family}: max deviation {dev:.3e} (tol {lut.tol:g}) at grid "
                  f"point {lut.grid_point(worst)} in {time.monotonic() - t0:.0f} s "
                  f"-> {'PASS' if sound else 'FAIL'}")
        if not ok:
            raise AuditError("LUT soundness audit failed")
    elif args.kind == "semigroup":
        t_p, t_q, t = (float(v) * 1e-3 for v in args.audit_times.split(":"))
        dev = semigroup_audit(material.kappa, t_p, t_q, t)
        peak = 1.0 / math.sqrt(4.0 * math.pi * material.kappa * (t - t_p))
        rel = dev / peak
        print(f"semigroup: max deviation {dev:.3e} = {rel:.3e} of the peak "
              f"-> {'PASS' if rel < 1e-9 else 'FAIL'}")
        if rel >= 1e-9:
            raise AuditError("semigroup audit failed")
    elif args.kind == "convolution":
        from .core import Segment
        seg = Segment(t_i=0.0, t_f=2.5e-3, x_i=0.0, y_i=0.0, x_f=2.5e-3, y_f=0.0,
                      P=100.0, sigma=1e-4, v=1.0)
        dev = convolution_audit(seg, material, 5e-3)
        print(f"convolution: max relative deviation {dev:.3e} "
              f"-> {'PASS' if dev < 1e-3 else 'FAIL'}")
        if dev >= 1e-3:
            raise AuditError("convolution audit failed")
    else:  # fd
        cfg = FdConfig(material=material, u_init=1000.0,
                       x_extent=(-1.1e-3, 1.1e-3), y_extent=(-1.1e-3, 1.1e-3),
                       depth=1.1e-3, nx=111, ny=111, nz=56, dt=5.9e-6,
                       t_end=1e-3, P=100.0, sigma=1e-4)
        res = fd_solve(cfg)
        fd_peak = float(res.values[0, :, :, -1].max())
        from .quadrature import cached_quadrature
        ana = float(single_line(cfg.P, cfg.sigma, 0.0, material, cfg.u_init,
                                (0.0, 0.0, 0.0), cfg.t_end, cached_quadrature(400)))
        rel = abs(fd_peak - ana) / (ana - cfg.u_init)
        print(f"fd: peak {fd_peak:.2f} K vs analytic {ana:.2f} K, relative "
              f"difference {rel:.4f} (energy ratio "
              f"{res.provenance['energy_ratio']:.4f}) "
              f"-> {'PASS' if rel < 0.02 else 'FAIL'}")
        if rel >= 0.02:
            raise AuditError("FD cross-check failed")
    return EXIT_OK


def cmd_heatmap(args):
    with open(args.field_csv, encoding="utf-8") as fh:
        result = report.read_field_csv(fh)
    spec = report.SliceSpec(z_index=args.z_index,
                            time_index=None if args.time_index < 0 else args.time_index)
    data = report.emit_heatmap(result, spec, tmin=args.tmin, tmax=args.tmax)
    Path(args.out).write_bytes(data)
    print(f"heatmap ({len(data)} bytes) -> {args.out}")
    return EXIT_OK


# --- argument wiring ----------------------------------------------------------

def _add_common_solve_flags(p):
    p.add_argument("--lut-dir", default=None, help="directory holding flux.lut "
                   "and contribution.lut (omit to use the reference order)")
    p.add_argument("--force-ref-order", action="store_true",
                   help="ignore LUTs and use the reference order everywhere")
    p.add_argument("--ref-order", type=int, default=REF_ORDER_DEFAULT)
    p.add_argument("--threads", type=int, default=1,
                   help="worker processes for time-step parallelism")


def build_parser():
    ap = _Parser(prog="pbfheat",
                 description="Analytical temperature fields for a scanning "
                             "Gaussian beam with piecewise-constant parameters")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-lut", help="generate quadrature-order look-up tables")
    p.add_argument("--tol", type=_positive_float, default=TOL_DEFAULT)
    p.add_argument("--ref-order", type=int, default=REF_ORDER_DEFAULT)
    p.add_argument("--lut-dir", default="luts")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--flux-grid", default=None, metavar="NT,NV",
                   help="override flux grid point counts")
    p.add_argument("--contrib-grid", default=None, metavar="NT,NTF,NV",
                   help="override contribution grid point counts")
    p.set_defaults(func=cmd_gen_lut)

    p = sub.add_parser("solve", help="evaluate the field over a space-time grid")
    p.add_argument("path_file")
    p.add_argument("material_file")
    p.add_argument("--grid", required=True,
                   metavar="x0:x1:nx,y0:y1:ny,z0:z1:nz", help="grid in mm")
    p.add_argument("--times", required=True, metavar="t0:t1:nt", help="times in ms")
    p.add_argument("--out", required=True, help="output field CSV")
    p.add_argument("--max-field", default=None, help="also write the "
                   "max-over-time field CSV")
    p.add_argument("--figure", default=None, help="render the max field to an image")
    p.add_argument("--heatmap", default=None, help="render the max field to a P6 pixmap")
    _add_common_solve_flags(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("example", help="reproduce one of the bundled examples")
    p.add_argument("n", type=int, choices=(1, 2, 3))
    p.add_argument("--out-dir", default=".")
    p.add_argument("--full", action="store_true",
                   help="published resolution (401x81 grid, 2000 steps)")
    _add_common_solve_flags(p)
    p.set_defaults(func=cmd_example)

    p = sub.add_parser("audit", help="run an independent-oracle audit")
    p.add_argument("kind", choices=("lut", "semigroup", "convolution", "fd"))
    p.add_argument("--lut-dir", default="luts")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--audit-times", default="0:1:2", metavar="TP:TQ:T",
                   help="semigroup times in ms")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("heatmap", help="render a field CSV to a P6 pixmap")
    p.add_argument("field_csv")
    p.add_argument("--out", required=True)
    p.add_argument("--time-index", type=int, default=-1,
                   help="time row to render; negative = max over time")
    p.add_argument("--z-index", type=int, default=-1)
    p.add_argument("--tmin", type=float, default=None)
    p.add_argument("--tmax", type=float, default=None)
    p.set_defaults(func=cmd_heatmap)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except AuditError as exc:
        print(f"pbfheat: audit failure: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except PbfError as exc:
        print(f"pbfheat: error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except OSError as exc:
        print(f"pbfheat: i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
