"""Command-line entry point: ``covertime-lab <subcommand> [flags]``."""

from __future__ import annotations

import argparse
import csv
import json
import struct
import sys

import numpy as np

from .errors import LabError
from .exactsolve import green_via_kernel, solve_green
from .experiments import PRESETS, rows_to_csv, run_config_file
from .gff import gff_fields
from .isomorphism import verify_identity
from .lattice import box_center, build_box, build_disk_identified_box, build_path, build_torus
from .walker import inverse_local_fields, run_until_cover

GRAPHS = ("wired", "free", "torus", "disk", "path")


def _build(kind: str, n: int, kappa: float):
    if kind in ("wired", "free"):
        return build_box(n, kind)
    if kind == "torus":
        return build_torus(n)
    if kind == "disk":
        return build_disk_identified_box(n, kappa)
    return build_path(n)


def _start(g):
    return g.special if g.special is not None else g.vertex(box_center(g.n))


def _writer(path):
    fh = sys.stdout if path in (None, "-") else open(path, "w", encoding="utf-8", newline="")
    return fh, csv.writer(fh, lineterminator="\n")


def _close(fh):
    if fh is not sys.stdout:
        fh.close()


def cmd_simulate_cover(args) -> int:
    g = _build(args.graph, args.n, args.kappa)
    s = _start(g)
    fh, w = _writer(args.out)
    w.writerow(["replica", "tau_cov", "tau_cov_return", "steps"])
    for r in range(args.replicas):
        rec = run_until_cover(g, s, args.seed, r)
        w.writerow([r, repr(rec.tau_cov), repr(rec.tau_cov_return), rec.steps])
    _close(fh)
    return 0


def cmd_simulate_inverse_local(args) -> int:
    g = _build(args.graph, args.n, args.kappa)
    v0 = _start(g)
    fields, tau, visits = inverse_local_fields(g, v0, args.t, args.seed, range(args.replicas))
    fh, w = _writer(args.out)
    w.writerow(["replica", "tau", "max_local_time", "min_local_time", "uncovered", "steps"])
    for r in range(args.replicas):
        w.writerow([r, repr(float(tau[r])), repr(float(fields[r].max())), repr(float(fields[r].min())),
                    int(np.count_nonzero(visits[r] == 0)), int(visits[r].sum())])
    _close(fh)
    return 0


def cmd_sample_gff(args) -> int:
    g = build_box(args.n, "wired")
    interior = np.flatnonzero(np.arange(g.num_vertices) != g.special)
    coords = np.array([g.labels[v] for v in interior])
    fh, w = _writer(args.out)
    w.writerow(["replica", "max"])
    dump = open(args.field_dump, "wb") if args.field_dump else None
    try:
        if dump is not None:
            dump.write(struct.pack("<Q", args.n))
        for lo in range(0, args.reps, 256):
            reps = range(lo, min(args.reps, lo + 256))
            fields = gff_fields(g, [g.special], args.seed, reps)
            for r, f in zip(reps, fields):
                w.writerow([r, repr(max(0.0, float(f[interior].max())))])
                if dump is not None:
                    grid = np.zeros((args.n, args.n), dtype="<f8")
                    # row-major in y, boundary left at 0
                    grid[coords[:, 1], coords[:, 0]] = f[interior]
                    dump.write(grid.tobytes())
    finally:
        if dump is not None:
            dump.close()
        _close(fh)
    return 0


def cmd_verify_isomorphism(args) -> int:
    _, build, v0 = PRESETS[args.graph_preset]
    g = build()
    rep = verify_identity(g, v0, args.t, args.reps, args.seed)
    out = sys.stdout if args.out in (None, "-") else open(args.out, "w", encoding="utf-8")
    for row in rep.rows():
        out.write(json.dumps(row) + "\n")
    out.write(json.dumps({"summary": rep.summary()}) + "\n")
    if out is not sys.stdout:
        out.close()
    return 0 if rep.passed else 1


def cmd_green_table(args) -> int:
    g = build_box(args.n, "wired")
    sol = solve_green(g, [g.special])
    cx, cy = box_center(args.n)
    fh, w = _writer(args.out)
    w.writerow(["x", "y", "G_solve", "G_kernel", "abs_diff"])
    y = (cx, cy)
    for dx in range(-args.radius, args.radius + 1):
        for dy in range(-args.radius, args.radius + 1):
            x = (cx + dx, cy + dy)
            if g.site_vertex(x) == g.special:
                continue
            gs, gk = sol.green(x, y), green_via_kernel(g, x, y)
            w.writerow([f"{x[0]},{x[1]}", f"{y[0]},{y[1]}", repr(gs), repr(gk), repr(abs(gs - gk))])
    _close(fh)
    return 0


def cmd_experiment(args) -> int:
    res = run_config_file(args.config, args.workers)
    if res.csv_path is None:
        sys.stdout.write(rows_to_csv(res.rows))
    else:
        print(f"wrote {len(res.rows)} rows to {res.csv_path}; manifest {res.manifest_path}")
    for k, v in res.manifest["summary"].items():
        print(f"{k} = {v}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="covertime-lab", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def walk_flags(sp):
        sp.add_argument("--graph", choices=GRAPHS, default="wired")
        sp.add_argument("--n", type=int, required=True)
        sp.add_argument("--kappa", type=float, default=2.0)
        sp.add_argument("--replicas", type=int, default=100)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", help="CSV path (default stdout)")

    sp = sub.add_parser("simulate-cover", help="cover and cover-and-return times")
    walk_flags(sp)
    sp.set_defaults(func=cmd_simulate_cover)

    sp = sub.add_parser("simulate-inverse-local", help="walks stopped at tau(t)")
    walk_flags(sp)
    sp.add_argument("--t", type=float, required=True)
    sp.set_defaults(func=cmd_simulate_inverse_local)

    sp = sub.add_parser("sample-gff", help="maxima of the free field on a wired box")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--reps", type=int, default=100)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", help="CSV path (default stdout)")
    sp.add_argument("--field-dump", help="binary file: uint64 n, then n*n float64 per replica (little-endian)")
    sp.set_defaults(func=cmd_sample_gff)

    sp = sub.add_parser("verify-isomorphism", help="Monte Carlo check of the Ray-Knight identity")
    sp.add_argument("--graph-preset", choices=tuple(PRESETS), required=True)
    sp.add_argument("--t", type=float, default=1.0)
    sp.add_argument("--reps", type=int, default=200_000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", help="JSON-lines path (default stdout)")
    sp.set_defaults(func=cmd_verify_isomorphism)

    sp = sub.add_parser("green-table", help="Green function by direct solve and by potential kernel")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--radius", type=int, default=2, help="half-width of the table around the center")
    sp.add_argument("--out", help="CSV path (default stdout)")
    sp.set_defaults(func=cmd_green_table)

    sp = sub.add_parser("experiment", help="run a config file")
    sp.add_argument("--config", required=True)
    sp.add_argument("--workers", type=int, default=None)
    sp.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (LabError, OSError) as exc:
        print(f"covertime-lab: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
