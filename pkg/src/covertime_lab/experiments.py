"""Config-driven experiment suite with reproducible, split-seeded replicas.

A config is a small text file of ``key = value`` lines::

    # cover times on wired boxes
    experiment = cover-scaling
    n = 32, 64, 128
    replicas = 100
    seed = 0
    output = cover.csv

Every replica draws from its own counter-based stream keyed by
``(seed, replica)``, so the rows do not depend on how the work is split
between processes.  Rows are sorted by ``(n, replica)`` before the final CSV
is written; timing information goes to the manifest only, which keeps the CSV
byte-identical across runs.
"""

from __future__ import annotations

import csv
import io
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np

from . import __version__
from .errors import ConfigError, LabError, OutputError
from .exactsolve import green_via_kernel, harmonic_measure, harmonic_tv_distance, solve_green
from .gff import bz_prediction, max_statistics
from .isomorphism import verify_identity
from .lattice import (box_center, box_region, build_box, build_path, build_torus, disk_sites)
from .rng import replica_key
from .stats import fit_cover_scaling
from .walker import inverse_local_fields, run_until_cover, run_until_inverse_local

EXPERIMENTS = (
    "cover-scaling",
    "tau-concentration",
    "gff-max",
    "isomorphism",
    "thin-points",
    "harmonic-tv",
    "green-cross-check",
)
BOUNDARIES = ("wired", "free", "torus")
LEVELS = ("upper", "lower")
PRESETS = {
    "single-edge": (1, lambda: build_path(1), None),
    "wired-box-5": (5, lambda: build_box(5, "wired"), None),
    "torus-6": (6, lambda: build_torus(6), (0, 0)),
}
_CHUNK = 25


def t_lambda(n: float, lam: float) -> float:
    """The time schedule (1/pi)(log n + lambda)^2, defined while log n + lambda > 0."""
    base = math.log(n) + lam
    if base <= 0:
        raise ConfigError(f"t_lambda needs log n + lambda > 0 (n={n}, lambda={lam})")
    return base * base / math.pi


def level_time(n: float, level: str) -> float:
    """m_L^2 / 2 ("upper") or (m_L - 1)^2 / 2 ("lower"), m_L the predicted maximum."""
    m = bz_prediction(n)
    if level == "upper":
        return m * m / 2
    if m <= 1:
        raise ConfigError(f"lower level needs m_L > 1 (n={n}, m_L={m:.4f})")
    return (m - 1) ** 2 / 2


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    n: tuple = ()
    boundary: str = "wired"
    kappa: float = 2.0
    t: float | None = None
    lam: float | None = None
    level: str | None = None
    replicas: int = 100
    seed: int = 0
    output: str | None = None
    workers: int = 1
    graph: str | None = None
    m: float = 3.0
    side: int | None = None
    threshold: int = 120

    def sizes(self) -> tuple:
        if self.experiment == "isomorphism":
            return (PRESETS[self.graph][0],)
        return self.n

    def time_for(self, n: int) -> float:
        if self.t is not None:
            return self.t
        if self.lam is not None:
            return t_lambda(n, self.lam)
        if self.level is not None:
            return level_time(n, self.level)
        if self.experiment == "thin-points":
            return level_time(n, "upper")
        if self.experiment == "isomorphism":
            return 1.0
        return math.log(n) ** 2

    def echo(self) -> str:
        lines = []
        for f in fields(self):
            key = "lambda" if f.name == "lam" else f.name
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ", ".join(str(x) for x in v)
            lines.append(f"{key} = {'' if v is None else v}")
        return "\n".join(lines)


def _int(s):
    return int(s)


def _pos_int(s):
    v = int(s)
    if v < 1:
        raise ValueError("must be a positive integer")
    return v


def _nonneg_int(s):
    v = int(s)
    if v < 0:
        raise ValueError("must be nonnegative")
    return v


def _pos_float(s):
    v = float(s)
    if not v > 0 or not math.isfinite(v):
        raise ValueError("must be a positive number")
    return v


def _finite(s):
    v = float(s)
    if not math.isfinite(v):
        raise ValueError("must be finite")
    return v


def _sizes(s):
    out = tuple(int(x) for x in s.split(",") if x.strip())
    if not out or min(out) < 1:
        raise ValueError("needs one or more positive sizes")
    return out


def _choice(options):
    def parse(s):
        if s not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return s
    return parse


_KEYS = {
    "experiment": ("experiment", _choice(EXPERIMENTS)),
    "n": ("n", _sizes),
    "boundary": ("boundary", _choice(BOUNDARIES)),
    "kappa": ("kappa", _pos_float),
    "t": ("t", _pos_float),
    "lambda": ("lam", _finite),
    "level": ("level", _choice(LEVELS)),
    "replicas": ("replicas", _pos_int),
    "seed": ("seed", _nonneg_int),
    "output": ("output", str),
    "workers": ("workers", _pos_int),
    "graph": ("graph", _choice(tuple(PRESETS))),
    "m": ("m", _pos_float),
    "side": ("side", _pos_int),
    "threshold": ("threshold", _nonneg_int),
}

_REQUIRED = {
    "cover-scaling": ("n",),
    "tau-concentration": ("n",),
    "gff-max": ("n",),
    "isomorphism": ("graph",),
    "thin-points": ("n",),
    "harmonic-tv": ("n",),
    "green-cross-check": ("n",),
}


def parse_config(text: str) -> ExperimentConfig:
    values, where = {}, {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value': {raw.strip()!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r} (first set on line {where[key]})")
        name, parse = _KEYS[key]
        try:
            values[name] = parse(value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {value!r} ({exc})") from None
        where[key] = lineno
    if "experiment" not in values:
        raise ConfigError("missing required key 'experiment'")
    exp = values["experiment"]
    for key in _REQUIRED[exp]:
        if key not in values:
            raise ConfigError(f"missing required key {key!r} for experiment {exp!r}")
    schedule = [k for k in ("t", "lambda", "level") if k in where]
    if len(schedule) > 1:
        raise ConfigError(f"line {where[schedule[1]]}: {schedule[1]!r} conflicts with {schedule[0]!r}")
    config = ExperimentConfig(**values)
    _validate(config, where)
    return config


def _validate(config: ExperimentConfig, where: dict) -> None:
    exp = config.experiment
    if exp in ("gff-max", "thin-points", "green-cross-check") and config.boundary != "wired":
        raise ConfigError(f"line {where['boundary']}: {exp} runs on wired boxes only")
    if exp == "harmonic-tv" and config.boundary == "torus":
        raise ConfigError(f"line {where['boundary']}: harmonic-tv runs on a box host")
    for n in config.sizes():
        if exp != "isomorphism" and n < 3:
            raise ConfigError(f"line {where['n']}: size {n} too small (need n >= 3)")
        try:
            t = config.time_for(n) if exp in ("tau-concentration", "thin-points", "isomorphism") else None
        except LabError as exc:
            key = next((k for k in ("lambda", "level") if k in where), "n")
            raise ConfigError(f"line {where.get(key, '?')}: {exc}") from None
        if t is not None and not t > 0:
            raise ConfigError(f"time schedule gives t = {t} <= 0 for n = {n}")
        if config.lam is not None:
            try:
                t_lambda(n, config.lam)
            except ConfigError as exc:
                raise ConfigError(f"line {where['lambda']}: {exc}") from None
    if exp == "thin-points":
        for n in config.n:
            side = config.side or max(1, (n - 2) // 4)
            if side > n - 2:
                raise ConfigError(f"line {where.get('side', '?')}: box side {side} does not fit inside n = {n}")
    if exp == "harmonic-tv":
        for n in config.n:
            if not config.m < n:
                raise ConfigError(f"line {where.get('m', '?')}: inner radius m = {config.m} must be below n = {n}")


@dataclass
class ResultRow:
    experiment: str
    n: int
    replica: int
    seed: int  # the Philox key of (config seed, replica), see rng.replica_key
    measurements: dict
    wall_time: float = field(default=0.0, compare=False)


@dataclass
class RunResult:
    config: ExperimentConfig
    rows: list
    manifest: dict
    csv_path: str | None
    manifest_path: str | None

    def csv_text(self) -> str:
        return rows_to_csv(self.rows)


# task functions: module level so that worker processes can unpickle them


def _graph(boundary: str, n: int):
    if boundary == "torus":
        return build_torus(n)
    return build_box(n, boundary)


def _task_cover(config: ExperimentConfig, n: int, replicas) -> list:
    g = _graph(config.boundary, n)
    start = g.special if g.special is not None else g.vertex(box_center(n))
    rows = []
    for r in replicas:
        rec = run_until_cover(g, start, config.seed, r)
        rows.append((n, r, {
            "tau_cov": rec.tau_cov,
            "tau_cov_return": rec.tau_cov_return,
            "steps": rec.steps,
            "sqrt_ratio": math.sqrt(rec.tau_cov / (2.0 * n * n)),
        }))
    return rows


def _task_tau(config: ExperimentConfig, n: int, replicas) -> list:
    g = _graph(config.boundary, n)
    v0 = g.special if g.special is not None else g.vertex(box_center(n))
    t = config.time_for(n)
    _, tau, _ = inverse_local_fields(g, v0, t, config.seed, replicas)
    norm = 2 * t * g.edge_count
    return [(n, r, {"t": t, "tau": float(x), "ratio": float(x) / norm}) for r, x in zip(replicas, tau)]


def _task_gff(config: ExperimentConfig, n: int, replicas) -> list:
    stats = max_statistics(n, len(replicas), config.seed, replica_offset=replicas[0])
    pred = bz_prediction(n) if n >= 16 else float("nan")
    return [(n, r, {"max": float(x), "prediction": pred}) for r, x in zip(replicas, stats.max_samples)]


def _task_isomorphism(config: ExperimentConfig, n: int, replicas) -> list:
    _, build, v0 = PRESETS[config.graph]
    g = build()
    rep = verify_identity(g, v0, config.time_for(n), config.replicas, config.seed)
    rows = []
    for v, c in rep.per_vertex.items():
        lab = g.labels[v]
        x, y = (-1, -1) if isinstance(lab, str) else lab
        rows.append((n, v, {
            "x": x, "y": y, "t": rep.t,
            "ks_statistic": c.ks_statistic,
            "lhs_mean": c.lhs_mean, "rhs_mean": c.rhs_mean,
            "se_mean": c.se_mean,
            "pass": int(c.passes(rep.ks_max)),
        }))
    return rows


def _thin_box(config: ExperimentConfig, n: int):
    side = config.side or max(1, (n - 2) // 4)
    c = box_center(n)
    corner = (c[0] - side // 2, c[1] - side // 2)
    return corner, side


def _task_thin(config: ExperimentConfig, n: int, replicas) -> list:
    g = build_box(n, "wired")
    corner, side = _thin_box(config, n)
    region = box_region(g, corner, side)
    t = config.time_for(n)
    rows = []
    for r in replicas:
        rec = run_until_inverse_local(g, None, t, config.seed, r)
        counts = rec.visit_count[region]
        rows.append((n, r, {
            "t": t,
            "occurred": int(counts.min() <= config.threshold),
            "thin_count": int(np.count_nonzero(counts <= config.threshold)),
            "min_visits": int(counts.min()),
            "uncovered": int(np.count_nonzero(counts == 0)),
        }))
    return rows


def _task_harmonic(config: ExperimentConfig, n: int, replicas) -> list:
    # host box of side about 4n, target the disk C_m at its center
    half = 2 * n + 2
    g = _graph(config.boundary if config.boundary != "torus" else "free", 2 * half + 1)
    c = (half, half)
    target = [s for s in disk_sites(c, config.m) if s in set(g.labels)]
    d = n + 1
    sources = [(c[0] + d, c[1]), (c[0], c[1] + d), (c[0] - d, c[1]), (c[0] + d, c[1] + d)]
    base = harmonic_measure(g, sources[0], target)
    scale = config.m * math.log(n) ** 2 / n
    rows = []
    for k, y in enumerate(sources[1:]):
        tv = harmonic_tv_distance(base, harmonic_measure(g, y, target))
        rows.append((n, k, {"m": config.m, "tv": tv, "scale": scale, "fitted_c": tv / scale}))
    return rows


def _task_green(config: ExperimentConfig, n: int, replicas) -> list:
    g = build_box(n, "wired")
    sol = solve_green(g, [g.special])
    cx, cy = box_center(n)
    offsets = [((0, 0), (0, 0)), ((0, 0), (1, 0)), ((0, 0), (3, 2)), ((2, -1), (-3, 4)), ((1, 1), (1, 1))]
    rows = []
    for k, (a, b) in enumerate(offsets):
        x = (cx + a[0], cy + a[1])
        y = (cx + b[0], cy + b[1])
        gs = sol.green(x, y)
        gk = green_via_kernel(g, x, y)
        rows.append((n, k, {
            "x1": x[0], "x2": x[1], "y1": y[0], "y2": y[1],
            "G_solve": gs, "G_kernel": gk, "abs_diff": abs(gs - gk),
        }))
    return rows


_TASKS = {
    "cover-scaling": _task_cover,
    "tau-concentration": _task_tau,
    "gff-max": _task_gff,
    "isomorphism": _task_isomorphism,
    "thin-points": _task_thin,
    "harmonic-tv": _task_harmonic,
    "green-cross-check": _task_green,
}
_PER_SIZE = ("isomorphism", "harmonic-tv", "green-cross-check")


def _run_task(config: ExperimentConfig, n: int, replicas: list):
    start = time.perf_counter()
    rows = _TASKS[config.experiment](config, n, replicas)
    return rows, time.perf_counter() - start


def _plan(config: ExperimentConfig) -> list:
    if config.experiment in _PER_SIZE:
        return [(n, [0]) for n in config.sizes()]
    reps = list(range(config.replicas))
    return [(n, reps[lo:lo + _CHUNK]) for n in config.sizes() for lo in range(0, len(reps), _CHUNK)]


def _format(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None:
        return ""
    return repr(float(v))


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    if not rows:
        return ""
    keys = list(rows[0].measurements)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["experiment", "n", "replica", "seed", *keys])
    for row in rows:
        w.writerow([row.experiment, row.n, row.replica, row.seed, *(_format(row.measurements[k]) for k in keys)])
    return buf.getvalue()


def _summaries(config: ExperimentConfig, rows: list) -> dict:
    out = {}
    by_n = {}
    for row in rows:
        by_n.setdefault(row.n, []).append(row.measurements)
    exp = config.experiment
    if exp == "cover-scaling":
        for n, ms in by_n.items():
            out[f"median_sqrt_ratio[n={n}]"] = float(np.median([m["sqrt_ratio"] for m in ms]))
        if len(by_n) >= 3 and min(len(v) for v in by_n.values()) >= 30:
            fit = fit_cover_scaling([(n, [m["tau_cov"] for m in ms]) for n, ms in by_n.items()])
            out["slope"] = fit.slope
            out["intercept"] = fit.intercept
    elif exp == "tau-concentration":
        for n, ms in by_n.items():
            tau = np.array([m["tau"] for m in ms])
            t = ms[0]["t"]
            edges = _graph(config.boundary, n).edge_count
            out[f"mean_ratio[n={n}]"] = float(tau.mean() / (2 * t * edges))
            if len(tau) > 1:
                out[f"sd_ratio[n={n}]"] = float(tau.std(ddof=1) / (edges * math.sqrt(t)))
    elif exp == "gff-max":
        for n, ms in by_n.items():
            out[f"mean_max[n={n}]"] = float(np.mean([m["max"] for m in ms]))
            out[f"prediction[n={n}]"] = ms[0]["prediction"]
    elif exp == "isomorphism":
        ms = next(iter(by_n.values()))
        out["worst_ks"] = max(m["ks_statistic"] for m in ms)
        out["pass"] = str(all(m["pass"] for m in ms)).lower()
    elif exp == "thin-points":
        for n, ms in by_n.items():
            out[f"p_thin[n={n}]"] = float(np.mean([m["occurred"] for m in ms]))
    elif exp == "harmonic-tv":
        for n, ms in by_n.items():
            out[f"max_fitted_c[n={n}]"] = max(m["fitted_c"] for m in ms)
    elif exp == "green-cross-check":
        out["max_abs_diff"] = max(m["abs_diff"] for ms in by_n.values() for m in ms)
    return out


def _manifest_text(config: ExperimentConfig, manifest: dict) -> str:
    lines = ["# covertime-lab run manifest", f"version = {manifest['version']}", "", "[config]", config.echo(), "",
             "[totals]"]
    lines += [f"{k} = {v}" for k, v in manifest["totals"].items()]
    lines += ["", "[summary]"]
    lines += [f"{k} = {v}" for k, v in manifest["summary"].items()]
    lines += ["", f"wall_time = {manifest['wall_time']:.3f}", ""]
    return "\n".join(lines)


def _open_partial(path: str):
    try:
        d = os.path.dirname(os.path.abspath(path))
        os.makedirs(d, exist_ok=True)
        return open(path + ".partial", "w", encoding="utf-8")
    except OSError as exc:
        raise OutputError(f"cannot write results to {path!r}: {exc}; nothing was saved") from exc


def run(config: ExperimentConfig, workers: int | None = None) -> RunResult:
    """Execute the experiment's grid; write the CSV and manifest if ``config.output`` is set."""
    workers = config.workers if workers is None else workers
    t0 = time.perf_counter()
    plan = _plan(config)
    partial = _open_partial(config.output) if config.output else None
    rows, done = [], 0

    def emit(task_rows, elapsed):
        nonlocal done
        for n, r, meas in task_rows:
            row = ResultRow(config.experiment, n, r, replica_key(config.seed, r), meas, elapsed)
            rows.append(row)
            if partial is not None:
                partial.write(rows_to_csv([row]).split("\n", 1)[1])
        if partial is not None:
            partial.flush()
        done += 1

    try:
        if workers <= 1 or len(plan) == 1:
            for n, reps in plan:
                emit(*_run_task(config, n, reps))
        else:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                futures = [pool.submit(_run_task, config, n, reps) for n, reps in plan]
                for fut in futures:
                    emit(*fut.result())
    except OSError as exc:
        raise OutputError(f"write failed after {done} of {len(plan)} tasks; partial rows in "
                          f"{config.output}.partial: {exc}") from exc
    finally:
        if partial is not None:
            partial.close()

    rows.sort(key=lambda r: (r.n, r.replica))
    counts = {}
    for row in rows:
        counts[row.n] = counts.get(row.n, 0) + 1
    manifest = {
        "version": __version__,
        "totals": {"rows": len(rows), "tasks": len(plan), **{f"rows[n={n}]": c for n, c in sorted(counts.items())}},
        "summary": _summaries(config, rows),
        "wall_time": time.perf_counter() - t0,
    }
    csv_path = manifest_path = None
    if config.output:
        csv_path = config.output
        manifest_path = config.output + ".manifest.txt"
        try:
            with open(csv_path, "w", encoding="utf-8", newline="") as fh:
                fh.write(rows_to_csv(rows))
            with open(manifest_path, "w", encoding="utf-8") as fh:
                fh.write(_manifest_text(config, manifest))
            os.remove(csv_path + ".partial")
        except OSError as exc:
            raise OutputError(f"could not finalize {csv_path!r}: {exc}; unsorted rows remain in "
                              f"{csv_path}.partial") from exc
    return RunResult(config, rows, manifest, csv_path, manifest_path)


def run_config_file(path: str, workers: int | None = None) -> RunResult:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    return run(parse_config(text), workers)
