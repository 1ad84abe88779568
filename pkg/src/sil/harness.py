"""Sweep engine: seeded trial grids, aggregation, threshold/time fits, and
the frozen CSV formats consumed by the figure renderer.

Per-trial seeds derive from (root, method, activation, M, d, delta, seed
index), so adding grid cells never perturbs existing cells' data, and results
are byte-identical at any parallelism degree (trials are single-threaded and
written after a deterministic sort).
"""

from __future__ import annotations

import json
import math
import os
import subprocess
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .activations import hard_trunc, quadratic, smooth_trunc
from .errors import DomainError
from .diagnostics import phase_times, sq_overlap_crossing
from .optimizers import (
    METHOD_EUCLIDEAN,
    METHOD_ONLINE,
    METHOD_SPHERICAL,
    OptimizerConfig,
    StopRule,
    default_online_eta,
    run_euclidean_gd,
    run_online_sgd,
    run_spherical_gd,
)
from .sampling import SeedStream, sample_instance

DEFAULT_TARGETS = (0.1, 0.2, 0.3, 0.4, 0.5)

TRAJ_HEADER = "t,overlap,sq_overlap,angle,norm,loss,dist_sq"
SUMMARY_HEADER = (
    "method,d,delta,M,seeds,mean_sq_overlap,std_sq_overlap,mean_t_angle,mean_t_norm,failures"
)
FIT_POINTS_HEADER = "kind,target,d,value"
FIT_LINES_HEADER = "kind,target,slope,intercept,r2"

PHASE_ANGLE_TARGET = 0.3
PHASE_DIST_EPS = 1e-8


def make_activation(kind: str, M: float):
    if kind == "quadratic":
        return quadratic()
    if kind == "hard_trunc":
        return hard_trunc(M)
    if kind == "smooth_trunc":
        return smooth_trunc(M)
    raise DomainError(f"unknown activation kind {kind!r}")


def parallelism_from_env(requested: int | None) -> int:
    env = os.environ.get("SIL_THREADS")
    if env:
        return max(1, int(env))
    if requested is not None:
        return max(1, requested)
    return max(1, os.cpu_count() or 1)


@dataclass(frozen=True)
class SweepConfig:
    method: str
    activation: str
    M: float
    d_list: tuple
    delta_list: tuple
    seeds: int
    root_seed: int
    out_dir: str | None = None
    eta: float | None = None
    T: int | None = None
    r0: float | None = None
    record_every: int | None = None
    stop_sq_overlap: float | None = None
    stop_dist_sq: float | None = None
    grad_tol: float | None = None
    theta_star_mode: str = "uniform_sphere"
    parallelism: int | None = None
    trajectories: str = "none"  # none | mean | all
    targets: tuple = DEFAULT_TARGETS

    def __post_init__(self):
        if self.method not in (METHOD_SPHERICAL, METHOD_EUCLIDEAN, METHOD_ONLINE):
            raise DomainError(f"unknown method {self.method!r}")
        if self.seeds < 1:
            raise DomainError("seeds must be >= 1")
        if not self.d_list or not self.delta_list:
            raise DomainError("d and delta grids must be non-empty")
        if any(d < 2 for d in self.d_list) or any(dl <= 0 for dl in self.delta_list):
            raise DomainError("grid values must be positive (d >= 2)")
        if self.trajectories not in ("none", "mean", "all"):
            raise DomainError("trajectories must be one of none|mean|all")
        make_activation(self.activation, self.M)

    def cell_n(self, d: int, delta: float) -> int:
        return int(round(delta * d))

    def cell_eta(self, d: int) -> float:
        if self.eta is not None:
            return self.eta
        if self.method == METHOD_SPHERICAL:
            return 0.1
        if self.method == METHOD_EUCLIDEAN:
            return 0.1 / self.M**2
        return default_online_eta(d)

    def cell_T(self, d: int, delta: float) -> int:
        if self.T is not None:
            return self.T
        if self.method == METHOD_SPHERICAL:
            return int(math.ceil(1000.0 * math.log(d) ** 2))
        if self.method == METHOD_EUCLIDEAN:
            return min(int(math.ceil(200.0 * math.log(d) / self.cell_eta(d))), 10**6)
        return self.cell_n(d, delta)

    def optimizer_config(self, d: int, delta: float) -> OptimizerConfig:
        grad_tol = self.grad_tol
        stop_dist = self.stop_dist_sq
        if self.method == METHOD_SPHERICAL and grad_tol is None:
            # stationarity stop: the terminal point equals the full-T limit
            # to this tolerance, at a fraction of the steps
            grad_tol = 1e-11
        if self.method == METHOD_EUCLIDEAN and stop_dist is None:
            stop_dist = 1e-9
        stop = StopRule(
            target_sq_overlap=self.stop_sq_overlap,
            target_dist_sq=stop_dist,
            grad_tol=grad_tol,
        )
        if all(v is None for v in (stop.target_sq_overlap, stop.target_dist_sq, stop.grad_tol)):
            stop = None
        kwargs = dict(
            method=self.method,
            eta=self.cell_eta(d),
            T=self.cell_T(d, delta),
            record_every=self.record_every,
            stop=stop,
        )
        if self.method == METHOD_EUCLIDEAN:
            kwargs.update(init="sphere", r0=self.r0 if self.r0 is not None else 1.0 / d**2)
        return OptimizerConfig(**kwargs)

    def trial_seed(self, d: int, delta: float, seed_index: int) -> SeedStream:
        return SeedStream(self.root_seed).child(
            "trial", self.method, self.activation, float(self.M), int(d), float(delta), seed_index
        )


@dataclass
class TrialRecord:
    method: str
    d: int
    delta: float
    M: float
    seed_index: int
    seed_key: int
    status: str  # "ok" or "error:<msg>"
    termination: str
    steps: int
    final_overlap: float
    final_sq_overlap: float
    final_angle: float
    final_norm: float
    final_loss: float
    final_dist_sq: float
    t_angle: float
    t_norm: float
    t_dist: float
    crossings: dict = field(default_factory=dict)  # target -> step or nan

    @property
    def ok(self) -> bool:
        return self.status == "ok"


@dataclass
class CellSummary:
    method: str
    d: int
    delta: float
    M: float
    seeds: int
    mean_sq_overlap: float
    std_sq_overlap: float
    mean_t_angle: float
    mean_t_norm: float
    failures: int


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    return repr(x)


def _runner(method: str):
    return {
        METHOD_SPHERICAL: run_spherical_gd,
        METHOD_EUCLIDEAN: run_euclidean_gd,
        METHOD_ONLINE: run_online_sgd,
    }[method]


def run_trial(config: SweepConfig, d: int, delta: float, seed_index: int):
    """Execute one (cell, seed) trial; returns (TrialRecord, recorded rows).

    Rows are the 7-column trajectory records; None when trajectories == none.
    """
    seed = config.trial_seed(d, delta, seed_index)
    nan = float("nan")
    with threadpool_limits(limits=1):
        try:
            spec = make_activation(config.activation, config.M)
            inst = sample_instance(
                d, config.cell_n(d, delta), spec, seed.child("instance"),
                theta_star_mode=config.theta_star_mode,
            )
            opt = config.optimizer_config(d, delta)
            traj = _runner(config.method)(inst, opt, seed.child("run"))
        except Exception as exc:  # per-trial failures never abort the sweep
            rec = TrialRecord(
                method=config.method, d=d, delta=delta, M=config.M,
                seed_index=seed_index, seed_key=seed.key64,
                status=f"error:{type(exc).__name__}:{exc}", termination="failed",
                steps=0, final_overlap=nan, final_sq_overlap=nan, final_angle=nan,
                final_norm=nan, final_loss=nan, final_dist_sq=nan,
                t_angle=nan, t_norm=nan, t_dist=nan,
                crossings={t: nan for t in config.targets},
            )
            return rec, None
    pt = phase_times(traj, d, config.cell_eta(d), PHASE_ANGLE_TARGET, PHASE_DIST_EPS)
    crossings = {}
    for tgt in config.targets:
        c = sq_overlap_crossing(traj, tgt)
        crossings[tgt] = nan if c is None else float(c)
    fin = traj.final
    rec = TrialRecord(
        method=config.method, d=d, delta=delta, M=config.M,
        seed_index=seed_index, seed_key=seed.key64,
        status="ok", termination=traj.termination, steps=fin["t"],
        final_overlap=fin["overlap"], final_sq_overlap=fin["sq_overlap"],
        final_angle=fin["angle"], final_norm=fin["norm"], final_loss=fin["loss"],
        final_dist_sq=fin["dist_sq"],
        t_angle=nan if pt.t_angle is None else float(pt.t_angle),
        t_norm=nan if pt.t_norm is None else float(pt.t_norm),
        t_dist=nan if pt.t_dist is None else float(pt.t_dist),
        crossings=crossings,
    )
    rows = None
    if config.trajectories != "none":
        rows = np.column_stack(
            [traj.t, traj.overlap, traj.sq_overlap, traj.angle, traj.norm, traj.loss, traj.dist_sq]
        )
    return rec, rows


def _task(args):
    config_dict, d, delta, seed_index = args
    config = SweepConfig(**config_dict)
    rec, rows = run_trial(config, d, delta, seed_index)
    return (d, delta, seed_index), rec, rows


def summarize(records: list[TrialRecord]) -> list[CellSummary]:
    cells = {}
    for r in records:
        cells.setdefault((r.method, r.d, r.delta, r.M), []).append(r)
    out = []
    for (method, d, delta, M), recs in sorted(cells.items()):
        good = [r for r in recs if r.ok]
        sq = np.array([r.final_sq_overlap for r in good])
        t_ang = np.array([r.t_angle for r in good if not math.isnan(r.t_angle)])
        t_nrm = np.array([r.t_norm for r in good if not math.isnan(r.t_norm)])
        out.append(
            CellSummary(
                method=method, d=d, delta=delta, M=M, seeds=len(recs),
                mean_sq_overlap=float(sq.mean()) if sq.size else float("nan"),
                std_sq_overlap=float(sq.std(ddof=1)) if sq.size > 1 else 0.0,
                mean_t_angle=float(t_ang.mean()) if t_ang.size else float("nan"),
                mean_t_norm=float(t_nrm.mean()) if t_nrm.size else float("nan"),
                failures=len(recs) - len(good),
            )
        )
    return out


def _delta_token(delta: float) -> str:
    return f"{delta:g}"


def traj_filename(method: str, d: int, delta: float, M: float, seed_token) -> str:
    return f"{method}_d{d}_delta{_delta_token(delta)}_M{M:g}_s{seed_token}.csv"


def write_traj_csv(path, rows: np.ndarray):
    with open(path, "w") as fh:
        fh.write(TRAJ_HEADER + "\n")
        for row in rows:
            fields = [str(int(row[0]))] + [_fmt(v) for v in row[1:]]
            fh.write(",".join(fields) + "\n")


def _mean_rows(cell_rows: list[np.ndarray]) -> np.ndarray:
    """Across-seed mean of recorded trajectories on the longest recorded
    grid; shorter (early-stopped) runs are extended by holding their terminal
    values, which is faithful once a run has converged."""
    grid = max((r[:, 0] for r in cell_rows), key=len)
    acc = np.zeros((len(grid), 7))
    for rows in cell_rows:
        idx = np.searchsorted(rows[:, 0], grid, side="right") - 1
        idx = np.clip(idx, 0, len(rows) - 1)
        acc += rows[idx]
    acc /= len(cell_rows)
    acc[:, 0] = grid
    return acc


def git_describe_version() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True, text=True, timeout=5,
        )
        if out.returncode == 0 and out.stdout.strip():
            return f"sil-{__version__}+g{out.stdout.strip()}"
    except OSError:
        pass
    return f"sil-{__version__}"


def run_sweep(config: SweepConfig):
    """Execute every (cell, seed) trial exactly once; returns (records,
    summaries) and persists per-trial rows, summaries, optional trajectory
    CSVs, and a JSONL sidecar under config.out_dir."""
    tasks = [
        (asdict(config), d, delta, s)
        for d in config.d_list
        for delta in config.delta_list
        for s in range(config.seeds)
    ]
    workers = parallelism_from_env(config.parallelism)
    results = {}
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for key, rec, rows in pool.map(_task, tasks, chunksize=1):
                results[key] = (rec, rows)
    else:
        for t in tasks:
            key, rec, rows = _task(t)
            results[key] = (rec, rows)
    keys = sorted(results.keys())
    records = [results[k][0] for k in keys]
    summaries = summarize(records)
    if config.out_dir is not None:
        try:
            _persist(config, keys, results, records, summaries)
        except OSError:
            try:
                with open(os.path.join(config.out_dir, "PARTIAL"), "w") as fh:
                    fh.write("sweep output incomplete: I/O error during write\n")
            except OSError:
                pass
            raise
    return records, summaries


def _persist(config, keys, results, records, summaries):
    out = config.out_dir
    os.makedirs(out, exist_ok=True)
    write_trials_csv(os.path.join(out, "trials.csv"), records, config.targets)
    write_summary_csv(os.path.join(out, "summary.csv"), summaries)
    sidecar = {
        "config": asdict(config),
        "version": git_describe_version(),
        "root_seed": config.root_seed,
    }
    with open(os.path.join(out, "sweep.jsonl"), "w") as fh:
        fh.write(json.dumps(sidecar, sort_keys=True) + "\n")
    if config.trajectories == "none":
        return
    tdir = os.path.join(out, "trajectories")
    os.makedirs(tdir, exist_ok=True)
    cells = {}
    for key in keys:
        d, delta, s = key
        rec, rows = results[key]
        if rows is None:
            continue
        cells.setdefault((d, delta), []).append(rows)
        if config.trajectories == "all":
            name = traj_filename(config.method, d, delta, config.M, s)
            write_traj_csv(os.path.join(tdir, name), rows)
    for (d, delta), cell_rows in sorted(cells.items()):
        name = traj_filename(config.method, d, delta, config.M, "mean")
        write_traj_csv(os.path.join(tdir, name), _mean_rows(cell_rows))


def write_trials_csv(path, records: list[TrialRecord], targets):
    cols = [
        "method", "d", "delta", "M", "seed_index", "seed_key", "status", "termination",
        "steps", "final_overlap", "final_sq_overlap", "final_angle", "final_norm",
        "final_loss", "final_dist_sq", "t_angle", "t_norm", "t_dist",
    ] + [f"t_sq_{t:g}" for t in targets]
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for r in records:
            row = [
                r.method, str(r.d), _fmt(r.delta), _fmt(r.M), str(r.seed_index),
                str(r.seed_key), r.status.replace(",", ";"), r.termination, str(r.steps),
                _fmt(r.final_overlap), _fmt(r.final_sq_overlap), _fmt(r.final_angle),
                _fmt(r.final_norm), _fmt(r.final_loss), _fmt(r.final_dist_sq),
                _fmt(r.t_angle), _fmt(r.t_norm), _fmt(r.t_dist),
            ] + [_fmt(r.crossings.get(t, float("nan"))) for t in targets]
            fh.write(",".join(row) + "\n")


def write_summary_csv(path, summaries: list[CellSummary]):
    with open(path, "w") as fh:
        fh.write(SUMMARY_HEADER + "\n")
        for s in summaries:
            fh.write(
                ",".join(
                    [
                        s.method, str(s.d), _fmt(s.delta), _fmt(s.M), str(s.seeds),
                        _fmt(s.mean_sq_overlap), _fmt(s.std_sq_overlap),
                        _fmt(s.mean_t_angle), _fmt(s.mean_t_norm), str(s.failures),
                    ]
                )
                + "\n"
            )


def load_summaries(path) -> list[CellSummary]:
    out = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != SUMMARY_HEADER:
            raise DomainError(f"unexpected summary header {header!r}")
        for line in fh:
            f = line.strip().split(",")
            out.append(
                CellSummary(
                    method=f[0], d=int(f[1]), delta=float(f[2]), M=float(f[3]),
                    seeds=int(f[4]), mean_sq_overlap=float(f[5]), std_sq_overlap=float(f[6]),
                    mean_t_angle=float(f[7]), mean_t_norm=float(f[8]), failures=int(f[9]),
                )
            )
    return out


def load_trials(path) -> list[TrialRecord]:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        target_cols = [(i, float(c[5:])) for i, c in enumerate(header) if c.startswith("t_sq_")]
        idx = {c: i for i, c in enumerate(header)}
        out = []
        for line in fh:
            f = line.rstrip("\n").split(",")
            out.append(
                TrialRecord(
                    method=f[idx["method"]], d=int(f[idx["d"]]), delta=float(f[idx["delta"]]),
                    M=float(f[idx["M"]]), seed_index=int(f[idx["seed_index"]]),
                    seed_key=int(f[idx["seed_key"]]), status=f[idx["status"]],
                    termination=f[idx["termination"]], steps=int(f[idx["steps"]]),
                    final_overlap=float(f[idx["final_overlap"]]),
                    final_sq_overlap=float(f[idx["final_sq_overlap"]]),
                    final_angle=float(f[idx["final_angle"]]),
                    final_norm=float(f[idx["final_norm"]]),
                    final_loss=float(f[idx["final_loss"]]),
                    final_dist_sq=float(f[idx["final_dist_sq"]]),
                    t_angle=float(f[idx["t_angle"]]), t_norm=float(f[idx["t_norm"]]),
                    t_dist=float(f[idx["t_dist"]]),
                    crossings={t: float(f[i]) for i, t in target_cols},
                )
            )
    return out


def isotonic_nondecreasing(y: np.ndarray) -> np.ndarray:
    """Pool-adjacent-violators fit with equal weights."""
    values = list(map(float, y))
    weights = [1.0] * len(values)
    starts = list(range(len(values)))
    k = 0
    while k < len(values) - 1:
        if values[k] <= values[k + 1] + 1e-15:
            k += 1
            continue
        w = weights[k] + weights[k + 1]
        values[k] = (values[k] * weights[k] + values[k + 1] * weights[k + 1]) / w
        weights[k] = w
        del values[k + 1], weights[k + 1], starts[k + 1]
        if k > 0:
            k -= 1
    out = np.empty(len(y))
    bounds = starts + [len(y)]
    for i, v in enumerate(values):
        out[bounds[i]: bounds[i + 1]] = v
    return out


@dataclass
class FitLine:
    target: float
    slope: float
    intercept: float
    r2: float
    points: list  # (d, value)
    unfittable: list  # d values where the grid does not bracket the target


@dataclass
class ThresholdFit:
    kind: str  # "delta_star" or "t_star"
    lines: list


def _log_d_fit(points):
    if len(points) < 2:
        return float("nan"), float("nan"), float("nan")
    x = np.log([p[0] for p in points])
    y = np.array([p[1] for p in points])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    sstot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if sstot < 1e-300 else max(0.0, 1.0 - float(resid @ resid) / sstot)
    return float(slope), float(intercept), float(r2)


def threshold_fit(summaries: list[CellSummary], targets=DEFAULT_TARGETS) -> ThresholdFit:
    """delta*(d, target) by isotonic smoothing of mean squared overlap vs
    delta and inverse linear interpolation, then a least-squares fit of
    delta* against log d per target."""
    by_d = {}
    for s in summaries:
        by_d.setdefault(s.d, []).append(s)
    curves = {}
    for d, cells in by_d.items():
        cells = sorted(cells, key=lambda s: s.delta)
        deltas = np.array([c.delta for c in cells])
        iso = isotonic_nondecreasing(np.array([c.mean_sq_overlap for c in cells]))
        curves[d] = (deltas, iso)
    lines = []
    for tgt in targets:
        points, unfittable = [], []
        for d in sorted(curves):
            deltas, iso = curves[d]
            if not (iso[0] <= tgt <= iso[-1]):
                unfittable.append(d)
                continue
            j = int(np.searchsorted(iso, tgt, side="left"))
            if j == 0:
                points.append((d, float(deltas[0])))
                continue
            v0, v1 = iso[j - 1], iso[j]
            if v1 <= v0:
                points.append((d, float(deltas[j])))
            else:
                frac = (tgt - v0) / (v1 - v0)
                points.append((d, float(deltas[j - 1] + frac * (deltas[j] - deltas[j - 1]))))
        slope, intercept, r2 = _log_d_fit(points)
        lines.append(
            FitLine(target=tgt, slope=slope, intercept=intercept, r2=r2,
                    points=points, unfittable=unfittable)
        )
    return ThresholdFit(kind="delta_star", lines=lines)


def time_fit(records: list[TrialRecord], targets=DEFAULT_TARGETS) -> ThresholdFit:
    """T*(d, target) = mean first recorded step with squared overlap >=
    target across a single-delta sweep's seeds, fitted against log d."""
    deltas = {r.delta for r in records}
    if len(deltas) != 1:
        raise DomainError("time fit expects a single-delta sweep")
    by_d = {}
    for r in records:
        if r.ok:
            by_d.setdefault(r.d, []).append(r)
    lines = []
    for tgt in targets:
        points, unfittable = [], []
        for d in sorted(by_d):
            vals = [r.crossings[tgt] for r in by_d[d]
                    if tgt in r.crossings and not math.isnan(r.crossings[tgt])]
            if not vals:
                unfittable.append(d)
                continue
            points.append((d, float(np.mean(vals))))
        slope, intercept, r2 = _log_d_fit(points)
        lines.append(
            FitLine(target=tgt, slope=slope, intercept=intercept, r2=r2,
                    points=points, unfittable=unfittable)
        )
    return ThresholdFit(kind="t_star", lines=lines)


def write_fit_csvs(fit: ThresholdFit, points_path, lines_path):
    with open(points_path, "w") as fh:
        fh.write(FIT_POINTS_HEADER + "\n")
        for line in fit.lines:
            for d, value in line.points:
                fh.write(f"{fit.kind},{_fmt(line.target)},{d},{_fmt(value)}\n")
    with open(lines_path, "w") as fh:
        fh.write(FIT_LINES_HEADER + "\n")
        for line in fit.lines:
            fh.write(
                f"{fit.kind},{_fmt(line.target)},{_fmt(line.slope)},"
                f"{_fmt(line.intercept)},{_fmt(line.r2)}\n"
            )
