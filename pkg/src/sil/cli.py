"""Command-line interface: trial, sweep, spectral, asymptotics, fit, audit."""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import harness
from .diagnostics import phase_times
from .errors import ConvergenceError, DivergenceError, DomainError, PreconditionError
from .harness import SweepConfig, make_activation, run_trial
from .optimizers import METHOD_SPHERICAL
from .sampling import SeedStream, sample_instance, sample_sphere
from .spectral import (
    a_star_operator,
    a_theta_operator,
    asymptotic_fixed_points,
    d_n_operator,
    moment_coefficients,
    top2_eigs,
    trajectory_spectral_audit,
)


def _floats(text: str):
    return tuple(float(x) for x in text.split(","))


def _ints(text: str):
    return tuple(int(x) for x in text.split(","))


def expand_config_file(argv):
    """Splice `--config FILE` into flags: each `key=value` line becomes
    `--key value`, placed first so explicit flags win."""
    argv = list(argv)
    if "--config" not in argv:
        return argv
    i = argv.index("--config")
    try:
        path = argv[i + 1]
    except IndexError:
        raise DomainError("--config needs a file path") from None
    injected = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise DomainError(f"config line is not key=value: {line!r}")
            key, value = line.split("=", 1)
            injected += [f"--{key.strip().replace('_', '-')}", value.strip()]
    return argv[:1] + injected + argv[1:i] + argv[i + 2:]


def _add_common(p, with_delta=True):
    p.add_argument("--config", default=None, metavar="FILE",
                   help="flat key=value file; explicit flags override")
    p.add_argument("--seed", type=int, required=True, help="root seed (mandatory)")
    p.add_argument("--activation", default="hard_trunc",
                   choices=["quadratic", "hard_trunc", "smooth_trunc"])
    p.add_argument("--M", type=float, default=8.0, help="truncation level")
    if with_delta:
        p.add_argument("--delta", type=float, required=True, help="sample ratio n/d")


def _add_optimizer_flags(p):
    p.add_argument("--method", required=True,
                   choices=["spherical_gd", "euclidean_gd", "online_sgd"])
    p.add_argument("--eta", type=float, default=None, help="step size (method default if unset)")
    p.add_argument("--T", type=int, default=None, help="max steps (method default if unset)")
    p.add_argument("--r0", type=float, default=None, help="euclidean init radius (default 1/d^2)")
    p.add_argument("--record-every", type=int, default=None)
    p.add_argument("--stop-sq-overlap", type=float, default=None)
    p.add_argument("--stop-dist-sq", type=float, default=None)
    p.add_argument("--grad-tol", type=float, default=None)
    p.add_argument("--theta-star-mode", default="uniform_sphere",
                   choices=["uniform_sphere", "first_basis_vector"])


def build_parser():
    ap = argparse.ArgumentParser(prog="sil", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("trial", help="run one trial and write its trajectory CSV")
    _add_common(p)
    _add_optimizer_flags(p)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_trial)

    p = sub.add_parser("sweep", help="run a seeded (d, delta) grid")
    _add_common(p, with_delta=False)
    _add_optimizer_flags(p)
    p.add_argument("--d", type=_ints, required=True, help="comma-separated d grid")
    p.add_argument("--delta", type=_floats, required=True, help="comma-separated delta grid")
    p.add_argument("--seeds", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--parallelism", type=int, default=None,
                   help="worker count (SIL_THREADS overrides)")
    p.add_argument("--trajectories", default="none", choices=["none", "mean", "all"])
    p.add_argument("--targets", type=_floats, default=harness.DEFAULT_TARGETS)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("spectral", help="top-two eigenpairs of A*, A(theta), or D_n")
    _add_common(p)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--operator", default="astar", choices=["astar", "dn", "atheta"])
    p.add_argument("--theta-norm", type=float, default=1.0,
                   help="norm of the random theta used by the cutoff operator")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--out", default=None, help="optional JSON report path")
    p.set_defaults(func=cmd_spectral)

    p = sub.add_parser("asymptotics", help="fixed-point predictions at given delta")
    p.add_argument("--seed", type=int, default=0, help="unused; accepted for uniformity")
    p.add_argument("--activation", default="hard_trunc", choices=["hard_trunc", "smooth_trunc"])
    p.add_argument("--M", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--order", type=int, default=200)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_asymptotics)

    p = sub.add_parser("fit", help="threshold or time-complexity fits from a sweep directory")
    p.add_argument("--kind", required=True, choices=["delta", "time"])
    p.add_argument("--dir", required=True, help="sweep output directory")
    p.add_argument("--targets", type=_floats, default=harness.DEFAULT_TARGETS)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("audit", help="spectral audit of a recorded spherical trajectory")
    _add_common(p)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--eta", type=float, default=0.1)
    p.add_argument("--T", type=int, default=None)
    p.add_argument("--stride", type=int, default=10)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_audit)
    return ap


def cmd_trial(args) -> int:
    cfg = SweepConfig(
        method=args.method, activation=args.activation, M=args.M,
        d_list=(args.d,), delta_list=(args.delta,), seeds=1, root_seed=args.seed,
        out_dir=None, eta=args.eta, T=args.T, r0=args.r0,
        record_every=args.record_every, stop_sq_overlap=args.stop_sq_overlap,
        stop_dist_sq=args.stop_dist_sq, grad_tol=args.grad_tol,
        theta_star_mode=args.theta_star_mode, trajectories="all",
    )
    rec, rows = run_trial(cfg, args.d, args.delta, 0)
    if not rec.ok:
        print(rec.status, file=sys.stderr)
        return 1
    os.makedirs(args.out, exist_ok=True)
    name = harness.traj_filename(args.method, args.d, args.delta, args.M, args.seed)
    harness.write_traj_csv(os.path.join(args.out, name), rows)
    print(
        f"{args.method} d={args.d} delta={args.delta:g}: steps={rec.steps} "
        f"sq_overlap={rec.final_sq_overlap:.6f} dist_sq={rec.final_dist_sq:.3e} "
        f"({rec.termination}) -> {name}"
    )
    return 0


def cmd_sweep(args) -> int:
    cfg = SweepConfig(
        method=args.method, activation=args.activation, M=args.M,
        d_list=tuple(args.d), delta_list=tuple(args.delta), seeds=args.seeds,
        root_seed=args.seed, out_dir=args.out, eta=args.eta, T=args.T, r0=args.r0,
        record_every=args.record_every, stop_sq_overlap=args.stop_sq_overlap,
        stop_dist_sq=args.stop_dist_sq, grad_tol=args.grad_tol,
        theta_star_mode=args.theta_star_mode, parallelism=args.parallelism,
        trajectories=args.trajectories, targets=tuple(args.targets),
    )
    if args.method == "online_sgd":
        for d in cfg.d_list:
            for delta in cfg.delta_list:
                if cfg.cell_T(d, delta) > cfg.cell_n(d, delta):
                    raise DomainError(
                        f"one-pass constraint violated: T={cfg.cell_T(d, delta)} > "
                        f"n={cfg.cell_n(d, delta)} at d={d}, delta={delta:g}"
                    )
    records, summaries = harness.run_sweep(cfg)
    failures = sum(s.failures for s in summaries)
    print(f"{len(records)} trials -> {args.out} ({failures} failures)")
    for s in summaries:
        print(
            f"  d={s.d} delta={s.delta:g}: mean_sq_overlap={s.mean_sq_overlap:.4f} "
            f"+- {s.std_sq_overlap:.4f} (seeds={s.seeds})"
        )
    return 0


def cmd_spectral(args) -> int:
    spec = make_activation(args.activation, args.M)
    stream = SeedStream(args.seed)
    inst = sample_instance(args.d, int(round(args.delta * args.d)), spec, stream.child("instance"))
    if args.operator == "astar":
        op, scale = a_star_operator(inst), 2.0
    elif args.operator == "dn":
        op, scale = d_n_operator(inst), 1.0
    else:
        theta = sample_sphere(args.d, args.theta_norm, stream.child("theta"))
        op, scale = a_theta_operator(inst, theta), 2.0
    rep = top2_eigs(op, tol=args.tol, seed=args.seed)
    c1, c2 = moment_coefficients(spec)
    rep.predicted_lam1, rep.predicted_lam2 = scale * c1, scale * c2
    if spec.kind != "quadratic":
        try:
            pred = asymptotic_fixed_points(spec, args.delta)
            rep.predicted_lam1 = scale * pred.lam1_dn
            rep.predicted_lam2 = scale * pred.lam2_dn
            rep.predicted_overlap_sq = pred.overlap_sq
        except (ConvergenceError, DomainError):
            pass  # moment-coefficient predictions stay in place
    print(f"operator={args.operator} d={args.d} delta={args.delta:g} {args.activation} M={args.M:g}")
    print(f"  lam1={rep.lam1:.6f} lam2={rep.lam2:.6f} gap={rep.gap:.6f} overlap={rep.overlap:.6f}")
    print(f"  predicted lam1={rep.predicted_lam1:.6f} lam2={rep.predicted_lam2:.6f}")
    if rep.predicted_overlap_sq is not None:
        print(f"  predicted overlap^2={rep.predicted_overlap_sq:.6f} "
              f"(measured {rep.overlap**2:.6f})")
    print(f"  residuals: {rep.residual1:.2e}, {rep.residual2:.2e} in {rep.applies} applies")
    if args.out:
        payload = {
            "lam1": rep.lam1, "lam2": rep.lam2, "overlap": rep.overlap,
            "predicted_lam1": rep.predicted_lam1, "predicted_lam2": rep.predicted_lam2,
            "predicted_overlap_sq": rep.predicted_overlap_sq,
            "residuals": [rep.residual1, rep.residual2],
        }
        with open(args.out, "w") as fh:
            json.dump(payload, fh, indent=2)
    return 0


def cmd_asymptotics(args) -> int:
    spec = make_activation(args.activation, args.M)
    pred = asymptotic_fixed_points(spec, args.delta, order=args.order)
    a1, a2 = pred.predicted_a_star()
    print(f"{args.activation} M={args.M:g} delta={args.delta:g} (tau={pred.tau:.4f})")
    print(f"  lam_star = {pred.lam_star:.6f}   lam_bar = {pred.lam_bar:.6f}")
    print(f"  predicted: lam1(D_n)={pred.lam1_dn:.6f} lam2(D_n)={pred.lam2_dn:.6f}")
    print(f"  predicted: lam1(A*)={a1:.6f} lam2(A*)={a2:.6f}")
    print(f"  predicted overlap^2 = {pred.overlap_sq:.6f}")
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(
                {"lam_star": pred.lam_star, "lam_bar": pred.lam_bar,
                 "lam1_dn": pred.lam1_dn, "lam2_dn": pred.lam2_dn,
                 "overlap_sq": pred.overlap_sq}, fh, indent=2,
            )
    return 0


def cmd_fit(args) -> int:
    if args.kind == "delta":
        summaries = harness.load_summaries(os.path.join(args.dir, "summary.csv"))
        fit = harness.threshold_fit(summaries, targets=args.targets)
    else:
        records = harness.load_trials(os.path.join(args.dir, "trials.csv"))
        fit = harness.time_fit(records, targets=args.targets)
    harness.write_fit_csvs(
        fit, os.path.join(args.dir, "fits.csv"), os.path.join(args.dir, "fits_lines.csv")
    )
    for line in fit.lines:
        note = f" (unfittable d: {line.unfittable})" if line.unfittable else ""
        print(
            f"{fit.kind} target={line.target:g}: slope={line.slope:.4f} "
            f"intercept={line.intercept:.4f} R^2={line.r2:.4f}{note}"
        )
    return 0


def cmd_audit(args) -> int:
    from .optimizers import OptimizerConfig, StopRule, run_spherical_gd

    spec = make_activation(args.activation, args.M)
    stream = SeedStream(args.seed)
    inst = sample_instance(args.d, int(round(args.delta * args.d)), spec, stream.child("instance"))
    T = args.T if args.T is not None else int(np.ceil(1000 * np.log(args.d) ** 2))
    cfg = OptimizerConfig(
        method=METHOD_SPHERICAL, eta=args.eta, T=T,
        stop=StopRule(grad_tol=1e-11), record_thetas=True,
    )
    traj = run_spherical_gd(inst, cfg, stream.child("run"))
    points = trajectory_spectral_audit(inst, traj, args.stride, seed=args.seed)
    pt = phase_times(traj, args.d, args.eta)
    print(f"trajectory: {traj.final['t']} steps, terminal sq_overlap="
          f"{traj.final['sq_overlap']:.4f} ({traj.termination})")
    print(f"phase times: t_angle={pt.t_angle} t_norm={pt.t_norm} t_dist={pt.t_dist} "
          f"predicted_t_angle={pt.predicted_t_angle:.1f}")
    rows = []
    for p in points:
        flag = " FLAGGED" if p.flagged else ""
        print(f"  t={p.t:7d} lam1={p.report.lam1:.4f} lam2={p.report.lam2:.4f} "
              f"gap={p.report.gap:.4f} overlap={p.report.overlap:.4f}{flag}")
        rows.append((p.t, p.report.lam1, p.report.lam2, p.report.overlap, int(p.flagged)))
    if args.out:
        with open(args.out, "w") as fh:
            fh.write("t,lam1,lam2,overlap,flagged\n")
            for r in rows:
                fh.write(",".join(map(str, r)) + "\n")
    flagged = sum(p.flagged for p in points)
    print(f"{len(points)} audit points, {flagged} flagged")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        argv = expand_config_file(sys.argv[1:] if argv is None else argv)
        args = parser.parse_args(argv)
        return args.func(args)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DomainError, PreconditionError, ConvergenceError, DivergenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
