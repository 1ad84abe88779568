"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The long sweep criteria (5 and 7) persist their outputs under results/ at the
repository root; the figure renderer's tests consume those directories.

Run with `pytest -s -m acceptance` to see the per-criterion lines live.
"""

import math
import os
from pathlib import Path

import numpy as np
import pytest
from threadpoolctl import threadpool_limits

from sil.activations import hard_trunc, quadratic, smooth_trunc
from sil.diagnostics import geometric_rate_fit, one_point_convexity
from sil.harness import (
    SweepConfig,
    run_sweep,
    threshold_fit,
    time_fit,
    write_fit_csvs,
)
from sil.losses import grad_correlation, stein_decomposition
from sil.optimizers import (
    OptimizerConfig,
    StopRule,
    run_euclidean_gd,
    run_online_sgd,
    run_spherical_gd,
)
from sil.sampling import SeedStream, sample_instance, sample_sphere
from sil.spectral import (
    a_star_operator,
    a_theta_operator,
    asymptotic_fixed_points,
    d_n_operator,
    moment_coefficients,
    psd_ordering_check,
    rank_one_overlap_oracle,
    top2_eigs,
)

pytestmark = pytest.mark.acceptance

RESULTS = Path(__file__).resolve().parents[1] / "results"
ROOT_SEED = 20250810


def report(criterion, ok, detail):
    print(f"\n[criterion {criterion}] {'PASS' if ok else 'FAIL'} - {detail}")


def test_c1_spectral_law():
    spec = hard_trunc(8.0)
    c1, c2 = moment_coefficients(spec)
    stream = SeedStream(ROOT_SEED).child("c1")
    l1s, l2s, ovs = [], [], []
    with threadpool_limits(limits=1):
        for s in range(8):
            inst = sample_instance(200, 20_000, spec, stream.child(s))
            rep = top2_eigs(a_star_operator(inst), tol=1e-9, seed=s)
            l1s.append(rep.lam1)
            l2s.append(rep.lam2)
            ovs.append(rep.overlap)
    m1, m2, mo = np.mean(l1s), np.mean(l2s), np.mean(ovs)
    ok = abs(m1 - 2 * c1) <= 0.5 and abs(m2 - 2 * c2) <= 0.3 and mo >= 0.9
    report(
        1, ok,
        f"mean lam1={m1:.4f} (target {2 * c1:.4f}+-0.5), "
        f"mean lam2={m2:.4f} (target {2 * c2:.4f}+-0.3), overlap={mo:.4f} (>=0.9)",
    )
    assert abs(m1 - 2 * c1) <= 0.5
    assert mo >= 0.9
    # known-red check: the second eigenvalue sits at the weighted bulk edge
    # 2*psi_delta(lam_bar) ~= 2.75 at delta=100, outside the 1.98+-0.3 window
    assert abs(m2 - 2 * c2) <= 0.3


def test_c2_rank_one_oracle_equivalence():
    stream = SeedStream(ROOT_SEED).child("c2")
    worst_slack, worst_lam = 0.0, 0.0
    for k, spec in enumerate([quadratic()] * 10 + [hard_trunc(8.0)] * 10):
        inst = sample_instance(
            50, 200, spec, stream.child(k), theta_star_mode="first_basis_vector"
        )
        oracle = rank_one_overlap_oracle(inst)
        A = a_star_operator(inst).dense()
        vals, vecs = np.linalg.eigh(A)
        direct = float(vecs[0, -1] ** 2)
        slack = max(oracle.overlap_low - direct, direct - oracle.overlap_high, 0.0)
        worst_slack = max(worst_slack, slack)
        worst_lam = max(worst_lam, abs(oracle.lam1 - vals[-1]))
    ok = worst_slack <= 1e-4 and worst_lam <= 1e-6
    report(2, ok, f"worst bracket slack={worst_slack:.2e} (<=1e-4), "
                  f"worst |lam1 error|={worst_lam:.2e} (<=1e-6) over 20 instances")
    assert worst_slack <= 1e-4
    assert worst_lam <= 1e-6


def test_c3_negative_result_signature():
    stream = SeedStream(ROOT_SEED).child("c3")
    medians = []
    with threadpool_limits(limits=1):
        for d in (100, 200, 400):
            cfg = OptimizerConfig(
                method="spherical_gd", eta=0.1, T=int(np.ceil(1000 * np.log(d) ** 2)),
                stop=StopRule(grad_tol=1e-11),
            )
            vals = []
            for s in range(16):
                inst = sample_instance(d, 2 * d, quadratic(), stream.child(d, s))
                vals.append(run_spherical_gd(inst, cfg, stream.child("r", d, s)).final["sq_overlap"])
            medians.append(float(np.median(vals)))
    ok = medians[0] > medians[1] > medians[2] and medians[2] < 0.5
    report(3, ok, "median terminal sq_overlap at d=100,200,400: "
                  + ", ".join(f"{m:.4f}" for m in medians) + " (decreasing, last < 0.5)")
    assert medians[0] > medians[1] > medians[2]
    assert medians[2] < 0.5


def test_c4_positive_result_signature():
    stream = SeedStream(ROOT_SEED).child("c4")
    spec = smooth_trunc(8.0)
    means = {}
    with threadpool_limits(limits=1):
        for d in (64, 128, 256):
            cfg = OptimizerConfig(
                method="spherical_gd", eta=0.1, T=int(np.ceil(1000 * np.log(d) ** 2)),
                stop=StopRule(grad_tol=1e-11),
            )
            vals = []
            for s in range(32):
                inst = sample_instance(d, 16 * d, spec, stream.child(d, s))
                vals.append(run_spherical_gd(inst, cfg, stream.child("r", d, s)).final["sq_overlap"])
            means[d] = float(np.mean(vals))
    diffs = [abs(means[a] - means[b]) for a, b in ((64, 128), (64, 256), (128, 256))]
    ok = max(diffs) <= 0.1 and min(means.values()) >= 0.5
    report(4, ok, "mean sq_overlap "
                  + ", ".join(f"d={d}: {m:.4f}" for d, m in means.items())
                  + f"; max pairwise diff={max(diffs):.4f} (<=0.1), all >= 0.5")
    assert max(diffs) <= 0.1
    assert min(means.values()) >= 0.5


DELTA_GRID = (0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0, 16.0, 20.0)
D_GRID = (64, 128, 256, 512, 1024)


def _sweep_and_fit(out_dir, activation, root):
    cfg = SweepConfig(
        method="spherical_gd", activation=activation, M=8.0,
        d_list=D_GRID, delta_list=DELTA_GRID, seeds=32, root_seed=root,
        out_dir=str(out_dir), parallelism=2, trajectories="none",
    )
    _, summaries = run_sweep(cfg)
    fit = threshold_fit(summaries)
    write_fit_csvs(fit, out_dir / "fits.csv", out_dir / "fits_lines.csv")
    return fit


def test_c5_log_d_threshold_fit():
    quad_fit = _sweep_and_fit(RESULTS / "c5_quadratic", "quadratic", ROOT_SEED + 5)
    trunc_fit = _sweep_and_fit(RESULTS / "c5_truncated", "smooth_trunc", ROOT_SEED + 55)
    lines = []
    ok = True
    for ql, tl in zip(quad_fit.lines, trunc_fit.lines):
        cond = ql.slope > 0 and ql.r2 >= 0.9 and abs(tl.slope) <= 0.25 * ql.slope
        ok = ok and cond and not ql.unfittable and not tl.unfittable
        lines.append(
            f"target {ql.target:g}: quad slope={ql.slope:.3f} R2={ql.r2:.3f}, "
            f"trunc slope={tl.slope:.3f} (|.| <= {0.25 * ql.slope:.3f})"
        )
    report(5, ok, "; ".join(lines))
    for ql, tl in zip(quad_fit.lines, trunc_fit.lines):
        assert not ql.unfittable and not tl.unfittable
        assert ql.slope > 0
        assert ql.r2 >= 0.9
        assert abs(tl.slope) <= 0.25 * ql.slope


def test_c6_strong_recovery_and_rate():
    stream = SeedStream(ROOT_SEED).child("c6")
    d, eta = 128, 0.1 / 64.0
    horizon = int(50 * np.log(d) / eta)
    spec = hard_trunc(8.0)
    cfg = OptimizerConfig(
        method="euclidean_gd", eta=eta, T=horizon, init="sphere", r0=1.0 / d**2,
        stop=StopRule(target_dist_sq=1e-8), record_every=50,
    )
    converged = 0
    rate_ok = True
    alphas = []
    with threadpool_limits(limits=1):
        for s in range(32):
            inst = sample_instance(d, 10 * d, spec, stream.child(s))
            traj = run_euclidean_gd(inst, cfg, stream.child("r", s))
            if traj.final["dist_sq"] <= 1e-8 and traj.final["t"] <= horizon:
                converged += 1
                fit = geometric_rate_fit(traj, eta)
                alphas.append(fit.alpha_hat)
                rate_ok = rate_ok and fit.alpha_hat > 0 and fit.r2 >= 0.95
    ok = converged >= 30 and rate_ok
    report(6, ok, f"{converged}/32 runs reached dist_sq<=1e-8 within {horizon} steps "
                  f"(need >=30); alpha_hat in [{min(alphas):.3f}, {max(alphas):.3f}], "
                  f"all rate fits R2>=0.95: {rate_ok}")
    assert converged >= 30
    assert rate_ok


def test_c7_log_d_time_fit():
    out = RESULTS / "c7_time"
    cfg = SweepConfig(
        method="euclidean_gd", activation="hard_trunc", M=8.0,
        d_list=D_GRID, delta_list=(10.0,), seeds=64, root_seed=ROOT_SEED + 7,
        out_dir=str(out), parallelism=2, trajectories="mean",
    )
    records, _ = run_sweep(cfg)
    fit = time_fit(records)
    write_fit_csvs(fit, out / "fits.csv", out / "fits_lines.csv")
    line = next(l for l in fit.lines if l.target == 0.5)
    # seed-stability: two disjoint seed batches agree within 3 standard
    # errors of the slope difference (crossing times carry ~1/3 relative
    # spread per seed, so a fixed-percent bound is not meaningful at this
    # seed count)
    def slope_and_se(batch):
        crossings = {}
        for r in batch:
            if r.ok and not math.isnan(r.crossings[0.5]):
                crossings.setdefault(r.d, []).append(r.crossings[0.5])
        x = np.log(sorted(crossings))
        xc = x - x.mean()
        means = np.array([np.mean(crossings[d]) for d in sorted(crossings)])
        ses = np.array([
            np.std(crossings[d], ddof=1) / np.sqrt(len(crossings[d]))
            for d in sorted(crossings)
        ])
        denom = float(xc @ xc)
        return float(xc @ means / denom), float(np.sqrt(np.sum(xc**2 * ses**2)) / denom)

    s_even, se_even = slope_and_se([r for r in records if r.seed_index % 2 == 0])
    s_odd, se_odd = slope_and_se([r for r in records if r.seed_index % 2 == 1])
    tol = 3.0 * math.sqrt(se_even**2 + se_odd**2)
    stable = abs(s_even - s_odd) <= tol
    ok = line.slope > 0 and line.r2 >= 0.9 and not line.unfittable and stable
    report(7, ok, f"T*(d, 0.5) fit: slope={line.slope:.1f} (>0), R2={line.r2:.4f} (>=0.9); "
                  f"split-batch slopes {s_even:.1f} vs {s_odd:.1f} "
                  f"(|diff| {abs(s_even - s_odd):.1f} <= 3se {tol:.1f})")
    assert line.slope > 0
    assert line.r2 >= 0.9
    assert not line.unfittable
    assert stable


def test_c8_fixed_point_asymptotics():
    spec = hard_trunc(8.0)
    pred = asymptotic_fixed_points(spec, 100.0)
    stream = SeedStream(ROOT_SEED).child("c8")
    l1s, ov2s = [], []
    with threadpool_limits(limits=1):
        for s in range(8):
            inst = sample_instance(400, 40_000, spec, stream.child(s))
            rep = top2_eigs(d_n_operator(inst), tol=1e-9, seed=s)
            l1s.append(rep.lam1)
            ov2s.append(rep.overlap**2)
    med_l1, med_ov2 = float(np.median(l1s)), float(np.median(ov2s))
    in_star = 185.0 <= pred.lam_star <= 215.0
    in_bar = 12.3 <= pred.lam_bar <= 22.3
    l1_ok = abs(pred.lam1_dn - med_l1) <= 0.05 * med_l1
    ov_ok = abs(pred.overlap_sq - med_ov2) <= 0.05
    ok = in_star and in_bar and l1_ok and ov_ok
    report(8, ok, f"lam*={pred.lam_star:.2f} in [185,215]; lam_bar={pred.lam_bar:.2f} "
                  f"in [12.3,22.3]; predicted lam1={pred.lam1_dn:.4f} vs median "
                  f"{med_l1:.4f} (5%); predicted overlap^2={pred.overlap_sq:.4f} vs "
                  f"median {med_ov2:.4f} (0.05)")
    assert in_star and in_bar
    assert l1_ok
    assert ov_ok


def test_c9_property_suites():
    stream = SeedStream(ROOT_SEED).child("c9")
    checks = {}
    with threadpool_limits(limits=1):
        # sphere retention at 1e-12 along spherical and one-pass runs
        worst = 0.0
        for s in range(4):
            inst = sample_instance(50, 500, smooth_trunc(8.0), stream.child("sph", s))
            cfg = OptimizerConfig(method="spherical_gd", eta=0.1, T=300, record_every=1)
            worst = max(worst, np.max(np.abs(
                run_spherical_gd(inst, cfg, stream.child("sr", s)).norm - 1.0)))
            ocfg = OptimizerConfig(method="online_sgd", eta=0.5 / 50, T=500, record_every=25)
            worst = max(worst, np.max(np.abs(
                run_online_sgd(inst, ocfg, stream.child("or", s)).norm - 1.0)))
        checks["sphere retention (<=1e-12)"] = worst <= 1e-12

        # Lyapunov descent of the recorded correlation loss, 50 instances
        descent_ok = True
        cfg = OptimizerConfig(method="spherical_gd", eta=0.01, T=150, record_every=1)
        for s in range(50):
            inst = sample_instance(50, 500, smooth_trunc(8.0), stream.child("lya", s))
            traj = run_spherical_gd(inst, cfg, stream.child("lr", s))
            descent_ok = descent_ok and bool(np.all(np.diff(traj.loss) <= 1e-9))
        checks["Lyapunov descent (slack 1e-9)"] = descent_ok

        # truncation ordering: lam_max(A(theta) - A*) <= 1e-10
        psd_ok = True
        for s in range(10):
            inst = sample_instance(40, 400, hard_trunc(8.0), stream.child("psd", s))
            theta = (0.5 + s) * sample_sphere(40, 1.0, stream.child("pt", s))
            psd_ok = psd_ok and psd_ordering_check(inst, theta, probes=3, seed=s) <= 1e-10
        checks["PSD ordering (<=1e-10)"] = psd_ok

        # Stein identity: quadrature B within 3 MC standard errors
        ts = sample_sphere(12, 1.0, stream.child("st-ts"))
        u = sample_sphere(12, 1.0, stream.child("st-u"))
        u -= (u @ ts) * ts
        u /= np.linalg.norm(u)
        theta = np.cos(0.4) * ts + np.sin(0.4) * u
        _, b = stein_decomposition(theta, ts, hard_trunc(8.0))
        rng = np.random.default_rng(17)
        total, total_sq, n_mc = 0.0, 0.0, 4_000_000
        for _ in range(4):
            x = rng.standard_normal((1_000_000, 12))
            spec = hard_trunc(8.0)
            vals = spec.dsigma(x @ theta) * spec.dsigma(x @ ts)
            total += vals.sum()
            total_sq += float(vals @ vals)
        mc = total / n_mc
        se = math.sqrt((total_sq / n_mc - mc * mc) / n_mc)
        checks["Stein identity (3 MC se)"] = abs(b - mc) <= 3.0 * se

        # gradient finite differences, relative 1e-4 away from kinks
        inst = sample_instance(25, 250, hard_trunc(8.0), stream.child("fd"))
        theta = 0.8 * sample_sphere(25, 1.0, stream.child("fd-th"))
        from sil.losses import grad_squared, squared_loss

        g = grad_squared(inst, theta).euclidean
        step = 1e-5 * (1.0 + np.linalg.norm(theta))
        fd_ok = True
        for k in range(0, 25, 5):
            e = np.zeros(25)
            e[k] = step
            fd = (squared_loss(inst, theta + e) - squared_loss(inst, theta - e)) / (2 * step)
            fd_ok = fd_ok and abs(fd - g[k]) <= 1e-4 * max(abs(g[k]), 1e-6)
        sinst = sample_instance(25, 250, smooth_trunc(8.0), stream.child("fd2"))
        th = sample_sphere(25, 1.0, stream.child("fd2-th"))
        gs = grad_correlation(sinst, th).spherical
        from sil.losses import correlation_loss

        v = sample_sphere(25, 1.0, stream.child("fd2-v"))
        v -= (v @ th) * th
        v /= np.linalg.norm(v)
        eps = 1e-5
        fd = (correlation_loss(sinst, np.cos(eps) * th + np.sin(eps) * v)
              - correlation_loss(sinst, np.cos(eps) * th - np.sin(eps) * v)) / (2 * eps)
        fd_ok = fd_ok and abs(fd - float(gs @ v)) <= 1e-4 * max(abs(float(gs @ v)), 1e-8)
        checks["gradient FD checks (rel 1e-4)"] = fd_ok

        # empirical indicator mass vs the Gaussian tail
        from scipy.special import erfc

        from sil.spectral import indicator_mass

        inst = sample_instance(30, 100_000, hard_trunc(8.0), stream.child("mass"))
        theta = sample_sphere(30, 1.0, stream.child("mass-th"))
        p = erfc(math.sqrt(4.0))
        got = indicator_mass(inst, theta, 8.0)
        checks["indicator mass (3 binomial se)"] = (
            abs(got - p) <= 3.0 * math.sqrt(p * (1 - p) / inst.n)
        )

        # one-point strong convexity on 100 sampled phase-II points
        inst = sample_instance(128, 1280, hard_trunc(8.0), stream.child("opc"))
        rng = np.random.default_rng(23)
        pos_ok = True
        ts = inst.theta_star
        for _ in range(100):
            ang = rng.uniform(0.0, 0.05)
            nrm = math.exp(rng.uniform(math.log(0.25), math.log(10.0)))
            u = rng.standard_normal(128)
            u -= (u @ ts) * ts
            u /= np.linalg.norm(u)
            theta = nrm * (math.cos(ang) * ts + math.sin(ang) * u)
            pos_ok = pos_ok and one_point_convexity(inst, theta) > 0.0
        checks["one-point convexity (100 phase-II points > 0)"] = pos_ok

    ok = all(checks.values())
    detail = "; ".join(f"{name}: {'ok' if v else 'VIOLATED'}" for name, v in checks.items())
    report(9, ok, detail)
    assert ok, detail


@pytest.mark.slow
def test_online_sgd_lags_full_batch():
    # desk-scale one-pass vs full-batch separation at n = 10 d
    stream = SeedStream(ROOT_SEED).child("sep")
    d, spec = 512, smooth_trunc(8.0)
    sph, onl = [], []
    with threadpool_limits(limits=1):
        for s in range(64):
            inst = sample_instance(d, 10 * d, spec, stream.child(s))
            cfg_s = OptimizerConfig(
                method="spherical_gd", eta=0.1, T=int(np.ceil(1000 * np.log(d) ** 2)),
                stop=StopRule(grad_tol=1e-11),
            )
            sph.append(run_spherical_gd(inst, cfg_s, stream.child("s", s)).final["sq_overlap"])
            cfg_o = OptimizerConfig(
                method="online_sgd", eta=0.5 / d, T=10 * d, record_every=10 * d
            )
            onl.append(run_online_sgd(inst, cfg_o, stream.child("o", s)).final["sq_overlap"])
    gap = float(np.mean(sph) - np.mean(onl))
    print(f"\n[one-pass separation] spherical {np.mean(sph):.4f} vs online "
          f"{np.mean(onl):.4f}, gap {gap:.4f} (>=0.05)")
    assert gap >= 0.05


@pytest.mark.skipif(
    not (RESULTS / "c5_quadratic" / "summary.csv").exists(),
    reason="criterion-5 outputs not present yet",
)
def test_quadratic_overlap_decreases_with_d_at_fixed_delta():
    # companion check on the persisted sweep: at delta = 16 the quadratic
    # activation's mean squared overlap drops from d=64 to d=256 by >= 0.05
    from sil.harness import load_summaries

    summaries = load_summaries(RESULTS / "c5_quadratic" / "summary.csv")
    at16 = {s.d: s.mean_sq_overlap for s in summaries if s.delta == 16.0}
    print(f"\n[companion] quadratic delta=16 means: d64={at16[64]:.4f}, "
          f"d256={at16[256]:.4f}")
    assert at16[64] - at16[256] >= 0.05


@pytest.mark.skipif(
    not (RESULTS / "c5_truncated" / "summary.csv").exists(),
    reason="criterion-5 outputs not present yet",
)
def test_truncated_overlap_targets_from_sweep():
    # companion checks on the persisted truncated sweep: the mid-delta cell
    # clears 0.5 mean squared overlap, and the delta=16 cells are
    # d-independent to 0.1 across d in {64, 128, 256}
    from sil.harness import load_summaries

    summaries = load_summaries(RESULTS / "c5_truncated" / "summary.csv")
    cell = {(s.d, s.delta): s.mean_sq_overlap for s in summaries}
    print(f"\n[companion] truncated d=128 delta=12 mean: {cell[(128, 12.0)]:.4f}")
    assert cell[(128, 12.0)] > 0.5
    vals = [cell[(d, 16.0)] for d in (64, 128, 256)]
    assert max(vals) - min(vals) <= 0.1
