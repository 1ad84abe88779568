"""Spiked data matrices as matrix-free operators, their top eigenpairs, and
the analytic spectral predictions (moment coefficients, rank-one fixed point,
and the large-delta fixed-point asymptotics).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.special import erfc

from . import kernels
from .activations import KIND_HARD, KIND_QUADRATIC, KIND_SMOOTH, ActivationSpec
from .errors import ConvergenceError, DomainError
from .quadrature import gh_rule
from .sampling import Instance

RULE_CONSTANT = "constant"
RULE_CUTOFF = "cutoff"


@dataclass
class SpikedOperator:
    """Matrix-free symmetric operator scale * (1/n) X^T diag(w) X.

    Weights are w_i = y_i for the constant rule (A*, D_n) and
    w_i = y_i * phi(<x_i, theta>^2) for the cutoff rule (A(theta)).
    """

    X: np.ndarray = field(repr=False)
    w: np.ndarray = field(repr=False)
    scale: float
    rule: str
    theta: np.ndarray | None = field(default=None, repr=False)
    theta_star: np.ndarray | None = field(default=None, repr=False)

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def apply(self, v: np.ndarray) -> np.ndarray:
        if v.shape != (self.d,):
            raise DomainError(f"operator expects vectors of dimension {self.d}")
        return self.scale * kernels.weighted_apply(self.X, self.w, v)

    def dense(self) -> np.ndarray:
        """Materialized matrix, for small-d cross-checks only."""
        return self.scale / self.X.shape[0] * (self.X.T @ (self.w[:, None] * self.X))


def a_star_operator(instance: Instance) -> SpikedOperator:
    return SpikedOperator(
        X=instance.X, w=instance.y, scale=2.0, rule=RULE_CONSTANT,
        theta_star=instance.theta_star,
    )


def d_n_operator(instance: Instance) -> SpikedOperator:
    return SpikedOperator(
        X=instance.X, w=instance.y, scale=1.0, rule=RULE_CONSTANT,
        theta_star=instance.theta_star,
    )


def a_theta_operator(instance: Instance, theta: np.ndarray) -> SpikedOperator:
    z = instance.X @ theta
    w = instance.y * instance.activation.weight(z * z)
    return SpikedOperator(
        X=instance.X, w=w, scale=2.0, rule=RULE_CUTOFF, theta=theta,
        theta_star=instance.theta_star,
    )


def overlap(v: np.ndarray, theta_star: np.ndarray) -> float:
    """|<v, theta_star>| / ||v||, in [0, 1] for unit theta_star."""
    nrm = np.linalg.norm(v)
    if nrm == 0.0:
        raise DomainError("overlap undefined for the zero vector")
    return float(abs(v @ theta_star) / nrm)


@dataclass
class SpectralReport:
    lam1: float
    lam2: float
    v1: np.ndarray = field(repr=False)
    v2: np.ndarray = field(repr=False)
    overlap: float | None
    residual1: float
    residual2: float
    applies: int
    predicted_lam1: float | None = None
    predicted_lam2: float | None = None
    predicted_overlap_sq: float | None = None

    @property
    def gap(self) -> float:
        return self.lam1 - self.lam2


def _lanczos_extreme(apply_fn, d, v0, tol, max_applies, scale_hint=1.0):
    """Largest-eigenvalue Ritz pair by Lanczos with full reorthogonalization.

    Restarts from the current Ritz vector if a sweep of min(d, 250) steps is
    not enough.  Returns (lam, vec, true residual, applies used).
    """
    sweep = min(d, 250)
    v = v0 / np.linalg.norm(v0)
    applies = 0
    best = (np.nan, v, np.inf)
    while applies < max_applies:
        Q = np.empty((sweep + 1, d))
        Q[0] = v
        alphas, betas = [], []
        lam, vec = np.nan, v
        for j in range(sweep):
            if applies >= max_applies:
                break
            u = apply_fn(Q[j])
            applies += 1
            alpha = float(Q[j] @ u)
            u = u - alpha * Q[j]
            if j > 0:
                u -= betas[-1] * Q[j - 1]
            u -= Q[: j + 1].T @ (Q[: j + 1] @ u)
            alphas.append(alpha)
            beta = float(np.linalg.norm(u))
            vals, vecs = eigh_tridiagonal(
                np.asarray(alphas), np.asarray(betas), select="i", select_range=(j, j)
            )
            lam = float(vals[0])
            ritz_resid = beta * abs(float(vecs[j, 0]))
            vec = Q[: j + 1].T @ vecs[:, 0]
            if ritz_resid <= 0.5 * tol * max(1.0, abs(lam), scale_hint) or beta < 1e-14 * max(
                1.0, abs(lam)
            ):
                break
            betas.append(beta)
            Q[j + 1] = u / beta
        vec /= np.linalg.norm(vec)
        resid = float(np.linalg.norm(apply_fn(vec) - lam * vec))
        applies += 1
        if resid < best[2]:
            best = (lam, vec, resid)
        if resid <= tol * max(1.0, abs(lam), scale_hint):
            return lam, vec, resid, applies
        v = vec
    raise ConvergenceError(
        f"Lanczos did not reach tol={tol} within {max_applies} operator applications",
        best_residual=best[2],
    )


def top2_eigs(op, tol: float = 1e-10, max_applies: int = 20000, seed: int = 0) -> SpectralReport:
    """Top-two eigenpairs: a Lanczos pass for (lam1, v1), then a second pass
    on the deflated operator (I - v1 v1^T) A (I - v1 v1^T) for lam2."""
    if tol <= 0.0:
        raise DomainError("tolerance must be positive")
    d = op.d
    rng = np.random.default_rng(seed)
    lam1, v1, res1, used1 = _lanczos_extreme(
        op.apply, d, rng.standard_normal(d), tol, max_applies
    )

    def deflated(v):
        u = v - (v1 @ v) * v1
        w = op.apply(u)
        return w - (v1 @ w) * v1

    v0 = rng.standard_normal(d)
    v0 -= (v1 @ v0) * v1
    lam2, v2, res2, used2 = _lanczos_extreme(
        deflated, d, v0, tol, max_applies, scale_hint=abs(lam1)
    )
    ov = None
    ts = getattr(op, "theta_star", None)
    if ts is not None:
        ov = overlap(v1, ts)
    return SpectralReport(
        lam1=lam1, lam2=lam2, v1=v1, v2=v2, overlap=ov,
        residual1=res1, residual2=res2, applies=used1 + used2,
    )


def moment_coefficients(spec: ActivationSpec) -> tuple[float, float]:
    """(c1, c2) = (E[sigma(z) z^2], E[sigma(z)]) for standard Gaussian z.

    Exact for quadratic, closed erfc forms for the hard truncation, and a
    plateau closed form plus band quadrature for the smooth truncation.
    """
    if spec.kind == KIND_QUADRATIC:
        return 3.0, 1.0
    M = spec.M
    r = np.sqrt(M / 2.0)
    ec = erfc(r)
    c1_hard = 3.0 + (M - 3.0) * ec - (6.0 / np.sqrt(np.pi)) * r * np.exp(-M / 2.0)
    c2_hard = 1.0 + (M - 1.0) * ec - np.sqrt(2.0 * M / np.pi) * np.exp(-M / 2.0)
    if spec.kind == KIND_HARD:
        return float(c1_hard), float(c2_hard)
    # smooth: c_k = plateau part (= the hard value at level M) plus the band
    # integral of phi against the tail moments, by Fubini
    from scipy.integrate import quad

    phi = spec.cutoff.phi

    def g1(u):
        return erfc(np.sqrt(u / 2.0)) + np.sqrt(2.0 * u / np.pi) * np.exp(-u / 2.0)

    def g2(u):
        return erfc(np.sqrt(u / 2.0))

    band1, _ = quad(lambda u: phi(u) * g1(u), M, 2.0 * M, epsabs=1e-12, limit=200)
    band2, _ = quad(lambda u: phi(u) * g2(u), M, 2.0 * M, epsabs=1e-12, limit=200)
    return float(c1_hard + band1), float(c2_hard + band2)


@dataclass
class RankOneOracle:
    overlap_low: float
    overlap_high: float
    lam1: float
    mu_star: float
    fixed_point_residual: float
    iterations: int


def rank_one_overlap_oracle(instance: Instance, fd_step: float = 1e-6) -> RankOneOracle:
    """Fixed-point prediction of lam1(A*) and the squared overlap of its top
    eigenvector with theta_star = e1, from the block decomposition of
    sum_i y_i x_i x_i^T.

    Solves mu = 1 / (L(mu) - a) with L(mu) = lam1(P + mu q q^T) by bracketed
    bisection; the overlap bracket uses one-sided difference quotients of L
    around mu_star, honoring the left/right-derivative form of the bound.
    """
    d = instance.d
    e1 = np.zeros(d)
    e1[0] = 1.0
    if np.linalg.norm(instance.theta_star - e1) > 1e-12:
        raise DomainError("rank-one oracle requires theta_star = e1")
    if d > 300:
        raise DomainError("rank-one oracle uses the dense path; d <= 300 required")
    D = instance.X.T @ (instance.y[:, None] * instance.X)
    a = D[0, 0]
    q = D[1:, 0]
    P = D[1:, 1:]
    qq = np.outer(q, q)

    def L(mu):
        return float(np.linalg.eigvalsh(P + mu * qq)[-1])

    def h(mu):
        return mu * (L(mu) - a) - 1.0

    lo, hi = 0.0, 1.0 / max(instance.n, 1)
    iters = 0
    while h(hi) < 0.0:
        hi *= 2.0
        iters += 1
        if iters > 200:
            raise ConvergenceError(
                "no bracket for the rank-one fixed point mu (L(mu) - a) = 1",
                best_residual=h(hi),
            )
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if h(mid) < 0.0:
            lo = mid
        else:
            hi = mid
        iters += 1
        if hi - lo <= 1e-14 * max(1.0, hi):
            break
    mu = 0.5 * (lo + hi)
    Lmu = L(mu)
    step = fd_step * max(1.0, mu)
    L_left = (Lmu - L(mu - step)) / step
    L_right = (L(mu + step) - Lmu) / step
    inv2 = mu**-2
    bounds = sorted((L_left / (L_left + inv2), L_right / (L_right + inv2)))
    return RankOneOracle(
        overlap_low=bounds[0],
        overlap_high=bounds[1],
        lam1=2.0 * Lmu / instance.n,
        mu_star=mu,
        fixed_point_residual=abs(h(mu)),
        iterations=iters,
    )


@dataclass
class AsymptoticPrediction:
    kind: str
    M: float
    delta: float
    lam_star: float
    lam_bar: float
    tau: float
    lam1_dn: float
    lam2_dn: float
    overlap_sq: float
    bracket: tuple[float, float]
    iterations: int
    residuals: tuple[float, float]

    def predicted_a_star(self) -> tuple[float, float]:
        """Eigenvalue predictions rescaled from D_n to A* = 2 D_n."""
        return 2.0 * self.lam1_dn, 2.0 * self.lam2_dn


def _bisect(fun, lo, hi, tol=1e-10, max_iter=200):
    flo = fun(lo)
    fhi = fun(hi)
    if flo == 0.0:
        return lo, 0
    if fhi == 0.0:
        return hi, 0
    if np.sign(flo) == np.sign(fhi):
        raise ConvergenceError(
            f"no sign change on [{lo:.6g}, {hi:.6g}]; delta is below the "
            "validity range of the fixed-point solver",
            best_residual=min(abs(flo), abs(fhi)),
        )
    it = 0
    for it in range(1, max_iter + 1):
        mid = 0.5 * (lo + hi)
        fm = fun(mid)
        if np.sign(fm) == np.sign(flo):
            lo, flo = mid, fm
        else:
            hi = mid
        if hi - lo <= tol:
            break
    return 0.5 * (lo + hi), it


def asymptotic_fixed_points(
    spec: ActivationSpec, delta: float, order: int = 200
) -> AsymptoticPrediction:
    """Solve the two scalar fixed points of the spiked-matrix limit for
    Y = sigma(X), X standard Gaussian, and return the predicted top-two
    eigenvalues of D_n and squared top-eigenvector overlap."""
    if spec.kind not in (KIND_HARD, KIND_SMOOTH):
        raise DomainError("fixed-point asymptotics require a bounded (truncated) activation")
    if delta <= 0.0:
        raise DomainError("delta must be positive")
    x, wq = gh_rule(order)
    Y = spec.sigma(x)
    X2 = x * x
    tau = spec.sigma_max

    def ee(values):
        return float(wq @ values)

    def psi(lam):
        return lam * (1.0 / delta + ee(Y / (lam - Y)))

    def dpsi(lam):
        return 1.0 / delta - ee(Y**2 / (lam - Y) ** 2)

    def dphi_rm(lam):
        return -ee(Y**2 * X2 / (lam - Y) ** 2)

    def f_gap(lam):
        return ee(Y * (X2 - 1.0) / (lam - Y)) - 1.0 / delta

    hi = 10.0 * delta + 10.0 * spec.M
    lam_bar, it1 = _bisect(dpsi, tau + 1e-9, hi)
    lo_star = max(3.0 * spec.M, lam_bar)
    lam_star, it2 = _bisect(f_gap, lo_star, hi)
    if not (lam_star > lam_bar > tau):
        raise ConvergenceError(
            f"fixed points out of order: lam*={lam_star:.6g}, lam_bar={lam_bar:.6g}, tau={tau:.6g}",
            best_residual=None,
        )
    num = dpsi(lam_star)
    return AsymptoticPrediction(
        kind=spec.kind,
        M=spec.M,
        delta=delta,
        lam_star=lam_star,
        lam_bar=lam_bar,
        tau=tau,
        lam1_dn=psi(lam_star),
        lam2_dn=psi(lam_bar),
        overlap_sq=num / (num - dphi_rm(lam_star)),
        bracket=(lo_star, hi),
        iterations=it1 + it2,
        residuals=(abs(dpsi(lam_bar)), abs(f_gap(lam_star))),
    )


def indicator_mass(instance: Instance, theta: np.ndarray, M: float) -> float:
    """(1/n) sum_i 1[<x_i, theta>^2 > M]."""
    z = instance.X @ theta
    return float(np.mean(z * z > M))


def psd_ordering_check(instance: Instance, theta: np.ndarray, probes: int = 5,
                       steps: int = 80, seed: int = 0) -> float:
    """Estimate lam_max(A(theta) - A*) by Krylov iteration on the difference
    operator; the truncation ordering makes the true value <= 0."""
    z = instance.X @ theta
    wd = instance.y * (instance.activation.weight(z * z) - 1.0)

    def apply_diff(v):
        return 2.0 * kernels.weighted_apply(instance.X, wd, v)

    best = -np.inf
    for p in range(probes):
        rng = np.random.default_rng(seed + p)
        v0 = rng.standard_normal(instance.d)
        try:
            lam, _, _, _ = _lanczos_extreme(
                apply_diff, instance.d, v0, 1e-12, max_applies=steps * 4
            )
        except ConvergenceError:
            lam = _rq_after_power(apply_diff, v0, steps)
        best = max(best, lam)
    return best


def _rq_after_power(apply_fn, v, steps):
    v = v / np.linalg.norm(v)
    lam = float(v @ apply_fn(v))
    return lam


@dataclass
class AuditPoint:
    t: int
    report: SpectralReport
    flagged: bool


def trajectory_spectral_audit(
    instance: Instance,
    trajectory,
    sample_stride: int,
    tol: float = 1e-9,
    gap_floor: float = 0.5,
    overlap_floor: float = 0.5,
    seed: int = 0,
) -> list[AuditPoint]:
    """Top-two eigenpairs of A(theta_t) along a recorded spherical run,
    flagging points whose gap or top-eigenvector overlap drops below the
    floors."""
    thetas = trajectory.thetas
    if thetas is None:
        raise DomainError("trajectory was recorded without thetas; rerun with record_thetas")
    if sample_stride < 1:
        raise DomainError("sample_stride must be >= 1")
    if sample_stride >= len(thetas):
        picks = [len(thetas) - 1]
    else:
        picks = list(range(0, len(thetas), sample_stride))
    out = []
    for k in picks:
        t, theta = thetas[k]
        op = a_theta_operator(instance, theta)
        rep = top2_eigs(op, tol=tol, seed=seed)
        flagged = (rep.gap < gap_floor) or (rep.overlap is not None and rep.overlap < overlap_floor)
        out.append(AuditPoint(t=t, report=rep, flagged=flagged))
    return out
