"""Trajectory diagnostics: angles, first-passage times, geometric-rate fits,
one-point strong convexity, Gram-matrix deviation, and the population
gradient-decomposition bound checks."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .activations import KIND_HARD, ActivationSpec
from .errors import DomainError
from .losses import grad_squared, stein_decomposition
from .optimizers import Trajectory
from .sampling import Instance

DIST_FLOOR = 1e-14
DIST_CEIL = 1e-2


def angle(theta: np.ndarray, theta_star: np.ndarray) -> float:
    """Sign-folded angle in [0, pi/2]: arccos(|<theta, theta*>| / norms)."""
    nt = np.linalg.norm(theta)
    ns = np.linalg.norm(theta_star)
    if nt == 0.0 or ns == 0.0:
        raise DomainError("angle undefined for a zero vector")
    return float(np.arccos(min(1.0, abs(float(theta @ theta_star)) / (nt * ns))))


def predicted_angle_time(d: int, eta: float) -> float:
    """Power-iteration phase length 3 log(d) / log(1 + 1.99 eta)."""
    return 3.0 * np.log(d) / np.log1p(1.99 * eta)


@dataclass
class PhaseTimes:
    t_angle: int | None
    t_norm: int | None
    t_dist: int | None
    predicted_t_angle: float


def _first_recorded(traj: Trajectory, mask) -> int | None:
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        return None
    return int(traj.t[idx[0]])


def phase_times(
    traj: Trajectory, d: int, eta: float, phi_target: float = 0.3, eps: float = 1e-8
) -> PhaseTimes:
    """First recorded steps reaching angle <= phi_target, norm >= 1/4, and
    dist_sq <= eps (no interpolation between recorded points)."""
    return PhaseTimes(
        t_angle=_first_recorded(traj, traj.angle <= phi_target),
        t_norm=_first_recorded(traj, traj.norm >= 0.25),
        t_dist=_first_recorded(traj, traj.dist_sq <= eps),
        predicted_t_angle=predicted_angle_time(d, eta),
    )


def sq_overlap_crossing(traj: Trajectory, target: float) -> int | None:
    """First recorded step with squared overlap >= target."""
    return _first_recorded(traj, traj.sq_overlap >= target)


@dataclass
class RateFit:
    alpha_hat: float
    slope: float
    r2: float
    window: tuple[int, int]
    n_points: int


def geometric_rate_fit(traj: Trajectory, eta: float, tail_fraction: float = 0.3) -> RateFit:
    """Least-squares slope of log(dist_sq) vs t on the tail window, reported
    as the per-step contraction alpha_hat = (1 - e^slope) / eta.

    The window is the last ``tail_fraction`` (at least 10) of the recorded
    points with dist_sq in (1e-14, 1e-2); fewer than 20 such points is an
    error.
    """
    eligible = np.flatnonzero((traj.dist_sq > DIST_FLOOR) & (traj.dist_sq < DIST_CEIL))
    if eligible.size < 20:
        raise DomainError(
            f"insufficient tail: {eligible.size} recorded points with dist_sq in "
            f"({DIST_FLOOR}, {DIST_CEIL}); need >= 20"
        )
    k = max(10, int(np.ceil(tail_fraction * eligible.size)))
    win = eligible[-k:]
    tt = traj.t[win].astype(float)
    yy = np.log(traj.dist_sq[win])
    slope, intercept = np.polyfit(tt, yy, 1)
    resid = yy - (slope * tt + intercept)
    sstot = float(np.sum((yy - yy.mean()) ** 2))
    r2 = 1.0 if sstot < 1e-300 else max(0.0, 1.0 - float(resid @ resid) / sstot)
    return RateFit(
        alpha_hat=float((1.0 - np.exp(slope)) / eta),
        slope=float(slope),
        r2=float(r2),
        window=(int(traj.t[win[0]]), int(traj.t[win[-1]])),
        n_points=int(k),
    )


def one_point_convexity(instance: Instance, theta: np.ndarray) -> float:
    """<G_hat(theta), theta - theta*> / ||theta - theta*||^2, with theta*
    replaced by -theta* when that is the nearer optimum."""
    ts = instance.theta_star
    v_plus = theta - ts
    v_minus = theta + ts
    v = v_plus if v_plus @ v_plus <= v_minus @ v_minus else v_minus
    denom = float(v @ v)
    if denom < 1e-24:
        raise DomainError("theta coincides with an optimum; convexity ratio undefined")
    g = grad_squared(instance, theta).euclidean
    return float(g @ v) / denom


def gram_matrix(instance: Instance, theta: np.ndarray, theta_tilde: np.ndarray) -> np.ndarray:
    """Dense (1/n) sum sigma'(<x_i,theta>) sigma'(<x_i,theta_tilde>) x_i x_i^T."""
    s1 = instance.activation.dsigma(instance.X @ theta)
    s2 = instance.activation.dsigma(instance.X @ theta_tilde)
    return (instance.X.T @ ((s1 * s2)[:, None] * instance.X)) / instance.n


def gram_deviation(
    instance: Instance,
    theta: np.ndarray,
    theta_tilde: np.ndarray,
    mc_samples: int = 200_000,
    seed: int = 0,
    batches: int = 10,
) -> tuple[float, float]:
    """Spectral-norm distance of the empirical Gram matrix from a fresh
    Monte-Carlo estimate of its population counterpart, with an MC error bar
    (batch std of the per-batch deviations / sqrt(batches))."""
    if instance.d > 300:
        raise DomainError("gram_deviation uses the dense path; d <= 300 required")
    if mc_samples < 100_000:
        raise DomainError("mc_samples must be >= 1e5 for a usable error bar")
    H_hat = gram_matrix(instance, theta, theta_tilde)
    rng = np.random.default_rng(seed)
    act = instance.activation
    per = mc_samples // batches
    d = instance.d
    H_sum = np.zeros((d, d))
    devs = []
    mats = []
    for _ in range(batches):
        Xf = rng.standard_normal((per, d))
        s1 = act.dsigma(Xf @ theta)
        s2 = act.dsigma(Xf @ theta_tilde)
        Hb = (Xf.T @ ((s1 * s2)[:, None] * Xf)) / per
        mats.append(Hb)
        H_sum += Hb
    H_mc = H_sum / batches
    dev = float(np.max(np.abs(np.linalg.eigvalsh(H_hat - H_mc))))
    for Hb in mats:
        devs.append(float(np.max(np.abs(np.linalg.eigvalsh(H_hat - Hb)))))
    se = float(np.std(devs, ddof=1) / np.sqrt(batches))
    return dev, se


@dataclass
class SteinBoundsReport:
    a: float
    b: float
    a_bound: float
    b_lower: float
    moment_checks: list = field(default_factory=list)
    violations: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations


def _moment_mc(alpha: float, u3: np.ndarray, n_samples: int, rng) -> tuple[float, float]:
    """MC estimate of E[<g,u>^2 1{sign disagreement}] in the 3-dimensional
    subspace spanned by a, b, u; coordinates: b = e1, a = (cos a, sin a, 0)."""
    g = rng.standard_normal((n_samples, 3))
    ga = g[:, 0] * np.cos(alpha) + g[:, 1] * np.sin(alpha)
    gb = g[:, 0]
    disagree = np.sign(ga) * np.sign(gb) < 0
    val = (g @ u3) ** 2 * disagree
    est = float(val.mean())
    se = float(val.std(ddof=1) / np.sqrt(n_samples))
    return est, se


def stein_bounds_check(
    theta: np.ndarray,
    theta_star: np.ndarray,
    spec: ActivationSpec,
    mc_samples: int = 1_000_000,
    seed: int = 0,
) -> SteinBoundsReport:
    """Checks |A| <= 4M + 4, the explicit lower bound on B, and the
    sign-disagreement second-moment bound E[<g,u>^2 1{D}] <= (2/pi) angle."""
    if spec.kind != KIND_HARD:
        raise DomainError("stein bound checks are stated for the hard truncation")
    a_coef, b_coef = stein_decomposition(theta, theta_star, spec)
    M = spec.M
    nrm = float(np.linalg.norm(theta))
    phi = angle(theta, theta_star)
    b_lower = 4.0 * nrm * (
        np.cos(phi)
        - np.sqrt(3.0)
        * np.sqrt(2.0 * (nrm / np.sqrt(M)) * np.exp(-M / (2.0 * nrm**2)) + 2.0 * np.exp(-M / 2.0))
    )
    report = SteinBoundsReport(a=a_coef, b=b_coef, a_bound=4.0 * M + 4.0, b_lower=b_lower)
    if abs(a_coef) > report.a_bound:
        report.violations.append(f"|A|={abs(a_coef):.4g} exceeds 4M+4={report.a_bound:.4g}")
    if b_coef < b_lower:
        report.violations.append(f"B={b_coef:.4g} below its lower bound {b_lower:.4g}")
    rng = np.random.default_rng(seed)
    bound = (2.0 / np.pi) * phi
    # u in the plane along a, along b, and one leaving the plane
    candidates = {
        "u=a": np.array([np.cos(phi), np.sin(phi), 0.0]),
        "u=b": np.array([1.0, 0.0, 0.0]),
        "u=off-plane": np.array([0.5, 0.5, np.sqrt(0.5)]),
    }
    for label, u3 in candidates.items():
        est, se = _moment_mc(phi, u3 / np.linalg.norm(u3), mc_samples, rng)
        ok = est <= bound + 3.0 * se
        report.moment_checks.append((label, est, se, bound, ok))
        if not ok:
            report.violations.append(
                f"{label}: moment {est:.4g} exceeds (2/pi)*angle={bound:.4g} + 3se"
            )
    return report
