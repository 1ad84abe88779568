"""The three gradient dynamics: full-batch spherical GD on the correlation
loss, full-batch Euclidean GD on the squared loss from small initialization,
and one-pass spherical SGD.

Spherical steps are discretized with an explicit retraction (renormalize
after the tangent step).  For the quadratic activation the spherical
iteration is a power-method-like update on the fixed matrix A*, so it is run
in the eigenbasis of A* (the identical update expressed in rotated
coordinates), which turns an O(nd) step into an O(d) one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .activations import KIND_QUADRATIC
from .errors import DivergenceError, DomainError
from .sampling import Instance, SeedStream, sample_sphere

METHOD_SPHERICAL = "spherical_gd"
METHOD_EUCLIDEAN = "euclidean_gd"
METHOD_ONLINE = "online_sgd"

TERM_MAX_STEPS = "max_steps"
TERM_TARGET_OVERLAP = "target_sq_overlap"
TERM_TARGET_DIST = "target_dist_sq"
TERM_STATIONARY = "stationary"

EIGEN_PATH_MAX_D = 2048


@dataclass(frozen=True)
class StopRule:
    """Early-exit targets; any unset field is ignored.

    ``grad_tol`` stops a spherical run at stationarity (tangent-gradient norm
    below the tolerance), which leaves the terminal point unchanged while
    skipping the long converged tail of large-T runs.
    """

    target_sq_overlap: float | None = None
    target_dist_sq: float | None = None
    grad_tol: float | None = None


@dataclass(frozen=True)
class OptimizerConfig:
    method: str
    eta: float
    T: int
    loss: str = ""
    init: str = "unit_sphere"
    r0: float = 1.0
    record_every: int | None = None
    stop: StopRule | None = None
    record_thetas: bool = False

    def __post_init__(self):
        defaults = {
            METHOD_SPHERICAL: "correlation",
            METHOD_EUCLIDEAN: "squared",
            METHOD_ONLINE: "correlation",
        }
        if self.method not in defaults:
            raise DomainError(f"unknown method {self.method!r}")
        loss = self.loss or defaults[self.method]
        object.__setattr__(self, "loss", loss)
        if loss != defaults[self.method]:
            raise DomainError(f"{self.method} runs on the {defaults[self.method]} loss")
        if self.method in (METHOD_SPHERICAL, METHOD_ONLINE) and self.init != "unit_sphere":
            raise DomainError(f"{self.method} starts on the unit sphere")
        if self.method == METHOD_EUCLIDEAN and self.init == "sphere" and self.r0 <= 0.0:
            raise DomainError("init radius r0 must be positive")
        if self.eta <= 0.0:
            raise DomainError("step size eta must be positive")
        if self.T < 1:
            raise DomainError("horizon T must be >= 1")

    @property
    def cadence(self) -> int:
        if self.record_every is not None:
            if self.record_every < 1:
                raise DomainError("record_every must be >= 1")
            return self.record_every
        return max(1, self.T // 2000)


@dataclass
class Trajectory:
    """Per-step metric stream plus the terminal iterate.

    ``angle`` and ``overlap`` are sign-folded (measured against the closer of
    +/- theta_star) since even activations make the signs equivalent;
    ``dist_sq`` is min over signs of ||theta -/+ theta_star||^2.
    """

    t: np.ndarray
    overlap: np.ndarray
    sq_overlap: np.ndarray
    angle: np.ndarray
    norm: np.ndarray
    loss: np.ndarray
    dist_sq: np.ndarray
    terminal_theta: np.ndarray = field(repr=False)
    termination: str = TERM_MAX_STEPS
    thetas: list | None = field(default=None, repr=False)

    @property
    def final(self) -> dict:
        return {
            "t": int(self.t[-1]),
            "overlap": float(self.overlap[-1]),
            "sq_overlap": float(self.sq_overlap[-1]),
            "angle": float(self.angle[-1]),
            "norm": float(self.norm[-1]),
            "loss": float(self.loss[-1]),
            "dist_sq": float(self.dist_sq[-1]),
        }


class _Recorder:
    def __init__(self, theta_star, cadence, record_thetas):
        self.ts_ = theta_star
        self.cadence = cadence
        self.rows = []
        self.thetas = [] if record_thetas else None
        self.last_t = -1

    def metrics(self, theta):
        nrm = float(np.linalg.norm(theta))
        p = float(theta @ self.ts_)
        ov = min(abs(p) / nrm, 1.0) if nrm > 0 else 0.0
        return {
            "overlap": ov,
            "sq_overlap": ov * ov,
            "angle": float(np.arccos(ov)),
            "norm": nrm,
            "dist_sq": nrm * nrm + 1.0 - 2.0 * abs(p),
        }

    def due(self, t):
        return t % self.cadence == 0

    def record(self, t, theta, loss, force=False):
        if t == self.last_t:
            return
        if not (force or self.due(t)):
            return
        m = self.metrics(theta)
        self.rows.append((t, m["overlap"], m["sq_overlap"], m["angle"], m["norm"], loss, m["dist_sq"]))
        if self.thetas is not None:
            self.thetas.append((t, np.array(theta)))
        self.last_t = t

    def build(self, theta, termination):
        arr = np.array(self.rows, dtype=float)
        return Trajectory(
            t=arr[:, 0].astype(np.int64),
            overlap=arr[:, 1],
            sq_overlap=arr[:, 2],
            angle=arr[:, 3],
            norm=arr[:, 4],
            loss=arr[:, 5],
            dist_sq=arr[:, 6],
            terminal_theta=np.array(theta),
            termination=termination,
            thetas=self.thetas,
        )


def _as_stream(seed) -> SeedStream:
    return seed if isinstance(seed, SeedStream) else SeedStream(int(seed))


def _check_stop(stop: StopRule | None, m: dict) -> str | None:
    if stop is None:
        return None
    if stop.target_sq_overlap is not None and m["sq_overlap"] >= stop.target_sq_overlap:
        return TERM_TARGET_OVERLAP
    if stop.target_dist_sq is not None and m["dist_sq"] <= stop.target_dist_sq:
        return TERM_TARGET_DIST
    return None


def run_spherical_gd(
    instance: Instance, config: OptimizerConfig, seed, engine: str = "auto",
    theta0: np.ndarray | None = None,
) -> Trajectory:
    """theta <- normalize(theta + eta (I - theta theta^T) A(theta) theta).

    ``theta0`` overrides the seeded unit-sphere draw (it is normalized).
    """
    if config.method != METHOD_SPHERICAL:
        raise DomainError("config.method must be spherical_gd")
    if engine not in ("auto", "direct", "eigen"):
        raise DomainError(f"unknown engine {engine!r}")
    stream = _as_stream(seed)
    if theta0 is None:
        theta0 = sample_sphere(instance.d, 1.0, stream.child("init"))
    else:
        theta0 = np.asarray(theta0, dtype=float) / np.linalg.norm(theta0)
    use_eigen = engine == "eigen" or (
        engine == "auto"
        and instance.activation.kind == KIND_QUADRATIC
        and instance.d <= EIGEN_PATH_MAX_D
    )
    if use_eigen:
        if instance.activation.kind != KIND_QUADRATIC:
            raise DomainError("eigen engine applies to the quadratic activation only")
        return _spherical_eigen(instance, config, theta0)
    return _spherical_direct(instance, config, theta0)


def _spherical_direct(instance, config, theta):
    rec = _Recorder(instance.theta_star, config.cadence, config.record_thetas)
    act = instance.activation
    termination = TERM_MAX_STEPS
    t = 0
    while True:
        g, loss = kernels.corr_gradient(instance.X, instance.y, theta, act)
        if not np.isfinite(g).all():
            raise DivergenceError(f"non-finite state at step {t}", step=t)
        m = rec.metrics(theta)
        hit = _check_stop(config.stop, m)
        tangent = g - (g @ theta) * theta
        if hit is None and config.stop is not None and config.stop.grad_tol is not None:
            if float(np.linalg.norm(tangent)) <= config.stop.grad_tol:
                hit = TERM_STATIONARY
        if hit is not None:
            rec.record(t, theta, loss, force=True)
            termination = hit
            break
        rec.record(t, theta, loss)
        if t >= config.T:
            rec.record(t, theta, loss, force=True)
            break
        theta = theta + config.eta * tangent
        theta /= np.linalg.norm(theta)
        t += 1
    return rec.build(theta, termination)


def _spherical_eigen(instance, config, theta0):
    n = instance.n
    A = (2.0 / n) * (instance.X.T @ (instance.y[:, None] * instance.X))
    lam, V = np.linalg.eigh(A)
    c = V.T @ theta0
    pstar = V.T @ instance.theta_star

    class _CoordRecorder(_Recorder):
        def record(self, t, cvec, loss, force=False):
            if t == self.last_t or not (force or self.due(t)):
                return
            m = self.metrics(cvec)
            self.rows.append(
                (t, m["overlap"], m["sq_overlap"], m["angle"], m["norm"], loss, m["dist_sq"])
            )
            if self.thetas is not None:
                self.thetas.append((t, V @ cvec))
            self.last_t = t

    rec = _CoordRecorder(pstar, config.cadence, config.record_thetas)
    termination = TERM_MAX_STEPS
    t = 0
    while True:
        lc = lam * c
        mu = float(c @ lc)
        loss = -0.5 * mu
        if not np.isfinite(mu):
            raise DivergenceError(f"non-finite state at step {t}", step=t)
        m = rec.metrics(c)
        hit = _check_stop(config.stop, m)
        tangent = lc - mu * c
        if hit is None and config.stop is not None and config.stop.grad_tol is not None:
            if float(np.linalg.norm(tangent)) <= config.stop.grad_tol:
                hit = TERM_STATIONARY
        if hit is not None:
            rec.record(t, c, loss, force=True)
            termination = hit
            break
        rec.record(t, c, loss)
        if t >= config.T:
            rec.record(t, c, loss, force=True)
            break
        c = c + config.eta * tangent
        c /= np.linalg.norm(c)
        t += 1
    traj = rec.build(c, termination)
    traj.terminal_theta = V @ c
    return traj


def run_euclidean_gd(
    instance: Instance, config: OptimizerConfig, seed, theta0: np.ndarray | None = None
) -> Trajectory:
    """theta <- theta - eta G_hat(theta), no renormalization."""
    if config.method != METHOD_EUCLIDEAN:
        raise DomainError("config.method must be euclidean_gd")
    stream = _as_stream(seed)
    if theta0 is not None:
        theta = np.array(theta0, dtype=float)
    else:
        r0 = 1.0 if config.init == "unit_sphere" else config.r0
        theta = sample_sphere(instance.d, r0, stream.child("init"))
    rec = _Recorder(instance.theta_star, config.cadence, config.record_thetas)
    act = instance.activation
    termination = TERM_MAX_STEPS
    t = 0
    while True:
        g, loss = kernels.squared_gradient(instance.X, instance.y, theta, act)
        if not np.isfinite(g).all():
            raise DivergenceError(f"non-finite state at step {t}", step=t)
        m = rec.metrics(theta)
        hit = _check_stop(config.stop, m)
        if hit is not None:
            rec.record(t, theta, loss, force=True)
            termination = hit
            break
        rec.record(t, theta, loss)
        if t >= config.T:
            rec.record(t, theta, loss, force=True)
            break
        theta = theta - config.eta * g
        t += 1
    return rec.build(theta, termination)


def default_online_eta(d: int) -> float:
    """Default one-pass step size, inside the stable eta ~ 1/d regime."""
    return 0.5 / d


def run_online_sgd(
    instance: Instance, config: OptimizerConfig, seed, theta0: np.ndarray | None = None
) -> Trajectory:
    """One-pass spherical SGD on the correlation loss; sample t is used at
    step t and never again.  Recorded losses are full-batch correlation
    losses at the recording cadence."""
    if config.method != METHOD_ONLINE:
        raise DomainError("config.method must be online_sgd")
    if config.T > instance.n:
        raise DomainError(f"one-pass SGD cannot reuse data: T={config.T} > n={instance.n}")
    stream = _as_stream(seed)
    if theta0 is None:
        theta = sample_sphere(instance.d, 1.0, stream.child("init"))
    else:
        theta = np.asarray(theta0, dtype=float) / np.linalg.norm(theta0)
    rec = _Recorder(instance.theta_star, config.cadence, config.record_thetas)
    act = instance.activation
    termination = TERM_MAX_STEPS

    def full_loss(th):
        _, loss = kernels.corr_gradient(instance.X, instance.y, th, act)
        return loss

    t = 0
    while True:
        m = rec.metrics(theta)
        hit = _check_stop(config.stop, m)
        if hit is not None:
            rec.record(t, theta, full_loss(theta), force=True)
            termination = hit
            break
        if rec.due(t):
            rec.record(t, theta, full_loss(theta))
        if t >= config.T:
            rec.record(t, theta, full_loss(theta), force=True)
            break
        x_t = instance.X[t]
        z = float(x_t @ theta)
        g = -instance.y[t] * act.dsigma(z) * x_t
        tangent = g - (g @ theta) * theta
        theta = theta - config.eta * tangent
        nrm = np.linalg.norm(theta)
        if not np.isfinite(nrm) or nrm == 0.0:
            raise DivergenceError(f"non-finite state at step {t}", step=t)
        theta /= nrm
        t += 1
    return rec.build(theta, termination)
