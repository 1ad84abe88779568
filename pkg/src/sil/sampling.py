"""Problem-instance sampling with reproducible, derivable seed streams."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .activations import ActivationSpec
from .errors import DomainError

THETA_UNIFORM = "uniform_sphere"
THETA_E1 = "first_basis_vector"


def _as_word(item) -> int:
    """Map a path element (int, str, float) to a stable unsigned 64-bit word."""
    if isinstance(item, (int, np.integer)):
        return int(np.uint64(np.int64(int(item) & 0xFFFFFFFFFFFFFFFF)))
    if isinstance(item, float):
        return int(np.float64(item).view(np.uint64))
    if isinstance(item, str):
        digest = hashlib.blake2s(item.encode(), digest_size=8).digest()
        return int.from_bytes(digest, "little")
    raise TypeError(f"unsupported seed-path element {item!r}")


@dataclass(frozen=True)
class SeedStream:
    """A root seed plus a derivation path.

    Distinct (root, path) pairs yield statistically independent Philox
    streams; identical pairs yield identical streams.  Philox is
    counter-based, so trials can be generated in any order or process.
    """

    root: int
    path: tuple = ()

    def child(self, *items) -> "SeedStream":
        return SeedStream(self.root, self.path + tuple(items))

    def _sequence(self) -> np.random.SeedSequence:
        words = []
        for item in self.path:
            w = _as_word(item)
            words.extend((w & 0xFFFFFFFF, w >> 32))
        return np.random.SeedSequence(self.root & 0xFFFFFFFFFFFFFFFF, spawn_key=tuple(words))

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(self._sequence()))

    @property
    def key64(self) -> int:
        """A stable 64-bit digest of (root, path), for logs and file names."""
        h = hashlib.blake2s(digest_size=8)
        h.update(int(self.root & 0xFFFFFFFFFFFFFFFF).to_bytes(8, "little"))
        for item in self.path:
            h.update(_as_word(item).to_bytes(8, "little"))
        return int.from_bytes(h.digest(), "little")


@dataclass(frozen=True)
class Instance:
    """One sampled learning problem: y_i = sigma(<x_i, theta_star>)."""

    d: int
    n: int
    X: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    theta_star: np.ndarray = field(repr=False)
    activation: ActivationSpec
    seed: SeedStream

    def __post_init__(self):
        for arr in (self.X, self.y, self.theta_star):
            arr.setflags(write=False)


def sample_sphere(d: int, r0: float, seed) -> np.ndarray:
    """Uniform direction on the sphere of radius ``r0`` (Gaussian, normalized)."""
    if r0 <= 0.0 or not np.isfinite(r0):
        raise DomainError(f"sphere radius must be positive, got {r0}")
    gen = seed.generator() if isinstance(seed, SeedStream) else seed
    v = gen.standard_normal(d)
    return v * (r0 / np.linalg.norm(v))


def sample_instance(
    d: int,
    n: int,
    spec: ActivationSpec,
    seed: SeedStream,
    theta_star_mode: str = THETA_UNIFORM,
) -> Instance:
    """Draw X with i.i.d. standard Gaussian rows and labels y = sigma(X theta*)."""
    if d < 2:
        raise DomainError(f"dimension d must be >= 2, got {d}")
    if n < 1:
        raise DomainError(f"sample count n must be >= 1, got {n}")
    if theta_star_mode == THETA_UNIFORM:
        theta_star = sample_sphere(d, 1.0, seed.child("theta_star"))
    elif theta_star_mode == THETA_E1:
        theta_star = np.zeros(d)
        theta_star[0] = 1.0
    else:
        raise DomainError(f"unknown theta_star_mode {theta_star_mode!r}")
    X = seed.child("X").generator().standard_normal((n, d))
    y = spec.sigma(X @ theta_star)
    return Instance(d=d, n=n, X=X, y=y, theta_star=theta_star, activation=spec, seed=seed)
