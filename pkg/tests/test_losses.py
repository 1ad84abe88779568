import numpy as np
import pytest

from sil.activations import hard_trunc, quadratic, smooth_trunc
from sil.errors import DomainError, PreconditionError
from sil.losses import (
    correlation_loss,
    grad_correlation,
    grad_squared,
    population_grad_report,
    population_grad_squared,
    squared_loss,
    stein_decomposition,
)
from sil.sampling import Instance, SeedStream, sample_instance, sample_sphere
from sil.spectral import a_star_operator


def test_correlation_loss_at_theta_star(small_quad):
    val = correlation_loss(small_quad, small_quad.theta_star)
    assert val == pytest.approx(-float(small_quad.y @ small_quad.y) / small_quad.n, rel=1e-12)


def test_correlation_loss_orthogonal_single_sample():
    spec = quadratic()
    X = np.array([[1.0, 0.0]])
    theta_star = np.array([1.0, 0.0])
    inst = Instance(
        d=2, n=1, X=X, y=spec.sigma(X @ theta_star), theta_star=theta_star,
        activation=spec, seed=SeedStream(0),
    )
    assert correlation_loss(inst, np.array([0.0, 1.0])) == 0.0


def test_correlation_loss_cross_moment():
    # E[z*^2 z^2] = 1 for independent standard Gaussians
    d, n = 400, 4000
    inst = sample_instance(d, n, quadratic(), SeedStream(12).child("cross"),
                           theta_star_mode="first_basis_vector")
    e2 = np.zeros(d)
    e2[1] = 1.0
    val = correlation_loss(inst, e2)
    assert abs(val + 1.0) <= 5.0 / np.sqrt(n)


def test_correlation_loss_requires_unit_norm(small_quad):
    with pytest.raises(PreconditionError):
        correlation_loss(small_quad, 1.5 * small_quad.theta_star)


def test_grad_correlation_equals_a_star_theta(small_quad, stream):
    theta = sample_sphere(small_quad.d, 1.0, stream.child("gq"))
    rep = grad_correlation(small_quad, theta)
    expected = -a_star_operator(small_quad).apply(theta)
    assert np.max(np.abs(rep.euclidean - expected)) <= 1e-10


def test_grad_correlation_vanishes_at_eigenvector(small_quad):
    A = a_star_operator(small_quad).dense()
    _, vecs = np.linalg.eigh(A)
    v1 = vecs[:, -1]
    rep = grad_correlation(small_quad, v1)
    assert np.linalg.norm(rep.spherical) <= 1e-8


def test_grad_correlation_spherical_matches_geodesic_fd(small_smooth, stream):
    theta = sample_sphere(small_smooth.d, 1.0, stream.child("fd"))
    g = grad_correlation(small_smooth, theta).spherical
    rng = np.random.default_rng(3)
    for _ in range(4):
        v = rng.standard_normal(small_smooth.d)
        v -= (v @ theta) * theta
        v /= np.linalg.norm(v)
        eps = 1e-5
        lp = correlation_loss(small_smooth, np.cos(eps) * theta + np.sin(eps) * v)
        lm = correlation_loss(small_smooth, np.cos(eps) * theta - np.sin(eps) * v)
        fd = (lp - lm) / (2 * eps)
        assert fd == pytest.approx(float(g @ v), rel=1e-4, abs=1e-9)


def test_grad_correlation_orthogonality(small_smooth, stream):
    for k in range(5):
        theta = sample_sphere(small_smooth.d, 1.0, stream.child("orth", k))
        g = grad_correlation(small_smooth, theta).spherical
        assert abs(g @ theta) <= 1e-10 * max(np.linalg.norm(g), 1e-30)


def test_squared_loss_vanishes_at_optima(small_hard):
    assert squared_loss(small_hard, small_hard.theta_star) == 0.0
    assert squared_loss(small_hard, -small_hard.theta_star) == 0.0


def test_squared_loss_at_zero_quadratic():
    inst = sample_instance(20, 20000, quadratic(), SeedStream(13).child("z"))
    val = squared_loss(inst, np.zeros(20))
    # (1/2n) sum y_i^2 -> E[z^4]/2 = 3/2; Var(z^4) = 96
    se = np.sqrt(96.0 / 20000) / 2.0
    assert abs(val - 1.5) <= 4.0 * se


def test_grad_squared_zero_at_both_optima(small_hard):
    # residuals at the optima are at the rounding floor of sigma(<x,theta>)
    g_plus = grad_squared(small_hard, small_hard.theta_star).euclidean
    g_minus = grad_squared(small_hard, -small_hard.theta_star).euclidean
    assert np.linalg.norm(g_plus) <= 1e-12
    assert np.linalg.norm(g_minus) <= 1e-12


def test_grad_squared_matches_fd_away_from_kinks(stream):
    inst = sample_instance(25, 250, hard_trunc(8.0), stream.child("fdkink"))
    theta = 0.8 * sample_sphere(25, 1.0, stream.child("fdkink-theta"))
    z = inst.X @ theta
    assert np.min(np.abs(z * z - 8.0)) > 1e-3
    g = grad_squared(inst, theta).euclidean
    step = 1e-5 * (1.0 + np.linalg.norm(theta))
    for k in range(0, 25, 3):
        e = np.zeros(25)
        e[k] = step
        fd = (squared_loss(inst, theta + e) - squared_loss(inst, theta - e)) / (2 * step)
        assert fd == pytest.approx(g[k], rel=1e-4, abs=1e-8)


def test_grad_squared_sign_symmetry(small_smooth, stream):
    theta = 1.3 * sample_sphere(small_smooth.d, 1.0, stream.child("sgn"))
    g_plus = grad_squared(small_smooth, theta).euclidean
    g_minus = grad_squared(small_smooth, -theta).euclidean
    assert np.array_equal(g_plus, -g_minus)


def test_population_grad_zero_at_theta_star(stream):
    ts = sample_sphere(12, 1.0, stream.child("pg0"))
    for spec in (quadratic(), hard_trunc(8.0), smooth_trunc(8.0)):
        g = population_grad_squared(ts, ts, spec)
        assert np.linalg.norm(g) <= 1e-10


def test_population_grad_requires_min_order(stream):
    ts = sample_sphere(5, 1.0, stream.child("pgq"))
    with pytest.raises(DomainError):
        population_grad_squared(0.5 * ts, ts, quadratic(), order=10)


def test_population_grad_descent_direction_small_norm(stream):
    # <G(theta), theta*> < 0 for small positive-overlap theta (quadratic)
    ts = sample_sphere(10, 1.0, stream.child("pgdir"))
    rng = np.random.default_rng(4)
    u = rng.standard_normal(10)
    u -= (u @ ts) * ts
    theta = 0.05 * (0.6 * ts + 0.8 * u / np.linalg.norm(u))
    g = population_grad_squared(theta, ts, quadratic())
    assert float(g @ ts) < 0.0


@pytest.mark.slow
@pytest.mark.parametrize("kind", ["quadratic", "hard_trunc", "smooth_trunc"])
def test_population_grad_matches_mc_oracle(kind, stream):
    spec = {"quadratic": quadratic(), "hard_trunc": hard_trunc(8.0),
            "smooth_trunc": smooth_trunc(8.0)}[kind]
    d = 20
    ts = sample_sphere(d, 1.0, stream.child("pgmc-ts"))
    theta = 1.2 * sample_sphere(d, 1.0, stream.child("pgmc-th", kind))
    g = population_grad_squared(theta, ts, spec)
    rng = np.random.default_rng(99)
    total = np.zeros(d)
    total_sq = np.zeros(d)
    n_total = 10_000_000
    batch = 1_000_000
    for _ in range(n_total // batch):
        x = rng.standard_normal((batch, d))
        z = x @ theta
        f = (spec.sigma(z) - spec.sigma(x @ ts)) * spec.dsigma(z)
        total += f @ x
        total_sq += (f * f) @ (x * x)
    mc = total / n_total
    se = np.sqrt(np.maximum(total_sq / n_total - mc * mc, 0.0) / n_total)
    assert np.all(np.abs(g - mc) <= 4.0 * se + 1e-12)


def test_stein_quadratic_analytic(stream):
    # for sigma = z^2: A = 6 ||theta||^2 - 2 and B = 4 <theta, theta*>
    ts = sample_sphere(8, 1.0, stream.child("stein-ts"))
    theta = 0.9 * sample_sphere(8, 1.0, stream.child("stein-th"))
    a, b = stein_decomposition(theta, ts, quadratic())
    assert a == pytest.approx(6.0 * float(theta @ theta) - 2.0, abs=1e-8)
    assert b == pytest.approx(4.0 * float(theta @ ts), abs=1e-8)


def test_stein_colinear_quadratic(stream):
    ts = sample_sphere(8, 1.0, stream.child("stein-col"))
    c = 0.7
    a, b = stein_decomposition(c * ts, ts, quadratic())
    assert b == pytest.approx(4.0 * c, abs=1e-8)
    g = population_grad_squared(c * ts, ts, quadratic())
    recon = a * (c * ts) - b * ts
    assert np.max(np.abs(g - recon)) <= 1e-8


def test_stein_orthogonal_hard(stream):
    ts = sample_sphere(8, 1.0, stream.child("stein-orth-ts"))
    rng = np.random.default_rng(11)
    u = rng.standard_normal(8)
    u -= (u @ ts) * ts
    u /= np.linalg.norm(u)
    _, b = stein_decomposition(u, ts, hard_trunc(8.0))
    assert abs(b) <= 1e-9


def test_stein_rejects_smooth_and_zero(stream):
    ts = sample_sphere(8, 1.0, stream.child("stein-rej"))
    with pytest.raises(DomainError):
        stein_decomposition(np.zeros(8), ts, quadratic())
    with pytest.raises(DomainError):
        stein_decomposition(ts, ts, smooth_trunc(8.0))


@pytest.mark.slow
def test_stein_b_matches_mc_oracle(stream):
    spec = hard_trunc(8.0)
    ts = sample_sphere(10, 1.0, stream.child("steinmc-ts"))
    rng = np.random.default_rng(21)
    u = rng.standard_normal(10)
    u -= (u @ ts) * ts
    u /= np.linalg.norm(u)
    phi = np.pi / 8
    theta = np.cos(phi) * ts + np.sin(phi) * u
    _, b = stein_decomposition(theta, ts, spec)
    total, total_sq, n_total = 0.0, 0.0, 10_000_000
    for _ in range(10):
        x = rng.standard_normal((1_000_000, 10))
        vals = spec.dsigma(x @ theta) * spec.dsigma(x @ ts)
        total += vals.sum()
        total_sq += float(vals @ vals)
    mc = total / n_total
    se = np.sqrt((total_sq / n_total - mc * mc) / n_total)
    assert abs(b - mc) <= 3.0 * se


@pytest.mark.slow
def test_empirical_gradient_concentrates(stream):
    d = 20
    spec = hard_trunc(8.0)
    ts = sample_sphere(d, 1.0, stream.child("conc-ts"))
    theta = 0.8 * sample_sphere(d, 1.0, stream.child("conc-th"))
    g_pop = population_grad_squared(theta, ts, spec)
    errs = []
    for n in (1000, 10_000, 100_000):
        inst = sample_instance(d, n, spec, stream.child("conc", n))
        # rebuild on the shared theta_star direction: rotate theta instead
        g_hat = grad_squared(inst, theta).euclidean
        g_pop_i = population_grad_squared(theta, inst.theta_star, spec)
        per = (spec.sigma(inst.X @ theta) - inst.y) * spec.dsigma(inst.X @ theta)
        samples = per[:, None] * inst.X
        trace_var = float(np.mean(np.sum((samples - g_hat) ** 2, axis=1)))
        err = np.linalg.norm(g_hat - g_pop_i)
        errs.append(err)
        assert err <= 5.0 * np.sqrt(trace_var / n)
    assert errs[0] > errs[1] > errs[2]
    assert g_pop.shape == (d,)


def test_population_grad_report_carries_stein(stream):
    ts = sample_sphere(10, 1.0, stream.child("rep-ts"))
    theta = 0.8 * sample_sphere(10, 1.0, stream.child("rep-th"))
    rep = population_grad_report(theta, ts, hard_trunc(8.0))
    assert rep.stein_a is not None and rep.stein_b is not None
    recon = rep.stein_a * theta - rep.stein_b * ts
    assert np.max(np.abs(rep.euclidean - recon)) <= 1e-8
    that = theta / np.linalg.norm(theta)
    assert abs(rep.spherical @ that) <= 1e-10 * max(1.0, np.linalg.norm(rep.spherical))
