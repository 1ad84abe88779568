import numpy as np
import pytest

from sil.activations import (
    activation_eval,
    hard_trunc,
    make_cutoff,
    quadratic,
    smooth_trunc,
)
from sil.errors import DomainError

GRID = np.linspace(-10.0, 10.0, 10_000)


def test_cutoff_plateaus():
    c = make_cutoff(8.0)
    assert c.phi(5.0) == 1.0
    assert c.phi(20.0) == 0.0


def test_cutoff_midpoint_symmetry():
    # S(v) + S(1-v) = 1 forces S(1/2) = 1/2, so phi(3M/2) = 1/2
    c = make_cutoff(8.0)
    assert c.phi(12.0) == pytest.approx(0.5, abs=1e-12)


def test_cutoff_mbar_is_three_halves_m():
    c = make_cutoff(8.0)
    assert c.mbar == pytest.approx(12.0, abs=1e-9)


def test_cutoff_rejects_nonpositive_m():
    with pytest.raises(DomainError):
        make_cutoff(0.0)
    with pytest.raises(DomainError):
        make_cutoff(-3.0)


def test_cutoff_monotone_on_band():
    c = make_cutoff(8.0)
    u = np.linspace(8.0, 16.0, 1000)
    vals = c.phi(u)
    assert np.all(np.diff(vals) <= 1e-15)


def test_cutoff_derivative_sign_and_scale():
    c = make_cutoff(8.0)
    u = np.linspace(0.0, 20.0, 2000)
    d = c.dphi(u)
    assert np.all(d <= 1e-15)
    assert np.min(d) >= -10.0 / 8.0  # -c/M with a fixed moderate c


def test_cutoff_derivative_matches_fd():
    c = make_cutoff(8.0)
    u = np.linspace(0.5, 20.0, 4001)
    eps = 1e-6
    fd = (c.phi(u + eps) - c.phi(u - eps)) / (2 * eps)
    assert np.max(np.abs(fd - c.dphi(u))) < 1e-6


def test_activation_eval_examples():
    assert activation_eval(hard_trunc(8.0), 2.0) == (4.0, 4.0)
    assert activation_eval(hard_trunc(8.0), 3.0) == (8.0, 0.0)
    val, der = activation_eval(smooth_trunc(8.0), 5.0)
    assert val == pytest.approx(12.0, abs=1e-9)
    assert der == 0.0
    assert activation_eval(quadratic(), -1.5) == (2.25, -3.0)


def test_hard_kink_convention():
    # the quadratic branch owns the boundary z^2 == M
    spec = hard_trunc(4.0)
    val, der = activation_eval(spec, 2.0)
    assert val == 4.0
    assert der == 4.0


@pytest.mark.parametrize("spec", [quadratic(), hard_trunc(8.0), smooth_trunc(8.0)])
def test_sigma_even_dsigma_odd(spec):
    s_pos, s_neg = spec.sigma(GRID), spec.sigma(-GRID)
    d_pos, d_neg = spec.dsigma(GRID), spec.dsigma(-GRID)
    assert np.max(np.abs(s_pos - s_neg)) <= 1e-12
    assert np.max(np.abs(d_pos + d_neg)) <= 1e-12


@pytest.mark.parametrize("spec", [quadratic(), hard_trunc(8.0), smooth_trunc(8.0)])
def test_sigma_quadratic_below_threshold(spec):
    M = spec.M if spec.M is not None else np.inf
    mask = GRID * GRID <= M
    assert np.max(np.abs(spec.sigma(GRID[mask]) - GRID[mask] ** 2)) <= 1e-12


def test_bounds():
    assert np.max(hard_trunc(8.0).sigma(GRID)) <= 8.0
    assert np.max(smooth_trunc(8.0).sigma(GRID)) <= 12.0 + 1e-9
    assert quadratic().sigma(10.0) == 100.0


def test_smooth_dsigma_matches_fd():
    spec = smooth_trunc(8.0)
    eps = 1e-6 * (1.0 + np.abs(GRID))
    fd = (spec.sigma(GRID + eps) - spec.sigma(GRID - eps)) / (2 * eps)
    rel = np.abs(fd - spec.dsigma(GRID)) / (1.0 + np.abs(spec.dsigma(GRID)))
    assert np.max(rel) < 1e-6


def test_hard_dsigma_matches_fd_away_from_kink():
    spec = hard_trunc(8.0)
    mask = np.abs(GRID * GRID - 8.0) > 1e-3
    z = GRID[mask]
    eps = 1e-7 * (1.0 + np.abs(z))
    fd = (spec.sigma(z + eps) - spec.sigma(z - eps)) / (2 * eps)
    rel = np.abs(fd - spec.dsigma(z)) / (1.0 + np.abs(spec.dsigma(z)))
    assert np.max(rel) < 1e-6


def test_hard_dsigma_jumps_at_kink():
    spec = hard_trunc(8.0)
    root = np.sqrt(8.0)
    below = spec.dsigma(root - 1e-9)
    above = spec.dsigma(root + 1e-9)
    assert below == pytest.approx(2 * root, rel=1e-6)
    assert above == 0.0
