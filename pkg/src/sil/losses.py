"""Correlation and squared losses, their empirical gradients, and the
population gradient of the squared loss via 2-plane quadrature.

Population expectations reduce x to the plane span{theta, theta_star}:
with e1 = theta_star and e2 completing the plane, z* = <x, e1> = V and
z = <x, theta> = r (rho V + sin_phi W) for independent standard Gaussians
(V, W); components of the gradient orthogonal to the plane vanish by
symmetry.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .activations import KIND_HARD, KIND_QUADRATIC, ActivationSpec
from .errors import DomainError, PreconditionError
from .quadrature import (
    gh_rule,
    plane_basis,
    split_gaussian_quad,
    truncated_moments,
)
from .sampling import Instance

MIN_QUAD_ORDER = 20


@dataclass
class GradientReport:
    """Loss value with Euclidean and tangent (spherical) gradients.

    ``stein_a``/``stein_b`` hold the decomposition G = A theta - B theta*
    of the population gradient when populated.
    """

    loss: float
    euclidean: np.ndarray
    spherical: np.ndarray
    stein_a: float | None = None
    stein_b: float | None = None


def _check_unit(theta, tol=1e-8):
    err = abs(np.linalg.norm(theta) - 1.0)
    if err > tol:
        raise PreconditionError(f"theta must be unit norm within {tol}, off by {err:.3e}")


def correlation_loss(instance: Instance, theta: np.ndarray) -> float:
    """-(1/n) sum_i y_i sigma(<x_i, theta>), defined on the unit sphere."""
    _check_unit(theta)
    z = instance.X @ theta
    return -float(instance.y @ instance.activation.sigma(z)) / instance.n


def grad_correlation(instance: Instance, theta: np.ndarray) -> GradientReport:
    """Euclidean gradient -(1/n) sum y_i sigma'(z_i) x_i and its tangent
    projection.  For the quadratic activation the Euclidean gradient equals
    -A* theta exactly."""
    _check_unit(theta)
    g, loss = kernels.corr_gradient(instance.X, instance.y, theta, instance.activation)
    euclidean = -g
    that = theta / np.linalg.norm(theta)
    spherical = euclidean - (euclidean @ that) * that
    return GradientReport(loss=loss, euclidean=euclidean, spherical=spherical)


def squared_loss(instance: Instance, theta: np.ndarray) -> float:
    """(1/2n) sum_i (sigma(<x_i, theta>) - y_i)^2, defined for any theta."""
    resid = instance.activation.sigma(instance.X @ theta) - instance.y
    return 0.5 * float(resid @ resid) / instance.n


def grad_squared(instance: Instance, theta: np.ndarray) -> GradientReport:
    """Empirical gradient (1/n) sum (sigma(z_i) - y_i) sigma'(z_i) x_i."""
    g, loss = kernels.squared_gradient(instance.X, instance.y, theta, instance.activation)
    nrm = np.linalg.norm(theta)
    if nrm > 0:
        that = theta / nrm
        spherical = g - (g @ that) * that
    else:
        spherical = g.copy()
    return GradientReport(loss=loss, euclidean=g, spherical=spherical)


def _pop_plane_coeffs_gh(rbar, rho, sphi, spec, order):
    xg, wg = gh_rule(order)
    V, W = np.meshgrid(xg, xg, indexing="ij")
    WT = np.outer(wg, wg)
    z = rbar * (rho * V + sphi * W)
    f = (spec.sigma(z) - spec.sigma(V)) * spec.dsigma(z)
    return float(np.sum(WT * f * V)), float(np.sum(WT * f * W))


def _pop_plane_coeffs_hard(rbar, rho, sphi, spec):
    """Inner conditional integral in closed form (truncated Gaussian moments),
    outer integral adaptive with the sigma(v) kink split out."""
    a = np.sqrt(spec.M)
    sz = rbar * sphi

    if sz == 0.0:
        def f_of_v(v):
            z = rbar * rho * np.asarray(v, dtype=float)
            return (spec.sigma(z) - spec.sigma(v)) * spec.dsigma(z)

        pts = [a, -a]
        if rbar * abs(rho) > 0:
            zb = a / (rbar * abs(rho))
            pts += [zb, -zb]
        a1 = split_gaussian_quad(lambda v: f_of_v(v) * v, pts)
        return a1, 0.0

    def cond(v, weight_w):
        v = np.asarray(v, dtype=float)
        m = rbar * rho * v
        I = truncated_moments(m, sz, a, kmax=4)
        sig_v = spec.sigma(v)
        # f = 2 z^3 1{|z|<=a} - 2 sigma(v) z 1{|z|<=a}
        e_f = 2.0 * I[3] - 2.0 * sig_v * I[1]
        if not weight_w:
            return e_f
        e_fz = 2.0 * I[4] - 2.0 * sig_v * I[2]
        return (e_fz - m * e_f) / sz

    a1 = split_gaussian_quad(lambda v: cond(v, False) * v, [a, -a])
    a2 = split_gaussian_quad(lambda v: cond(v, True), [a, -a])
    return a1, a2


def population_grad_squared(
    theta: np.ndarray,
    theta_star: np.ndarray,
    spec: ActivationSpec,
    order: int = 80,
) -> np.ndarray:
    """Population gradient E[(sigma(<x,theta>) - sigma(<x,theta*>)) sigma'(<x,theta>) x]."""
    if order < MIN_QUAD_ORDER:
        raise DomainError(f"quadrature order must be >= {MIN_QUAD_ORDER}, got {order}")
    theta = np.asarray(theta, dtype=float)
    if np.linalg.norm(theta) == 0.0:
        return np.zeros_like(theta)
    rbar, rho, sphi, e1, e2 = plane_basis(theta, theta_star)
    if spec.kind == KIND_HARD:
        a1, a2 = _pop_plane_coeffs_hard(rbar, rho, sphi, spec)
    else:
        a1, a2 = _pop_plane_coeffs_gh(rbar, rho, sphi, spec, order)
    out = a1 * e1
    if e2 is not None:
        out = out + a2 * e2
    return out


def _stein_b(theta, theta_star, spec, order):
    rbar, rho, sphi, _, _ = plane_basis(theta, theta_star)
    if spec.kind == KIND_QUADRATIC:
        # polynomial integrand: Gauss-Hermite is exact, B = 4 <theta, theta*>
        xg, wg = gh_rule(order)
        V, W = np.meshgrid(xg, xg, indexing="ij")
        WT = np.outer(wg, wg)
        z = rbar * (rho * V + sphi * W)
        return float(np.sum(WT * spec.dsigma(z) * spec.dsigma(V)))
    a = np.sqrt(spec.M)
    sz = rbar * sphi
    if sz == 0.0:
        def g(v):
            z = rbar * rho * np.asarray(v, dtype=float)
            return spec.dsigma(z) * spec.dsigma(v)

        pts = [a, -a]
        if rbar * abs(rho) > 0:
            zb = a / (rbar * abs(rho))
            pts += [zb, -zb]
        return split_gaussian_quad(g, pts)

    def g(v):
        v = np.asarray(v, dtype=float)
        m = rbar * rho * v
        I = truncated_moments(m, sz, a, kmax=1)
        return 4.0 * v * I[1] * (np.abs(v) <= a)

    return split_gaussian_quad(g, [a, -a])


def stein_decomposition(
    theta: np.ndarray,
    theta_star: np.ndarray,
    spec: ActivationSpec,
    order: int = 80,
) -> tuple[float, float]:
    """Scalars (A, B) with population gradient G(theta) = A theta - B theta*.

    B = E[sigma'(<x,theta>) sigma'(<x,theta*>)] (Stein);  A is recovered from
    A = (<G(theta), theta> + B <theta, theta*>) / ||theta||^2.
    """
    theta = np.asarray(theta, dtype=float)
    if np.linalg.norm(theta) == 0.0:
        raise DomainError("stein decomposition undefined at theta = 0")
    if spec.kind not in (KIND_QUADRATIC, KIND_HARD):
        raise DomainError("stein decomposition implemented for quadratic and hard_trunc")
    if order < MIN_QUAD_ORDER:
        raise DomainError(f"quadrature order must be >= {MIN_QUAD_ORDER}, got {order}")
    b = _stein_b(theta, theta_star, spec, order)
    g = population_grad_squared(theta, theta_star, spec, order)
    nrm2 = float(theta @ theta)
    a = (float(g @ theta) + b * float(theta @ theta_star)) / nrm2
    return a, b


def population_grad_report(
    theta: np.ndarray,
    theta_star: np.ndarray,
    spec: ActivationSpec,
    order: int = 80,
) -> GradientReport:
    """Population gradient with the Stein coefficients attached."""
    g = population_grad_squared(theta, theta_star, spec, order)
    a, b = stein_decomposition(theta, theta_star, spec, order)
    nrm = np.linalg.norm(theta)
    that = theta / nrm
    return GradientReport(
        loss=np.nan,
        euclidean=g,
        spherical=g - (g @ that) * that,
        stein_a=a,
        stein_b=b,
    )
