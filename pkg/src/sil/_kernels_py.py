"""Pure-numpy fallback for the hot per-step kernels.

Mirrors the signatures of the compiled extension ``sil._kernels``; selected
at import time by ``sil.kernels`` when the extension is unavailable or
``SIL_PURE_PYTHON=1`` is set.
"""

from __future__ import annotations

import numpy as np

from .activations import _smoothstep

BACKEND = "pure-python"


def _phi(z2, kind, M):
    if kind == 0:
        return 1.0
    if kind == 1:
        return (z2 <= M).astype(float)
    return 1.0 - _smoothstep((z2 - M) / M)


def _sigma(z2, kind, M, band, band_step, mbar):
    if kind == 0:
        return z2
    if kind == 1:
        return np.minimum(z2, M)
    out = np.where(z2 >= 2.0 * M, mbar, np.minimum(z2, M))
    sel = (z2 > M) & (z2 < 2.0 * M)
    if np.any(sel):
        u = z2[sel]
        t = (u - M) / band_step
        k = np.clip(t.astype(np.int64), 0, band.shape[0] - 2)
        s = t - k
        s2, s3 = s * s, s * s * s
        m0 = _phi(M + k * band_step, kind, M) * band_step
        m1 = _phi(M + (k + 1) * band_step, kind, M) * band_step
        out[sel] = (
            (2 * s3 - 3 * s2 + 1) * band[k]
            + (s3 - 2 * s2 + s) * m0
            + (-2 * s3 + 3 * s2) * band[k + 1]
            + (s3 - s2) * m1
        )
    return out


def corr_gradient(X, y, theta, kind, M, band, band_step, mbar):
    """Return (A(theta) theta, correlation loss); the Euclidean gradient is
    the negation of the first output."""
    n = X.shape[0]
    z = X @ theta
    z2 = z * z
    w = y * _phi(z2, kind, M) * z
    g = (2.0 / n) * (X.T @ w)
    loss = -float(y @ _sigma(z2, kind, M, band, band_step, mbar)) / n
    return g, loss


def squared_gradient(X, y, theta, kind, M, band, band_step, mbar):
    """Return (empirical squared-loss gradient, squared loss)."""
    n = X.shape[0]
    z = X @ theta
    z2 = z * z
    resid = _sigma(z2, kind, M, band, band_step, mbar) - y
    coef = resid * (2.0 * z * _phi(z2, kind, M))
    g = (X.T @ coef) / n
    loss = 0.5 * float(resid @ resid) / n
    return g, loss


def weighted_apply(X, w, v):
    """(1/n) X^T (w * (X v)) — one application of a spiked operator."""
    return (X.T @ (w * (X @ v))) / X.shape[0]
