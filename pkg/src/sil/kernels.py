"""Backend selection for the hot kernels.

The compiled Cython core is preferred; the pure-numpy fallback is used when
the extension is missing or ``SIL_PURE_PYTHON=1`` is set.  Both expose the
same primitive signatures; the wrappers here unpack an ``ActivationSpec``
into them.
"""

from __future__ import annotations

import os

import numpy as np

from . import _kernels_py
from .activations import ActivationSpec

_EMPTY = np.zeros(2)

if os.environ.get("SIL_PURE_PYTHON", "") == "1":
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:
        _impl = _kernels_py


def backend() -> str:
    return _impl.BACKEND


def _pack(spec: ActivationSpec):
    if spec.kind == "smooth_trunc":
        c = spec.cutoff
        return spec.kind_code, spec.M, c.band_values, c.band_step, c.mbar
    return spec.kind_code, spec.M or 0.0, _EMPTY, 1.0, 0.0


def corr_gradient(X, y, theta, spec: ActivationSpec):
    """(A(theta) theta, correlation loss); Euclidean gradient = -first output."""
    kind, M, band, step, mbar = _pack(spec)
    return _impl.corr_gradient(X, y, np.ascontiguousarray(theta), kind, M, band, step, mbar)


def squared_gradient(X, y, theta, spec: ActivationSpec):
    """(empirical squared-loss gradient, squared loss)."""
    kind, M, band, step, mbar = _pack(spec)
    return _impl.squared_gradient(X, y, np.ascontiguousarray(theta), kind, M, band, step, mbar)


def weighted_apply(X, w, v):
    """(1/n) X^T (w * (X v))."""
    return _impl.weighted_apply(X, w, np.ascontiguousarray(v))
