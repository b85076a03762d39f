"""Gamma function and modified Bessel function of the second kind, K_nu.

``gamma`` defers to the C library (``math.gamma``), accurate to a few ulps
on the positive axis. ``bessel_k`` is evaluated by the compiled kernel in
:mod:`mvgeostat.kernels`.
"""

import math

import numpy as np

from .kernels import bessel_k_array


def gamma(x):
    """Gamma(x) for x > 0; accepts scalars or arrays."""
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0)):
        raise ValueError("gamma is implemented for positive arguments only")
    if arr.ndim == 0:
        return math.gamma(float(arr))
    return np.vectorize(math.gamma, otypes=[float])(arr)


def bessel_k(nu, x):
    """Modified Bessel function of the second kind K_nu(x) for nu > 0, x > 0.

    Broadcasts over ``nu`` and ``x``. Returns a float for scalar input.
    Large arguments underflow to 0.0 without warnings.
    """
    nu_a, x_a = np.broadcast_arrays(np.asarray(nu, dtype=float), np.asarray(x, dtype=float))
    if np.any(~(nu_a > 0)):
        raise ValueError("bessel_k requires nu > 0")
    if np.any(~(x_a > 0)):
        raise ValueError("bessel_k requires x > 0")
    out = bessel_k_array(np.ascontiguousarray(nu_a.ravel()), np.ascontiguousarray(x_a.ravel()))
    if nu_a.ndim == 0:
        return float(out[0])
    return out.reshape(nu_a.shape)
