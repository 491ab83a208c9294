"""Independent reference computations used by the validation suites and tests.

Nothing here is used at sampling time.  Covariances are computed by
Gauss-Legendre quadrature of the stochastic-integral kernels (Ito isometry),
coefficients in extended precision with mpmath.
"""

from __future__ import annotations

import mpmath as mp
import numpy as np
from numpy.polynomial.legendre import leggauss

__all__ = [
    "gl_integrate",
    "quad_klmc_cov",
    "quad_rklmc_cov",
    "unit_time_rklmc_cov",
    "mp_coeffs",
    "mp_psi",
]


def gl_integrate(fn, a, b, n=64):
    """Gauss-Legendre rule for ``int_a^b fn(s) ds`` (``fn`` vectorized)."""
    if b <= a:
        return 0.0
    x, w = leggauss(n)
    s = 0.5 * (b - a) * x + 0.5 * (a + b)
    return 0.5 * (b - a) * float(np.dot(w, fn(s)))


def _gram(kernels, breaks, n):
    """Matrix of ``int k_i k_j`` when every kernel is smooth between ``breaks``."""
    d = len(kernels)
    out = np.zeros((d, d))
    for i in range(d):
        for j in range(i, d):
            tot = sum(gl_integrate(lambda s: kernels[i](s) * kernels[j](s), a, b, n)
                      for a, b in zip(breaks[:-1], breaks[1:]))
            out[i, j] = out[j, i] = tot
    return out


def quad_klmc_cov(eta, gamma, n=64):
    """(velocity, position) noise covariance from the physical-time kernels."""
    h = eta / gamma
    kv = lambda s: np.sqrt(2.0) * gamma * np.exp(-gamma * (h - s))
    kt = lambda s: np.sqrt(2.0) * -np.expm1(-gamma * (h - s))
    return _gram([kv, kt], [0.0, h], n)


def quad_rklmc_cov(eta, gamma, u, n=64):
    """(midpoint position, position, velocity) covariance given ``U = u``."""
    h = eta / gamma
    uh = u * h
    k1 = lambda s: np.where(s < uh, np.sqrt(2.0) * -np.expm1(-gamma * (uh - s)), 0.0)
    k2 = lambda s: np.sqrt(2.0) * -np.expm1(-gamma * (h - s))
    k3 = lambda s: np.sqrt(2.0) * gamma * np.exp(-gamma * (h - s))
    return _gram([k1, k2, k3], sorted({0.0, uh, h}), n)


def unit_time_rklmc_cov(eta, gamma, u, n=64):
    """Same covariance built from ``B`` on ``[0, 1]`` and ``G_t = int_0^t e^{eta s} dB_s``.

    The triple ``sqrt(2h) (B_u - e^{-eta u} G_u, B_1 - e^{-eta} G_1, gamma e^{-eta} G_1)``
    is linear in ``dB``; its kernels are integrated on the unit interval.
    """
    h = eta / gamma
    k1 = lambda s: np.where(s < u, 1.0 - np.exp(-eta * u) * np.exp(eta * s), 0.0)
    k2 = lambda s: 1.0 - np.exp(-eta) * np.exp(eta * s)
    k3 = lambda s: gamma * np.exp(-eta) * np.exp(eta * s)
    return 2.0 * h * _gram([k1, k2, k3], sorted({0.0, u, 1.0}), n)


def mp_psi(x, dps=50):
    with mp.workdps(dps):
        x = mp.mpf(x)
        return float(-mp.expm1(-x) / x) if x != 0 else 1.0


def mp_coeffs(eta, dps=50):
    """``(alpha, beta, sigma2, sigma_tilde2)`` in extended precision."""
    with mp.workdps(dps):
        e = mp.mpf(eta)
        alpha = -mp.expm1(-e) / e
        beta = (mp.exp(-e) - 1 + e) / e**2
        sigma2 = -mp.expm1(-2 * e) / (2 * e)
        st2 = (2 * e - 3 + 4 * mp.exp(-e) - mp.exp(-2 * e)) / (2 * e**3)
        return float(alpha), float(beta), float(sigma2), float(st2)
