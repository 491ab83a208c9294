"""Scale-free discretization coefficients and exact OU noise covariances.

Everything here is a function of ``eta = gamma * h``.  The expressions of
the form ``1 - exp(-x)`` lose all their digits for small ``x`` when written
naively, so each one is evaluated either through ``expm1`` or through its
Taylor series below a switch point.

Conventions for the kinetic noise (per coordinate, ``W`` a standard
Brownian motion on ``[0, h]``)::

    velocity noise        sqrt(2) * gamma * int_0^h exp(-gamma (h - s)) dW_s
    position noise        sqrt(2) * int_0^h (1 - exp(-gamma (h - s))) dW_s
    midpoint pos. noise   sqrt(2) * int_0^{uh} (1 - exp(-gamma (uh - s))) dW_s

The covariances returned below carry physical units; samplers add the
sampled vectors to the state without any further rescaling.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial

import numpy as np

__all__ = [
    "StepCoefficients",
    "NoiseCovariance",
    "psi",
    "klmc_coeffs",
    "klmc_noise_cov",
    "rklmc_noise_cov",
    "sample_noise",
    "one_minus_exp",
    "phi2",
    "phi3",
    "sigma_tilde2",
    "PSI_SWITCH",
]

#: Below this argument ``psi`` switches to its Taylor polynomial.
PSI_SWITCH = 1e-3
_PSI_DEGREE = 8

# phi2 and phi3 cancel to O(x^2) and O(x^3); the series has to be used on a
# much wider range to keep 1e-12 relative accuracy.
_SERIES_SWITCH = 1.0
_SERIES_TERMS = 30

_PSI_COEFS = np.array([(-1.0) ** k / factorial(k + 1) for k in range(_PSI_DEGREE + 1)])
# phi2(x) = x - 1 + exp(-x) = sum_{k>=2} (-1)^k x^k / k!
_PHI2_COEFS = np.array([(-1.0) ** k / factorial(k) for k in range(2, _SERIES_TERMS + 2)])
# phi3(x) = 2x - 3 + 4exp(-x) - exp(-2x) = sum_{k>=3} (-1)^k (4 - 2^k) x^k / k!
_PHI3_COEFS = np.array(
    [(-1.0) ** k * (4.0 - 2.0**k) / factorial(k) for k in range(3, _SERIES_TERMS + 3)]
)


def _horner(coefs, x):
    out = np.zeros_like(x)
    for c in coefs[::-1]:
        out = out * x + c
    return out


def _as_float_array(x):
    return np.asarray(x, dtype=float)


def _check_nonnegative(x, name):
    if np.any(x < 0) or np.any(~np.isfinite(x)):
        raise ValueError(f"{name} must be finite and >= 0, got {x!r}")


def one_minus_exp(x):
    """``1 - exp(-x)`` without cancellation."""
    return -np.expm1(-_as_float_array(x))


def phi2(x):
    """``x - 1 + exp(-x)``, accurate to a few ulps for every ``x >= 0``."""
    x = _as_float_array(x)
    small = x <= _SERIES_SWITCH
    xs = np.where(small, x, 0.0)
    series = xs * xs * _horner(_PHI2_COEFS, xs)
    direct = x + np.expm1(-x)
    out = np.where(small, series, direct)
    return out[()] if out.ndim == 0 else out


def phi3(x):
    """``2x - 3 + 4 exp(-x) - exp(-2x) = 2 int_0^x (1 - e^{-r})^2 dr``."""
    x = _as_float_array(x)
    small = x <= _SERIES_SWITCH
    xs = np.where(small, x, 0.0)
    series = xs**3 * _horner(_PHI3_COEFS, xs)
    direct = 2.0 * x + 4.0 * np.expm1(-x) - np.expm1(-2.0 * x)
    out = np.where(small, series, direct)
    return out[()] if out.ndim == 0 else out


def psi(x):
    """``psi(x) = (1 - exp(-x)) / x`` with ``psi(0) = 1``.

    Parameters
    ----------
    x : float or array_like
        Non-negative argument.

    Raises
    ------
    ValueError
        If any entry of ``x`` is negative.
    """
    x = _as_float_array(x)
    _check_nonnegative(x, "psi argument")
    small = x <= PSI_SWITCH
    xs = np.where(small, x, 0.0)
    xl = np.where(small, 1.0, x)
    out = np.where(small, _horner(_PSI_COEFS, xs), -np.expm1(-xl) / xl)
    return out[()] if out.ndim == 0 else out


def sigma_tilde2(eta):
    """Position-noise variance normalizer, ``gamma * Var_theta / (2 eta^3)``."""
    eta = _as_float_array(eta)
    out = phi3(eta) / (2.0 * eta**3)
    return out


@dataclass(frozen=True)
class StepCoefficients:
    """Coefficients of the KLMC update as functions of ``eta = gamma h``.

    ``alpha``, ``beta``, ``sigma2`` and ``sigma_tilde2`` lie in ``(0, 1)``,
    ``(0, 1/2)``, ``(0, 1)`` and ``(0, 1/3)``; they tend to ``1, 1/2, 1, 1/3``
    as ``eta -> 0``.
    """

    eta: float
    alpha: float
    beta: float
    sigma2: float
    sigma_tilde2: float

    @property
    def decay(self):
        """``exp(-eta)``, equal to ``1 - alpha * eta``."""
        return np.exp(-self.eta)


def klmc_coeffs(eta) -> StepCoefficients:
    """Evaluate ``alpha, beta, sigma^2, sigma_tilde^2`` at ``eta > 0``.

    Accepts arrays; the fields of the result then have the shape of ``eta``.
    """
    eta = _as_float_array(eta)
    if np.any(eta <= 0) or np.any(~np.isfinite(eta)):
        raise ValueError(f"eta must be finite and > 0, got {eta!r}")
    alpha = psi(eta)
    beta = phi2(eta) / eta**2
    sigma2 = psi(2.0 * eta)
    st2 = sigma_tilde2(eta)
    if eta.ndim == 0:
        return StepCoefficients(float(eta), float(alpha), float(beta), float(sigma2), float(st2))
    return StepCoefficients(eta, alpha, beta, sigma2, st2)


@dataclass(frozen=True)
class NoiseCovariance:
    """Per-coordinate covariance of the Gaussian stochastic integrals.

    ``entries`` has shape ``(..., dim, dim)``; a leading batch shape appears
    when ``u`` is an array.  ``chol`` is the lower-triangular factor used for
    sampling.  ``jittered`` flags the batch members for which the factor could
    only be computed after adding ``1e-14 * trace`` to the diagonal of the
    correlation matrix (this happens at ``u = 1``, where the midpoint and the
    full-step position noise coincide).
    """

    dim: int
    entries: np.ndarray
    chol: np.ndarray
    u: object = None
    jittered: np.ndarray = field(default_factory=lambda: np.zeros((), dtype=bool))

    def reconstruction_error(self):
        """Max relative error of ``chol @ chol.T`` against ``entries``."""
        rec = self.chol @ np.swapaxes(self.chol, -1, -2)
        scale = np.max(np.abs(self.entries), axis=(-1, -2), keepdims=True)
        scale = np.where(scale == 0, 1.0, scale)
        return float(np.max(np.abs(rec - self.entries) / scale))


def _cholesky_small(cov):
    """Batched Cholesky for 2x2/3x3 blocks, done on the correlation scale.

    Position and velocity variances differ by a factor ``~eta^2 / gamma^2``,
    so the factorization is carried out on ``D^{-1} cov D^{-1}`` and scaled
    back.  Returns ``(chol, jittered)``.
    """
    cov = np.asarray(cov, dtype=float)
    d = np.sqrt(np.clip(np.diagonal(cov, axis1=-2, axis2=-1), 0.0, None))
    zero = d == 0
    if zero.any():
        ds = np.where(zero, 1.0, d)
        corr = cov / (ds[..., :, None] * ds[..., None, :])
        eye = np.eye(cov.shape[-1], dtype=bool)
        # degenerate coordinates: decouple them, their scale is zero anyway
        corr = np.where(zero[..., :, None] | zero[..., None, :], 0.0, corr)
        corr = np.where(eye & zero[..., :, None], 1.0, corr)
    else:
        inv = 1.0 / d
        corr = cov * inv[..., :, None] * inv[..., None, :]

    chol, ok = _cholesky_unrolled(corr)
    jittered = ~ok
    if np.any(jittered):
        jitter = 1e-14 * np.trace(corr, axis1=-2, axis2=-1)
        fixed = corr + jitter[..., None, None] * np.eye(cov.shape[-1])
        chol_fixed, ok2 = _cholesky_unrolled(fixed)
        if not np.all(ok2 | ok):
            raise np.linalg.LinAlgError("noise covariance is not positive semidefinite")
        chol = np.where(jittered[..., None, None], chol_fixed, chol)
    return chol * d[..., :, None], jittered


def _cholesky_unrolled(a):
    n = a.shape[-1]
    L = np.zeros_like(a)
    ok = np.ones(a.shape[:-2], dtype=bool)
    for j in range(n):
        s = a[..., j, j] - np.sum(L[..., j, :j] ** 2, axis=-1)
        ok &= s > 0
        ljj = np.sqrt(np.where(s > 0, s, 1.0))
        L[..., j, j] = ljj
        for i in range(j + 1, n):
            L[..., i, j] = (a[..., i, j] - np.sum(L[..., i, :j] * L[..., j, :j], axis=-1)) / ljj
    return L, ok


def _check_step(eta, gamma):
    eta = _as_float_array(eta)
    gamma = _as_float_array(gamma)
    if np.any(eta <= 0) or np.any(gamma <= 0):
        raise ValueError(f"eta and gamma must be > 0, got eta={eta!r}, gamma={gamma!r}")
    return eta, gamma


def klmc_cov_entries(eta, gamma):
    """Entries ``(Var_v, Cov_vtheta, Var_theta)`` of the KLMC noise pair.

    Accepts ``eta >= 0`` (zero gives zeros) and broadcasts.
    """
    eta = _as_float_array(eta)
    gamma = _as_float_array(gamma)
    var_v = gamma * one_minus_exp(2.0 * eta)
    cov = one_minus_exp(eta) ** 2
    var_t = phi3(eta) / gamma
    return var_v, cov, var_t


def klmc_noise_cov(eta, gamma) -> NoiseCovariance:
    """Exact covariance of the (velocity, position) noise of one KLMC step.

    Order of the 2x2 matrix: velocity first, position second::

        Var_v = gamma (1 - e^{-2 eta})
        Cov   = (1 - e^{-eta})^2
        Var_t = (2 eta - 3 + 4 e^{-eta} - e^{-2 eta}) / gamma
    """
    eta, gamma = _check_step(eta, gamma)
    var_v, cov, var_t = klmc_cov_entries(eta, gamma)
    entries = np.stack(
        [np.stack([var_v, cov], axis=-1), np.stack([cov, var_t], axis=-1)], axis=-2
    )
    chol, jit = _cholesky_small(entries)
    if np.any(jit):
        raise np.linalg.LinAlgError(
            f"KLMC noise covariance not positive definite at eta={eta!r}, gamma={gamma!r}"
        )
    return NoiseCovariance(dim=2, entries=entries, chol=chol, u=None, jittered=jit)


def rklmc_cov_entries(eta, gamma, u):
    """The six distinct entries of the 3x3 RKLMC noise covariance.

    Returns ``(s11, s22, s33, s12, s13, s23)`` for the order (midpoint
    position, full-step position, full-step velocity).  Every entry is a sum
    of non-negative stable terms, so nothing cancels as ``eta -> 0``.
    """
    eta = _as_float_array(eta)
    gamma = _as_float_array(gamma)
    u = _as_float_array(u)
    a = u * eta
    b = (1.0 - u) * eta
    e1a = one_minus_exp(a)
    s11 = phi3(a) / gamma
    s22 = phi3(eta) / gamma
    s33 = gamma * one_minus_exp(2.0 * eta)
    s12 = (phi3(a) + one_minus_exp(b) * e1a**2) / gamma
    s13 = np.exp(-b) * e1a**2
    s23 = np.broadcast_to(one_minus_exp(eta) ** 2, np.shape(s11))
    return s11, s22, s33, s12, s13, s23


def rklmc_noise_cov(eta, gamma, u) -> NoiseCovariance:
    """Covariance of (midpoint position, position, velocity) noise given ``U = u``.

    ``u`` may be an array, in which case one 3x3 matrix (and factor) is
    returned per entry of ``u``.
    """
    eta, gamma = _check_step(eta, gamma)
    u = _as_float_array(u)
    if np.any(u <= 0) or np.any(u > 1) or np.any(~np.isfinite(u)):
        raise ValueError(f"u must lie in (0, 1], got {u!r}")
    s11, s22, s33, s12, s13, s23 = rklmc_cov_entries(eta, gamma, u)
    s11, s22, s33, s12, s13, s23 = np.broadcast_arrays(s11, s22, s33, s12, s13, s23)
    entries = np.stack(
        [
            np.stack([s11, s12, s13], axis=-1),
            np.stack([s12, s22, s23], axis=-1),
            np.stack([s13, s23, s33], axis=-1),
        ],
        axis=-2,
    )
    chol, jit = _cholesky_small(entries)
    return NoiseCovariance(dim=3, entries=entries, chol=chol, u=u[()] if u.ndim == 0 else u,
                           jittered=jit)


def sample_noise(cov: NoiseCovariance, p: int, rng, batch_shape=()):
    """Draw ``cov.dim`` correlated Gaussian vectors in ``R^p``.

    Coordinates are independent; for each coordinate the ``dim`` values have
    covariance ``cov.entries``.  If ``cov`` is batched (shape ``B + (dim,
    dim)``) the output vectors have shape ``B + (p,)``; otherwise
    ``batch_shape + (p,)``.

    Returns
    -------
    tuple of ndarray
        One array per noise component, in the order of ``cov.entries``.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    chol = cov.chol
    lead = chol.shape[:-2] if chol.ndim > 2 else tuple(batch_shape)
    z = rng.standard_normal(lead + (p, cov.dim))
    if chol.ndim > 2:
        # lower-triangular product per batch entry, cheaper than einsum
        return tuple(
            sum(chol[..., i, j][..., None] * z[..., j] for j in range(i + 1))
            for i in range(cov.dim)
        )
    out = z @ chol.T
    return tuple(out[..., k] for k in range(cov.dim))


def sigma_tilde2_printed_final(eta):
    """``2(1 - 2eta + 2eta^2 - e^{-2eta}) / (2eta)^3`` (kept for the audit)."""
    eta = _as_float_array(eta)
    return 2.0 * (1.0 - 2.0 * eta + 2.0 * eta**2 - np.exp(-2.0 * eta)) / (2.0 * eta) ** 3


def sigma_tilde2_printed_draft(eta):
    """``(e^{-2eta} - 1 + 2eta) / (2 eta^2)`` (kept for the audit)."""
    eta = _as_float_array(eta)
    return (np.exp(-2.0 * eta) - 1.0 + 2.0 * eta) / (2.0 * eta**2)

