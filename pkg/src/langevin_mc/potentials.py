"""Strongly convex, smooth potentials ``f`` with certified constants.

A target density is ``pi(theta) ~ exp(-f(theta))`` with
``m I <= Hess f <= M I``.  Every potential built here is shifted so that its
minimum value is exactly zero; bound evaluators rely on
``f(theta_0) - f(theta_*)`` being available directly as ``f(theta_0)``.

Value and gradient functions accept batches: an array of shape ``(..., p)``
maps to values of shape ``(...)`` and gradients of shape ``(..., p)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import expit

__all__ = [
    "PotentialSpec",
    "GaussianPotential",
    "LogisticPotential",
    "make_gaussian",
    "make_logistic",
    "check_gradient_fd",
    "ConvergenceError",
]


class ConvergenceError(RuntimeError):
    """The internal minimizer did not reach its gradient tolerance."""


@dataclass(frozen=True)
class PotentialSpec:
    """Gradient oracle of ``f`` plus its convexity/smoothness constants.

    Attributes
    ----------
    value_fn, grad_fn : callable
        ``f`` and ``grad f``, vectorized over leading axes.
    m, M : float
        Strong convexity and gradient-Lipschitz constants, ``0 < m <= M``.
    minimizer : ndarray
        ``theta_*`` with ``grad f(theta_*) = 0``.
    f_min : float
        ``f(theta_*)``; zero for all potentials produced by this module.
    dim : int
        Dimension ``p``.
    """

    value_fn: Callable
    grad_fn: Callable
    m: float
    M: float
    minimizer: np.ndarray
    f_min: float
    dim: int

    def value(self, theta):
        return self.value_fn(np.asarray(theta, dtype=float))

    def grad(self, theta):
        return self.grad_fn(np.asarray(theta, dtype=float))

    @property
    def kappa(self) -> float:
        return self.M / self.m


@dataclass(frozen=True)
class GaussianPotential(PotentialSpec):
    """``f(theta) = (theta - mean)^T A (theta - mean) / 2``; ``pi = N(mean, A^{-1})``."""

    precision: np.ndarray = None
    mean: np.ndarray = None

    @property
    def eigh(self):
        """Eigen-decomposition ``(lam, Q)`` of the precision matrix."""
        return np.linalg.eigh(self.precision)

    @property
    def is_diagonal(self) -> bool:
        A = self.precision
        return bool(np.all(A == np.diag(np.diag(A))))

    @property
    def target_cov(self):
        return np.linalg.inv(self.precision)


@dataclass(frozen=True)
class LogisticPotential(PotentialSpec):
    """Ridge-penalized logistic regression negative log-posterior."""

    design: np.ndarray = None
    labels: np.ndarray = None
    ridge: float = None


def _symmetric_eigvals(A):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if not np.allclose(A, A.T, rtol=0, atol=1e-12 * max(1.0, np.max(np.abs(A)))):
        raise ValueError("precision matrix is not symmetric")
    return np.linalg.eigvalsh(0.5 * (A + A.T))


def make_gaussian(A, mean=None) -> GaussianPotential:
    """Gaussian potential with precision ``A`` centred at ``mean``.

    ``m`` and ``M`` are the extreme eigenvalues of ``A``.  Passing a 1-D
    array for ``A`` is shorthand for ``diag(A)``.

    Raises
    ------
    ValueError
        If ``A`` is not symmetric positive definite; the message names the
        smallest eigenvalue.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = np.diag(A)
    lam = _symmetric_eigvals(A)
    if lam[0] <= 0:
        raise ValueError(
            f"precision matrix is not positive definite: eigenvalue {float(lam[0]):.6g} <= 0"
        )
    A = 0.5 * (A + A.T)
    p = A.shape[0]
    mean = np.zeros(p) if mean is None else np.asarray(mean, dtype=float)
    if mean.shape != (p,):
        raise ValueError(f"mean must have shape ({p},), got {mean.shape}")
    A.setflags(write=False)
    mean.setflags(write=False)

    def value_fn(theta):
        d = theta - mean
        return 0.5 * np.einsum("...i,ij,...j->...", d, A, d)

    def grad_fn(theta):
        return (theta - mean) @ A

    return GaussianPotential(
        value_fn=value_fn,
        grad_fn=grad_fn,
        m=float(lam[0]),
        M=float(lam[-1]),
        minimizer=mean,
        f_min=0.0,
        dim=p,
        precision=A,
        mean=mean,
    )


def _logistic_raw(X, y, lam):
    def value(theta):
        z = theta @ X.T
        return (np.logaddexp(0.0, z) - y * z).sum(axis=-1) + 0.5 * lam * np.sum(theta**2, axis=-1)

    def grad(theta):
        z = theta @ X.T
        return (expit(z) - y) @ X + lam * theta

    def hess(theta):
        s = expit(X @ theta)
        w = s * (1.0 - s)
        return (X.T * w) @ X + lam * np.eye(X.shape[1])

    return value, grad, hess


def _damped_newton(value, grad, hess, x0, tol=1e-12, max_iter=200):
    x = x0.copy()
    g = grad(x)
    gnorm = np.linalg.norm(g)
    for _ in range(max_iter):
        if gnorm <= tol:
            break
        step = np.linalg.solve(hess(x), g)
        fx = value(x)
        t = 1.0
        # Armijo backtracking; near the optimum the full step is accepted
        while t > 1e-12:
            cand = x - t * step
            if value(cand) <= fx - 1e-4 * t * (g @ step):
                break
            t *= 0.5
        x_new = x - t * step
        g_new = grad(x_new)
        if np.linalg.norm(g_new) >= gnorm and t < 1e-8:
            break
        x, g, gnorm = x_new, g_new, np.linalg.norm(g_new)
    return x, gnorm


def make_logistic(X, y, lam, tol=1e-12) -> LogisticPotential:
    """Logistic-regression potential with ridge penalty ``lam / 2 |theta|^2``.

    ``f(theta) = sum_i log(1 + exp(x_i^T theta)) - y_i x_i^T theta
    + lam |theta|^2 / 2``, shifted to have minimum zero.  The Hessian satisfies
    ``lam I <= Hess f <= (lam + lambda_max(X^T X) / 4) I``.

    Raises
    ------
    ValueError
        For ``lam <= 0`` or labels outside ``{0, 1}``.
    ConvergenceError
        If damped Newton stops with a gradient norm above ``1e-10``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).reshape(-1)
    if lam <= 0:
        raise ValueError(f"ridge parameter must be > 0, got {lam}")
    if X.shape[0] != y.shape[0]:
        raise ValueError(f"design has {X.shape[0]} rows but {y.shape[0]} labels")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    p = X.shape[1]
    value, grad, hess = _logistic_raw(X, y, lam)
    theta_star, gnorm = _damped_newton(value, grad, hess, np.zeros(p), tol=tol)
    if gnorm > 1e-10:
        raise ConvergenceError(f"Newton solver stopped with gradient norm {gnorm:.3e}")
    f_star = float(value(theta_star))
    lam_max = float(np.linalg.eigvalsh(X.T @ X)[-1]) if X.size else 0.0
    X.setflags(write=False)
    y.setflags(write=False)
    theta_star.setflags(write=False)

    def value_fn(theta):
        return value(theta) - f_star

    return LogisticPotential(
        value_fn=value_fn,
        grad_fn=grad,
        m=float(lam),
        M=float(lam + 0.25 * lam_max),
        minimizer=theta_star,
        f_min=0.0,
        dim=p,
        design=X,
        labels=y,
        ridge=float(lam),
    )


def check_gradient_fd(pot: PotentialSpec, theta, delta) -> float:
    """Max-abs difference between ``grad f`` and central differences of ``f``."""
    if not delta > 0:
        raise ValueError(f"finite-difference step must be > 0, got {delta}")
    theta = np.asarray(theta, dtype=float)
    p = theta.shape[-1]
    steps = delta * np.eye(p)
    fd = (pot.value(theta + steps) - pot.value(theta - steps)) / (2.0 * delta)
    return float(np.max(np.abs(fd - pot.grad(theta))))
