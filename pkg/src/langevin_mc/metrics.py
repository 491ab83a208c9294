"""Wasserstein-2 distances: Gaussian closed form, exact linear-chain laws, sorted samples.

On a Gaussian target LMC and KLMC are affine recursions driven by Gaussian
noise, so the law of every iterate is Gaussian and can be propagated exactly.
In the eigenbasis of the precision matrix the recursion splits into scalar
(LMC) or 2x2 (KLMC) blocks, which is what the fast paths below use.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.stats import norm

from .coeffs import klmc_coeffs, klmc_cov_entries

__all__ = [
    "GaussianLaw",
    "W2Trace",
    "w2_gaussian",
    "lmc_gaussian_recursion",
    "klmc_gaussian_recursion",
    "empirical_w2_product",
    "bootstrap_w2_product",
    "moment_diagnostics",
]

_PSD_TOL = 1e-12


@dataclass(frozen=True)
class GaussianLaw:
    """``N(mean, cov)``; ``cov`` must be symmetric with eigenvalues > -1e-12."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise ValueError(f"covariance shape {cov.shape} does not match mean size {mean.size}")
        scale = max(1.0, float(np.max(np.abs(cov)))) if cov.size else 1.0
        if not np.allclose(cov, cov.T, rtol=0, atol=1e-12 * scale):
            raise ValueError("covariance is not symmetric")
        lam_min = np.linalg.eigvalsh(0.5 * (cov + cov.T))[0]
        if lam_min < -_PSD_TOL * scale:
            raise ValueError(f"covariance is not PSD: eigenvalue {lam_min!r}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", 0.5 * (cov + cov.T))

    @property
    def dim(self) -> int:
        return self.mean.size

    @classmethod
    def point(cls, x) -> "GaussianLaw":
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return cls(x, np.zeros((x.size, x.size)))

    def is_diagonal(self) -> bool:
        c = self.cov
        return bool(np.all(c == np.diag(np.diag(c))))


def _psd_sqrt(S):
    lam, Q = np.linalg.eigh(S)
    return (Q * np.sqrt(np.clip(lam, 0.0, None))) @ Q.T


def w2_gaussian(a: GaussianLaw, b: GaussianLaw) -> float:
    """Bures-Wasserstein distance between two Gaussian laws."""
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    dmu = float(np.sum((a.mean - b.mean) ** 2))
    if a.is_diagonal() and b.is_diagonal():
        sa, sb = np.sqrt(np.diag(a.cov).clip(0)), np.sqrt(np.diag(b.cov).clip(0))
        return float(np.sqrt(dmu + np.sum((sa - sb) ** 2)))
    rb = _psd_sqrt(b.cov)
    cross = np.linalg.eigvalsh(rb @ a.cov @ rb)
    bures = np.trace(a.cov) + np.trace(b.cov) - 2.0 * np.sum(np.sqrt(np.clip(cross, 0.0, None)))
    return float(np.sqrt(max(dmu + bures, 0.0)))


def _w2_diag(mu, var, target_var):
    """Per-eigen W2 with the difference of square roots written stably."""
    var = np.clip(var, 0.0, None)
    dsig = (var - target_var) / (np.sqrt(var) + np.sqrt(target_var))
    return np.sqrt(np.sum(mu**2 + dsig**2, axis=-1))


@dataclass
class W2Trace:
    """Exact ``W2(nu_n, pi)`` along a run, optionally with a bound curve."""

    n: np.ndarray
    w2_exact: np.ndarray
    bound_total: Optional[np.ndarray] = None
    valid: Optional[bool] = None
    plan: object = None
    final_law: Optional[GaussianLaw] = None

    def __post_init__(self):
        self.n = np.asarray(self.n, dtype=np.int64)
        self.w2_exact = np.asarray(self.w2_exact, dtype=float)
        if self.n.shape != self.w2_exact.shape:
            raise ValueError("n and w2_exact lengths differ")
        if self.bound_total is not None:
            self.bound_total = np.asarray(self.bound_total, dtype=float)
            if self.bound_total.shape != self.n.shape:
                raise ValueError("bound curve length differs from trace length")

    def dominated(self) -> bool:
        """True if the exact trace is below the bound at every recorded ``n``."""
        if self.bound_total is None:
            raise ValueError("no bound curve attached")
        return bool(np.all(self.w2_exact <= self.bound_total))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "w2_exact", "bound_total", "valid"])
        for i, n in enumerate(self.n):
            b = "" if self.bound_total is None else repr(float(self.bound_total[i]))
            w.writerow([int(n), repr(float(self.w2_exact[i])), b,
                        "" if self.valid is None else str(bool(self.valid)).lower()])
        return buf.getvalue()


def _eig(A):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    lam, Q = np.linalg.eigh(0.5 * (A + A.T))
    if lam[0] <= 0:
        raise ValueError(f"precision matrix is not positive definite: eigenvalue {lam[0]!r}")
    return lam, Q


def _is_diag(S, tol=1e-14):
    off = S - np.diag(np.diag(S))
    return bool(np.max(np.abs(off), initial=0.0) <= tol * max(1.0, np.max(np.abs(S), initial=0.0)))


def _steps(n, every):
    ks = np.arange(0, n + 1, every)
    if ks[-1] != n:
        ks = np.append(ks, n)
    return ks


def lmc_gaussian_recursion(A, theta_star, h, init: GaussianLaw, n: int, every: int = 1,
                           force_general: bool = False) -> W2Trace:
    """Exact law of LMC on ``N(theta_star, A^{-1})``.

    ``mu' = (I - hA)(mu - theta*) + theta*`` and
    ``S' = (I - hA) S (I - hA)^T + 2h I``.  When ``init`` is diagonal in the
    eigenbasis of ``A`` the recursion is solved in closed form per eigenvalue.
    """
    lam, Q = _eig(A)
    theta_star = np.asarray(theta_star, dtype=float)
    mu0 = Q.T @ (init.mean - theta_star)
    S0 = Q.T @ init.cov @ Q
    ks = _steps(n, every)
    target = 1.0 / lam
    if not force_general and _is_diag(S0):
        r = 1.0 - h * lam
        k = ks[:, None].astype(float)
        mu = r**k * mu0
        # c = r^2; sum_{j<k} c^j = (1 - c^k) / (1 - c), both via expm1 for accuracy
        log_c = 2.0 * np.log(np.abs(r))
        one_m_c = -np.expm1(log_c)
        ck = np.exp(k * log_c)
        safe = np.where(one_m_c == 0, 1.0, one_m_c)
        geo = np.where(one_m_c == 0, k, -np.expm1(k * log_c) / safe)
        var = ck * np.diag(S0) + 2.0 * h * geo
        w2 = _w2_diag(mu, var, target)
        final = GaussianLaw(theta_star + Q @ mu[-1], (Q * var[-1]) @ Q.T)
        return W2Trace(ks, w2, final_law=final)

    T = np.diag(1.0 - h * lam)
    mu, S = mu0.copy(), S0.copy()
    pi_law = GaussianLaw(np.zeros(lam.size), np.diag(target))
    out = []
    want = set(int(x) for x in ks)
    for k in range(n + 1):
        if k in want:
            out.append(w2_gaussian(GaussianLaw(mu, S), pi_law))
        if k < n:
            mu = T @ mu
            S = T @ S @ T.T + 2.0 * h * np.eye(lam.size)
    final = GaussianLaw(theta_star + Q @ mu, Q @ S @ Q.T)
    return W2Trace(ks, np.array(out), final_law=final)


def _klmc_blocks(lam, gamma, h):
    eta = gamma * h
    c = klmc_coeffs(eta)
    t11 = 1.0 - c.beta * eta**2 * lam / gamma
    t12 = np.full_like(lam, c.alpha * eta / gamma)
    t21 = -c.alpha * eta * lam
    t22 = np.full_like(lam, c.decay)
    var_v, cov, var_t = klmc_cov_entries(eta, gamma)
    return (t11, t12, t21, t22), (float(var_t), float(cov), float(var_v))


def klmc_gaussian_recursion(A, theta_star, gamma, h, init: Optional[GaussianLaw], n: int,
                            every: int = 1, force_general: bool = False) -> W2Trace:
    """Exact position-marginal W2 of KLMC on ``N(theta_star, A^{-1})``.

    ``init`` is the joint law of ``(theta, v)`` in ``R^{2p}`` (positions
    first); ``None`` means ``(delta_{theta*}, N(0, gamma I))``.  The final
    joint law is returned in ``W2Trace.final_law``.
    """
    lam, Q = _eig(A)
    p = lam.size
    theta_star = np.asarray(theta_star, dtype=float)
    if init is None:
        init = GaussianLaw(np.concatenate([theta_star, np.zeros(p)]),
                           np.diag(np.concatenate([np.zeros(p), np.full(p, float(gamma))])))
    if init.dim != 2 * p:
        raise ValueError(f"joint initial law must have dimension {2 * p}, got {init.dim}")
    Q2 = np.kron(np.eye(2), Q)
    mu0 = Q2.T @ (init.mean - np.concatenate([theta_star, np.zeros(p)]))
    S0 = Q2.T @ init.cov @ Q2
    (t11, t12, t21, t22), (n_tt, n_tv, n_vv) = _klmc_blocks(lam, gamma, h)
    ks = _steps(n, every)
    want = np.zeros(n + 1, dtype=bool)
    want[ks] = True
    target = 1.0 / lam

    block_ok = all(_is_diag(S0[i * p:(i + 1) * p, j * p:(j + 1) * p]) for i in range(2) for j in range(2))
    if not force_general and block_ok:
        mt, mv = mu0[:p].copy(), mu0[p:].copy()
        a = np.diag(S0[:p, :p]).copy()
        b = np.diag(S0[:p, p:]).copy()
        c = np.diag(S0[p:, p:]).copy()
        mus = np.empty((ks.size, p))
        vars_ = np.empty((ks.size, p))
        j = 0
        for k in range(n + 1):
            if want[k]:
                mus[j], vars_[j] = mt, a
                j += 1
            if k == n:
                break
            mt, mv = t11 * mt + t12 * mv, t21 * mt + t22 * mv
            a, b, c = (
                t11 * t11 * a + 2.0 * t11 * t12 * b + t12 * t12 * c + n_tt,
                t11 * t21 * a + (t11 * t22 + t12 * t21) * b + t12 * t22 * c + n_tv,
                t21 * t21 * a + 2.0 * t21 * t22 * b + t22 * t22 * c + n_vv,
            )
        w2 = _w2_diag(mus, vars_, target)
        mu_f = np.concatenate([mt, mv])
        S_f = np.block([[np.diag(a), np.diag(b)], [np.diag(b), np.diag(c)]])
    else:
        T = np.block([[np.diag(t11), np.diag(t12)], [np.diag(t21), np.diag(t22)]])
        N = np.kron(np.array([[n_tt, n_tv], [n_tv, n_vv]]), np.eye(p))
        mu, S = mu0.copy(), S0.copy()
        pi_law = GaussianLaw(np.zeros(p), np.diag(target))
        out = []
        for k in range(n + 1):
            if want[k]:
                out.append(w2_gaussian(GaussianLaw(mu[:p], S[:p, :p]), pi_law))
            if k < n:
                mu = T @ mu
                S = T @ S @ T.T + N
        w2 = np.array(out)
        mu_f, S_f = mu, S
    final = GaussianLaw(Q2 @ mu_f + np.concatenate([theta_star, np.zeros(p)]), Q2 @ S_f @ Q2.T)
    return W2Trace(ks, w2, final_law=final)


def _marginal_quantiles(target, p):
    if isinstance(target, GaussianLaw):
        if not target.is_diagonal():
            raise ValueError(
                "target is not a product measure; use w2_gaussian for Gaussian laws "
                "or moment_diagnostics for non-product targets"
            )
        mu, sd = target.mean, np.sqrt(np.diag(target.cov))
        return [lambda q, m=mu[i], s=sd[i]: m + s * norm.ppf(q) for i in range(p)]
    qs = list(target)
    if len(qs) != p:
        raise ValueError(f"expected {p} marginal quantile functions, got {len(qs)}")
    return qs


def empirical_w2_product(samples, target_marginals) -> float:
    """Sorted-sample W2 between a sample and a product target.

    Parameters
    ----------
    samples : array_like, shape (R, p)
    target_marginals : GaussianLaw with diagonal covariance, or a sequence of
        ``p`` vectorized quantile functions.

    Per coordinate the sorted sample is matched to the target quantiles at
    ``(i - 1/2) / R``; the squared differences are averaged and summed over
    coordinates.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    R, p = x.shape
    qfs = _marginal_quantiles(target_marginals, p)
    grid = (np.arange(1, R + 1) - 0.5) / R
    xs = np.sort(x, axis=0)
    total = 0.0
    for i, q in enumerate(qfs):
        total += float(np.mean((xs[:, i] - np.broadcast_to(q(grid), (R,))) ** 2))
    return float(np.sqrt(total))


def bootstrap_w2_product(samples, target_marginals, n_boot: int = 200, rng=None):
    """Nonparametric bootstrap of :func:`empirical_w2_product`.

    Returns ``(estimate, standard_error, replicates)``.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    est = empirical_w2_product(x, target_marginals)
    reps = np.empty(n_boot)
    for b in range(n_boot):
        idx = rng.integers(0, x.shape[0], size=x.shape[0])
        reps[b] = empirical_w2_product(x[idx], target_marginals)
    return est, float(np.std(reps, ddof=1)), reps


def moment_diagnostics(samples, pot=None):
    """Sample mean, unbiased covariance and (if ``pot`` is given) mean of ``f``."""
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    mean = x.mean(axis=0)
    if x.shape[0] > 1:
        cov = np.atleast_2d(np.cov(x, rowvar=False, ddof=1))
    else:
        cov = np.zeros((x.shape[1], x.shape[1]))
    ef = None if pot is None else float(np.mean(pot.value(x)) - pot.f_min)
    return mean, cov, ef
