"""Synchronous couplings between coarse kinetic steps and a fine reference.

The Brownian path on ``[0, h]`` is represented by its exact OU functionals on
each fine sub-interval: for an interval of length ``tau`` the pair

    (sqrt(2) gamma int e^{-gamma (tau - s)} dW_s,  sqrt(2) int (1 - e^{-gamma (tau - s)}) dW_s)

which is exactly the noise a KLMC step of length ``tau`` consumes.  Pairs of
adjacent intervals merge exactly through the drift-free flow, so any coarser
step (KLMC, or RKLMC with its midpoint) sees noise that is a deterministic
function of the same path.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from numpy.polynomial.legendre import leggauss

from .coeffs import _cholesky_small, klmc_cov_entries, klmc_noise_cov, one_minus_exp, sample_noise
from .potentials import GaussianPotential, PotentialSpec
from .rng import stream
from .samplers import ChainState, kinetic_transition, klmc_step, rklmc_step

__all__ = [
    "BrownianGrid",
    "free_flow",
    "reference_kinetic_path",
    "stationary_init",
    "OneStepRow",
    "OneStepReport",
    "one_step_error_report",
    "ContractionResult",
    "contraction_check",
]


def free_flow(z_v, z_t, gamma, tau):
    """Drift-free flow ``(V, P) -> (e^{-gamma tau} V, P + (1 - e^{-gamma tau}) V / gamma)``."""
    eta = np.asarray(gamma * tau, dtype=float)
    if eta.ndim:
        eta = eta[..., None]
    return np.exp(-eta) * z_v, z_t + one_minus_exp(eta) / gamma * z_v


@dataclass(frozen=True)
class BrownianGrid:
    """Exact OU noise pairs on ``substeps`` equal sub-intervals of ``[0, h]``.

    ``z_v`` and ``z_theta`` have shape ``(substeps,) + shape``.
    """

    gamma: float
    h: float
    z_v: np.ndarray
    z_theta: np.ndarray

    @property
    def substeps(self) -> int:
        return self.z_v.shape[0]

    @property
    def dt(self) -> float:
        return self.h / self.substeps

    @classmethod
    def sample(cls, gamma, h, substeps, shape, rng) -> "BrownianGrid":
        """Draw a grid for arrays of ``shape`` (typically ``(R, p)``)."""
        if substeps < 1:
            raise ValueError("substeps must be >= 1")
        shape = tuple(shape)
        cov = klmc_noise_cov(gamma * h / substeps, gamma)
        z_v, z_t = sample_noise(cov, shape[-1], rng, (substeps,) + shape[:-1])
        return cls(float(gamma), float(h), z_v, z_t)

    def coarsen(self) -> "BrownianGrid":
        """Merge adjacent sub-intervals; needs an even number of them."""
        if self.substeps % 2:
            raise ValueError(f"cannot halve {self.substeps} substeps")
        fv, ft = free_flow(self.z_v[0::2], self.z_theta[0::2], self.gamma, self.dt)
        return BrownianGrid(self.gamma, self.h, fv + self.z_v[1::2], ft + self.z_theta[1::2])

    def aggregate(self, upto: Optional[int] = None):
        """Noise pair of the single interval ``[0, upto * dt]`` (default: all of it)."""
        k = self.substeps if upto is None else int(upto)
        z_v = np.zeros(self.z_v.shape[1:])
        z_t = np.zeros_like(z_v)
        for j in range(k):
            z_v, z_t = free_flow(z_v, z_t, self.gamma, self.dt)
            z_v = z_v + self.z_v[j]
            z_t = z_t + self.z_theta[j]
        return z_v, z_t


def reference_kinetic_path(init: ChainState, pot: PotentialSpec, gamma: float, h: float,
                           substeps: int, shared_noise: BrownianGrid, every: int = 0):
    """Fine-grid solution of the kinetic SDE on ``[0, h]``.

    Applies the exact OU map with frozen gradient on each of the ``substeps``
    sub-intervals, consuming ``shared_noise``.  With ``every > 0`` the
    states at every ``every``-th grid point are also returned as arrays of
    shape ``(K, ...)``.
    """
    if init.v is None:
        raise ValueError("reference path needs a state with a velocity")
    g = shared_noise
    if g.substeps != substeps:
        raise ValueError(f"noise grid has {g.substeps} substeps, expected {substeps}")
    if not (np.isclose(g.h, h, rtol=1e-14, atol=0) and np.isclose(g.gamma, gamma, rtol=1e-14, atol=0)):
        raise ValueError("noise grid was built for a different (gamma, h)")
    theta = np.asarray(init.theta, dtype=float)
    v = np.asarray(init.v, dtype=float)
    dt = h / substeps
    path_t, path_v = [theta], [v]
    for j in range(substeps):
        theta, v = kinetic_transition(theta, v, pot.grad(theta), gamma, dt, g.z_v[j], g.z_theta[j])
        if every and (j + 1) % every == 0:
            path_t.append(theta)
            path_v.append(v)
    state = ChainState(theta, v, init.step_index + 1)
    if every:
        return state, np.stack(path_t), np.stack(path_v)
    return state


def stationary_init(pot: PotentialSpec, gamma: float) -> Callable:
    """Sampler ``(rng, size) -> ChainState`` of ``pi x N(0, gamma I)`` for Gaussians.

    Non-Gaussian potentials start at the minimizer with a stationary velocity.
    """

    def draw(rng, size):
        p = pot.dim
        if isinstance(pot, GaussianPotential):
            lam, Q = np.linalg.eigh(pot.precision)
            z = rng.standard_normal((size, p))
            theta = pot.mean + (z / np.sqrt(lam)) @ Q.T
        else:
            theta = np.broadcast_to(pot.minimizer, (size, p)).copy()
        v = np.sqrt(gamma) * rng.standard_normal((size, p))
        return ChainState(theta, v)

    return draw


@dataclass(frozen=True)
class OneStepRow:
    """A measured L2 error next to the closed-form bound it should respect."""

    name: str
    measured: float
    stderr: float
    bound: float
    valid: bool

    @property
    def ratio(self) -> float:
        return self.bound / self.measured if self.measured > 0 else np.inf

    @property
    def holds(self) -> bool:
        return self.measured <= self.bound


@dataclass
class OneStepReport:
    gamma: float
    h: float
    M: float
    p: int
    replicas: int
    substeps: int
    v_norm: float
    g_norm: float
    rows: list = field(default_factory=list)

    @property
    def eta(self) -> float:
        return self.gamma * self.h

    def row(self, name) -> OneStepRow:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    def as_dicts(self):
        return [
            dict(name=r.name, measured=r.measured, stderr=r.stderr, bound=r.bound,
                 ratio=r.ratio, valid=r.valid, holds=r.holds)
            for r in self.rows
        ]


class _SqAcc:
    """Running sum of per-replica squared norms (for L2 norms and their SE)."""

    def __init__(self):
        self.s1 = 0.0
        self.s2 = 0.0
        self.n = 0

    def add(self, diff):
        sq = np.sum(diff * diff, axis=-1)
        self.s1 += float(sq.sum())
        self.s2 += float((sq * sq).sum())
        self.n += sq.size

    def norm(self):
        return np.sqrt(self.s1 / self.n)

    def stderr(self):
        mean = self.s1 / self.n
        var = max(self.s2 / self.n - mean * mean, 0.0)
        if mean <= 0:
            return 0.0
        return 0.5 * np.sqrt(var / self.n) / np.sqrt(mean)


def _bounds(M, gamma, h, p, v, g):
    """Closed-form one-step bounds; ``v`` and ``g`` are L2 norms at the start."""
    eta = gamma * h
    Mg = M / gamma
    ex = np.exp(Mg * eta**2 / 2)
    sq = np.sqrt(eta * gamma * p)
    core = 0.065 * eta * g + v / 6 + np.sqrt(eta * gamma * p / 54)
    general = gamma >= M
    tight = gamma >= 2 * M and eta <= 0.2
    return {
        "klmc_v": ((2 * sq + 3 * v + eta * g) / 6 * Mg * eta**2 * ex, True),
        "klmc_theta": ((0.6 * sq + v + 0.25 * eta * g) / 6 * Mg * eta**3 * ex, True),
        "midpoint": (Mg * eta**3 * ex * core / gamma, True),
        "cond_theta_bar": (Mg**2 * eta**5 * ex / np.sqrt(3) * core, general),
        "cond_theta_dev": (
            Mg * eta**3 * (0.26 * v + 0.106 * sq) + eta**2 / np.sqrt(3) * (0.12 * Mg * eta**2 + 1) * g,
            general,
        ),
        "cond_v_bar": (Mg**2 * eta**4 * ex * core, general),
        "cond_v_dev": (
            Mg * eta**2 * (0.82 * v + 0.41 * sq) + eta**2 / np.sqrt(3) * (0.55 * Mg * eta + 1) * g,
            general,
        ),
        "tight_theta_bar": (Mg**2 * eta**5 * (0.038 * eta * g + 0.098 * v + 0.084 * sq), tight),
        "tight_theta_dev": (eta**2 * (0.578 * g + 0.02 * v + 0.005 * sq), tight),
        "tight_v_bar": (Mg**2 * eta**4 * (0.066 * eta * g + 0.168 * v + 0.137 * sq), tight),
        "tight_v_dev": (eta**2 * (0.591 * g + 0.164 * v + 0.082 * sq), tight),
    }


# measured quantity feeding each bound
_MEASURE = {
    "klmc_v": "klmc_v",
    "klmc_theta": "klmc_theta",
    "midpoint": "midpoint",
    "cond_theta_bar": "theta_bar",
    "cond_theta_dev": "theta_dev",
    "cond_v_bar": "v_bar",
    "cond_v_dev": "v_dev",
    "tight_theta_bar": "theta_bar",
    "tight_theta_dev": "theta_dev",
    "tight_v_bar": "v_bar",
    "tight_v_dev": "v_dev",
}


def _sweep_chunk(pot, gamma, h, substeps, state, u_rep, nodes, rng, richardson):
    """Generate the shared path for one chunk and return everything measured on it."""
    R, p = state.theta.shape
    S = substeps
    dt = h / S
    n_nodes = len(nodes)
    # event times: S uniform points, the quadrature nodes and the replica's U
    times = np.concatenate(
        [np.broadcast_to(dt * np.arange(1, S + 1), (R, S)),
         np.broadcast_to(h * nodes, (R, n_nodes)),
         (h * u_rep)[:, None]],
        axis=1,
    )
    times[:, S - 1] = h
    order = np.argsort(times, axis=1, kind="stable")
    t_sorted = np.take_along_axis(times, order, axis=1)
    lengths = np.diff(t_sorted, axis=1, prepend=0.0)
    lengths = np.clip(lengths, 0.0, None)

    xv = np.zeros((R, p))
    xp = np.zeros((R, p))
    last_v = {1: xv.copy(), 2: xv.copy()}
    last_p = {1: xp.copy(), 2: xp.copy()}
    uni_count = np.zeros(R, dtype=int)
    th_u, v_u = state.theta.copy(), state.v.copy()
    refs = {1: (state.theta.copy(), state.v.copy())}
    if richardson:
        refs[2] = (state.theta.copy(), state.v.copy())
    zeta1_nodes = np.empty((n_nodes, R, p))
    zeta1_u = np.empty((R, p))
    mid_ref = np.empty((R, p))

    for j in range(order.shape[1]):
        lab = order[:, j]
        tau = lengths[:, j]
        var_v, cov, var_t = klmc_cov_entries(gamma * tau, gamma)
        ent = np.stack([np.stack([var_v, cov], -1), np.stack([cov, var_t], -1)], -2)
        chol, _ = _cholesky_small(ent)
        z = rng.standard_normal((2, R, p))
        pv = chol[:, 0, 0, None] * z[0]
        pt = chol[:, 1, 0, None] * z[0] + chol[:, 1, 1, None] * z[1]
        # union-grid reference, used for the midpoint
        th_u, v_u = kinetic_transition(th_u, v_u, pot.grad(th_u), gamma, tau, pv, pt)
        fv, fp = free_flow(xv, xp, gamma, tau)
        xv, xp = fv + pv, fp + pt

        is_uni = lab < S
        if np.any(is_uni):
            uni_count = uni_count + is_uni
            for stride in refs:
                hit = is_uni & (uni_count % stride == 0)
                if not np.any(hit):
                    continue
                lv, lp = free_flow(last_v[stride], last_p[stride], gamma, stride * dt)
                zv, zp = xv - lv, xp - lp
                th, vv = refs[stride]
                th_new, v_new = kinetic_transition(th, vv, pot.grad(th), gamma, stride * dt, zv, zp)
                m = hit[:, None]
                refs[stride] = (np.where(m, th_new, th), np.where(m, v_new, vv))
                last_v[stride] = np.where(m, xv, last_v[stride])
                last_p[stride] = np.where(m, xp, last_p[stride])
        is_node = (lab >= S) & (lab < S + n_nodes)
        if np.any(is_node):
            idx = np.nonzero(is_node)[0]
            zeta1_nodes[lab[idx] - S, idx] = xp[idx]
        is_u = lab == S + n_nodes
        if np.any(is_u):
            zeta1_u[is_u] = xp[is_u]
            mid_ref[is_u] = th_u[is_u]

    if richardson:
        ref_t = 2.0 * refs[1][0] - refs[2][0]
        ref_v = 2.0 * refs[1][1] - refs[2][1]
    else:
        ref_t, ref_v = refs[1]
    return dict(zeta_v=xv, zeta_t=xp, zeta1_u=zeta1_u, zeta1_nodes=zeta1_nodes,
                mid_ref=mid_ref, ref_t=ref_t, ref_v=ref_v)


def one_step_error_report(pot: PotentialSpec, gamma: float, h: float, replicas: int = 10_000,
                          substeps: int = 512, state_dist: Optional[Callable] = None,
                          seed: int = 0, n_nodes: int = 64, chunk: int = 2500,
                          richardson: bool = True) -> OneStepReport:
    """Measure one-step L2 errors of KLMC and RKLMC against the exact solution.

    A shared Brownian path on ``[0, h]`` drives a coarse KLMC step, a coarse
    RKLMC step, and a fine reference of the kinetic SDE with ``substeps``
    sub-intervals.  With ``richardson`` the reference at time ``h`` is
    ``2 R_S - R_{S/2}``, which removes the O(1/S) bias of the frozen-gradient
    fine integrator (this matters for the O(eta^4) conditional-mean errors).
    Conditional means over ``U`` use ``n_nodes``-point Gauss-Legendre
    quadrature on the same path.

    Returns
    -------
    OneStepReport
        Rows named ``klmc_v``, ``klmc_theta``, ``midpoint``, ``cond_*`` (valid for gamma >= M) and
        ``tight_*`` (gamma >= 2M, eta <= 0.2); each carries the measured L2 norm, its standard error,
        the bound and a validity flag for the bound's preconditions.
    """
    if replicas < 1000:
        raise ValueError(f"need at least 1000 replicas, got {replicas}")
    if richardson and substeps % 2:
        raise ValueError("Richardson reference needs an even number of substeps")
    state_dist = state_dist or stationary_init(pot, gamma)
    x, w = leggauss(n_nodes)
    nodes, weights = 0.5 * (x + 1.0), 0.5 * w
    rng = stream(seed, 7)
    acc = {k: _SqAcc() for k in ("klmc_v", "klmc_theta", "midpoint", "theta_bar", "theta_dev",
                                  "v_bar", "v_dev", "v0", "g0")}
    for start in range(0, replicas, chunk):
        size = min(chunk, replicas - start)
        st = state_dist(rng, size)
        st = ChainState(np.asarray(st.theta, float), np.asarray(st.v, float))
        u_rep = 1.0 - rng.uniform(size=size)
        sw = _sweep_chunk(pot, gamma, h, substeps, st, u_rep, nodes, rng, richardson)
        acc["v0"].add(st.v)
        acc["g0"].add(pot.grad(st.theta))

        k1 = klmc_step(st, pot, gamma, h, noise=(sw["zeta_v"], sw["zeta_t"]))
        acc["klmc_v"].add(k1.v - sw["ref_v"])
        acc["klmc_theta"].add(gamma * (k1.theta - sw["ref_t"]))

        r1, wit = rklmc_step(st, pot, gamma, h, u=u_rep,
                             noise=(sw["zeta1_u"], sw["zeta_t"], sw["zeta_v"]))
        acc["midpoint"].add(wit.midpoint - sw["mid_ref"])
        th_bar = np.zeros_like(st.theta)
        v_bar = np.zeros_like(st.v)
        for i, (ui, wi) in enumerate(zip(nodes, weights)):
            ri, _ = rklmc_step(st, pot, gamma, h, u=ui,
                               noise=(sw["zeta1_nodes"][i], sw["zeta_t"], sw["zeta_v"]))
            th_bar += wi * ri.theta
            v_bar += wi * ri.v
        acc["theta_bar"].add(gamma * (th_bar - sw["ref_t"]))
        acc["theta_dev"].add(gamma * (r1.theta - th_bar))
        acc["v_bar"].add(v_bar - sw["ref_v"])
        acc["v_dev"].add(r1.v - v_bar)

    vn, gn = acc["v0"].norm(), acc["g0"].norm()
    rep = OneStepReport(gamma, h, pot.M, pot.dim, replicas, substeps, vn, gn)
    for name, (bound, valid) in _bounds(pot.M, gamma, h, pot.dim, vn, gn).items():
        a = acc[_MEASURE[name]]
        rep.rows.append(OneStepRow(name, float(a.norm()), float(a.stderr()), float(bound), bool(valid)))
    return rep


@dataclass(frozen=True)
class ContractionResult:
    """Coupled C-norm ratios ``|C dZ_t| / |C dZ_0|`` on a time grid."""

    times: np.ndarray
    ratio_l2: np.ndarray
    ratio_max: np.ndarray
    rate: float

    def envelope(self, slack=0.0):
        return np.exp(-self.rate * self.times) * (1.0 + slack)


def _c_norm(dv, dl, gamma):
    # C = [[I, 0], [I, gamma I]] applied to (dV, dL)
    return np.sqrt(np.sum(dv**2, -1) + np.sum((dv + gamma * dl) ** 2, -1))


def contraction_check(pot: PotentialSpec, gamma: float, t_end: float = 1.0, substeps: int = 1000,
                      replicas: int = 1000, seed: int = 0, record_every: int = 10) -> ContractionResult:
    """Drive two kinetic paths with one Brownian path and track their C-norm gap.

    The two starting points are independent draws of ``stationary_init``.
    """
    rng = stream(seed, 11)
    draw = stationary_init(pot, gamma)
    a, b = draw(rng, replicas), draw(rng, replicas)
    grid = BrownianGrid.sample(gamma, t_end, substeps, (replicas, pot.dim), rng)
    _, ta, va = reference_kinetic_path(a, pot, gamma, t_end, substeps, grid, every=record_every)
    _, tb, vb = reference_kinetic_path(b, pot, gamma, t_end, substeps, grid, every=record_every)
    norms = _c_norm(va - vb, ta - tb, gamma)
    ratio_rep = norms / norms[0]
    ratio_l2 = np.sqrt(np.mean(norms**2, axis=1) / np.mean(norms[0] ** 2))
    times = t_end / substeps * record_every * np.arange(norms.shape[0])
    rate = min(pot.m, gamma - pot.M)
    return ContractionResult(times, ratio_l2, ratio_rep.max(axis=1), float(rate))
