"""Transition kernels of LMC, RLMC, KLMC and RKLMC, and a replica runner.

Kernels act on a :class:`ChainState` whose arrays have shape ``(..., p)``;
leading axes index independent replicas and are processed in one vectorized
call.  The kinetic kernels use the parameterization

    dL = V dt,    dV = -gamma V dt - gamma grad f(L) dt + sqrt(2) gamma dW,

whose stationary velocity law is ``N(0, gamma I)``.

Every kernel accepts an optional ``noise`` argument holding the additive
Gaussian terms exactly as they enter the update (physical units).  It is the
hook used for synchronous couplings and for deterministic tests.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum
from functools import lru_cache
from typing import Callable, Optional, Union

import numpy as np

from .coeffs import klmc_coeffs, klmc_noise_cov, one_minus_exp, phi2, rklmc_noise_cov, sample_noise
from .potentials import PotentialSpec
from .rng import stream

__all__ = [
    "Kind",
    "ChainState",
    "KernelConfig",
    "StepWitness",
    "RecordPolicy",
    "ChainRun",
    "lmc_step",
    "rlmc_step",
    "klmc_step",
    "rklmc_step",
    "kinetic_transition",
    "step",
    "run_chain",
    "default_threads",
    "THREADS_ENV",
]

#: Environment variable holding the default worker-thread count.
THREADS_ENV = "LANGEVIN_MC_THREADS"


class Kind(str, Enum):
    LMC = "lmc"
    RLMC = "rlmc"
    KLMC = "klmc"
    RKLMC = "rklmc"

    @property
    def kinetic(self) -> bool:
        return self in (Kind.KLMC, Kind.RKLMC)

    @classmethod
    def parse(cls, value) -> "Kind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(
                f"unknown algorithm {value!r}; expected one of {[k.value for k in cls]}"
            ) from None


@dataclass(frozen=True)
class ChainState:
    """Position (and velocity for kinetic chains) after ``step_index`` steps."""

    theta: np.ndarray
    v: Optional[np.ndarray] = None
    step_index: int = 0

    def __post_init__(self):
        if self.v is not None and np.shape(self.v) != np.shape(self.theta):
            raise ValueError(
                f"theta and v shapes differ: {np.shape(self.theta)} vs {np.shape(self.v)}"
            )

    @property
    def dim(self) -> int:
        return int(np.shape(self.theta)[-1])


@dataclass(frozen=True)
class KernelConfig:
    """Algorithm kind, step size ``h`` and friction ``gamma``."""

    kind: Kind
    h: float
    gamma: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind.parse(self.kind))
        if not (np.isfinite(self.h) and self.h > 0):
            raise ValueError(f"step size h must be finite and > 0, got {self.h}")
        if self.kind.kinetic:
            if self.gamma is None or not (self.gamma > 0 and np.isfinite(self.gamma * self.h)):
                raise ValueError(f"{self.kind.value} needs a finite friction gamma > 0")

    @property
    def eta(self) -> Optional[float]:
        return None if self.gamma is None else self.gamma * self.h


@dataclass(frozen=True)
class StepWitness:
    """Randomness consumed by one randomized-midpoint step."""

    u: object
    noises: tuple
    midpoint: Optional[np.ndarray] = None


def _batch_shape(theta):
    return np.shape(theta)[:-1]


def _need_velocity(state, name):
    if state.v is None:
        raise ValueError(f"{name} needs a state with a velocity")


def lmc_step(state: ChainState, pot: PotentialSpec, h: float, rng=None, noise=None) -> ChainState:
    """``theta' = theta - h grad f(theta) + sqrt(2h) xi``."""
    theta = np.asarray(state.theta, dtype=float)
    if noise is None:
        noise = np.sqrt(2.0 * h) * rng.standard_normal(theta.shape)
    out = theta - h * pot.grad(theta) + noise
    return ChainState(out, None, state.step_index + 1)


def rlmc_step(state: ChainState, pot: PotentialSpec, h: float, rng=None, u=None, noise=None):
    """Randomized-midpoint LMC step.

    ``noise``, if given, is the pair ``(midpoint noise, full-step noise)``,
    that is ``(sqrt(2hU) xi', sqrt(2h) xi)``.  ``u`` may be a scalar or have
    the batch shape of ``state.theta``.

    Returns
    -------
    (ChainState, StepWitness)
    """
    theta = np.asarray(state.theta, dtype=float)
    batch = _batch_shape(theta)
    if u is None:
        u = rng.uniform(size=batch) if batch else float(rng.uniform())
    u = np.asarray(u, dtype=float)
    uu = u[..., None]
    if noise is None:
        z = rng.standard_normal((2,) + theta.shape)
        n_mid = np.sqrt(2.0 * h * uu) * z[0]
        n_full = np.sqrt(2.0 * h) * (np.sqrt(uu) * z[0] + np.sqrt(1.0 - uu) * z[1])
    else:
        n_mid, n_full = noise
    mid = theta - h * uu * pot.grad(theta) + n_mid
    out = theta - h * pot.grad(mid) + n_full
    wit = StepWitness(u[()] if u.ndim == 0 else u, (n_mid, n_full), mid)
    return ChainState(out, None, state.step_index + 1), wit


@lru_cache(maxsize=256)
def _klmc_cov_cached(eta: float, gamma: float):
    return klmc_noise_cov(eta, gamma)


def kinetic_transition(theta, v, g, gamma, dt, z_v, z_theta):
    """Exact kinetic flow over ``dt`` with the gradient frozen at ``g``.

    ``dt`` may be an array broadcasting against the batch shape (a trailing
    axis is added for the coordinates).  ``(z_v, z_theta)`` is the OU noise
    pair accumulated over the interval.
    """
    eta = np.asarray(gamma * dt, dtype=float)
    if eta.ndim:
        eta = eta[..., None]
    decay = np.exp(-eta)
    e1 = one_minus_exp(eta)
    v_new = decay * v - e1 * g + z_v
    theta_new = theta + (e1 * v - phi2(eta) * g) / gamma + z_theta
    return theta_new, v_new


def klmc_step(state: ChainState, pot: PotentialSpec, gamma: float, h: float, rng=None,
              noise=None) -> ChainState:
    """KLMC step: exact OU flow with the gradient frozen at ``theta``.

    ``v' = (1 - alpha eta) v - alpha eta grad f + zeta_v`` and
    ``theta' = theta + (eta / gamma)(alpha v - beta eta grad f) + zeta_theta``
    with the correlated pair drawn from :func:`klmc_noise_cov`.  ``noise``
    is the pair ``(zeta_v, zeta_theta)``.
    """
    _need_velocity(state, "klmc_step")
    theta = np.asarray(state.theta, dtype=float)
    v = np.asarray(state.v, dtype=float)
    eta = gamma * h
    c = klmc_coeffs(eta)
    if noise is None:
        cov = _klmc_cov_cached(float(eta), float(gamma))
        noise = sample_noise(cov, theta.shape[-1], rng, _batch_shape(theta))
    z_v, z_t = noise
    g = pot.grad(theta)
    v_new = c.decay * v - c.alpha * eta * g + z_v
    theta_new = theta + (eta / gamma) * (c.alpha * v - c.beta * eta * g) + z_t
    return ChainState(theta_new, v_new, state.step_index + 1)


def rklmc_step(state: ChainState, pot: PotentialSpec, gamma: float, h: float, rng=None, u=None,
               noise=None):
    """Randomized-midpoint KLMC step.

    With ``U`` uniform on ``(0, 1]`` and ``(zeta_1, zeta_2, zeta_3)`` drawn from
    ``rklmc_noise_cov(eta, gamma, U)``::

        mid    = theta + (1 - e^{-U eta}) v / gamma - U h (1 - psi(U eta)) g(theta) + zeta_1
        theta' = theta + h psi(eta) v - h (1 - e^{-eta (1 - U)}) g(mid) + zeta_2
        v'     = e^{-eta} v - gamma h e^{-eta (1 - U)} g(mid) + zeta_3

    ``noise`` is the triple ``(zeta_1, zeta_2, zeta_3)``.  When it is given,
    ``u = 0`` is allowed.

    Returns
    -------
    (ChainState, StepWitness)
    """
    _need_velocity(state, "rklmc_step")
    theta = np.asarray(state.theta, dtype=float)
    v = np.asarray(state.v, dtype=float)
    batch = _batch_shape(theta)
    eta = gamma * h
    if u is None:
        # 1 - Uniform[0, 1) lies in (0, 1]
        u = 1.0 - (rng.uniform(size=batch) if batch else float(rng.uniform()))
    u = np.asarray(u, dtype=float)
    if noise is None:
        cov = rklmc_noise_cov(eta, gamma, u)
        noise = sample_noise(cov, theta.shape[-1], rng, batch)
    z1, z2, z3 = noise
    a = (u * eta)[..., None]
    b = ((1.0 - u) * eta)[..., None]
    g0 = pot.grad(theta)
    # U h (1 - psi(U eta)) = phi2(U eta) / gamma
    mid = theta + (one_minus_exp(a) * v - phi2(a) * g0) / gamma + z1
    g1 = pot.grad(mid)
    theta_new = theta + one_minus_exp(eta) / gamma * v - h * one_minus_exp(b) * g1 + z2
    v_new = np.exp(-eta) * v - gamma * h * np.exp(-b) * g1 + z3
    wit = StepWitness(u[()] if u.ndim == 0 else u, tuple(noise), mid)
    return ChainState(theta_new, v_new, state.step_index + 1), wit


def step(kernel: KernelConfig, state: ChainState, pot: PotentialSpec, rng):
    """Apply one step of ``kernel``; returns ``(state, witness or None)``."""
    k = kernel.kind
    if k is Kind.LMC:
        return lmc_step(state, pot, kernel.h, rng), None
    if k is Kind.RLMC:
        return rlmc_step(state, pot, kernel.h, rng)
    if k is Kind.KLMC:
        return klmc_step(state, pot, kernel.gamma, kernel.h, rng), None
    return rklmc_step(state, pot, kernel.gamma, kernel.h, rng)


@dataclass(frozen=True)
class RecordPolicy:
    """What :func:`run_chain` keeps.

    ``kind`` is one of ``"final"``, ``"every"``, ``"full"`` and
    ``"witnesses"``; ``every`` is the stride for ``"every"``.
    """

    kind: str = "final"
    every: int = 1

    @classmethod
    def parse(cls, value) -> "RecordPolicy":
        if isinstance(value, cls):
            return value
        if value is None:
            return cls()
        if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
            if value < 1:
                raise ValueError("record stride must be >= 1")
            return cls("every", int(value))
        s = str(value).lower()
        if s.startswith("every"):
            _, _, k = s.partition(":")
            return cls.parse(int(k or 1))
        if s in ("final", "full", "witnesses"):
            return cls(s, 1)
        raise ValueError(f"unknown record policy {value!r}")

    def keeps(self, n: int) -> bool:
        if self.kind == "final":
            return False
        if self.kind == "every":
            return n % self.every == 0
        return True


@dataclass
class ChainRun:
    """Output of :func:`run_chain`.

    ``thetas`` / ``vs`` have shape ``(K, R, p)`` for the recorded step indices
    ``steps``; ``witnesses`` is a list with one batched :class:`StepWitness`
    per step (``"witnesses"`` policy only).
    """

    final: ChainState
    steps: np.ndarray
    thetas: Optional[np.ndarray] = None
    vs: Optional[np.ndarray] = None
    witnesses: Optional[list] = None


def default_threads() -> int:
    """Thread count from ``$LANGEVIN_MC_THREADS``, else 1."""
    raw = os.environ.get(THREADS_ENV, "").strip()
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    return max(1, n)


InitLike = Union[None, ChainState, Callable]


def _initial_block(kernel, pot, init, size, rng):
    p = pot.dim
    if callable(init):
        st = init(rng, size)
    elif init is None:
        st = ChainState(np.broadcast_to(pot.minimizer, (size, p)).copy())
    else:
        st = init
    theta = np.asarray(st.theta, dtype=float)
    if theta.shape[-1] != p:
        raise ValueError(f"initial state has dimension {theta.shape[-1]}, potential has {p}")
    theta = np.broadcast_to(theta, (size, p)).copy()
    v = None
    if kernel.kind.kinetic:
        if st.v is None:
            v = np.sqrt(kernel.gamma) * rng.standard_normal((size, p))
        else:
            v = np.broadcast_to(np.asarray(st.v, dtype=float), (size, p)).copy()
    return ChainState(theta, v, 0)


def _run_block(kernel, pot, init, n, policy, size, rng):
    state = _initial_block(kernel, pot, init, size, rng)
    steps, thetas, vs, wits = [], [], [], []

    def keep(st):
        steps.append(st.step_index)
        thetas.append(st.theta)
        if st.v is not None:
            vs.append(st.v)

    if policy.keeps(0):
        keep(state)
    for k in range(1, n + 1):
        state, wit = step(kernel, state, pot, rng)
        if policy.kind == "witnesses":
            wits.append(wit)
        if policy.keeps(k):
            keep(state)
    return state, steps, thetas, vs, wits


def _cat_witnesses(per_block):
    out = []
    for ws in zip(*per_block):
        if ws[0] is None:
            out.append(None)
            continue
        noises = tuple(np.concatenate(parts, axis=0) for parts in zip(*(w.noises for w in ws)))
        out.append(
            StepWitness(
                np.concatenate([np.atleast_1d(w.u) for w in ws]),
                noises,
                np.concatenate([w.midpoint for w in ws], axis=0),
            )
        )
    return out


def run_chain(kernel: KernelConfig, pot: PotentialSpec, n: int, replicas: int = 1,
              init: InitLike = None, record="final", seed: int = 0,
              threads: Optional[int] = None, block_size: int = 1024) -> ChainRun:
    """Run ``replicas`` independent chains for ``n`` steps.

    Replicas are split into blocks of ``block_size``; block ``b`` draws from
    the Philox stream keyed by ``(seed, b)``.  The output therefore depends
    on ``(seed, block_size)`` but not on ``threads``.

    Parameters
    ----------
    init : None, ChainState or callable
        ``None`` starts at the minimizer.  A callable is invoked as
        ``init(rng, size)`` per block and must return a ChainState.  For
        kinetic kernels a missing velocity is drawn from ``N(0, gamma I)``.
    record : str, int or RecordPolicy
        ``"final"``, ``"full"``, ``"witnesses"``, or an integer stride.
    """
    if n < 0:
        raise ValueError(f"number of steps must be >= 0, got {n}")
    if replicas < 1:
        raise ValueError(f"replicas must be >= 1, got {replicas}")
    if isinstance(init, ChainState) and np.ndim(init.theta) > 1 and np.shape(init.theta)[0] != replicas:
        raise ValueError("batched initial state must have one row per replica")
    policy = RecordPolicy.parse(record)
    threads = default_threads() if threads is None else max(1, int(threads))
    sizes = [min(block_size, replicas - s) for s in range(0, replicas, block_size)]
    starts = np.cumsum([0] + sizes[:-1])

    def work(b):
        blk_init = init
        if isinstance(init, ChainState) and np.ndim(init.theta) > 1:
            sl = slice(starts[b], starts[b] + sizes[b])
            blk_init = replace(init, theta=init.theta[sl],
                               v=None if init.v is None else init.v[sl])
        return _run_block(kernel, pot, blk_init, n, policy, sizes[b], stream(seed, b))

    if threads == 1 or len(sizes) == 1:
        results = [work(b) for b in range(len(sizes))]
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(work, range(len(sizes))))

    theta = np.concatenate([r[0].theta for r in results], axis=0)
    v = None if results[0][0].v is None else np.concatenate([r[0].v for r in results], axis=0)
    final = ChainState(theta, v, n)
    steps = np.asarray(results[0][1], dtype=int)
    thetas = vs = None
    if len(steps):
        thetas = np.concatenate([np.stack(r[2]) for r in results], axis=1)
        if v is not None:
            vs = np.concatenate([np.stack(r[3]) for r in results], axis=1)
    wits = _cat_witnesses([r[4] for r in results]) if policy.kind == "witnesses" else None
    return ChainRun(final, steps, thetas, vs, wits)
