"""Metropolis sampling of |psi(x)|^2 with single-spin-flip proposals.

Each proposal picks a site uniformly at random, so one sweep (N proposals)
is a power of a reversible kernel.  Random numbers come from the chain's own
``numpy.random.Generator``; the numba kernels only consume pre-drawn arrays,
which keeps every chain reproducible from its seed.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .ansatz import Ansatz


@dataclass
class SamplerConfig:
    n_samples: int = 2000
    sweeps_between_samples: int = 1
    thermalization_sweeps: int = 100
    rethermalization_sweeps: int = 10
    exact: bool = False          # enumerate all 2^N configurations instead

    def __post_init__(self):
        if self.n_samples < 0 or self.sweeps_between_samples < 1:
            raise ValueError("n_samples must be >= 0 and sweeps_between_samples >= 1")
        if self.thermalization_sweeps < 0 or self.rethermalization_sweeps < 0:
            raise ValueError("thermalization sweeps must be >= 0")


@dataclass
class SampleSet:
    """Configurations with probability weights summing to one.

    Monte Carlo sets carry uniform weights; exact sets carry |psi|^2/Z over
    the full basis and report zero statistical error.
    """

    x: np.ndarray
    weights: np.ndarray
    exact: bool = False

    def __len__(self):
        return self.x.shape[0]

    @classmethod
    def uniform(cls, x: np.ndarray) -> "SampleSet":
        n = x.shape[0]
        return cls(x, np.full(n, 1.0 / n) if n else np.zeros(0))


@dataclass
class ChainState:
    spins: np.ndarray
    cache: np.ndarray
    rng: np.random.Generator
    thermalized: bool = False
    accepted: int = 0
    proposed: int = 0
    theta: np.ndarray | None = field(default=None, repr=False)

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.proposed if self.proposed else float("nan")


def new_chain(ansatz: Ansatz, theta, rng: np.random.Generator) -> ChainState:
    spins = rng.choice(np.array([-1.0, 1.0]), size=ansatz.N)
    return ChainState(spins, ansatz.chain_cache(theta, spins), rng, theta=np.array(theta))


def resync(ansatz: Ansatz, theta, chain: ChainState) -> None:
    """Recompute the chain cache for (possibly new) parameters."""
    chain.cache = ansatz.chain_cache(theta, chain.spins)
    chain.theta = np.array(theta)


def _run(ansatz, theta, chain, n_sweeps, stride_sweeps=0, out=None):
    N = ansatz.N
    n_prop = n_sweeps * N
    if n_prop == 0:
        return 0
    sites = chain.rng.integers(0, N, size=n_prop)
    log_u = np.log(chain.rng.random(n_prop))
    if out is None:
        out = np.empty((0, N))
    acc = ansatz.metropolis(theta, chain.spins, chain.cache, sites, log_u,
                            stride_sweeps * N, out)
    chain.accepted += acc
    chain.proposed += n_prop
    return acc


def metropolis_sweep(ansatz: Ansatz, theta, chain: ChainState, n_sweeps: int = 1) -> int:
    """Run ``n_sweeps`` sweeps in place; returns the number of accepted flips."""
    if chain.theta is None or not np.array_equal(chain.theta, theta):
        resync(ansatz, theta, chain)
    return _run(ansatz, theta, chain, n_sweeps)


def draw_samples(ansatz: Ansatz, theta, config: SamplerConfig,
                 chain: ChainState | None = None) -> SampleSet:
    """Samples from |psi_theta|^2, warm-started from ``chain``.

    A fresh chain is thermalised for ``thermalization_sweeps``; a warm chain
    gets ``rethermalization_sweeps`` after its cache is resynced to ``theta``.
    """
    if config.exact:
        return exact_samples(ansatz, theta)
    if chain is None:
        raise ValueError("Monte Carlo sampling needs a chain")
    resync(ansatz, theta, chain)
    therm = config.rethermalization_sweeps if chain.thermalized else config.thermalization_sweeps
    _run(ansatz, theta, chain, therm)
    chain.thermalized = True
    n = config.n_samples
    out = np.empty((n, ansatz.N))
    _run(ansatz, theta, chain, n * config.sweeps_between_samples,
         config.sweeps_between_samples, out)
    return SampleSet.uniform(out)


def all_configurations(N: int) -> np.ndarray:
    """All 2^N configurations; row index bit ``N-1-i`` set means spin i down.

    Row 0 is all spins up, matching the dense-state ordering in :mod:`otvmc.oracle`.
    """
    return np.array(list(itertools.product([1.0, -1.0], repeat=N))).reshape(2 ** N, N)


def exact_samples(ansatz: Ansatz, theta) -> SampleSet:
    x = all_configurations(ansatz.N)
    logp = 2.0 * ansatz.log_amplitude(theta, x).real
    p = np.exp(logp - logp.max())
    return SampleSet(x, p / p.sum(), exact=True)
