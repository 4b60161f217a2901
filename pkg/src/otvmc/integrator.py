"""Stratonovich predictor-corrector stepping of variational trajectories.

A step draws one Wiener increment per channel and reuses it for predictor
and corrector.  The predictor is Euler-Maruyama::

    X_bar = X + A(X) dt + B(X) dW

and the corrector is either the midpoint rule, ``X + A(X_mid) dt + B(X_mid) dW``
with ``X_mid = (X + X_bar)/2``, or the trapezoidal rule, averaging the
increments at ``X`` and ``X_bar``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .ansatz import Ansatz
from .engine import (DegenerateTensorError, RegularizationConfig, StepEstimates,
                     assemble_rhs, estimate_step, rhs_terms, snr_solve)
from .model import ModelSpec
from .sampler import ChainState, SamplerConfig, SampleSet, draw_samples, new_chain

SCHEMES = ("midpoint", "trapezoidal")


def wiener_increments(rng: np.random.Generator, n_channels: int, dt: float) -> np.ndarray:
    """Independent N(0, dt) increments, one per channel."""
    return rng.normal(0.0, np.sqrt(dt), size=n_channels)


def predictor_corrector(increment: Callable, x, scheme: str = "midpoint", passes: int = 1):
    """One predictor-corrector step for ``dX = A dt + B o dW`` with ``dW`` frozen.

    ``increment(x)`` returns ``(A(x) dt + B(x) dW, aux)``.  Returns the new
    state, the list of ``(x_eval, dx, aux)`` corrector evaluations whose
    average gives the applied increment (one entry for midpoint, two for
    trapezoidal), and the predictor's ``aux``.

    ``passes > 1`` repeats the corrector with the latest estimate of
    ``X_{i+1}``, approaching the implicit rule.
    """
    dx0, aux0 = increment(x)
    x_new = x + dx0
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    for _ in range(passes):
        if scheme == "midpoint":
            x_mid = 0.5 * (x + x_new)
            dx1, aux1 = increment(x_mid)
            x_new, evals = x + dx1, [(x_mid, dx1, aux1)]
        else:
            dx1, aux1 = increment(x_new)
            x_eval = x_new
            x_new, evals = x + 0.5 * (dx0 + dx1), [(x, dx0, aux0), (x_eval, dx1, aux1)]
    return x_new, evals, aux0


def integrate_sde(drift: Callable, diffusion: Callable, x0, dt: float, dW: np.ndarray,
                  scheme: str = "midpoint"):
    """Integrate a Stratonovich SDE along a prescribed Wiener path.

    ``dW`` has shape ``(n_steps, n_noises)``; ``diffusion(x)`` returns an
    array of shape ``x.shape + (n_noises,)``.  Returns the path including ``x0``.
    """
    x = np.asarray(x0, dtype=float)
    path = [x]
    for w in np.atleast_2d(dW):
        x, _, _ = predictor_corrector(
            lambda y: (drift(y) * dt + diffusion(y) @ w, None), x, scheme)
        path.append(x)
    return np.array(path)


@dataclass
class TrajectoryState:
    ansatz: Ansatz
    theta: np.ndarray
    noise_rng: np.random.Generator
    chain: ChainState | None
    mode: str = "nonlinear"
    t: float = 0.0
    step: int = 0
    phi: complex | None = None       # gauge (log norm + phase), optional
    log_Q: float = 0.0               # linear mode normalisation, Q = exp(log_Q)
    last_dW: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def Q(self) -> float:
        return float(np.exp(self.log_Q))


def init_trajectory(ansatz: Ansatz, model: ModelSpec, sampler_cfg: SamplerConfig,
                    seed: np.random.SeedSequence, mode: str = "nonlinear",
                    bootstrap_scale: float = 1e-3, track_gauge: bool = False) -> TrajectoryState:
    """Paramagnetic start with independent noise / chain / init streams from ``seed``."""
    if mode not in ("nonlinear", "linear"):
        raise ValueError(f"unknown mode {mode!r}")
    noise_ss, chain_ss, init_ss = seed.spawn(3)
    theta = ansatz.init_paramagnetic(np.random.default_rng(init_ss), bootstrap_scale)
    chain = None
    if not sampler_cfg.exact:
        chain = new_chain(ansatz, theta, np.random.default_rng(chain_ss))
    phi = None
    if track_gauge:
        from .sampler import all_configurations
        logpsi = ansatz.log_amplitude(theta, all_configurations(ansatz.N))
        m = (2 * logpsi.real).max()
        phi = complex(-0.5 * (m + np.log(np.exp(2 * logpsi.real - m).sum())))
    return TrajectoryState(ansatz, theta, np.random.default_rng(noise_ss), chain, mode, phi=phi)


def integrate_gauge_phi(est: StepEstimates, dtheta: np.ndarray, dW, dt: float) -> complex:
    """Increment of the gauge ``phi`` at one evaluation point.

    ``-<O>.dtheta - i <E_eff> dt + sum_n (<B^n> - c_n/2) dW_n``; the ``-c_n/2``
    term is absent in linear mode.  ``<E_eff>`` must include the scalar terms.
    """
    d = -(est.mean_O @ dtheta) - 1j * est.mean_E * dt
    if est.n_channels:
        b = est.mean_B.copy()
        if est.mode == "nonlinear":
            b = b - 0.5 * est.channel_expectations
        d = d + b @ np.asarray(dW)
    return complex(d)


def integrate_norm_Q(est: StepEstimates, dW, dt: float) -> float:
    """Multiplicative update ``Q_new / Q`` of the linear-mode normalisation.

    ``d ln Q = 2 Im<E_lin> dt + 2 sum_n Re<B^n> o dW_n`` at one evaluation point.
    """
    if est.mode != "linear":
        raise ValueError("the normalisation track only exists in linear mode")
    dlog = 2.0 * est.mean_E.imag * dt
    if est.n_channels:
        dlog += 2.0 * float(est.mean_B.real @ np.asarray(dW))
    return float(np.exp(dlog))


@dataclass
class StepInfo:
    samples: SampleSet          # drawn at the start-of-step parameters
    estimates: StepEstimates
    dW: np.ndarray


def advance_trajectory(traj: TrajectoryState, model: ModelSpec, sampler_cfg: SamplerConfig,
                       reg_cfg: RegularizationConfig, scheme: str = "midpoint",
                       dt: float = 1e-3) -> StepInfo:
    """Advance ``traj`` in place by one step of size ``dt``."""
    dW = wiener_increments(traj.noise_rng, model.n_channels, dt)
    ansatz = traj.ansatz
    track = traj.phi is not None

    def increment(theta):
        samples = draw_samples(ansatz, theta, sampler_cfg, traj.chain)
        est = estimate_step(samples, ansatz, theta, model, traj.mode, include_scalars=track)
        D = assemble_rhs(est, dt, dW)
        dtheta = snr_solve(est, D, reg_cfg, rhs_terms(est, dt, dW))
        return dtheta, (est, samples)

    try:
        theta_new, evals, (est0, samples0) = predictor_corrector(increment, traj.theta, scheme)
    except DegenerateTensorError as err:
        raise DegenerateTensorError(f"{err} at step {traj.step} (t={traj.t:.6g})",
                                    t=traj.t, step=traj.step) from err

    # Gauge and norm ride along with the same scheme; each evaluation point
    # contributes with its own theta increment.
    w = 1.0 / len(evals)
    if track:
        traj.phi += w * sum(integrate_gauge_phi(aux[0], dx, dW, dt) for _, dx, aux in evals)
    if traj.mode == "linear":
        traj.log_Q += w * sum(np.log(integrate_norm_Q(aux[0], dW, dt)) for _, _, aux in evals)

    traj.theta = theta_new
    traj.step += 1
    traj.t = traj.step * dt
    traj.last_dW = dW
    return StepInfo(samples0, est0, dW)
