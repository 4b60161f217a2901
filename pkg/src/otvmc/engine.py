"""Monte Carlo assembly and regularised solution of the variational SDE

    S dtheta = -i F dt + sum_n N^n o dW_n

with connected moments over samples of |psi_theta|^2::

    S_kk' = <O_k* O_k'> - <O_k*><O_k'>
    F_k   = <O_k* E_eff> - <O_k*><E_eff>
    N^n_k = <O_k* B^n>   - <O_k*><B^n>
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ansatz import Ansatz
from .model import (ModelSpec, local_collapse_amplitudes, local_effective_energy,
                    scalar_shift)
from .sampler import SampleSet


class DegenerateTensorError(RuntimeError):
    """The geometric tensor has no eigenvalue above the cutoff."""

    def __init__(self, msg, t=None, step=None):
        super().__init__(msg)
        self.t = t
        self.step = step


@dataclass
class RegularizationConfig:
    snr_threshold: float = 0.0          # 0 disables the SNR gate
    eigenvalue_cutoff: float = 1e-8     # relative to the largest eigenvalue
    sharpness: int = 6
    snr_mode: str = "smooth"            # or "hard"
    snr_terms: str = "split"            # "split", "drift" or "joint"; see snr_solve

    def __post_init__(self):
        if not self.snr_threshold >= 0:
            raise ValueError("snr_threshold must be >= 0")
        if self.snr_mode not in ("smooth", "hard"):
            raise ValueError(f"unknown snr_mode {self.snr_mode!r}")
        if self.snr_terms not in ("split", "drift", "joint"):
            raise ValueError(f"unknown snr_terms {self.snr_terms!r}")


@dataclass
class StepEstimates:
    S: np.ndarray
    F: np.ndarray
    N: np.ndarray                  # (n_channels, M)
    channel_expectations: np.ndarray
    mean_O: np.ndarray
    mean_E: complex
    mean_B: np.ndarray
    dO: np.ndarray                 # centred per-sample log-derivatives
    dE: np.ndarray
    dB: np.ndarray
    weights: np.ndarray
    exact: bool
    mode: str

    @property
    def n_channels(self) -> int:
        return self.N.shape[0]


def _matmul(A, B):
    """``A @ B`` without promoting a real ``A`` to complex."""
    if np.iscomplexobj(A) or not np.iscomplexobj(B):
        return A @ B
    return A @ B.real + 1j * (A @ B.imag)


def estimate_step(samples: SampleSet, ansatz: Ansatz, theta, model: ModelSpec,
                  mode: str = "nonlinear", include_scalars: bool = False) -> StepEstimates:
    """Connected-moment estimates of S, F and N^n from one sample set.

    ``channel_expectations`` are ``<L_n + L_n^+> = 2 Re <B^n>`` from the same
    samples; ``B^n`` already carries the ``sqrt(kappa)`` factor.
    """
    if len(samples) == 0:
        raise ValueError("estimate_step needs at least one sample")
    x, w = samples.x, samples.weights
    r = ansatz.flip_log_ratios(theta, x)
    B = local_collapse_amplitudes(model, x, r)
    mean_B = w @ B
    c = 2.0 * mean_B.real
    E = local_effective_energy(model, x, r, c, mode, collapse=B)
    if include_scalars and mode == "nonlinear" and model.kappa > 0:
        E = E - 0.5j * scalar_shift(model, c, x, w)
    O = ansatz.log_derivatives(theta, x)

    mean_O = w @ O
    mean_E = w @ E
    dO = O - mean_O
    dE = E - mean_E
    dB = B - mean_B
    dOc_w = (dO.conj() if np.iscomplexobj(dO) else dO).T * w
    S = dOc_w @ dO
    S = 0.5 * (S + S.conj().T)       # real symmetric when O is real
    F = _matmul(dOc_w, dE)
    Nn = _matmul(dOc_w, dB).T
    return StepEstimates(S, F, np.ascontiguousarray(Nn), c, mean_O, complex(mean_E), mean_B,
                         dO, dE, dB, w, samples.exact, mode)


def linear_mode_force(est: StepEstimates) -> np.ndarray:
    """Force for the linear SSE from nonlinear-mode estimates: F - i sum_n c_n N^n."""
    if est.mode == "linear":
        return est.F
    return est.F - 1j * (est.channel_expectations @ est.N)


def rhs_terms(est: StepEstimates, dt: float, dW, mode: str | None = None):
    """Split ``D`` into its drift and per-channel noise parts.

    Returns ``[(D_part, e_part), ...]`` with ``D_part = <dO* e_part>`` and the
    parts summing to :func:`assemble_rhs`.  The per-sample ``e_part`` are what
    the SNR gate uses to estimate Monte Carlo errors.
    """
    mode = est.mode if mode is None else mode
    dW = np.atleast_1d(np.asarray(dW, dtype=float))
    if dW.shape[0] != est.n_channels:
        raise ValueError(f"expected {est.n_channels} Wiener increments, got {dW.shape[0]}")
    F = linear_mode_force(est) if mode == "linear" else est.F
    dE = est.dE
    if mode == "linear" and est.mode == "nonlinear":
        dE = dE - 1j * (est.dB @ est.channel_expectations)
    terms = [(-1j * dt * F, -1j * dt * dE)]
    for n in range(est.n_channels):
        terms.append((dW[n] * est.N[n], dW[n] * est.dB[:, n]))
    return terms


def local_rhs(est: StepEstimates, dt: float, dW, mode: str | None = None) -> np.ndarray:
    """Per-sample scalar ``e(x)`` with ``D = <dO* e>`` (sum of all terms)."""
    return sum(e for _, e in rhs_terms(est, dt, dW, mode))


def assemble_rhs(est: StepEstimates, dt: float, dW, mode: str | None = None) -> np.ndarray:
    """D = -i F dt + sum_n N^n dW_n (F replaced by F^lin in linear mode)."""
    mode = est.mode if mode is None else mode
    dW = np.atleast_1d(np.asarray(dW, dtype=float))
    if dW.shape[0] != est.n_channels:
        raise ValueError(f"expected {est.n_channels} Wiener increments, got {dW.shape[0]}")
    F = linear_mode_force(est) if mode == "linear" else est.F
    D = -1j * dt * F
    if est.n_channels:
        D = D + dW @ est.N
    return D


def _snr_gate(est: StepEstimates, P, rho, e_local, reg: RegularizationConfig):
    """Suppression factor per eigendirection for one contribution to ``D``.

    ``rho = <P* e>`` is the projected contribution, ``P = dO V``; the standard
    error of its sample mean is ``sqrt(var(P* e) / n)``.
    """
    w = est.weights
    n = est.dO.shape[0]
    absP2 = np.abs(P) ** 2 if np.iscomplexobj(P) else P ** 2
    var = (w * np.abs(e_local) ** 2) @ absP2 - np.abs(rho) ** 2
    se = np.sqrt(np.maximum(var, 0.0) / n)
    num = np.abs(rho)
    if reg.snr_mode == "hard":
        return (num >= reg.snr_threshold * se).astype(float)
    p = reg.sharpness
    a = num ** p
    b = (reg.snr_threshold * se) ** p
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(a + b > 0, a / (a + b), 0.0)


def snr_solve(est: StepEstimates, D: np.ndarray, reg: RegularizationConfig,
              terms=None) -> np.ndarray:
    """Solve S dtheta = D in the eigenbasis of S with SNR gating.

    Eigendirections below ``eigenvalue_cutoff * lambda_max`` are dropped.  In
    each kept direction the projection ``rho_k = v_k^+ D`` is damped by
    ``1 / (1 + (threshold / SNR_k)**sharpness)`` (or cut when ``snr_mode`` is
    "hard"), with ``SNR_k = |rho_k| / stderr(rho_k)`` over samples.

    ``terms`` is the decomposition from :func:`rhs_terms`.  With
    ``reg.snr_terms == "split"`` every term is gated with its own SNR, with
    "drift" only the deterministic term is gated (noise terms pass through
    the eigenvalue cutoff alone), and with "joint" one gate is computed for
    their sum.  Without ``terms``, for exact sample sets or with a zero
    threshold no gating is applied.
    """
    lam, V = np.linalg.eigh(est.S)
    lam_max = lam[-1] if lam.size else 0.0
    if not lam_max > 0.0:
        raise DegenerateTensorError("geometric tensor has no positive eigenvalue")
    keep = lam >= reg.eigenvalue_cutoff * lam_max
    Vh = V.conj().T
    if terms is None or est.exact or reg.snr_threshold == 0:
        rho = Vh @ D
    else:
        P = est.dO @ V
        if reg.snr_terms == "joint":
            terms = [(D, sum(e for _, e in terms))]
        rho = np.zeros(len(lam), dtype=complex)
        for i, (D_part, e_part) in enumerate(terms):
            r = Vh @ D_part
            if reg.snr_terms == "drift" and i > 0:
                rho += r
            else:
                rho += r * _snr_gate(est, P, r, e_part, reg)
    coef = np.zeros_like(rho)
    coef[keep] = rho[keep] / lam[keep]
    return V @ coef
