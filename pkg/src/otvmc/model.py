"""Dissipative long-range transverse-field Ising (LITF) chain.

Hamiltonian (hbar = 1)::

    H = -(J / K(alpha)) sum_{i<j} sz_i sz_j / d_ij**alpha - h sum_i sx_i

on a ring with minimal-image distance ``d_ij``, plus one decay channel
``L_n = sqrt(kappa) sigma^-_n`` per site.

All local estimators take a batch of configurations ``x`` with shape
``(n_samples, N)`` and entries in ``{+1., -1.}``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


class InvalidModelError(ValueError):
    """Raised for inconsistent model parameters."""


def minimal_image_distance(i: int, j: int, N: int) -> int:
    d = abs(i - j) % N
    return min(d, N - d)


def kac_factor(N: int, alpha: float) -> float:
    """Kac normalisation ``sum_{i<j} d_ij**-alpha / (N - 1)`` on a ring."""
    if N < 2:
        raise InvalidModelError(f"Kac factor needs N >= 2, got N={N}")
    total = 0.0
    for i in range(N):
        for j in range(i + 1, N):
            total += minimal_image_distance(i, j, N) ** (-alpha)
    return total / (N - 1)


@dataclass(frozen=True)
class ModelSpec:
    """Parameters of the dissipative LITF ring.

    Sites are 0-based internally.  ``J`` fixes the energy unit; times are in
    units of ``1/J`` when ``J = 1``.
    """

    N: int
    alpha: float = 1.0
    J: float = 1.0
    h: float = 0.0
    kappa: float = 0.0
    boundary: str = "periodic_minimal_image"

    def __post_init__(self):
        if self.N < 1:
            raise InvalidModelError("N must be >= 1")
        if self.kappa < 0:
            raise InvalidModelError("kappa must be >= 0")
        if self.alpha < 0:
            raise InvalidModelError("alpha must be >= 0")
        if self.boundary != "periodic_minimal_image":
            raise InvalidModelError(f"unsupported boundary {self.boundary!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(**d)

    def to_dict(self) -> dict:
        return dict(N=self.N, alpha=self.alpha, J=self.J, h=self.h,
                    kappa=self.kappa, boundary=self.boundary)

    @cached_property
    def kac(self) -> float:
        return kac_factor(self.N, self.alpha) if self.N >= 2 else 1.0

    def coupling(self, i: int, j: int) -> float:
        if i == j:
            raise InvalidModelError("coupling undefined for i == j")
        d = minimal_image_distance(i, j, self.N)
        return self.J * d ** (-self.alpha) / self.kac

    def coupling_by_distance(self, d: int) -> float:
        """Coupling at ring offset ``d`` (any integer); zero for ``d = 0 mod N``."""
        d = minimal_image_distance(0, d, self.N)
        if d == 0:
            return 0.0
        return self.J * d ** (-self.alpha) / self.kac

    @cached_property
    def couplings(self) -> np.ndarray:
        """Symmetric ``(N, N)`` coupling matrix with zero diagonal."""
        N = self.N
        idx = np.arange(N)
        d = np.abs(idx[:, None] - idx[None, :]) % N
        d = np.minimum(d, N - d)
        Jm = np.zeros((N, N))
        mask = d > 0
        Jm[mask] = self.J * d[mask].astype(float) ** (-self.alpha) / self.kac
        return Jm

    @property
    def n_channels(self) -> int:
        return self.N if self.kappa > 0 else 0

    def ising_energy(self, x: np.ndarray) -> np.ndarray:
        """Diagonal part ``-sum_{i<j} J_ij s_i s_j`` for a batch of configurations."""
        x = np.atleast_2d(x)
        return -0.5 * ((x @ self.couplings) * x).sum(axis=1)


# -- local estimators -------------------------------------------------------------
#
# ``flip_log_ratios`` below is the (n, N) array of log(psi(x with spin a
# flipped) / psi(x)), produced by the ansatz.


def local_hamiltonian(model: ModelSpec, x: np.ndarray,
                      flip_log_ratios: np.ndarray) -> np.ndarray:
    """<x|H|psi>/<x|psi> for each configuration in the batch."""
    e = model.ising_energy(x).astype(complex)
    if model.h != 0.0:
        e = e - model.h * np.exp(flip_log_ratios).sum(axis=1)
    return e


def local_collapse_amplitudes(model: ModelSpec, x: np.ndarray,
                              flip_log_ratios: np.ndarray) -> np.ndarray:
    """B^n(x) = <x|L_n|psi>/<x|psi> as an ``(n_samples, n_channels)`` array.

    Nonzero only where ``x_n = -1``: sigma^- lowers the raised neighbour.
    """
    x = np.atleast_2d(x)
    if model.kappa == 0.0:
        return np.zeros((x.shape[0], 0), dtype=complex)
    return np.where(x < 0, np.sqrt(model.kappa) * np.exp(flip_log_ratios), 0.0)


def local_effective_energy(model: ModelSpec, x: np.ndarray,
                           flip_log_ratios: np.ndarray,
                           channel_expectations: np.ndarray | None = None,
                           mode: str = "nonlinear",
                           include_scalars: bool = False,
                           collapse: np.ndarray | None = None) -> np.ndarray:
    """Local estimator of the Stratonovich effective Hamiltonian.

    nonlinear::

        H - (i/2) sum_n (L+L - 2 c_n L + L^2 + c_n^2 - <L^2 + 2 L+L + L+^2>/2)

    linear::

        H - (i/2) sum_n (L+L + L^2)

    with ``c_n = <L_n + L_n^+>``.  For sigma^- channels ``L^2 = 0`` and
    ``L+L`` is diagonal with entry ``kappa (1 + s_n)/2``.  The scalar
    terms of the nonlinear form only shift the estimator by a constant and
    are added when ``include_scalars`` is set (needed for the gauge track).
    """
    if mode not in ("nonlinear", "linear"):
        raise ValueError(f"unknown mode {mode!r}")
    x = np.atleast_2d(x)
    e = local_hamiltonian(model, x, flip_log_ratios)
    if model.kappa == 0.0:
        return e
    lindblad_diag = 0.5 * model.kappa * (1.0 + x).sum(axis=1)
    e = e - 0.5j * lindblad_diag
    if mode == "linear":
        return e
    if channel_expectations is None:
        raise ValueError("nonlinear mode needs channel_expectations")
    c = np.asarray(channel_expectations, dtype=float)
    if collapse is None:
        collapse = local_collapse_amplitudes(model, x, flip_log_ratios)
    e = e + 1j * (collapse @ c)
    if include_scalars:
        e = e - 0.5j * scalar_shift(model, c, x)
    return e


def scalar_shift(model: ModelSpec, c: np.ndarray, x: np.ndarray,
                 weights: np.ndarray | None = None) -> complex:
    """sum_n (c_n^2 - <L_n+ L_n>) for sigma^- channels, expectations from samples."""
    x = np.atleast_2d(x)
    if weights is None:
        weights = np.full(x.shape[0], 1.0 / x.shape[0])
    occ = 0.5 * model.kappa * (weights @ (1.0 + x))
    return float(np.sum(c ** 2) - np.sum(occ))
