"""Collective-spin moments, Wineland squeezing, and trajectory-ensemble reduction.

Per trajectory we estimate the normalised moments

    M_i  = <M_i>,     K_ij = <{M_i, M_j}>/2,     M_i = (1/N) sum_a sigma^i_a

from samples of |psi|^2.  Off-diagonal operators use amplitude ratios:
``sigma^x_a -> r_a`` and ``sigma^y_a -> -i s_a r_a`` (from
``sigma^y |s> = i s |-s>``), with ``r_a = psi(x^a)/psi(x)``.  Ensemble
covariances ``C = K - M M^T`` and ``xi^2`` are built from ensemble-averaged
moments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ansatz import Ansatz
from .sampler import SampleSet

AXES = "xyz"
PAIRS = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]
PAIR_NAMES = ["C" + AXES[i] + AXES[j] for i, j in PAIRS]


class UndefinedSqueezingError(ValueError):
    """Mean spin too short for a squeezing parameter."""


@dataclass
class CollectiveSpinEstimate:
    M: np.ndarray            # (3,)
    K: np.ndarray            # (3, 3) symmetrised second moments
    M_err: np.ndarray
    K_err: np.ndarray

    @property
    def C(self) -> np.ndarray:
        return self.K - np.outer(self.M, self.M)


def _weighted_mean_err(v, samples: SampleSet):
    w = samples.weights
    m = w @ v
    if samples.exact:
        return m, np.zeros_like(np.real(m))
    n = len(w)
    var = w @ np.abs(v - m) ** 2
    return m, np.sqrt(var / max(n - 1, 1))


def local_spin_moments(ansatz: Ansatz, theta, x) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample local estimators: ``m (n, 3)`` and ``k (n, 6)`` in PAIRS order."""
    x = np.atleast_2d(x)
    n, N = x.shape
    r = np.exp(ansatz.flip_log_ratios(theta, x))            # (n, N)
    R = np.exp(ansatz.pair_flip_log_ratios(theta, x))       # (n, N, N), diag 1
    idx = np.arange(N)
    R[:, idx, idx] = 0.0

    sz = x.sum(axis=1)
    sx = r.sum(axis=1)
    sy = (-1j * x * r).sum(axis=1)
    m = np.stack([sx, sy, sz], axis=1) / N

    xs = x[:, :, None] * x[:, None, :]
    k = np.empty((n, 6), dtype=complex)
    k[:, 0] = N + R.sum(axis=(1, 2))                                  # xx
    k[:, 1] = np.einsum("sab,sb->s", R, -1j * x)                      # xy, a != b
    k[:, 2] = sx * sz - (r * x).sum(axis=1)                           # xz, a != b
    k[:, 3] = N - (xs * R).sum(axis=(1, 2))                           # yy
    k[:, 4] = -1j * ((x * r).sum(axis=1) * sz - r.sum(axis=1))        # yz, a != b
    k[:, 5] = sz ** 2                                                 # zz
    return m, k / N ** 2


def estimate_collective_spin(ansatz: Ansatz, theta, samples: SampleSet) -> CollectiveSpinEstimate:
    m, k = local_spin_moments(ansatz, theta, samples.x)
    M, M_err = _weighted_mean_err(m, samples)
    kk, kk_err = _weighted_mean_err(k, samples)
    K = np.zeros((3, 3))
    K_err = np.zeros((3, 3))
    for p, (i, j) in enumerate(PAIRS):
        K[i, j] = K[j, i] = kk[p].real
        K_err[i, j] = K_err[j, i] = kk_err[p]
    return CollectiveSpinEstimate(M.real, K, M_err, K_err)


def perpendicular_basis(M: np.ndarray) -> np.ndarray:
    """Orthonormal ``(2, 3)`` basis of the plane perpendicular to ``M``."""
    u = M / np.linalg.norm(M)
    e1 = np.cross(u, [0.0, 0.0, 1.0])
    if np.linalg.norm(e1) < 1e-8:
        e1 = np.cross(u, [1.0, 0.0, 0.0])
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(u, e1)
    return np.stack([e1, e2])


def wineland_xi2(M: np.ndarray, C: np.ndarray, N: int) -> float:
    """``N * lambda_min(C_perp) / |M|^2`` with ``C_perp`` the covariance in the plane normal to ``M``."""
    M = np.asarray(M, dtype=float)
    norm = np.linalg.norm(M)
    if norm < 1e-6:
        raise UndefinedSqueezingError(f"|M| = {norm:.3g} too small")
    E = perpendicular_basis(M)
    Cp = E @ np.asarray(C, dtype=float) @ E.T
    return float(N * np.linalg.eigvalsh(0.5 * (Cp + Cp.T))[0] / norm ** 2)


# -- ensemble reduction ------------------------------------------------------------


@dataclass
class ObservableRecord:
    t: float
    M: np.ndarray
    M_err: np.ndarray
    C: np.ndarray
    C_err: np.ndarray
    xi2: float
    xi2_err: float
    n_traj: int


def _ensemble_stats(m: np.ndarray, k: np.ndarray, N: int):
    """M, C, xi^2 from per-trajectory (already Q-weighted) moments."""
    M = m.mean(axis=0)
    kk = k.mean(axis=0)
    K = np.zeros((3, 3))
    for p, (i, j) in enumerate(PAIRS):
        K[i, j] = K[j, i] = kk[p]
    C = K - np.outer(M, M)
    try:
        xi2 = wineland_xi2(M, C, N)
    except UndefinedSqueezingError:
        xi2 = np.nan
    return M, C, xi2


def ensemble_average(t: float, m: np.ndarray, k: np.ndarray, N: int,
                     mode: str = "nonlinear", Q: np.ndarray | None = None) -> ObservableRecord:
    """Reduce per-trajectory moments ``m (T, 3)``, ``k (T, 6)`` to ensemble values.

    Nonlinear mode averages plainly; linear mode weights each trajectory by
    its normalisation ``Q``.  Errors of linear statistics are
    ``std / sqrt(T)``; those of ``C`` and ``xi^2`` are jackknife estimates
    (identical for linear statistics).
    """
    m = np.asarray(m, dtype=float)
    k = np.asarray(k, dtype=float)
    T = m.shape[0]
    if k.shape[0] != T:
        raise ValueError("moment arrays have different trajectory counts")
    if mode == "linear":
        if Q is None or len(Q) != T:
            raise ValueError("linear mode needs one weight per trajectory")
        Q = np.asarray(Q, dtype=float)
        m = m * Q[:, None]
        k = k * Q[:, None]
    elif Q is not None:
        raise ValueError("weights are only used in linear mode")

    M, C, xi2 = _ensemble_stats(m, k, N)
    if T < 2:
        return ObservableRecord(t, M, np.zeros(3), C, np.zeros((3, 3)), xi2, 0.0, T)
    M_err = m.std(axis=0, ddof=1) / np.sqrt(T)
    # jackknife via leave-one-out means (O(T) each)
    sm, sk = m.sum(axis=0), k.sum(axis=0)
    Cs, xs = [], []
    for j in range(T):
        _, Cj, xj = _ensemble_stats(((sm - m[j]) / (T - 1))[None], ((sk - k[j]) / (T - 1))[None], N)
        Cs.append(Cj)
        xs.append(xj)
    Cs, xs = np.array(Cs), np.array(xs)
    jk = lambda a: np.sqrt((T - 1) / T * ((a - a.mean(axis=0)) ** 2).sum(axis=0))
    return ObservableRecord(t, M, M_err, C, jk(Cs), xi2, float(jk(xs)), T)
