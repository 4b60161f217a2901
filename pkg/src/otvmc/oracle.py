"""Reference dynamics: closed form at h = 0, dense Lindblad, dense SSE trajectories.

Dense states live in the 2^N sigma^z basis ordered as
:func:`otvmc.sampler.all_configurations` (index bit ``N-1-i`` set <=> spin i down).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .integrator import predictor_corrector
from .model import ModelSpec
from .observables import PAIRS, ObservableRecord, ensemble_average, wineland_xi2
from .sampler import all_configurations


class UnsupportedRegimeError(ValueError):
    """Closed form requested outside h = 0."""


class CapacityError(ValueError):
    """System too large for a dense method."""


# -- closed form (h = 0) ------------------------------------------------------------


def _sin_over(a, t, gamma):
    """``e^{-G t} sin((2a + iG) t)`` and the same divided by ``2a + iG`` (limit ``t`` at 0)."""
    a = np.asarray(a, dtype=float)
    t = np.asarray(t, dtype=float)
    ep = np.exp(2j * a * t - 2.0 * gamma * t)
    em = np.exp(-2j * a * t)
    es = (ep - em) / 2j
    den = 2.0 * a + 1j * gamma
    safe = np.where(den == 0, 1.0, den)
    return es, np.where(den == 0, t + 0j, es / safe), 0.5 * (ep + em)


def phi_fn(a, t, gamma):
    """``e^{-G t}[cos(2at + iGt) + G/(2a + iG) sin(2at + iGt)]`` evaluated overflow-free."""
    _, es_over, ec = _sin_over(a, t, gamma)
    return ec + gamma * es_over


def psi_fn(a, t, gamma):
    """``2 e^{-G t} (-G + i a)/(2a + iG) sin(2at + iGt)``."""
    _, es_over, _ = _sin_over(a, t, gamma)
    return 2.0 * (-gamma + 1j * np.asarray(a)) * es_over


def _offset_couplings(model: ModelSpec) -> np.ndarray:
    # The closed-form expressions are written for the Ising term with the
    # opposite sign (+J_d s s); for the ferromagnetic -J_d s s used here the
    # couplings enter negated, which conjugates every Phi, Psi (y -> -y).
    return -np.array([model.coupling_by_distance(d) for d in range(model.N)])


def _check_closed_form(model: ModelSpec):
    if model.h != 0.0:
        raise UnsupportedRegimeError("closed form exists only for h = 0")


def closed_form_magnetization(model: ModelSpec, t) -> np.ndarray:
    """(M_x, M_y, M_z) after a quench from the +x coherent state; shape ``t.shape + (3,)``."""
    _check_closed_form(model)
    t = np.asarray(t, dtype=float)
    G = model.kappa / 2.0
    Jd = _offset_couplings(model)
    phi_plus = np.ones(t.shape, dtype=complex)
    for d in range(model.N):
        phi_plus = phi_plus * phi_fn(Jd[d], t, G)
    pref = np.exp(-G * t)
    return np.stack([pref * phi_plus.real, pref * phi_plus.imag,
                     np.exp(-2 * G * t) - 1.0], axis=-1)


def _closed_form_Q(model: ModelSpec, t):
    N = model.N
    G = model.kappa / 2.0
    Jd = _offset_couplings(model)
    t = np.asarray(t, dtype=float)
    Qz, Qmn = {}, {}
    for mu in (1, -1):
        phis = [phi_fn(mu * Jd[d], t, G) for d in range(N)]
        acc = np.zeros(t.shape, dtype=complex)
        for d in range(1, N):
            # Phi^mu * Psi/Phi at offset d, as a leave-one-out product
            prod = psi_fn(mu * Jd[d], t, G)
            for e in range(N):
                if e != d:
                    prod = prod * phis[e]
            acc = acc + prod
        Qz[mu] = np.exp(-G * t) / (2 * N) * acc
        for nu in (1, -1):
            acc = np.zeros(t.shape, dtype=complex)
            for D in range(1, N):
                # Phi^{mu nu}_D / (Phi(mu J_D) Phi(nu J_D)): drop the d = 0, D factors
                prod = np.ones(t.shape, dtype=complex)
                for d in range(N):
                    if d in (0, D):
                        continue
                    prod = prod * phi_fn(mu * Jd[d] + nu * Jd[(D - d) % N], t, G)
                acc = acc + prod
            Qmn[mu, nu] = np.exp(-2 * G * t) / (4 * N) * acc
    return Qz, Qmn


def closed_form_covariance(model: ModelSpec, t) -> np.ndarray:
    """Normalised covariance matrix, shape ``t.shape + (3, 3)``."""
    _check_closed_form(model)
    t = np.asarray(t, dtype=float)
    N = model.N
    Mx, My, Mz = np.moveaxis(closed_form_magnetization(model, t), -1, 0)
    Qz, Q = _closed_form_Q(model, t)
    C = np.zeros(t.shape + (3, 3))
    C[..., 0, 0] = 1 / N + (2 * Q[1, 1] + Q[-1, 1] + Q[1, -1]).real - Mx ** 2
    C[..., 1, 1] = 1 / N + (-2 * Q[1, 1] + Q[-1, 1] + Q[1, -1]).real - My ** 2
    C[..., 0, 1] = C[..., 1, 0] = 2 * Q[1, 1].imag - Mx * My
    C[..., 0, 2] = C[..., 2, 0] = (Qz[1] + Qz[-1]).real - Mx * Mz
    C[..., 1, 2] = C[..., 2, 1] = (Qz[1] - Qz[-1]).imag - My * Mz
    C[..., 2, 2] = (1 - Mz ** 2) / N
    return C


def closed_form_records(model: ModelSpec, times) -> list[ObservableRecord]:
    times = np.asarray(times, dtype=float)
    M = closed_form_magnetization(model, times)
    C = closed_form_covariance(model, times)
    return [_exact_record(t, M[i], C[i], model.N) for i, t in enumerate(times)]


def _exact_record(t, M, C, N):
    try:
        xi2 = wineland_xi2(M, C, N)
    except ValueError:
        xi2 = np.nan
    return ObservableRecord(float(t), np.asarray(M, float), np.zeros(3), np.asarray(C, float),
                            np.zeros((3, 3)), xi2, 0.0, 0)


# -- dense machinery ------------------------------------------------------------------


class DenseSystem:
    """Operators of the LITF ring on the full 2^N space, applied via index maps."""

    def __init__(self, model: ModelSpec, max_N: int = 12):
        if model.N > max_N:
            raise CapacityError(f"N = {model.N} exceeds dense limit {max_N}")
        self.model = model
        N = model.N
        self.N = N
        self.dim = 2 ** N
        self.z = all_configurations(N)                      # (dim, N)
        idx = np.arange(self.dim)
        bits = 1 << (N - 1 - np.arange(N))
        self.flip = idx[None, :] ^ bits[:, None]            # (N, dim)
        self.down = self.z.T < 0                            # (N, dim)
        self.E_ising = model.ising_energy(self.z)
        self.kappa = model.kappa
        self.K_diag = 0.5 * model.kappa * (1.0 + self.z).sum(axis=1)
        self.n_channels = model.n_channels

    # pure states: arrays of shape (..., dim)

    def apply_H(self, psi):
        out = self.E_ising * psi
        if self.model.h != 0.0:
            out = out - self.model.h * psi[..., self.flip].sum(axis=-2)
        return out

    def apply_L_all(self, psi):
        """``(..., n_channels, dim)`` stack of ``L_n psi``."""
        if self.n_channels == 0:
            return np.zeros(psi.shape[:-1] + (0, self.dim), dtype=complex)
        return np.sqrt(self.kappa) * psi[..., self.flip] * self.down

    def apply_collective(self, psi):
        """``(..., 3, dim)``: M_x psi, M_y psi, M_z psi."""
        flipped = psi[..., self.flip]                       # (..., N, dim)
        mx = flipped.sum(axis=-2)
        my = (-1j * self.z.T * flipped).sum(axis=-2)
        mz = self.z.sum(axis=1) * psi
        return np.stack([mx, my, mz], axis=-2) / self.N

    def pure_moments(self, psi):
        """Normalised ``m (..., 3)``, ``k (..., 6)`` and squared norms."""
        norm2 = np.sum(np.abs(psi) ** 2, axis=-1)
        v = self.apply_collective(psi)
        m = np.einsum("...d,...id->...i", psi.conj(), v).real / norm2[..., None]
        k = np.stack([np.einsum("...d,...d->...", v[..., i, :].conj(), v[..., j, :]).real
                      for i, j in PAIRS], axis=-1) / norm2[..., None]
        return m, k, norm2

    def coherent_x(self):
        return np.full(self.dim, 1.0 / np.sqrt(self.dim), dtype=complex)

    # density matrices

    def lindblad_rhs(self, rho):
        X = self.apply_H(rho.T).T - 0.5j * self.K_diag[:, None] * rho
        out = -1j * (X - X.conj().T)
        if self.n_channels:
            for n in range(self.N):
                src = self.flip[n]
                mask = self.down[n]
                out = out + self.kappa * np.outer(mask, mask) * rho[np.ix_(src, src)]
        return out

    def rho_moments(self, rho):
        """Same as :meth:`pure_moments` for a density matrix (trace-normalised)."""
        tr = np.trace(rho).real
        basis = np.eye(self.dim, dtype=complex)
        ops = self.apply_collective(basis)                  # ops[x, i, :] = (M_i e_x)
        Mi = np.transpose(ops, (1, 2, 0))                   # (3, dim, dim): column x = M_i e_x
        m = np.array([np.trace(Mi[i] @ rho).real for i in range(3)]) / tr
        k = np.array([np.trace(0.5 * (Mi[i] @ Mi[j] + Mi[j] @ Mi[i]) @ rho).real
                      for i, j in PAIRS]) / tr
        return m, k, tr


def _moments_to_record(t, m, k, N):
    return ensemble_average(t, m[None], k[None], N)


def dense_lindblad_evolve(model: ModelSpec, times, rho0=None, max_step: float = 1e-3,
                          return_states: bool = False):
    """RK4 integration of the Lindblad equation, sampled at ``times``.

    Requires ``N <= 8``.  Returns a list of :class:`ObservableRecord`
    (and the density matrices when ``return_states``).
    """
    if model.N > 8:
        raise CapacityError("dense Lindblad integration is limited to N <= 8")
    sys = DenseSystem(model, max_N=8)
    if rho0 is None:
        psi0 = sys.coherent_x()
        rho0 = np.outer(psi0, psi0.conj())
    rho = np.array(rho0, dtype=complex)
    times = np.asarray(times, dtype=float)
    t = 0.0
    records, states = [], []
    for target in times:
        span = target - t
        if span < -1e-12:
            raise ValueError("times must be non-decreasing and start at >= 0")
        n = int(np.ceil(span / max_step - 1e-9)) if span > 0 else 0
        if n:
            h = span / n
            for _ in range(n):
                k1 = sys.lindblad_rhs(rho)
                k2 = sys.lindblad_rhs(rho + 0.5 * h * k1)
                k3 = sys.lindblad_rhs(rho + 0.5 * h * k2)
                k4 = sys.lindblad_rhs(rho + h * k3)
                rho = rho + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        t = float(target)
        m, k, _ = sys.rho_moments(rho)
        records.append(_moments_to_record(t, m, k, model.N))
        if return_states:
            states.append(rho.copy())
    return (records, states) if return_states else records


# -- dense stochastic Schroedinger equation -------------------------------------------


def sse_increment(sys: DenseSystem, psi, dt, dW, mode: str):
    """Stratonovich increment ``-i H_eff psi dt + sum_n (L_n - c_n/2) psi dW_n``.

    ``psi`` has shape ``(T, dim)`` and ``dW`` shape ``(T, n_channels)``.
    """
    Hpsi = sys.apply_H(psi)
    Kpsi = sys.K_diag * psi
    if sys.n_channels == 0:
        return -1j * dt * Hpsi
    Lpsi = sys.apply_L_all(psi)                                  # (T, n, dim)
    if mode == "linear":
        drift = Hpsi - 0.5j * Kpsi
        noise = np.einsum("tn,tnd->td", dW, Lpsi)
        return -1j * dt * drift + noise
    norm2 = np.sum(np.abs(psi) ** 2, axis=-1)
    c = 2.0 * np.einsum("td,tnd->tn", psi.conj(), Lpsi).real / norm2[:, None]
    occ = np.einsum("td,td->t", psi.conj(), Kpsi).real / norm2   # sum_n <L+L>
    scalar = (c ** 2).sum(axis=1) - occ
    drift = (Hpsi - 0.5j * (Kpsi - 2.0 * np.einsum("tn,tnd->td", c, Lpsi)
                            + scalar[:, None] * psi))
    noise = np.einsum("tn,tnd->td", dW, Lpsi) - 0.5 * (c * dW).sum(axis=1)[:, None] * psi
    return -1j * dt * drift + noise


def dense_sse_trajectory(model: ModelSpec, psi0, dt: float, n_steps: int, mode: str = "nonlinear",
                         rng: np.random.Generator | None = None, dW: np.ndarray | None = None,
                         scheme: str = "midpoint", passes: int = 1) -> np.ndarray:
    """One dense trajectory; returns the states ``(n_steps + 1, dim)``.

    Nonlinear mode is never renormalised; linear mode keeps the raw vector.
    Pass ``dW (n_steps, n_channels)`` to drive it with a given Wiener path;
    ``passes`` is the number of corrector evaluations per step.
    """
    if model.N > 12:
        raise CapacityError("dense SSE trajectories are limited to N <= 12")
    sys = DenseSystem(model)
    if dW is None:
        rng = np.random.default_rng() if rng is None else rng
        dW = rng.normal(0.0, np.sqrt(dt), size=(n_steps, sys.n_channels))
    psi = np.array(psi0, dtype=complex)[None]
    path = [psi[0]]
    for i in range(n_steps):
        w = dW[i][None]
        psi, _, _ = predictor_corrector(lambda p: (sse_increment(sys, p, dt, w, mode), None),
                                        psi, scheme, passes)
        path.append(psi[0])
    return np.array(path)


@dataclass
class DenseEnsemble:
    times: np.ndarray
    m: np.ndarray      # (n_times, T, 3)
    k: np.ndarray      # (n_times, T, 6)
    Q: np.ndarray      # (n_times, T) squared norms

    def records(self, N: int, mode: str) -> list[ObservableRecord]:
        out = []
        for i, t in enumerate(self.times):
            if mode == "linear":
                out.append(ensemble_average(t, self.m[i], self.k[i], N, "linear", self.Q[i]))
            else:
                out.append(ensemble_average(t, self.m[i], self.k[i], N))
        return out


def dense_sse_ensemble(model: ModelSpec, n_traj: int, dt: float, n_steps: int,
                       record_stride: int, mode: str = "nonlinear", seed: int = 0,
                       scheme: str = "midpoint", batch: int = 500) -> DenseEnsemble:
    """Many dense trajectories from the +x coherent state, batched for speed.

    Trajectory ``j`` draws its Wiener path from ``SeedSequence(seed, spawn_key=(j,))``
    so results do not depend on ``batch``.
    """
    sys = DenseSystem(model)
    rec_steps = list(range(0, n_steps + 1, record_stride))
    if rec_steps[-1] != n_steps:
        rec_steps.append(n_steps)
    n_rec = len(rec_steps)
    m = np.zeros((n_rec, n_traj, 3))
    k = np.zeros((n_rec, n_traj, 6))
    Q = np.zeros((n_rec, n_traj))
    for start in range(0, n_traj, batch):
        ids = range(start, min(start + batch, n_traj))
        rngs = [np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(j,)))
                for j in ids]
        psi = np.tile(sys.coherent_x(), (len(rngs), 1))
        r = 0
        for step in range(n_steps + 1):
            if r < n_rec and step == rec_steps[r]:
                mm, kk, nn = sys.pure_moments(psi)
                m[r, ids.start:ids.stop], k[r, ids.start:ids.stop], Q[r, ids.start:ids.stop] = mm, kk, nn
                r += 1
            if step == n_steps:
                break
            if step % record_stride == 0:
                chunk = min(record_stride, n_steps - step)
                dW_chunk = np.stack([g.normal(0.0, np.sqrt(dt), size=(chunk, sys.n_channels))
                                     for g in rngs], axis=1)
            w = dW_chunk[step % record_stride]
            psi, _, _ = predictor_corrector(lambda p: (sse_increment(sys, p, dt, w, mode), None),
                                            psi, scheme)
    return DenseEnsemble(np.array(rec_steps) * dt, m, k, Q)
