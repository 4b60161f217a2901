"""Variational wavefunctions in the sigma^z basis.

Two families share one interface:

* :class:`Jastrow` -- ``log psi = sum_i a_i s_i + sum_{j<k} eta_jk s_j s_k``.
  ``sharing_distance = d`` keeps an independent ``eta_jk`` for every pair
  with ring distance ``D <= d`` and one shared ``eta`` per distance class
  ``D > d``.  ``d = N - 1`` is fully inhomogeneous (LJNH), ``d = 0`` is
  homogeneous (LJH).
* :class:`RBM` -- ``log psi = sum_i a_i s_i + sum_j log(2 cosh(b_j + sum_i w_ij s_i))``.

Parameters are flat complex vectors.  Batched methods take configurations
of shape ``(n, N)`` with float entries +-1.
"""

from __future__ import annotations

import numba
import numpy as np

from .model import minimal_image_distance


class LayoutError(ValueError):
    """Parameter vector does not match the ansatz layout."""


def log2cosh(z):
    """Stable ``log(2 cosh z)`` for complex input (branch irrelevant after exp)."""
    z = np.asarray(z, dtype=complex)
    s = np.where(z.real < 0, -z, z)
    return s + np.log1p(np.exp(-2.0 * s))


class Ansatz:
    N: int
    n_params: int
    name: str

    def check(self, theta: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=complex)
        if theta.shape != (self.n_params,):
            raise LayoutError(
                f"{self.name}: expected {self.n_params} parameters, got shape {theta.shape}")
        return theta

    def amplitude_ratio(self, theta, x, flip_sites) -> complex:
        """psi(x') / psi(x) with ``x'`` = ``x`` flipped on ``flip_sites`` (0, 1 or 2 sites)."""
        flip_sites = list(flip_sites)
        if len(set(flip_sites)) != len(flip_sites):
            raise ValueError("duplicate flip sites")
        if not flip_sites:
            return 1.0 + 0.0j
        if len(flip_sites) > 2:
            raise ValueError("at most two flip sites")
        x = np.asarray(x, dtype=float)[None, :]
        if len(flip_sites) == 1:
            return complex(np.exp(self.flip_log_ratios(theta, x)[0, flip_sites[0]]))
        a, b = flip_sites
        return complex(np.exp(self.pair_flip_log_ratios(theta, x)[0, a, b]))

    # subclasses implement: log_amplitude, log_derivatives, flip_log_ratios,
    # pair_flip_log_ratios, init_paramagnetic, chain_cache, metropolis


class Jastrow(Ansatz):
    """Long-range Jastrow state on a ring with distance sharing beyond ``d``."""

    def __init__(self, N: int, sharing_distance: int | None = None):
        if sharing_distance is None:
            sharing_distance = N - 1
        if not 0 <= sharing_distance <= max(N - 1, 0):
            raise ValueError(f"sharing distance must lie in [0, N-1], got {sharing_distance}")
        self.N = N
        self.d = sharing_distance
        self.name = f"LJ(d={self.d})"
        slot = -np.ones((N, N), dtype=np.int64)
        k = N
        for i in range(N):
            for j in range(i + 1, N):
                if minimal_image_distance(i, j, N) <= self.d:
                    slot[i, j] = slot[j, i] = k
                    k += 1
        self.n_unshared = k - N
        self.shared_distances = list(range(self.d + 1, N // 2 + 1))
        dist_slot = {D: k + m for m, D in enumerate(self.shared_distances)}
        for i in range(N):
            for j in range(i + 1, N):
                D = minimal_image_distance(i, j, N)
                if D > self.d:
                    slot[i, j] = slot[j, i] = dist_slot[D]
        self.pair_slot = slot
        self.n_params = k + len(self.shared_distances)

    def eta_matrix(self, theta) -> np.ndarray:
        theta = self.check(theta)
        eta = np.zeros((self.N, self.N), dtype=complex)
        mask = self.pair_slot >= 0
        eta[mask] = theta[self.pair_slot[mask]]
        return eta

    def field(self, theta, x) -> np.ndarray:
        """``a_i + sum_k eta_ik s_k``, the cached quantity for single flips."""
        theta = self.check(theta)
        return theta[: self.N] + np.atleast_2d(x) @ self.eta_matrix(theta)

    def log_amplitude(self, theta, x) -> np.ndarray:
        theta = self.check(theta)
        x = np.atleast_2d(x)
        eta = self.eta_matrix(theta)
        return x @ theta[: self.N] + 0.5 * ((x @ eta) * x).sum(axis=1)

    def log_derivatives(self, theta, x) -> np.ndarray:
        # spin products only, so the result is real
        self.check(theta)
        x = np.atleast_2d(x)
        out = np.empty((x.shape[0], self.n_params))
        out[:, : self.N] = x
        if self.n_params > self.N:
            out[:, self.N:] = 0.0
            _pair_features(np.ascontiguousarray(x, dtype=float), self.pair_slot - self.N,
                           out[:, self.N:])
        return out

    def flip_log_ratios(self, theta, x) -> np.ndarray:
        x = np.atleast_2d(x)
        return -2.0 * x * self.field(theta, x)

    def pair_flip_log_ratios(self, theta, x) -> np.ndarray:
        x = np.atleast_2d(x)
        r = self.flip_log_ratios(theta, x)
        eta = self.eta_matrix(theta)
        out = r[:, :, None] + r[:, None, :] + 4.0 * x[:, :, None] * x[:, None, :] * eta[None]
        idx = np.arange(self.N)
        out[:, idx, idx] = 0.0
        return out

    def init_paramagnetic(self, rng=None, scale: float = 0.0) -> np.ndarray:
        return np.zeros(self.n_params, dtype=complex)

    def chain_cache(self, theta, spins) -> np.ndarray:
        return self.field(theta, spins[None, :])[0]

    def metropolis(self, theta, spins, cache, sites, log_u, stride, out) -> int:
        return _jastrow_chain(spins, cache, self.eta_matrix(theta), sites, log_u, stride, out)


class RBM(Ansatz):
    """Restricted Boltzmann machine with ``n_hidden`` complex hidden units.

    Layout: ``(a_1..a_N, b_1..b_Nh, w_11..w_1Nh, w_21, .., w_NNh)``.
    """

    def __init__(self, N: int, n_hidden: int | None = None):
        if n_hidden is None:
            n_hidden = N
        if n_hidden < 1:
            raise ValueError("RBM needs at least one hidden unit")
        self.N = N
        self.n_hidden = n_hidden
        self.name = f"RBM(Nh={n_hidden})"
        self.n_params = N * n_hidden + N + n_hidden

    def unpack(self, theta):
        theta = self.check(theta)
        N, H = self.N, self.n_hidden
        return theta[:N], theta[N:N + H], theta[N + H:].reshape(N, H)

    def gamma(self, theta, x) -> np.ndarray:
        _, b, w = self.unpack(theta)
        return b + np.atleast_2d(x) @ w

    def log_amplitude(self, theta, x) -> np.ndarray:
        a, _, _ = self.unpack(theta)
        x = np.atleast_2d(x)
        return x @ a + log2cosh(self.gamma(theta, x)).sum(axis=1)

    def log_derivatives(self, theta, x) -> np.ndarray:
        x = np.atleast_2d(x)
        t = np.tanh(self.gamma(theta, x))
        n = x.shape[0]
        return np.concatenate(
            [x.astype(complex), t, (x[:, :, None] * t[:, None, :]).reshape(n, -1)], axis=1)

    def flip_log_ratios(self, theta, x) -> np.ndarray:
        a, _, w = self.unpack(theta)
        x = np.atleast_2d(x)
        g = self.gamma(theta, x)
        base = log2cosh(g).sum(axis=1)
        shifted = g[:, None, :] - 2.0 * x[:, :, None] * w[None, :, :]
        return -2.0 * x * a + log2cosh(shifted).sum(axis=2) - base[:, None]

    def pair_flip_log_ratios(self, theta, x) -> np.ndarray:
        a, _, w = self.unpack(theta)
        x = np.atleast_2d(x)
        n, N = x.shape
        g = self.gamma(theta, x)
        base = log2cosh(g).sum(axis=1)
        dg = -2.0 * x[:, :, None] * w[None, :, :]          # (n, N, H)
        out = np.zeros((n, N, N), dtype=complex)
        lin = -2.0 * x * a
        for i in range(N):
            shifted = g[:, None, :] + dg[:, i:i + 1, :] + dg
            out[:, i, :] = lin[:, i:i + 1] + lin + log2cosh(shifted).sum(axis=2) - base[:, None]
            out[:, i, i] = 0.0
        return out

    def init_paramagnetic(self, rng=None, scale: float = 1e-3) -> np.ndarray:
        """Zero biases; couplings get a small complex Gaussian kick.

        At exactly zero the hidden-unit derivatives vanish identically, so
        the equations of motion cannot leave the paramagnet.
        """
        theta = np.zeros(self.n_params, dtype=complex)
        if scale > 0:
            rng = np.random.default_rng() if rng is None else rng
            m = self.N * self.n_hidden
            theta[self.N + self.n_hidden:] = scale * (
                rng.standard_normal(m) + 1j * rng.standard_normal(m)) / np.sqrt(2)
        return theta

    def chain_cache(self, theta, spins) -> np.ndarray:
        return self.gamma(theta, spins[None, :])[0]

    def metropolis(self, theta, spins, cache, sites, log_u, stride, out) -> int:
        a, _, w = self.unpack(theta)
        return _rbm_chain(spins, cache, np.ascontiguousarray(a), np.ascontiguousarray(w),
                          sites, log_u, stride, out)


def parameter_count(kind: str, N: int, hidden: int | None = None,
                    sharing_distance: int | None = None) -> int:
    """Number of complex parameters for ``kind`` in {"rbm", "jastrow"}."""
    return make_ansatz({"kind": kind, "hidden": hidden,
                        "sharing_distance": sharing_distance}, N).n_params


def make_ansatz(spec: dict, N: int) -> Ansatz:
    """Build an ansatz from a config dict.

    ``kind`` accepts "rbm", "jastrow" and the shorthands "LJNH", "LJH",
    "LJPH<d>".
    """
    kind = str(spec.get("kind", "jastrow"))
    up = kind.upper()
    if up == "RBM":
        return RBM(N, spec.get("hidden") or N)
    if up == "LJNH":
        return Jastrow(N, N - 1)
    if up == "LJH":
        return Jastrow(N, 0)
    if up.startswith("LJPH"):
        return Jastrow(N, int(up[4:]))
    if up in ("JASTROW", "LJ"):
        return Jastrow(N, spec.get("sharing_distance"))
    raise ValueError(f"unknown ansatz kind {kind!r}")


# -- Metropolis kernels -------------------------------------------------------------
#
# One proposal per entry of ``sites``; ``log_u`` holds log-uniforms for the
# accept test.  Every ``stride`` proposals the configuration is copied to the
# next row of ``out`` (``out`` may have zero rows for pure thermalisation).


@numba.njit(cache=True)
def _pair_features(x, slot, out):
    # out[s, slot[i, j]] += x_i x_j over unordered pairs
    n, N = x.shape
    for s in range(n):
        for i in range(N):
            xi = x[s, i]
            for j in range(i + 1, N):
                out[s, slot[i, j]] += xi * x[s, j]


@numba.njit(cache=True)
def _jastrow_chain(spins, field, eta, sites, log_u, stride, out):
    N = spins.shape[0]
    accepted = 0
    row = 0
    for p in range(sites.shape[0]):
        a = sites[p]
        s = spins[a]
        lr = -2.0 * s * field[a].real
        if log_u[p] < 2.0 * lr:
            for k in range(N):
                field[k] -= 2.0 * s * eta[k, a]
            spins[a] = -s
            accepted += 1
        if stride > 0 and (p + 1) % stride == 0 and row < out.shape[0]:
            out[row, :] = spins
            row += 1
    return accepted


@numba.njit(cache=True)
def _log2cosh_scalar(z):
    if z.real < 0:
        z = -z
    return z + np.log1p(np.exp(-2.0 * z))


@numba.njit(cache=True)
def _rbm_chain(spins, gamma, a, w, sites, log_u, stride, out):
    H = gamma.shape[0]
    accepted = 0
    row = 0
    for p in range(sites.shape[0]):
        i = sites[p]
        s = spins[i]
        lr = -2.0 * s * a[i].real
        for j in range(H):
            lr += (_log2cosh_scalar(gamma[j] - 2.0 * s * w[i, j])
                   - _log2cosh_scalar(gamma[j])).real
        if log_u[p] < 2.0 * lr:
            for j in range(H):
                gamma[j] -= 2.0 * s * w[i, j]
            spins[i] = -s
            accepted += 1
        if stride > 0 and (p + 1) % stride == 0 and row < out.shape[0]:
            out[row, :] = spins
            row += 1
    return accepted
