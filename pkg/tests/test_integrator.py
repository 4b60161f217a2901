import numpy as np
import pytest

from otvmc.ansatz import make_ansatz
from otvmc.engine import RegularizationConfig
from otvmc.integrator import (advance_trajectory, init_trajectory, integrate_norm_Q, integrate_sde,
                              predictor_corrector, wiener_increments)
from otvmc.model import ModelSpec
from otvmc.oracle import DenseSystem, dense_sse_trajectory
from otvmc.sampler import SamplerConfig, all_configurations

EXACT = SamplerConfig(exact=True)
REG = RegularizationConfig()


def run_exact(model, kind, n_steps, dt=1e-3, mode="nonlinear", scheme="midpoint", seed=3,
              track_gauge=False):
    ans = make_ansatz({"kind": kind}, model.N)
    tr = init_trajectory(ans, model, EXACT, np.random.SeedSequence(seed), mode=mode,
                         track_gauge=track_gauge)
    thetas, dWs, phis, logQ = [tr.theta.copy()], [], [tr.phi], [tr.log_Q]
    for _ in range(n_steps):
        advance_trajectory(tr, model, EXACT, REG, scheme, dt)
        thetas.append(tr.theta.copy())
        dWs.append(tr.last_dW)
        phis.append(tr.phi)
        logQ.append(tr.log_Q)
    return ans, np.array(thetas), np.array(dWs).reshape(n_steps, model.n_channels), phis, logQ


def amplitudes(ans, theta):
    return np.exp(ans.log_amplitude(theta, all_configurations(ans.N)))


def infidelity(a, b):
    return 1 - abs(np.vdot(a, b)) ** 2 / (np.vdot(a, a).real * np.vdot(b, b).real)


class TestPrimitives:
    def test_wiener_moments(self):
        rng = np.random.default_rng(0)
        dt = 1e-3
        w = np.array([wiener_increments(rng, 4, dt) for _ in range(50000)])
        assert w.shape == (50000, 4)
        assert np.all(np.abs(w.mean(axis=0)) < 4 * np.sqrt(dt / 50000))
        assert np.allclose(w.var(axis=0), dt, rtol=0.03)
        assert wiener_increments(rng, 0, dt).shape == (0,)

    def test_unknown_scheme(self):
        with pytest.raises(ValueError):
            predictor_corrector(lambda x: (x, None), np.ones(1), "rk4")

    def test_deterministic_linear_ode(self):
        # dx = -x dt: midpoint and trapezoid are both second order
        for scheme in ("midpoint", "trapezoidal"):
            errs = []
            for n in (50, 100):
                dt = 1.0 / n
                x = integrate_sde(lambda y: -y, lambda y: np.zeros(y.shape + (0,)), [1.0], dt,
                                  np.zeros((n, 0)), scheme)[-1, 0]
                errs.append(abs(x - np.exp(-1)))
            assert errs[0] / errs[1] == pytest.approx(4, rel=0.1)

    @pytest.mark.parametrize("scheme", ["midpoint", "trapezoidal"])
    def test_geometric_noise_strong_convergence(self, scheme):
        # dX = X o dW has X = exp(W) under Stratonovich calculus
        rng = np.random.default_rng(1)
        n_paths, T = 400, 1.0
        errs = []
        fine = rng.normal(0, np.sqrt(T / 256), size=(n_paths, 256))
        for n in (16, 64, 256):
            dW = fine.reshape(n_paths, n, 256 // n).sum(axis=2)
            err = 0.0
            for p in range(n_paths):
                x = integrate_sde(lambda y: 0 * y, lambda y: y[..., None], [1.0], T / n,
                                  dW[p][:, None], scheme)[-1, 0]
                err += abs(x - np.exp(dW[p].sum()))
            errs.append(err / n_paths)
        # an Ito-type (Euler) rule would converge to exp(W - t/2) instead
        assert errs[-1] < 0.02
        assert errs[0] / errs[2] > 4          # strong order about one: 16x for 16x smaller dt


class TestVariationalTrajectory:
    def test_no_dynamics_keeps_parameters(self):
        model = ModelSpec(N=4, J=0.0, h=0.0)
        ans, thetas, *_ = run_exact(model, "LJNH", 20)
        assert np.array_equal(thetas[-1], thetas[0])

    @pytest.mark.parametrize("N", [2, 3, 4])
    def test_exact_for_closed_ising(self, N):
        # a full Jastrow represents the h = 0 closed dynamics exactly
        model = ModelSpec(N=N, alpha=0.8)
        n, dt = 1000, 1e-3
        ans, thetas, dW, *_ = run_exact(model, "LJNH", n, dt)
        path = dense_sse_trajectory(model, DenseSystem(model).coherent_x(), dt, n, dW=dW)
        for i in range(0, n + 1, 100):
            assert infidelity(amplitudes(ans, thetas[i]), path[i]) < 1e-6

    @pytest.mark.parametrize("mode", ["nonlinear", "linear"])
    def test_dissipative_path_tracks_dense(self, mode):
        model = ModelSpec(N=4, kappa=0.5)
        n, dt = 300, 1e-3
        ans, thetas, dW, *_ = run_exact(model, "LJNH", n, dt, mode)
        path = dense_sse_trajectory(model, DenseSystem(model).coherent_x(), dt, n, mode, dW=dW)
        assert max(infidelity(amplitudes(ans, thetas[i]), path[i]) for i in range(0, n + 1, 50)) < 2e-3

    @pytest.mark.parametrize("h", [0.0, 0.6])
    def test_complete_ansatz_tracks_dissipative_path(self, h):
        # at N = 2 the Jastrow spans every state with nonzero amplitudes, so
        # jumps and the Stratonovich noise terms carry no projection error
        model = ModelSpec(N=2, kappa=0.5, h=h)
        n, dt = 500, 1e-3
        ans, thetas, dW, *_ = run_exact(model, "LJNH", n, dt, seed=5)
        path = dense_sse_trajectory(model, DenseSystem(model).coherent_x(), dt, n, dW=dW, passes=3)
        assert max(infidelity(amplitudes(ans, thetas[i]), path[i]) for i in range(0, n + 1, 50)) < 1e-6

    def test_schemes_agree(self):
        model = ModelSpec(N=3, h=0.3, kappa=0.4)
        a = run_exact(model, "LJNH", 100, scheme="midpoint")[1][-1]
        b = run_exact(model, "LJNH", 100, scheme="trapezoidal")[1][-1]
        assert np.allclose(a, b, atol=2e-3)

    def test_gauge_track(self):
        # e^phi psi_theta follows the dense normalised state including its phase
        model = ModelSpec(N=2, h=0.0, kappa=0.5)
        n, dt = 100, 1e-3
        ans, thetas, dW, phis, _ = run_exact(model, "LJNH", n, dt, track_gauge=True)
        path = dense_sse_trajectory(model, DenseSystem(model).coherent_x(), dt, n, dW=dW, passes=5)
        for i in range(0, n + 1, 10):
            v = np.exp(phis[i]) * amplitudes(ans, thetas[i])
            assert np.linalg.norm(v - path[i]) < 1e-3

    def test_norm_track(self):
        # linear mode: Q is the squared norm of the unnormalised dense state
        model = ModelSpec(N=2, kappa=0.8)
        n, dt = 200, 1e-3
        ans, thetas, dW, _, logQ = run_exact(model, "LJNH", n, dt, "linear")
        path = dense_sse_trajectory(model, DenseSystem(model).coherent_x(), dt, n, "linear", dW=dW,
                                    passes=5)
        for i in range(0, n + 1, 20):
            assert np.exp(logQ[i]) == pytest.approx(np.vdot(path[i], path[i]).real, rel=1e-3)
        assert abs(logQ[-1]) > 1e-3          # the norm actually moves

    def test_norm_only_in_linear_mode(self):
        model = ModelSpec(N=2, kappa=0.5)
        ans = make_ansatz({"kind": "LJNH"}, 2)
        tr = init_trajectory(ans, model, EXACT, np.random.SeedSequence(0))
        info = advance_trajectory(tr, model, EXACT, REG)
        assert tr.log_Q == 0.0
        with pytest.raises(ValueError):
            integrate_norm_Q(info.estimates, info.dW, 1e-3)

    def test_determinism(self):
        model = ModelSpec(N=6, h=0.2, kappa=0.3)
        ans = make_ansatz({"kind": "LJPH1"}, 6)
        cfg = SamplerConfig(n_samples=200)
        out = []
        for _ in range(2):
            tr = init_trajectory(ans, model, cfg, np.random.SeedSequence(11))
            for _ in range(5):
                advance_trajectory(tr, model, cfg, REG)
            out.append(tr.theta.tobytes())
        assert out[0] == out[1]

    def test_bad_mode(self):
        with pytest.raises(ValueError):
            init_trajectory(make_ansatz({"kind": "LJNH"}, 2), ModelSpec(N=2), EXACT,
                            np.random.SeedSequence(0), mode="ito")
