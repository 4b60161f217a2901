import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from otvmc.ansatz import RBM, Jastrow, LayoutError, log2cosh, make_ansatz, parameter_count
from otvmc.model import minimal_image_distance
from otvmc.oracle import DenseSystem
from otvmc.model import ModelSpec
from otvmc.sampler import all_configurations


def random_theta(ans, rng, scale=0.4):
    return scale * (rng.normal(size=ans.n_params) + 1j * rng.normal(size=ans.n_params))


def random_spins(rng, n, N):
    return rng.choice([-1.0, 1.0], size=(n, N))


ANSATZ_CASES = [
    lambda N: RBM(N, 2),
    lambda N: RBM(N, N + 1),
    lambda N: Jastrow(N),
    lambda N: Jastrow(N, 0),
    lambda N: Jastrow(N, 1),
]


class TestLogAmplitude:
    def test_rbm_zero(self):
        ans = RBM(2, 2)
        x = all_configurations(2)
        assert np.allclose(ans.log_amplitude(np.zeros(ans.n_params), x), 2 * np.log(2))

    def test_jastrow_zero(self):
        ans = Jastrow(5)
        assert np.allclose(ans.log_amplitude(np.zeros(ans.n_params), all_configurations(5)), 0)

    def test_jastrow_pair(self):
        ans = Jastrow(2)
        theta = np.array([0, 0, 0.3])
        assert ans.log_amplitude(theta, np.array([[1.0, -1.0]]))[0] == pytest.approx(-0.3)

    def test_rbm_direct(self):
        rng = np.random.default_rng(0)
        ans = RBM(3, 2)
        theta = random_theta(ans, rng)
        a, b, w = ans.unpack(theta)
        x = np.array([1.0, -1.0, -1.0])
        ref = a @ x + np.log(2 * np.cosh(b + x @ w)).sum()
        assert np.exp(ans.log_amplitude(theta, x[None])[0]) == pytest.approx(np.exp(ref), rel=1e-12)

    def test_log2cosh_stable(self):
        z = np.array([800.0 + 0.3j, -800.0 + 1j, 0.1 - 0.2j])
        v = log2cosh(z)
        assert np.all(np.isfinite(v))
        assert np.exp(v[2]) == pytest.approx(2 * np.cosh(z[2]), rel=1e-14)
        assert v[0].real == pytest.approx(800.0)

    def test_layout_mismatch(self):
        with pytest.raises(LayoutError):
            Jastrow(4).log_amplitude(np.zeros(3), np.ones((1, 4)))


class TestDerivatives:
    def test_jastrow_bias_slots(self):
        rng = np.random.default_rng(1)
        ans = Jastrow(6, 2)
        x = random_spins(rng, 5, 6)
        O = ans.log_derivatives(random_theta(ans, rng), x)
        assert np.array_equal(O[:, :6], x)

    def test_rbm_zero_point(self):
        ans = RBM(4, 3)
        O = ans.log_derivatives(np.zeros(ans.n_params), all_configurations(4))
        assert np.allclose(O[:, 4:], 0)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, len(ANSATZ_CASES) - 1), st.integers(2, 7), st.integers(0, 2 ** 32 - 1))
    def test_finite_differences(self, case, N, seed):
        rng = np.random.default_rng(seed)
        ans = ANSATZ_CASES[case](N)
        theta = random_theta(ans, rng)
        x = random_spins(rng, 3, N)
        O = ans.log_derivatives(theta, x)
        h = 1e-6
        for k in range(ans.n_params):
            e = np.zeros(ans.n_params)
            e[k] = h
            fd = (ans.log_amplitude(theta + e, x) - ans.log_amplitude(theta - e, x)) / (2 * h)
            scale = np.maximum(np.abs(O[:, k]), 1.0)
            assert np.all(np.abs(fd - O[:, k]) / scale < 1e-6)


class TestRatios:
    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, len(ANSATZ_CASES) - 1), st.integers(2, 8), st.integers(0, 2 ** 32 - 1))
    def test_ratio_matches_recompute(self, case, N, seed):
        rng = np.random.default_rng(seed)
        ans = ANSATZ_CASES[case](N)
        theta = random_theta(ans, rng)
        x = random_spins(rng, 1, N)[0]
        k = rng.integers(1, 3)
        sites = list(rng.choice(N, size=k, replace=False))
        x2 = x.copy()
        x2[sites] *= -1
        ref = np.exp(ans.log_amplitude(theta, x2[None])[0] - ans.log_amplitude(theta, x[None])[0])
        assert ans.amplitude_ratio(theta, x, sites) == pytest.approx(ref, rel=1e-10)

    def test_empty_and_uniform(self):
        for ans in (Jastrow(4), RBM(4, 2)):
            theta = np.zeros(ans.n_params)
            x = np.array([1.0, -1.0, 1.0, 1.0])
            assert ans.amplitude_ratio(theta, x, []) == 1
            if isinstance(ans, Jastrow):
                assert ans.amplitude_ratio(theta, x, [2]) == pytest.approx(1)
                assert ans.amplitude_ratio(theta, x, [0, 3]) == pytest.approx(1)

    def test_duplicates_rejected(self):
        with pytest.raises(ValueError):
            Jastrow(4).amplitude_ratio(np.zeros(10), np.ones(4), [1, 1])

    @pytest.mark.parametrize("make", ANSATZ_CASES)
    def test_batched_tables(self, make):
        rng = np.random.default_rng(7)
        N = 5
        ans = make(N)
        theta = random_theta(ans, rng)
        x = random_spins(rng, 4, N)
        r1 = ans.flip_log_ratios(theta, x)
        r2 = ans.pair_flip_log_ratios(theta, x)
        base = ans.log_amplitude(theta, x)
        for a in range(N):
            xa = x.copy()
            xa[:, a] *= -1
            assert np.allclose(np.exp(r1[:, a]), np.exp(ans.log_amplitude(theta, xa) - base))
            for b in range(N):
                if a == b:
                    assert np.all(r2[:, a, a] == 0)
                    continue
                xab = xa.copy()
                xab[:, b] *= -1
                assert np.allclose(np.exp(r2[:, a, b]), np.exp(ans.log_amplitude(theta, xab) - base))


class TestInit:
    def test_jastrow_zero(self):
        for N in (2, 5, 9):
            assert np.array_equal(Jastrow(N).init_paramagnetic(), np.zeros(Jastrow(N).n_params))

    def test_rbm_bootstrap(self):
        ans = RBM(2, 2)
        theta = ans.init_paramagnetic(np.random.default_rng(0))
        a, b, w = ans.unpack(theta)
        assert np.all(a == 0) and np.all(b == 0)
        assert np.all(np.abs(w) <= 5e-3) and np.any(w != 0)

    @pytest.mark.parametrize("N", [2, 6, 12])
    def test_rbm_fidelity_with_coherent_state(self, N):
        ans = RBM(N)
        theta = ans.init_paramagnetic(np.random.default_rng(N))
        x = all_configurations(N)
        psi = np.exp(ans.log_amplitude(theta, x))
        psi /= np.linalg.norm(psi)
        coh = np.full(2 ** N, 2 ** (-N / 2))
        assert abs(np.vdot(coh, psi)) ** 2 > 1 - 1e-4

    def test_initial_magnetization(self):
        N = 6
        sys = DenseSystem(ModelSpec(N=N))
        for ans in (Jastrow(N), RBM(N)):
            theta = ans.init_paramagnetic(np.random.default_rng(0))
            psi = np.exp(ans.log_amplitude(theta, all_configurations(N)))
            m, _, _ = sys.pure_moments(psi[None])
            assert np.allclose(m[0], [1, 0, 0], atol=1e-3)


class TestLayout:
    def test_counts(self):
        assert parameter_count("rbm", 3, hidden=3) == 15
        assert parameter_count("LJNH", 4) == 10
        assert parameter_count("LJH", 4) == 6

    @pytest.mark.parametrize("N", [2, 3, 4, 7, 10, 11])
    def test_periodic_jastrow_counts(self, N):
        for d in range(N):
            pairs = [(i, j) for i in range(N) for j in range(i + 1, N)]
            unshared = sum(minimal_image_distance(i, j, N) <= d for i, j in pairs)
            classes = len(range(d + 1, N // 2 + 1))
            assert Jastrow(N, d).n_params == N + unshared + classes

    @pytest.mark.parametrize("N,d", [(8, 0), (8, 1), (9, 2), (6, 5)])
    def test_sharing_map(self, N, d):
        ans = Jastrow(N, d)
        slot = ans.pair_slot
        assert np.array_equal(slot, slot.T)
        by_distance = {}
        seen = set()
        for i in range(N):
            for j in range(i + 1, N):
                D = minimal_image_distance(i, j, N)
                if D > d:
                    by_distance.setdefault(D, set()).add(slot[i, j])
                else:
                    assert slot[i, j] not in seen      # unshared slots are unique
                    seen.add(slot[i, j])
        assert all(len(v) == 1 for v in by_distance.values())
        used = set(slot[np.triu_indices(N, 1)])
        assert used == set(range(N, ans.n_params))

    def test_translation_symmetry_of_shared_slots(self):
        # with uniform biases, summing shared-slot derivatives over a
        # translation orbit is invariant
        rng = np.random.default_rng(3)
        N, d = 8, 1
        ans = Jastrow(N, d)
        x = random_spins(rng, 1, N)
        shared = slice(ans.N + ans.n_unshared, ans.n_params)
        ref = ans.log_derivatives(np.zeros(ans.n_params), x)[0, shared]
        for s in range(1, N):
            xs = np.roll(x, s, axis=1)
            assert np.allclose(ans.log_derivatives(np.zeros(ans.n_params), xs)[0, shared], ref)

    def test_kinds(self):
        assert isinstance(make_ansatz({"kind": "rbm", "hidden": 3}, 4), RBM)
        assert make_ansatz({"kind": "LJPH2"}, 8).d == 2
        assert make_ansatz({"kind": "LJNH"}, 8).d == 7
        assert make_ansatz({"kind": "LJH"}, 8).d == 0
        with pytest.raises(ValueError):
            make_ansatz({"kind": "mps"}, 4)
        with pytest.raises(ValueError):
            Jastrow(4, 4)

    def test_resolved_eta_determines_amplitude(self):
        # two layouts that resolve to the same eta_jk give the same amplitude
        rng = np.random.default_rng(5)
        N = 6
        hom, full = Jastrow(N, 0), Jastrow(N, N - 1)
        th = random_theta(hom, rng)
        eta = hom.eta_matrix(th)
        th_full = np.zeros(full.n_params, dtype=complex)
        th_full[:N] = th[:N]
        for i in range(N):
            for j in range(i + 1, N):
                th_full[full.pair_slot[i, j]] = eta[i, j]
        x = all_configurations(N)
        assert np.allclose(hom.log_amplitude(th, x), full.log_amplitude(th_full, x))
