import numpy as np
import pytest

from otvmc.ansatz import RBM, Jastrow
from otvmc.sampler import (SamplerConfig, SampleSet, all_configurations, draw_samples,
                           exact_samples, metropolis_sweep, new_chain)


def exact_probs(ans, theta):
    x = all_configurations(ans.N)
    lp = 2 * ans.log_amplitude(theta, x).real
    p = np.exp(lp - lp.max())
    return x, p / p.sum()


def batch_mean_err(v, n_batches=20):
    """Mean and batch-means standard error (robust to autocorrelation)."""
    b = np.array_split(v, n_batches)
    means = np.array([c.mean(axis=0) for c in b])
    return v.mean(axis=0), means.std(axis=0, ddof=1) / np.sqrt(n_batches)


def aligned_jastrow(N, strength=0.4, seed=0):
    ans = Jastrow(N)
    rng = np.random.default_rng(seed)
    theta = np.zeros(ans.n_params, dtype=complex)
    theta[:N] = 0.2 * rng.normal(size=N)
    theta[N:] = strength + 0.3j * rng.normal(size=ans.n_params - N)
    return ans, theta


def test_uniform_state_accepts_everything():
    ans = Jastrow(6)
    theta = np.zeros(ans.n_params)
    chain = new_chain(ans, theta, np.random.default_rng(0))
    acc = metropolis_sweep(ans, theta, chain, 50)
    assert acc == 300 and chain.acceptance_rate == 1.0


def test_zero_samples():
    ans = Jastrow(4)
    theta = np.zeros(ans.n_params)
    s = draw_samples(ans, theta, SamplerConfig(n_samples=0), new_chain(ans, theta, np.random.default_rng(0)))
    assert len(s) == 0


def test_uniform_mean_spin_zero():
    ans = Jastrow(8)
    theta = np.zeros(ans.n_params)
    chain = new_chain(ans, theta, np.random.default_rng(1))
    s = draw_samples(ans, theta, SamplerConfig(n_samples=20000), chain)
    m, err = batch_mean_err(s.x)
    assert np.all(np.abs(m) < 3 * err + 1e-12)


def test_aligned_state_statistics():
    N = 4
    ans, theta = aligned_jastrow(N, strength=0.8)
    chain = new_chain(ans, theta, np.random.default_rng(2))
    s = draw_samples(ans, theta, SamplerConfig(n_samples=40000), chain)
    assert chain.acceptance_rate < 1.0
    x, p = exact_probs(ans, theta)
    exact = p @ (x[:, 0] * x[:, 1])
    m, err = batch_mean_err(s.x[:, 0] * s.x[:, 1])
    assert abs(m - exact) < 3 * err
    assert m > 0.3                       # biased toward aligned pairs


@pytest.mark.parametrize("make", [lambda N: aligned_jastrow(N, 0.15, seed=N),
                                  lambda N: (RBM(N, 3), 0.3 * np.random.default_rng(N).normal(size=RBM(N, 3).n_params)
                                             * (1 + 0.5j))])
@pytest.mark.parametrize("N", [3, 6, 10])
def test_moments_match_enumeration(make, N):
    ans, theta = make(N)
    chain = new_chain(ans, theta, np.random.default_rng(10 + N))
    s = draw_samples(ans, theta, SamplerConfig(n_samples=40000, sweeps_between_samples=5), chain)
    x, p = exact_probs(ans, theta)
    iu, ju = np.triu_indices(N, 1)
    for feats, ex in ((s.x, x), (s.x[:, iu] * s.x[:, ju], x[:, iu] * x[:, ju])):
        m, err = batch_mean_err(feats)
        exact = p @ ex
        # 3 sigma per entry; with up to 45 simultaneous entries allow one
        # excursion past 3 sigma but none past 4.5
        z = np.abs(m - exact) / np.maximum(err, 1e-12)
        assert np.sum(z > 3) <= 1 and np.all(z < 4.5)


def test_detailed_balance_two_sites():
    ans = Jastrow(2)
    theta = np.array([0.3, -0.2, 0.5 + 0.4j])
    x, p = exact_probs(ans, theta)
    rng = np.random.default_rng(4)
    spins = np.array([1.0, 1.0])
    cache = ans.chain_cache(theta, spins)
    n_prop = 2_000_000                   # 10^6 sweeps
    sites = rng.integers(0, 2, size=n_prop)
    log_u = np.log(rng.random(n_prop))
    out = np.empty((n_prop, 2))
    ans.metropolis(theta, spins, cache, sites, log_u, 1, out)
    idx = ((out[:, 0] < 0) * 2 + (out[:, 1] < 0)).astype(int)   # row index in all_configurations
    counts = np.zeros((4, 4))
    np.add.at(counts, (idx[:-1], idx[1:]), 1)
    flow = counts / counts.sum()
    for a in range(4):
        for b in range(a + 1, 4):
            if counts[a, b] + counts[b, a] == 0:
                continue
            sigma = np.sqrt(counts[a, b] + counts[b, a]) / counts.sum()
            assert abs(flow[a, b] - flow[b, a]) < 3 * sigma
            # and against the exact kernel p(x) T(x -> x')
            T = 0.5 * min(1.0, p[b] / p[a])
            assert abs(flow[a, b] - p[a] * T) < 5 * np.sqrt(p[a] * T / counts.sum())


@pytest.mark.parametrize("ans", [Jastrow(7, 2), RBM(7, 4)])
def test_cache_stays_consistent(ans):
    rng = np.random.default_rng(5)
    theta = 0.3 * (rng.normal(size=ans.n_params) + 1j * rng.normal(size=ans.n_params))
    chain = new_chain(ans, theta, np.random.default_rng(6))
    metropolis_sweep(ans, theta, chain, 200)
    fresh = ans.chain_cache(theta, chain.spins)
    assert np.allclose(chain.cache, fresh, rtol=1e-10, atol=1e-10)


def test_seed_determinism():
    ans, theta = aligned_jastrow(6)
    cfg = SamplerConfig(n_samples=500)
    a = draw_samples(ans, theta, cfg, new_chain(ans, theta, np.random.default_rng(9)))
    b = draw_samples(ans, theta, cfg, new_chain(ans, theta, np.random.default_rng(9)))
    assert a.x.tobytes() == b.x.tobytes()


def test_warm_chain_uses_short_rethermalisation():
    ans, theta = aligned_jastrow(5)
    cfg = SamplerConfig(n_samples=10, thermalization_sweeps=100, rethermalization_sweeps=10)
    chain = new_chain(ans, theta, np.random.default_rng(0))
    draw_samples(ans, theta, cfg, chain)
    assert chain.proposed == (100 + 10) * 5
    draw_samples(ans, theta, cfg, chain)
    assert chain.proposed == (100 + 10 + 10 + 10) * 5


def test_exact_samples():
    ans, theta = aligned_jastrow(4)
    s = exact_samples(ans, theta)
    x, p = exact_probs(ans, theta)
    assert s.exact and np.allclose(s.weights, p) and np.array_equal(s.x, x)
    assert all_configurations(3)[0].tolist() == [1, 1, 1]
    assert all_configurations(3)[1].tolist() == [1, 1, -1]


def test_config_validation():
    with pytest.raises(ValueError):
        SamplerConfig(sweeps_between_samples=0)
    with pytest.raises(ValueError):
        SamplerConfig(n_samples=-1)
    assert len(SampleSet.uniform(np.zeros((0, 3)))) == 0
