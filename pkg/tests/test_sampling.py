"""Sampler exactness: inverse CDF, jump law, initial laws, chain contracts."""

import math

import numpy as np
import pytest
from scipy import stats as sps

from phonongas import model, sampling
from phonongas.sampling import InitialLaw, RandomStream


def test_ppf_residual_and_special_values():
    gen = np.random.default_rng(0)
    u = np.concatenate([gen.random(1_000_000),
                        [0.0, 1.0, 0.5, 1e-300, 1e-18, 1e-9, 1 - 1e-9, 1e-4]])
    x = sampling.sin2_ppf(u)
    resid = np.abs(sampling.sin2_cdf(x) - u)
    assert resid.max() <= 1e-12
    assert abs(sampling.sin2_ppf(0.5) - 0.5) <= 1e-13
    # F(0.25) = 0.25 - 1/(2 pi), direct evaluation of the CDF
    u0 = 0.25 - 1.0 / (2.0 * math.pi)
    assert abs(u0 - 0.09084505690810464) < 1e-16
    assert abs(sampling.sin2_ppf(u0) - 0.25) < 1e-12
    assert abs(sampling.sin2_cdf(0.25) - u0) < 1e-16
    # monotone
    su = np.sort(u)
    assert np.all(np.diff(sampling.sin2_ppf(su)) >= 0.0)


def test_sample_sin2_ks():
    draws = sampling.sample_sin2(RandomStream(314, 0), size=1_000_000)
    res = sps.kstest(draws, sampling.sin2_cdf, mode="asymp")
    assert res.pvalue > 0.001


def test_sample_jump_chi_square():
    k0 = np.array([0.25, 0.25])
    draws = sampling.sample_jump(RandomStream(314, 1), k0, size=1_000_000)
    bins = 16
    edges = np.linspace(0.0, 1.0, bins + 1)
    counts, *_ = np.histogram2d(draws[:, 0], draws[:, 1], bins=[edges, edges])
    w = model.component_weights(k0)
    pf = np.diff(sampling.sin2_cdf(edges))
    pu = np.diff(edges)
    probs = w[0] * np.outer(pf, pu) + w[1] * np.outer(pu, pf)
    expected = probs * counts.sum()
    stat = (((counts - expected) ** 2) / expected).sum()
    p = sps.chi2.sf(stat, bins * bins - 1)
    assert p > 0.001


def test_sample_jump_component_selection():
    # out of (0.25, 0.5) component 1 carries weight 1/3; E[cos(2 pi k1')] is
    # -1/2 under the sin2 law and 0 under the uniform one
    draws = sampling.sample_jump(RandomStream(314, 2), (0.25, 0.5), size=400_000)
    c = np.cos(2 * np.pi * draws[:, 0])
    w1_hat = -2.0 * c.mean()
    se = 2.0 * c.std(ddof=1) / math.sqrt(len(c))
    assert abs(w1_hat - 1.0 / 3.0) < 3.0 * se


def test_sample_jump_uniform_marginal():
    # from (0.5, 0.0) only component 1 can be selected, so k2' is uniform
    draws = sampling.sample_jump(RandomStream(314, 3), (0.5, 0.0), size=200_000)
    assert sps.kstest(draws[:, 1], "uniform", mode="asymp").pvalue > 0.001
    assert sps.kstest(draws[:, 0], sampling.sin2_cdf, mode="asymp").pvalue > 0.001
    with pytest.raises(model.DegenerateStateError):
        sampling.sample_jump(RandomStream(314, 4), (0.0, 0.0))


def test_sample_initial_uniform_moment():
    gen = RandomStream(314, 5).generator()
    ks = np.array([sampling.sample_initial(gen)[0] for _ in range(200_000)])
    q = ((ks - 0.5) ** 2).sum(axis=1)
    se = q.std(ddof=1) / math.sqrt(len(q))
    assert abs(q.mean() - 1.0 / 6.0) < 3.0 * se


def test_sample_initial_point_and_annulus():
    law = InitialLaw("point", k0=(0.25, 0.25), i0=2)
    gen = RandomStream(314, 6).generator()
    for _ in range(5):
        k, pol = sampling.sample_initial(gen, law)
        np.testing.assert_array_equal(k, [0.25, 0.25])
        assert pol == 2
    law = InitialLaw("annulus", delta=0.1)
    gen = RandomStream(314, 7).generator()
    for _ in range(5000):
        k, _ = sampling.sample_initial(gen, law)
        d = np.minimum(k, 1.0 - k)
        assert np.hypot(d[0], d[1]) >= 0.1
    with pytest.raises(ValueError):
        InitialLaw("point", k0=(0.0, 0.0))
    with pytest.raises(ValueError):
        InitialLaw("annulus", delta=0.0)
    with pytest.raises(ValueError):
        InitialLaw("vortex")


def test_chain_determinism_and_invariants():
    stream = RandomStream(99, 42)
    a = sampling.simulate_chain(stream, n_steps=5000)
    b = sampling.simulate_chain(stream, n_steps=5000)
    np.testing.assert_array_equal(a.wave, b.wave)
    np.testing.assert_array_equal(a.draws, b.draws)
    np.testing.assert_array_equal(a.displacements, b.displacements)
    assert np.array_equal(a.polarization, b.polarization)
    # wait * rate = draw, displacement = wait * velocity (up to a few ulp)
    rate = model.total_rate(a.wave[:-1])
    np.testing.assert_allclose(a.waits * rate, a.draws, rtol=5e-15)
    vel = model.velocity(a.wave[:-1])
    np.testing.assert_allclose(a.displacements, a.waits[:, None] * vel,
                               rtol=1e-13, atol=1e-18)
    # polarization alternates
    assert np.all(np.abs(np.diff(a.polarization)) == 1)
    # states stay on the torus and never hit the origin
    assert np.all((a.wave >= 0.0) & (a.wave < 1.0))
    assert np.all(model.total_rate(a.wave) > 0.0)
    # ChainStep view
    step = a.step(3)
    assert step.index == 3
    assert step.wait == a.waits[3]


def test_chain_respects_initial_law():
    law = InitialLaw("point", k0=(0.25, 0.25), i0=1)
    chain = sampling.simulate_chain(RandomStream(1, 2), law, n_steps=10)
    np.testing.assert_array_equal(chain.wave[0], [0.25, 0.25])
    assert chain.polarization[0] == 1


def test_stream_independence():
    u0 = RandomStream(7, 0).generator().random(100_000)
    u1 = RandomStream(7, 1).generator().random(100_000)
    rho = np.corrcoef(u0, u1)[0, 1]
    assert abs(rho) < 3.0 / math.sqrt(100_000)


def test_chain_marginal_matches_multi_step_density():
    # from a point mass, the m-step marginal is the m-step density
    from phonongas import _kernels
    k0 = (0.25, 0.3)
    grid = model.get_grid(256)
    for m_steps in (1, 2):
        gen = RandomStream(314, 8 + m_steps).generator()
        samples = np.empty((150_000, 2))
        _kernels.multi_step_samples(gen, k0[0], k0[1], m_steps, 150_000, samples)
        A = model.mixing_matrix(m_steps, grid)
        wv = model.component_weights(np.asarray(k0)) @ A
        edges = np.linspace(0.0, 1.0, 17)
        pf = np.diff(sampling.sin2_cdf(edges))
        pu = np.diff(edges)
        probs = wv[0] * np.outer(pf, pu) + wv[1] * np.outer(pu, pf)
        counts, *_ = np.histogram2d(samples[:, 0], samples[:, 1],
                                    bins=[edges, edges])
        stat = (((counts - probs * counts.sum()) ** 2) / (probs * counts.sum())).sum()
        assert sps.chi2.sf(stat, 16 * 16 - 1) > 0.001
