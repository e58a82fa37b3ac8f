"""Closed-form identities, quadrature oracles, and truncated-moment behavior."""

import math

import numpy as np
import pytest

from phonongas import model

GRID = model.get_grid(256)
SQ2 = math.sqrt(2.0)


def test_velocity_exact_points():
    np.testing.assert_allclose(model.velocity((0.25, 0.25)), [0.5, 0.5], atol=1e-15)
    np.testing.assert_allclose(model.velocity((0.5, 0.5)), [0.0, 0.0], atol=1e-15)
    # direct evaluation of the closed form near the origin
    t = 0.001
    expected = math.cos(math.pi * t) / SQ2
    v = model.velocity((t, t))
    np.testing.assert_allclose(v, [expected, expected], rtol=1e-13)
    assert abs(np.linalg.norm(v) - 1.0) < 1e-5
    assert round(expected, 5) == 0.70710


def test_velocity_conventions_and_bound():
    assert np.all(model.velocity((0.0, 0.0)) == 0.0)
    gen = np.random.default_rng(7)
    speeds = np.linalg.norm(model.velocity(gen.random((100_000, 2))), axis=-1)
    assert speeds.max() <= 1.0 + 1e-15


def test_total_rate():
    assert abs(model.total_rate((0.25, 0.25)) - 8.0) < 1e-12
    assert abs(model.total_rate((0.5, 0.5)) - 16.0) < 1e-12
    assert model.total_rate((0.0, 0.0)) == 0.0


def test_scattering_rate():
    assert abs(model.scattering_rate((0.25, 0.25), (0.5, 0.5)) - 16.0) < 1e-12
    assert model.scattering_rate((0.0, 0.0), (0.3, 0.8)) == 0.0
    gen = np.random.default_rng(3)
    a = gen.random((100, 2))
    b = gen.random((100, 2))
    np.testing.assert_array_equal(model.scattering_rate(a, b),
                                  model.scattering_rate(b, a))


def test_jump_density():
    assert abs(model.jump_density((0.25, 0.25), (0.5, 0.5)) - 2.0) < 1e-12
    with pytest.raises(model.DegenerateStateError):
        model.jump_density((0.0, 0.0), (0.3, 0.3))
    # normalization over k' by quadrature
    kp = np.stack([GRID.k1, GRID.k2], axis=-1)
    for k in [(0.25, 0.25), (0.1, 0.7), (0.45, 0.03)]:
        val = model.quadrature(model.jump_density(np.asarray(k), kp), GRID)
        assert abs(val - 1.0) < 1e-10


def test_detailed_balance_pointwise():
    gen = np.random.default_rng(11)
    a = gen.random((50_000, 2))
    b = gen.random((50_000, 2))
    lhs = model.stationary_density(a) * model.jump_density(a, b)
    rhs = model.stationary_density(b) * model.jump_density(b, a)
    assert np.abs(lhs - rhs).max() < 1e-12


def test_mean_displacement():
    np.testing.assert_allclose(model.mean_displacement((0.25, 0.25)),
                               [1.0 / 16.0, 1.0 / 16.0], rtol=1e-12)
    np.testing.assert_allclose(model.mean_displacement((0.5, 0.5)), [0.0, 0.0],
                               atol=1e-15)
    with pytest.raises(model.DegenerateStateError):
        model.mean_displacement((0.0, 0.0))
    # small-k expansion oracle: |d((t,t))| * 16 pi^2 t^2 -> 1
    for t, tol in [(1e-3, 1e-4), (1e-4, 1e-6)]:
        mag = np.linalg.norm(model.mean_displacement((t, t)))
        assert abs(mag * 16.0 * math.pi**2 * t * t - 1.0) < 3.3 * math.pi**2 * t**2 + tol


def test_component_weights():
    np.testing.assert_allclose(model.component_weights((0.25, 0.5)),
                               [1.0 / 3.0, 2.0 / 3.0], rtol=1e-12)
    np.testing.assert_allclose(model.component_weights((0.25, 0.25)), [0.5, 0.5],
                               rtol=1e-12)
    gen = np.random.default_rng(5)
    w = model.component_weights(gen.random((1000, 2)))
    np.testing.assert_allclose(w.sum(axis=-1), 1.0, rtol=1e-14)


def test_stationary_density_and_clock_mean():
    assert abs(model.quadrature(GRID.pi_density, GRID) - 1.0) < 1e-10
    assert abs(model.stationary_density((0.25, 0.25)) - 1.0) < 1e-12
    assert model.clock_mean(GRID) == 0.125


def test_quadrature_basics():
    assert abs(model.quadrature(np.ones_like(GRID.k1), GRID) - 1.0) < 1e-14
    g64 = model.get_grid(64)
    assert abs(model.quadrature(g64.rate, g64) - 8.0) < 1e-12
    assert abs(model.quadrature(g64.sin2_1 * g64.sin2_2, g64) - 0.25) < 1e-12
    with pytest.raises(ValueError):
        model.quadrature(np.full_like(g64.k1, np.nan), g64)


def test_coupling_matrix_golden():
    a512 = model.coupling_matrix(model.get_grid(512))
    # golden value frozen from the G = 512 quadrature; G = 1024 agrees < 1e-10
    assert abs(a512[0, 1] - 0.3633802276652611) < 1e-12
    a1024 = model.coupling_matrix(model.get_grid(1024))
    assert abs(a512[0, 1] - a1024[0, 1]) < 1e-10
    np.testing.assert_allclose(a512.sum(axis=1), 1.0, atol=1e-12)
    assert a512[0, 1] == a512[1, 0]


def test_mixing_matrix():
    assert np.array_equal(model.mixing_matrix(1, GRID), np.eye(2))
    a = model.coupling_matrix(GRID)
    np.testing.assert_allclose(model.mixing_matrix(3, GRID), a @ a, rtol=1e-14)
    for m in range(1, 21):
        np.testing.assert_allclose(model.mixing_matrix(m, GRID).sum(axis=1), 1.0,
                                   atol=1e-10)
    with pytest.raises(ValueError):
        model.mixing_matrix(0, GRID)


def test_multi_step_density_bound_and_convergence():
    gen = np.random.default_rng(13)
    k = gen.random((200, 2))
    kp = gen.random((200, 2))
    bound = 2.0 * (np.sin(np.pi * kp[:, 0]) ** 2 + np.sin(np.pi * kp[:, 1]) ** 2)
    for m in (1, 2, 5):
        dens = model.multi_step_density(m, k, kp, GRID)
        assert np.all(dens <= bound + 1e-12)
        assert np.all(dens >= 0.0)
    # sup-distance to the stationary density decays geometrically with ratio
    # a11 - a12 (second eigenvalue of the coupling matrix)
    g = model.get_grid(64)
    kp_grid = np.stack([g.k1, g.k2], axis=-1)
    k0 = np.array([0.15, 0.4])
    sups = [np.abs(model.multi_step_density(m, k0, kp_grid, GRID) - g.pi_density).max()
            for m in range(1, 9)]
    assert all(b < a for a, b in zip(sups, sups[1:]))
    a = model.coupling_matrix(GRID)
    lam2 = a[0, 0] - a[0, 1]
    ratios = [b / a_ for a_, b in zip(sups, sups[1:])]
    np.testing.assert_allclose(ratios, lam2, rtol=1e-6)


def test_jump_density_equals_one_step_density():
    gen = np.random.default_rng(17)
    k = gen.random((100, 2))
    kp = gen.random((100, 2))
    np.testing.assert_allclose(model.multi_step_density(1, k, kp, GRID),
                               model.jump_density(k, kp), rtol=1e-12)


MOMENT_GRID = model.get_grid(512)


def test_truncated_variance_properties():
    vals = [model.truncated_variance(model.E1, 2**e, MOMENT_GRID)
            for e in range(10, 21)]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    # symmetry between the coordinate axes
    for n in (2**10, 2**16):
        v1 = model.truncated_variance(model.E1, n, MOMENT_GRID)
        v2 = model.truncated_variance(model.E2, n, MOMENT_GRID)
        assert abs(v1 - v2) < 1e-12
    # ln-slope close to the limiting rate
    lnN = np.log([2.0**e for e in range(10, 21)])
    slope = np.polyfit(lnN, vals, 1)[0]
    assert abs(slope / model.LIMIT_VARIANCE_RATE - 1.0) < 0.2


def test_truncated_variance_validation():
    with pytest.raises(ValueError):
        model.truncated_variance((1.0, 1.0), 2**10, MOMENT_GRID)
    with pytest.raises(ValueError):
        model.truncated_variance(model.E1, 1, MOMENT_GRID)


def test_truncated_moment_odd_orders_vanish():
    # velocity is odd and the node set is reflection symmetric
    assert abs(model.truncated_moment(model.E1, 2**14, 3, MOMENT_GRID)) < 1e-15
    assert abs(model.truncated_moment(model.DIAGONAL, 2**14, 3, MOMENT_GRID)) < 1e-15


def test_overshoot_mean():
    vals = [model.overshoot_mean(1, 2**e, MOMENT_GRID) for e in range(10, 21)]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    scaled = [v * math.sqrt(2.0**e) for v, e in zip(vals, range(10, 21))]
    assert max(scaled) < 0.006  # fitted constant stays bounded
    assert abs(model.overshoot_mean(1, 2**12, MOMENT_GRID)
               - model.overshoot_mean(2, 2**12, MOMENT_GRID)) < 1e-14


def test_step_variance_tower_property():
    n = 2**14
    for lam in (model.E1, model.DIAGONAL):
        f1, f2 = model.step_variance_weights(lam, n, MOMENT_GRID)
        assert f1 > 0.0 and f2 > 0.0
        mean = 0.5 * (f1 + f2)
        target = model.truncated_variance(lam, n, MOMENT_GRID) / (n * math.log(n))
        assert abs(mean / target - 1.0) < 1e-8


def test_conditional_step_variance_bounds():
    n = 2**14
    gen = np.random.default_rng(23)
    k = gen.random((500, 2)) * 0.998 + 0.001
    f = model.conditional_step_variance(k, model.E1, n, MOMENT_GRID)
    scaled = n * f
    assert scaled.min() > 1e-3
    assert scaled.max() < 0.1
    with pytest.raises(model.DegenerateStateError):
        model.conditional_step_variance(np.array([0.0, 0.0]), model.E1, n, MOMENT_GRID)


def test_lagged_step_variance_uniform_bound():
    n = 2**14
    f1, f2 = model.step_variance_weights(model.E1, n, MOMENT_GRID)
    cap = max(f1, f2) * (1.0 + 1e-12)
    gen = np.random.default_rng(29)
    k = gen.random((200, 2)) * 0.998 + 0.001
    for lag in (1, 2, 5, 10):
        g = model.lagged_step_variance(k, model.E1, n, lag, MOMENT_GRID)
        assert np.all(g <= cap)
        assert np.all(g > 0.0)


def test_quadrature_grid_stability():
    # closed-form identities stable between G = 256 and G = 512
    for g1, g2 in [(model.get_grid(256), model.get_grid(512))]:
        assert abs(model.quadrature(g1.rate, g1) - model.quadrature(g2.rate, g2)) < 1e-8
        a1 = model.coupling_matrix(g1)
        a2 = model.coupling_matrix(g2)
        assert np.abs(a1 - a2).max() < 1e-8
    v1 = model.truncated_variance(model.E1, 2**14, model.get_grid(256))
    v2 = model.truncated_variance(model.E1, 2**14, model.get_grid(512))
    assert abs(v1 - v2) < 1e-4


def test_wave_vector_wraps():
    w = model.WaveVector(1.25, -0.25)
    assert (w.k1, w.k2) == (0.25, 0.75)
    np.testing.assert_array_equal(np.asarray(w), [0.25, 0.75])


def test_bulk_step_bound():
    assert abs(model.bulk_step_bound(math.e**4) - 1.0) < 1e-12
