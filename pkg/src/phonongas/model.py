"""Closed-form ingredients of the two-dimensional phonon scattering model.

A phonon carries a wave vector k on the 2-torus [0,1)^2 and a polarization
label in {1,2}.  In state k it waits an Exp(1)/rate(k) time, moves with
velocity(k), then scatters to a new wave vector drawn from jump_density(k,.)
while the polarization flips.  Everything here is a pure function of its
arguments; the Monte Carlo, path and solver modules all consume this one.

The only free numerical device is a midpoint tensor quadrature on the torus.
Midpoint nodes (j+1/2)/G never hit k = 0, where the mean displacement per
jump diverges, so the log-divergent truncated moments are integrable on
every grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Slope in ln(n) of the truncated step variance, equal to 1/(128 pi).
# Also the per-axis variance rate of the limiting Brownian motion of the
# rescaled jump sums.
LIMIT_VARIANCE_RATE = 1.0 / (128.0 * math.pi)

E1 = (1.0, 0.0)
E2 = (0.0, 1.0)
DIAGONAL = (math.sqrt(0.5), math.sqrt(0.5))


class DegenerateStateError(ValueError):
    """Raised when an operation needs a positive scattering rate but rate(k) = 0."""


def _components(k):
    k = np.asarray(k, dtype=float)
    if k.shape[-1] != 2:
        raise ValueError(f"wave vectors have two components, got shape {k.shape}")
    return k[..., 0], k[..., 1]


@dataclass(frozen=True)
class WaveVector:
    """A point of the 2-torus; coordinates wrap modulo 1."""

    k1: float
    k2: float

    def __post_init__(self):
        object.__setattr__(self, "k1", float(self.k1) % 1.0)
        object.__setattr__(self, "k2", float(self.k2) % 1.0)

    def __array__(self, dtype=None, copy=None):
        return np.array([self.k1, self.k2], dtype=dtype or float)


def flip_polarization(pol: int) -> int:
    if pol not in (1, 2):
        raise ValueError(f"polarization must be 1 or 2, got {pol}")
    return 3 - pol


def velocity(k):
    """Group velocity v_a(k) = sin(pi k_a) cos(pi k_a) / sqrt(sum_b sin^2(pi k_b)).

    Total function: v(0,0) = (0,0) by convention (isolated removable point).
    |v(k)| <= 1 everywhere.
    """
    k1, k2 = _components(k)
    s1 = np.sin(np.pi * k1)
    s2 = np.sin(np.pi * k2)
    norm = np.sqrt(s1 * s1 + s2 * s2)
    safe = np.where(norm > 0.0, norm, 1.0)
    v = np.stack([s1 * np.cos(np.pi * k1) / safe, s2 * np.cos(np.pi * k2) / safe], axis=-1)
    return np.where(norm[..., None] > 0.0, v, 0.0)


def total_rate(k):
    """Scattering rate 8 * sum_a sin^2(pi k_a); range [0, 16], zero only at k = 0."""
    k1, k2 = _components(k)
    return 8.0 * (np.sin(np.pi * k1) ** 2 + np.sin(np.pi * k2) ** 2)


def scattering_rate(k, kp):
    """Two-state kernel 16 * sum_a sin^2(pi k_a) sin^2(pi k'_a); symmetric in (k, k')."""
    k1, k2 = _components(k)
    q1, q2 = _components(kp)
    return 16.0 * (np.sin(np.pi * k1) ** 2 * np.sin(np.pi * q1) ** 2
                   + np.sin(np.pi * k2) ** 2 * np.sin(np.pi * q2) ** 2)


def _require_positive_rate(rate):
    if np.any(rate <= 0.0):
        raise DegenerateStateError("scattering rate vanishes at k = 0; no jump is defined there")


def jump_density(k, kp):
    """Density of the one-step transition law out of k, evaluated at k'.

    Equals scattering_rate(k,k') / total_rate(k); integrates to 1 in k'.
    Raises DegenerateStateError when total_rate(k) = 0.
    """
    rate = total_rate(k)
    _require_positive_rate(rate)
    return scattering_rate(k, kp) / rate


def mean_displacement(k):
    """Mean single-jump displacement v(k)/rate(k); the heavy-tailed quantity.

    Magnitude grows like |k|^-2 near the origin.  Raises DegenerateStateError
    at rate(k) = 0.
    """
    rate = total_rate(k)
    _require_positive_rate(rate)
    return velocity(k) / rate[..., None]


def component_weights(k):
    """Mixture weights w_a = sin^2(pi k_a) / sum_b sin^2(pi k_b) of the jump law.

    The transition density out of k factorizes as
    sum_a w_a(k) * [2 sin^2(pi x) density in component a] x [uniform in the other],
    which is what the exact sampler draws from.
    """
    k1, k2 = _components(k)
    s1 = np.sin(np.pi * k1) ** 2
    s2 = np.sin(np.pi * k2) ** 2
    tot = s1 + s2
    if np.any(tot <= 0.0):
        raise DegenerateStateError("component weights undefined at k = 0")
    return np.stack([s1 / tot, s2 / tot], axis=-1)


def stationary_density(k):
    """Density of the stationary law of the embedded chain: rate(k)/8."""
    return total_rate(k) / 8.0


# ---------------------------------------------------------------------------
# quadrature grids


class QuadratureGrid:
    """Midpoint tensor grid on the torus: G x G nodes at (j+1/2)/G, weight 1/G^2.

    Caches the model fields used over and over by the moment quadratures.
    """

    def __init__(self, points: int):
        if points < 2:
            raise ValueError("need at least 2 points per axis")
        self.points = int(points)
        axis = (np.arange(self.points) + 0.5) / self.points
        self.k1, self.k2 = np.meshgrid(axis, axis, indexing="ij")
        self.axis = axis
        self.weight = 1.0 / self.points**2
        self.sin2_1 = np.sin(np.pi * self.k1) ** 2
        self.sin2_2 = np.sin(np.pi * self.k2) ** 2
        self.sin_sum = self.sin2_1 + self.sin2_2
        self.rate = 8.0 * self.sin_sum
        root = np.sqrt(self.sin_sum)
        self.v1 = np.sin(np.pi * self.k1) * np.cos(np.pi * self.k1) / root
        self.v2 = np.sin(np.pi * self.k2) * np.cos(np.pi * self.k2) / root
        self.disp1 = self.v1 / self.rate
        self.disp2 = self.v2 / self.rate
        self.pi_density = self.sin_sum  # = rate/8


_GRIDS: dict[int, QuadratureGrid] = {}


def get_grid(points: int = 256) -> QuadratureGrid:
    grid = _GRIDS.get(points)
    if grid is None:
        grid = QuadratureGrid(points)
        _GRIDS[points] = grid
    return grid


def quadrature(integrand, grid: QuadratureGrid) -> float:
    """Midpoint-rule integral over the torus of an array or callable(k1, k2)."""
    vals = integrand(grid.k1, grid.k2) if callable(integrand) else np.asarray(integrand)
    if not np.all(np.isfinite(vals)):
        raise ValueError("integrand is not finite at all quadrature nodes")
    return float(vals.sum() * grid.weight)


def clock_mean(grid: QuadratureGrid | None = None) -> float:
    """Stationary mean waiting time, quadrature of 1/rate against the chain's law.

    Evaluates to exactly 1/8.
    """
    grid = grid or get_grid()
    return quadrature(grid.pi_density / grid.rate, grid)


# ---------------------------------------------------------------------------
# multi-step transition structure

def coupling_matrix(grid: QuadratureGrid | None = None) -> np.ndarray:
    """2x2 component-coupling matrix of the chain.

    Entry (a,b) is the chance that the next sin^2-distributed coordinate sits
    in component b given it currently sits in component a, averaged over the
    invariant law.  Symmetric, rows sum to 1; the diagonal equals 2/pi.
    """
    grid = grid or get_grid()
    a11 = quadrature(2.0 * grid.sin2_1 * grid.sin2_1 / grid.sin_sum, grid)
    a12 = quadrature(2.0 * grid.sin2_1 * grid.sin2_2 / grid.sin_sum, grid)
    a22 = quadrature(2.0 * grid.sin2_2 * grid.sin2_2 / grid.sin_sum, grid)
    return np.array([[a11, a12], [a12, a22]])


def mixing_matrix(m: int, grid: QuadratureGrid | None = None) -> np.ndarray:
    """Component mixing after m steps: identity for m = 1, coupling^(m-1) after."""
    if m < 1:
        raise ValueError("m must be >= 1")
    if m == 1:
        return np.eye(2)
    return np.linalg.matrix_power(coupling_matrix(grid), m - 1)


def multi_step_density(m: int, k, kp, grid: QuadratureGrid | None = None):
    """Density of the m-step transition law out of k at k'.

    Closed form: weights(k) . mixing_matrix(m) applied to the pair of
    one-dimensional densities 2 sin^2(pi k'_b).  Bounded by
    2 * sum_b sin^2(pi k'_b) uniformly in k and m.
    """
    A = mixing_matrix(m, grid)
    w = component_weights(k)
    q1, q2 = _components(kp)
    dens = np.stack([2.0 * np.sin(np.pi * q1) ** 2, 2.0 * np.sin(np.pi * q2) ** 2], axis=-1)
    return np.einsum("...a,ab,...b->...", w, A, dens)


# ---------------------------------------------------------------------------
# truncated displacement moments
#
# A single step displaces by e * mean_displacement(k) with e ~ Exp(1).  The
# statistics below truncate each component at threshold sqrt(n) and integrate
# the exponential factor in closed form:
#     int_0^z t^m e^-t dt = m! * (1 - e^-z * sum_{j<=m} z^j / j!).

_EXP_CLIP = 700.0  # beyond this the upper incomplete tail underflows anyway


def _lower_gamma_ratio(m: int, z):
    """int_0^z t^m e^-t dt / m!  evaluated stably for any z >= 0."""
    z = np.minimum(z, _EXP_CLIP)
    s = np.ones_like(z)
    term = np.ones_like(z)
    for j in range(1, m + 1):
        term = term * z / j
        s = s + term
    return 1.0 - np.exp(-z) * s


def _unit_vector(lam):
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (2,):
        raise ValueError("projection vector must have two components")
    if abs(float(lam @ lam) - 1.0) > 1e-12:
        raise ValueError(f"projection vector must be unit length, got |lam|^2 = {lam @ lam}")
    return lam


def truncated_moment(lam, n, order: int, grid: QuadratureGrid | None = None) -> float:
    """Stationary moment of the projected, truncated single-step displacement.

    E[ ( sum_a lam_a e d_a(k) 1{e |d_a(k)| <= sqrt(n)} )^order ] with e ~ Exp(1)
    and k drawn from the stationary law; d = mean_displacement.  The expectation
    over e reduces to lower incomplete gamma factors, the k-integral is done by
    quadrature.
    """
    lam = _unit_vector(lam)
    if n < 2:
        raise ValueError("n must be >= 2")
    grid = grid or get_grid()
    root = math.sqrt(n)
    a1 = np.abs(grid.disp1)
    a2 = np.abs(grid.disp2)
    fact = math.factorial(order)
    total = np.zeros_like(grid.disp1)
    for j in range(order + 1):
        coeff = math.comb(order, j) * lam[0] ** j * lam[1] ** (order - j)
        if coeff == 0.0:
            continue
        if j == 0:
            cap = a2
        elif j == order:
            cap = a1
        else:
            cap = np.maximum(a1, a2)
        z = np.where(cap > 0.0, root / np.where(cap > 0.0, cap, 1.0), np.inf)
        total = total + coeff * grid.disp1**j * grid.disp2 ** (order - j) \
            * fact * _lower_gamma_ratio(order, z)
    return quadrature(total * grid.pi_density, grid)


def truncated_variance(lam, n, grid: QuadratureGrid | None = None) -> float:
    """Second truncated moment; grows like LIMIT_VARIANCE_RATE * ln(n)."""
    return truncated_moment(lam, n, 2, grid)


def finite_variance_rate(n, grid: QuadratureGrid | None = None) -> float:
    """Per-unit-time variance of the rescaled truncated jump sum at scale n.

    truncated_variance / ln(n): the finite-n stand-in for the limiting rate,
    off by O(1/ln n).
    """
    return truncated_variance(E1, n, grid) / math.log(n)


def overshoot_mean(axis: int, n, grid: QuadratureGrid | None = None) -> float:
    """Stationary mean of e |d_axis| restricted to e |d_axis| > sqrt(n).

    Decays like 1/(64 pi sqrt(n)); the inner integral is
    int_z^inf t e^-t dt = e^-z (z + 1).
    """
    if axis not in (1, 2):
        raise ValueError("axis must be 1 or 2")
    if n < 2:
        raise ValueError("n must be >= 2")
    grid = grid or get_grid()
    a = np.abs(grid.disp1 if axis == 1 else grid.disp2)
    z = np.where(a > 0.0, math.sqrt(n) / np.where(a > 0.0, a, 1.0), _EXP_CLIP)
    z = np.minimum(z, _EXP_CLIP)
    return quadrature(a * np.exp(-z) * (z + 1.0) * grid.pi_density, grid)


def bulk_step_bound(n) -> float:
    """Uniform bound 2/sqrt(ln n) on a projected truncated rescaled step."""
    return 2.0 / math.sqrt(math.log(n))


# Conditional step variance.  Given the current state k, the next truncated
# rescaled step has conditional second moment
#     w_1(k) F_1 + w_2(k) F_2,
# because the transition density is the w-mixture of the two fixed densities
# 2 sin^2(pi k'_a).  The pair (F_1, F_2) depends only on (lam, n).

def step_variance_weights(lam, n, grid: QuadratureGrid | None = None):
    """Rank-2 coefficients (F1, F2) of the conditional truncated step variance.

    Includes the 1/(n ln n) path normalization, so each F is O(1/n).
    """
    lam = _unit_vector(lam)
    if n < 2:
        raise ValueError("n must be >= 2")
    grid = grid or get_grid()
    root = math.sqrt(n)
    a1 = np.abs(grid.disp1)
    a2 = np.abs(grid.disp2)
    g2_same1 = 2.0 * _lower_gamma_ratio(2, np.where(a1 > 0, root / np.where(a1 > 0, a1, 1), np.inf))
    g2_same2 = 2.0 * _lower_gamma_ratio(2, np.where(a2 > 0, root / np.where(a2 > 0, a2, 1), np.inf))
    cap = np.maximum(a1, a2)
    g2_cross = 2.0 * _lower_gamma_ratio(2, np.where(cap > 0, root / np.where(cap > 0, cap, 1), np.inf))
    q = (lam[0] ** 2 * grid.disp1**2 * g2_same1
         + lam[1] ** 2 * grid.disp2**2 * g2_same2
         + 2.0 * lam[0] * lam[1] * grid.disp1 * grid.disp2 * g2_cross)
    norm = 1.0 / (n * math.log(n))
    f1 = quadrature(2.0 * grid.sin2_1 * q, grid) * norm
    f2 = quadrature(2.0 * grid.sin2_2 * q, grid) * norm
    return f1, f2


def conditional_step_variance(k, lam, n, grid: QuadratureGrid | None = None):
    """Conditional second moment of the next truncated rescaled step given k.

    Bounded between min(F1,F2) and max(F1,F2), both of order 1/n; its
    stationary average times n ln n recovers truncated_variance exactly.
    """
    f1, f2 = step_variance_weights(lam, n, grid)
    w = component_weights(k)
    return w[..., 0] * f1 + w[..., 1] * f2


def lagged_step_variance(k, lam, n, lag: int, grid: QuadratureGrid | None = None):
    """Conditional step variance propagated lag chain steps ahead.

    Composes the rank-2 coefficients with coupling_matrix^lag; shares the
    uniform O(1/n) bound for every lag >= 1.
    """
    if lag < 1:
        raise ValueError("lag must be >= 1")
    grid = grid or get_grid()
    f = np.array(step_variance_weights(lam, n, grid))
    a = coupling_matrix(grid)
    prop = np.linalg.matrix_power(a, lag) @ f
    w = component_weights(k)
    return w[..., 0] * prop[0] + w[..., 1] * prop[1]
