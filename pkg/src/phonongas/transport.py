"""Deterministic solvers for the kinetic (PDE) side of the model.

Works on one spatial Fourier slice at a time: a complex field u(alpha, k) on
polarization x torus-grid evolving under

    du/dt = -(i q.v(k) + rate(k)) u(alpha, k) + gain of the flipped polarization,

where the gain is the rank-2 smoothing 16 * sum_g sin^2(pi k_g) M_g[u_beta]
with moments M_g[f] = integral of sin^2(pi k'_g) f(k').  The flat measure
(1/2 per polarization, Lebesgue in k) is invariant and reversing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .model import QuadratureGrid, get_grid

RK4_MAX_DT = 0.05 / 16.0  # stability guard against the stiffest loss rate


class StabilityError(ValueError):
    """Raised when an explicit step size violates the stability guard."""


@dataclass
class PhaseField:
    """Complex function on {1,2} x torus grid (one Fourier slice)."""

    values: np.ndarray  # (2, G, G)
    grid: QuadratureGrid

    def __post_init__(self):
        if self.values.shape != (2, self.grid.points, self.grid.points):
            raise ValueError(f"field shape {self.values.shape} does not match grid "
                             f"G = {self.grid.points}")

    def copy(self) -> "PhaseField":
        return PhaseField(self.values.copy(), self.grid)


def constant_field(value=1.0, grid: QuadratureGrid | None = None,
                   dtype=complex) -> PhaseField:
    grid = grid or get_grid(64)
    g = grid.points
    return PhaseField(np.full((2, g, g), value, dtype=dtype), grid)


def bump_field(center=(0.0, 0.0), radius=0.05, grid: QuadratureGrid | None = None,
               polarization_sign: int = 1) -> PhaseField:
    """Indicator of a torus ball, on both polarizations (optionally odd)."""
    grid = grid or get_grid(64)
    d1 = np.abs(grid.k1 - center[0])
    d2 = np.abs(grid.k2 - center[1])
    d1 = np.minimum(d1, 1.0 - d1)
    d2 = np.minimum(d2, 1.0 - d2)
    ind = (np.hypot(d1, d2) < radius).astype(float)
    return PhaseField(np.stack([ind, polarization_sign * ind]), grid)


def polarization_odd_field(value=1.0, grid: QuadratureGrid | None = None) -> PhaseField:
    grid = grid or get_grid(64)
    g = grid.points
    ones = np.full((g, g), value, dtype=float)
    return PhaseField(np.stack([ones, -ones]), grid)


def random_smooth_field(gen, n_modes: int = 3, grid: QuadratureGrid | None = None) -> PhaseField:
    """Mean-zero random trigonometric polynomial, smooth on the torus."""
    grid = grid or get_grid(64)
    vals = np.zeros((2, grid.points, grid.points))
    for alpha in (0, 1):
        for _ in range(n_modes):
            m1, m2 = gen.integers(-3, 4, size=2)
            amp_c, amp_s = gen.normal(size=2)
            phase = 2.0 * np.pi * (m1 * grid.k1 + m2 * grid.k2)
            vals[alpha] += amp_c * np.cos(phase) + amp_s * np.sin(phase)
    f = PhaseField(vals, grid)
    return remove_mean(f)


def invariant_mean(f: PhaseField):
    """Mean under the flat invariant measure: half the sum of the two k-averages."""
    return 0.5 * (f.values[0].mean() + f.values[1].mean())


def remove_mean(f: PhaseField) -> PhaseField:
    return PhaseField(f.values - invariant_mean(f), f.grid)


def l2_norm_sq(f: PhaseField) -> float:
    return float(0.5 * (np.abs(f.values[0]) ** 2 + np.abs(f.values[1]) ** 2).mean())


def lp_norm(f: PhaseField, p: float) -> float:
    return float((0.5 * (np.abs(f.values[0]) ** p + np.abs(f.values[1]) ** p).mean())
                 ** (1.0 / p))


def collision_apply(f: PhaseField) -> PhaseField:
    """Generator applied to a field, via the rank-2 separable form; O(G^2) cost."""
    g = f.grid
    out = np.empty_like(f.values, dtype=f.values.dtype)
    for alpha in (0, 1):
        beta = 1 - alpha
        m1 = (g.sin2_1 * f.values[beta]).mean()
        m2 = (g.sin2_2 * f.values[beta]).mean()
        out[alpha] = 16.0 * (g.sin2_1 * m1 + g.sin2_2 * m2) - g.rate * f.values[alpha]
    return PhaseField(out, g)


def dense_generator_matrix(grid: QuadratureGrid) -> np.ndarray:
    """The generator as a dense 2G^2 x 2G^2 matrix (cross-check oracle).

    Symmetric in the plain dot product because the invariant measure is flat.
    """
    n = grid.points**2
    s1 = grid.sin2_1.ravel()
    s2 = grid.sin2_2.ravel()
    gain = (16.0 / n) * (np.outer(s1, s1) + np.outer(s2, s2))
    loss = np.diag(grid.rate.ravel())
    zero = np.zeros((n, n))
    return np.block([[-loss, gain], [gain, -loss]])


def dirichlet_form(f: PhaseField) -> float:
    """Dissipation -(f, Lf) under the flat measure; nonnegative by reversibility."""
    lf = collision_apply(f)
    val = 0.5 * ((np.conj(f.values[0]) * lf.values[0]).mean()
                 + (np.conj(f.values[1]) * lf.values[1]).mean())
    return float(-np.real(val))


# ---------------------------------------------------------------------------
# time stepping


def _phi1(z):
    small = np.abs(z) < 1e-5
    zs = np.where(small, 1.0, z)
    return np.where(small, 1.0 + z / 2.0 + z * z / 6.0, np.expm1(zs) / zs)


def _phi2(z):
    small = np.abs(z) < 1e-4
    zs = np.where(small, 1.0, z)
    return np.where(small, 0.5 + z / 6.0 + z * z / 24.0, (np.expm1(zs) - zs) / (zs * zs))


@njit(cache=True)
def _etd2_loop(u, a, s1, s2, expz, f1, f2, weight, n_steps):
    """Second-order exponential integrator; diagonal part treated exactly."""
    m = u.shape[1]
    for _ in range(n_steps):
        mu11 = 0j
        mu21 = 0j
        mu12 = 0j
        mu22 = 0j
        for i in range(m):
            mu11 += s1[i] * u[0, i]
            mu21 += s2[i] * u[0, i]
            mu12 += s1[i] * u[1, i]
            mu22 += s2[i] * u[1, i]
        mu11 *= weight
        mu21 *= weight
        mu12 *= weight
        mu22 *= weight
        for i in range(m):
            k0 = 16.0 * (s1[i] * mu12 + s2[i] * mu22)
            k1 = 16.0 * (s1[i] * mu11 + s2[i] * mu21)
            a[0, i] = expz[i] * u[0, i] + f1[i] * k0
            a[1, i] = expz[i] * u[1, i] + f1[i] * k1
        ma11 = 0j
        ma21 = 0j
        ma12 = 0j
        ma22 = 0j
        for i in range(m):
            ma11 += s1[i] * a[0, i]
            ma21 += s2[i] * a[0, i]
            ma12 += s1[i] * a[1, i]
            ma22 += s2[i] * a[1, i]
        ma11 *= weight
        ma21 *= weight
        ma12 *= weight
        ma22 *= weight
        for i in range(m):
            ku0 = 16.0 * (s1[i] * mu12 + s2[i] * mu22)
            ku1 = 16.0 * (s1[i] * mu11 + s2[i] * mu21)
            ka0 = 16.0 * (s1[i] * ma12 + s2[i] * ma22)
            ka1 = 16.0 * (s1[i] * ma11 + s2[i] * ma21)
            u[0, i] = a[0, i] + f2[i] * (ka0 - ku0)
            u[1, i] = a[1, i] + f2[i] * (ka1 - ku1)


def evolve_slice(q, f0: PhaseField, t_end: float, dt: float,
                 method: str = "rk4", record_times=None):
    """Evolve one Fourier slice to t_end.

    method "rk4" is classic fourth order with the stability guard
    dt <= 0.05/16; "etd2" treats the diagonal transport+loss exactly and is
    the choice for long horizons.  If record_times is given, returns
    (final field, list of (t, l2_norm_sq) at those times); the times are
    rounded to whole steps.
    """
    g = f0.grid
    q = np.asarray(q, dtype=float)
    if t_end <= 0.0:
        return (f0.copy(), []) if record_times is not None else f0.copy()
    n_steps = max(int(round(t_end / dt)), 1)
    record = sorted(set(min(max(int(round(t / dt)), 1), n_steps)
                        for t in record_times)) if record_times is not None else []
    norms = []
    if method == "rk4":
        if dt > RK4_MAX_DT * (1 + 1e-12):
            raise StabilityError(
                f"RK4 step {dt} exceeds the guard {RK4_MAX_DT}; reduce dt or use etd2")
        transport = 1j * (q[0] * g.v1 + q[1] * g.v2)
        complex_path = np.iscomplexobj(f0.values) or np.any(q != 0.0)
        u = f0.values.astype(complex if complex_path else float).copy()

        def rhs(w):
            out = np.empty_like(w)
            for alpha in (0, 1):
                beta = 1 - alpha
                m1 = (g.sin2_1 * w[beta]).mean()
                m2 = (g.sin2_2 * w[beta]).mean()
                out[alpha] = (16.0 * (g.sin2_1 * m1 + g.sin2_2 * m2)
                              - (g.rate + (transport if complex_path else 0.0)) * w[alpha])
            return out

        step_set = set(record)
        for step in range(1, n_steps + 1):
            c1 = rhs(u)
            c2 = rhs(u + 0.5 * dt * c1)
            c3 = rhs(u + 0.5 * dt * c2)
            c4 = rhs(u + dt * c3)
            u = u + (dt / 6.0) * (c1 + 2.0 * c2 + 2.0 * c3 + c4)
            if step in step_set:
                norms.append((step * dt, float(0.5 * (np.abs(u[0]) ** 2
                                                      + np.abs(u[1]) ** 2).mean())))
    elif method == "etd2":
        z = -dt * (1j * (q[0] * g.v1 + q[1] * g.v2) + g.rate).astype(complex)
        zf = z.ravel()
        expz = np.exp(zf)
        f1 = dt * _phi1(zf)
        f2 = dt * _phi2(zf)
        u = f0.values.reshape(2, -1).astype(complex).copy()
        a = np.empty_like(u)
        s1 = g.sin2_1.ravel()
        s2 = g.sin2_2.ravel()
        w = 1.0 / s1.shape[0]
        prev = 0
        for step in record:
            _etd2_loop(u, a, s1, s2, expz, f1, f2, w, step - prev)
            prev = step
            norms.append((step * dt, float(0.5 * (np.abs(u[0]) ** 2
                                                  + np.abs(u[1]) ** 2).mean())))
        if prev < n_steps:
            _etd2_loop(u, a, s1, s2, expz, f1, f2, w, n_steps - prev)
        u = u.reshape(f0.values.shape)
    else:
        raise ValueError(f"unknown method {method!r}")
    out = PhaseField(u, g)
    if record_times is not None:
        return out, norms
    return out


# ---------------------------------------------------------------------------
# semigroup decay and functional inequalities


@dataclass
class DecayReport:
    times: np.ndarray
    norms_sq: np.ndarray
    p: float
    lp_sq: float
    products: np.ndarray        # ||S_t f||^2 * t^(1-2/p) / ||f||_p^2
    fitted_exponent: float      # slope of -ln||S_t f||^2 vs ln t
    sup_product: float
    stability_ratio: float      # sup_product / product at first time

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "times": [float(t) for t in self.times],
            "norms_sq": [float(v) for v in self.norms_sq],
            "products": [float(v) for v in self.products],
            "lp_sq": float(self.lp_sq),
            "fitted_exponent": float(self.fitted_exponent),
            "sup_product": float(self.sup_product),
            "stability_ratio": float(self.stability_ratio),
        }


def semigroup_norm_decay(f0: PhaseField, times, p: float = 4.0,
                         dt: float = RK4_MAX_DT, method: str = "rk4") -> DecayReport:
    """L2 decay of the mean-zero part of f0 under the collision semigroup.

    Records ||S_t f||^2 at the requested times and forms the product
    ||S_t f||^2 * t^(1-2/p) / ||f||_p^2, which stays bounded when the
    algebraic decay rate 1 - 2/p holds.
    """
    f = remove_mean(f0)
    lp_sq = lp_norm(f, p) ** 2
    times = np.asarray(sorted(times), dtype=float)
    _, recs = evolve_slice((0.0, 0.0), f, float(times[-1]), dt, method=method,
                           record_times=times)
    ts = np.array([t for t, _ in recs])
    norms = np.array([v for _, v in recs])
    products = norms * ts ** (1.0 - 2.0 / p) / lp_sq
    good = norms > 1e-250
    if good.sum() >= 2:
        slope = np.polyfit(np.log(ts[good]), np.log(norms[good]), 1)[0]
    else:
        slope = -np.inf
    return DecayReport(ts, norms, p, lp_sq, products, float(-slope),
                       float(products.max()), float(products.max() / products[0]))


@dataclass
class PoincareReport:
    p: float
    r_grid: np.ndarray
    c0_per_r: np.ndarray
    c0: float                  # single constant valid on the whole r grid
    nash_constant: float
    dirichlet: float
    l2_sq: float
    lp_sq: float

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "r_grid": [float(r) for r in self.r_grid],
            "c0_per_r": [float(c) for c in self.c0_per_r],
            "c0": float(self.c0),
            "nash_constant": float(self.nash_constant),
            "dirichlet": float(self.dirichlet),
            "l2_sq": float(self.l2_sq),
            "lp_sq": float(self.lp_sq),
        }


def weak_poincare_check(f: PhaseField, p: float = 4.0, r_grid=None,
                        mean_tol: float = 1e-10) -> PoincareReport:
    """Smallest constants making ||f||^2 <= C0 r^(-p/(p-2)) E(f,f) + r ||f||_p^2.

    Requires a mean-zero field.  Also reports the implied Nash-inequality
    constant C with ||f||^2 <= C E(f,f)^(1/a) (||f||_p^2)^(1-1/a),
    a = 1 + p/(p-2).
    """
    if abs(invariant_mean(f)) > mean_tol:
        raise ValueError("weak Poincare check needs a mean-zero field")
    if r_grid is None:
        r_grid = np.geomspace(1e-3, 1.0, 25)
    r_grid = np.asarray(r_grid, dtype=float)
    n2 = l2_norm_sq(f)
    np2 = lp_norm(f, p) ** 2
    dir_form = dirichlet_form(f)
    expo = p / (p - 2.0)
    c0s = np.maximum(0.0, n2 - r_grid * np2) * r_grid**expo / dir_form
    a = 1.0 + expo
    nash = n2 / (dir_form ** (1.0 / a) * np2 ** (1.0 - 1.0 / a))
    return PoincareReport(p, r_grid, c0s, float(c0s.max()), float(nash),
                          dir_form, n2, np2)


# ---------------------------------------------------------------------------
# diffusion limit


@dataclass
class SliceResult:
    """Observable of one Fourier slice against the heat-equation reference."""

    p: np.ndarray
    times: np.ndarray
    observables: np.ndarray   # complex
    references: np.ndarray
    rel_errors: np.ndarray
    diffusion: float

    def to_dict(self) -> dict:
        return {
            "p": [float(x) for x in self.p],
            "times": [float(t) for t in self.times],
            "observable_re": [float(np.real(o)) for o in self.observables],
            "observable_im": [float(np.imag(o)) for o in self.observables],
            "reference": [float(r) for r in self.references],
            "rel_error": [float(e) for e in self.rel_errors],
            "diffusion": float(self.diffusion),
        }


def diffusion_limit_compare(n: int, p_list, t_list, diffusion: float,
                            u0: PhaseField | None = None, dt: float = 0.05,
                            grid: QuadratureGrid | None = None,
                            method: str = "etd2") -> list[SliceResult]:
    """Evolve slices at microscopic momentum p/sqrt(n ln n) for time n*t.

    The slice observable (flat-measure mean of the field) is compared with
    the heat reference mean(u0) * exp(-diffusion |p|^2 t / 2).
    """
    if n < 1000:
        raise ValueError("n must be >= 1000 for the diffusion-limit regime")
    grid = grid or get_grid(64)
    u0 = u0 or constant_field(1.0, grid)
    scale = math.sqrt(n * math.log(n))
    t_list = np.asarray(sorted(t_list), dtype=float)
    u0_mean = invariant_mean(u0)
    results = []
    for p in p_list:
        p = np.asarray(p, dtype=float)
        q = p / scale
        obs = []
        f = u0
        prev_t = 0.0
        for t in t_list:
            f = evolve_slice(q, f, float(n * t - prev_t), dt, method=method)
            prev_t = float(n * t)
            obs.append(invariant_mean(f))
        obs = np.array(obs)
        refs = np.real(u0_mean) * np.exp(-0.5 * diffusion * float(p @ p) * t_list)
        rel = np.abs(obs - refs) / np.maximum(np.abs(refs), 1e-300)
        results.append(SliceResult(p, t_list, obs, refs, rel, diffusion))
    return results
