"""Compiled inner loops for chain simulation and replica summaries.

Every kernel takes a numpy Generator and consumes variates in a fixed order:
initial draws first, then per step (exp_draw, component_select, sin2_coord,
uniform_coord).  Reproducibility contracts elsewhere rely on this order not
changing.
"""

import numpy as np
from numba import njit

TWO_PI = 2.0 * np.pi
_TABLE_N = 2048
_CBRT_C = 3.0 / (2.0 * np.pi * np.pi)
_EDGE_U = 1.0 / _TABLE_N


def _build_ppf_table():
    us = np.linspace(0.0, 1.0, _TABLE_N + 1)
    lo = np.zeros_like(us)
    hi = np.ones_like(us)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        below = mid - np.sin(TWO_PI * mid) / TWO_PI < us
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


_PPF_X = _build_ppf_table()


@njit(cache=True, inline="always")
def sin2_ppf(u):
    """Inverse of F(x) = x - sin(2 pi x)/(2 pi), the CDF of density 2 sin^2(pi x).

    Table-seeded Newton with a guarded bisection bracket; cube-root branch
    near the endpoints where F is cubic.  Residual |F(x) - u| <= 1e-13.
    """
    if u <= 0.0:
        return 0.0
    if u >= 1.0:
        return 1.0
    mirrored = u > 0.5
    uu = 1.0 - u if mirrored else u
    if uu < _EDGE_U:
        x = (_CBRT_C * uu) ** (1.0 / 3.0)
        lo = 0.0
        hi = 2.0 * x + 1e-8
    else:
        i = int(uu * _TABLE_N)
        lo = _PPF_X[i]
        hi = _PPF_X[i + 1]
        x = lo + (hi - lo) * (uu * _TABLE_N - i)
    for _ in range(60):
        f = x - np.sin(TWO_PI * x) / TWO_PI - uu
        if abs(f) <= 1e-13:
            break
        if f > 0.0:
            hi = x
        else:
            lo = x
        d = 1.0 - np.cos(TWO_PI * x)
        if d > 1e-30:
            xn = x - f / d
        else:
            xn = 0.5 * (lo + hi)
        if xn <= lo or xn >= hi:
            xn = 0.5 * (lo + hi)
        x = xn
    return 1.0 - x if mirrored else x


@njit(cache=True)
def sin2_ppf_fill(us, out):
    for i in range(us.shape[0]):
        out[i] = sin2_ppf(us[i])


@njit(cache=True, inline="always")
def jump_from(gen, s1, s2):
    """One transition given sin^2 of the current coordinates; returns new (k1, k2)."""
    usel = gen.random()
    x = sin2_ppf(gen.random())
    uoth = gen.random()
    if usel * (s1 + s2) < s1:
        return x, uoth
    return uoth, x


@njit(cache=True, inline="always")
def draw_initial_k(gen, kind, p1, p2):
    """kind 0: uniform; 1: point mass at (p1, p2); 2: uniform outside torus radius p1."""
    if kind == 1:
        return p1, p2
    if kind == 2:
        while True:
            k1 = gen.random()
            k2 = gen.random()
            d1 = min(k1, 1.0 - k1)
            d2 = min(k2, 1.0 - k2)
            if d1 * d1 + d2 * d2 >= p1 * p1:
                return k1, k2
    return gen.random(), gen.random()


@njit(cache=True)
def chain_fill(gen, kind, p1, p2, n_steps, wave, draws, waits, disp):
    """Simulate n_steps transitions, filling state/draw/wait/displacement arrays."""
    k1, k2 = draw_initial_k(gen, kind, p1, p2)
    wave[0, 0] = k1
    wave[0, 1] = k2
    for n in range(n_steps):
        sq1 = np.sin(np.pi * k1)
        sq2 = np.sin(np.pi * k2)
        s1 = sq1 * sq1
        s2 = sq2 * sq2
        phi = 8.0 * (s1 + s2)
        rs = np.sqrt(s1 + s2)
        c1 = np.sqrt(1.0 - s1) if k1 < 0.5 else -np.sqrt(1.0 - s1)
        c2 = np.sqrt(1.0 - s2) if k2 < 0.5 else -np.sqrt(1.0 - s2)
        e = gen.standard_exponential()
        draws[n] = e
        waits[n] = e / phi
        disp[n, 0] = e * sq1 * c1 / (rs * phi)
        disp[n, 1] = e * sq2 * c2 / (rs * phi)
        k1, k2 = jump_from(gen, s1, s2)
        wave[n + 1, 0] = k1
        wave[n + 1, 1] = k2


@njit(cache=True)
def clt_replica(gen, kind, p1, p2, n_steps, n_half, root_n, rescale):
    """Jump-sum statistics of one replica over n_steps transitions.

    Returns rescaled quantities:
      full sums at n_half and n_steps (2 components each),
      bulk (truncated) sums at n_half and n_steps,
      running sup of |overshoot sum| per component,
      final clock T_{n_steps} (unrescaled).
    """
    k1, k2 = draw_initial_k(gen, kind, p1, p2)
    S1 = S2 = L1 = L2 = 0.0
    supG1 = supG2 = 0.0
    T = 0.0
    Sh1 = Sh2 = Lh1 = Lh2 = 0.0
    for n in range(n_steps):
        sq1 = np.sin(np.pi * k1)
        sq2 = np.sin(np.pi * k2)
        s1 = sq1 * sq1
        s2 = sq2 * sq2
        phi = 8.0 * (s1 + s2)
        rs = np.sqrt(s1 + s2)
        c1 = np.sqrt(1.0 - s1) if k1 < 0.5 else -np.sqrt(1.0 - s1)
        c2 = np.sqrt(1.0 - s2) if k2 < 0.5 else -np.sqrt(1.0 - s2)
        e = gen.standard_exponential()
        T += e / phi
        d1 = e * sq1 * c1 / (rs * phi)
        d2 = e * sq2 * c2 / (rs * phi)
        S1 += d1
        S2 += d2
        if abs(d1) <= root_n:
            L1 += d1
        else:
            g = S1 - L1
            if abs(g) > supG1:
                supG1 = abs(g)
        if abs(d2) <= root_n:
            L2 += d2
        else:
            g = S2 - L2
            if abs(g) > supG2:
                supG2 = abs(g)
        if n + 1 == n_half:
            Sh1 = S1
            Sh2 = S2
            Lh1 = L1
            Lh2 = L2
        k1, k2 = jump_from(gen, s1, s2)
    return (Sh1 * rescale, Sh2 * rescale, S1 * rescale, S2 * rescale,
            Lh1 * rescale, Lh2 * rescale, L1 * rescale, L2 * rescale,
            supG1 * rescale, supG2 * rescale, T)


@njit(cache=True)
def qv_replica(gen, kind, p1, p2, n_steps, f1, f2):
    """Predictable quadratic variation: sum over steps of the conditional
    truncated step variance w1(X_m) f1 + w2(X_m) f2, plus the final clock."""
    k1, k2 = draw_initial_k(gen, kind, p1, p2)
    V = 0.0
    T = 0.0
    for n in range(n_steps):
        sq1 = np.sin(np.pi * k1)
        sq2 = np.sin(np.pi * k2)
        s1 = sq1 * sq1
        s2 = sq2 * sq2
        V += (s1 * f1 + s2 * f2) / (s1 + s2)
        e = gen.standard_exponential()
        T += e / (8.0 * (s1 + s2))
        k1, k2 = jump_from(gen, s1, s2)
    return V, T


@njit(cache=True)
def clock_replica(gen, kind, p1, p2, n_jumps, t_target):
    """Run until both n_jumps transitions occurred and the clock passed t_target.

    Returns (T at jump n_jumps, jump-sum S at n_jumps (2,), interpolated
    position Y at time t_target (2,), number of jumps when the clock crossed).
    """
    k1, k2 = draw_initial_k(gen, kind, p1, p2)
    S1 = S2 = T = 0.0
    Tn = 0.0
    Sn1 = Sn2 = 0.0
    Y1 = Y2 = 0.0
    crossed = False
    n_cross = 0
    n = 0
    while n < n_jumps or not crossed:
        sq1 = np.sin(np.pi * k1)
        sq2 = np.sin(np.pi * k2)
        s1 = sq1 * sq1
        s2 = sq2 * sq2
        phi = 8.0 * (s1 + s2)
        rs = np.sqrt(s1 + s2)
        c1 = np.sqrt(1.0 - s1) if k1 < 0.5 else -np.sqrt(1.0 - s1)
        c2 = np.sqrt(1.0 - s2) if k2 < 0.5 else -np.sqrt(1.0 - s2)
        v1 = sq1 * c1 / rs
        v2 = sq2 * c2 / rs
        e = gen.standard_exponential()
        tau = e / phi
        if not crossed and T + tau >= t_target:
            dt = t_target - T
            Y1 = S1 + v1 * dt
            Y2 = S2 + v2 * dt
            n_cross = n
            crossed = True
        T += tau
        S1 += v1 * tau
        S2 += v2 * tau
        n += 1
        if n == n_jumps:
            Tn = T
            Sn1 = S1
            Sn2 = S2
        k1, k2 = jump_from(gen, s1, s2)
    return Tn, Sn1, Sn2, Y1, Y2, n_cross


@njit(cache=True)
def truncation_replica(gen, kind, p1, p2, n_values, horizon):
    """Overshoot-part sup norms for several scales n from one shared chain.

    n_values must be sorted ascending; scale j uses the first n_values[j] *
    horizon steps with truncation threshold sqrt(n_values[j]).  Returns the
    running sup of the overshoot sums, per scale and component, already
    rescaled by 1/sqrt(n ln n).
    """
    m = n_values.shape[0]
    sups = np.zeros((m, 2))
    gsum = np.zeros((m, 2))
    roots = np.sqrt(n_values.astype(np.float64))
    limits = np.empty(m, dtype=np.int64)
    for j in range(m):
        limits[j] = np.int64(n_values[j] * horizon)
    k1, k2 = draw_initial_k(gen, kind, p1, p2)
    total = limits[m - 1]
    for n in range(total):
        sq1 = np.sin(np.pi * k1)
        sq2 = np.sin(np.pi * k2)
        s1 = sq1 * sq1
        s2 = sq2 * sq2
        phi = 8.0 * (s1 + s2)
        rs = np.sqrt(s1 + s2)
        c1 = np.sqrt(1.0 - s1) if k1 < 0.5 else -np.sqrt(1.0 - s1)
        c2 = np.sqrt(1.0 - s2) if k2 < 0.5 else -np.sqrt(1.0 - s2)
        e = gen.standard_exponential()
        d1 = e * sq1 * c1 / (rs * phi)
        d2 = e * sq2 * c2 / (rs * phi)
        for j in range(m):
            if n < limits[j]:
                if abs(d1) > roots[j]:
                    gsum[j, 0] += d1
                    if abs(gsum[j, 0]) > sups[j, 0]:
                        sups[j, 0] = abs(gsum[j, 0])
                if abs(d2) > roots[j]:
                    gsum[j, 1] += d2
                    if abs(gsum[j, 1]) > sups[j, 1]:
                        sups[j, 1] = abs(gsum[j, 1])
        k1, k2 = jump_from(gen, s1, s2)
    for j in range(m):
        scale = 1.0 / np.sqrt(n_values[j] * np.log(n_values[j]))
        sups[j, 0] *= scale
        sups[j, 1] *= scale
    return sups


@njit(cache=True)
def stationary_moments(gen, kind, p1, p2, burn_in, n_samples, root_ns, tail_grid):
    """One stationary pass accumulating tail and truncated-variance statistics.

    Returns:
      tail_counts[i]  : #steps with e |d_1| > tail_grid[i]
      sign_pos        : #steps with e d_1 > 0
      q_sums[j, a]    : sum over steps of (e d_a)^2 1{e |d_a| <= root_ns[j]}
      q_sqsums[j, a]  : sum of the squares of those summands
    """
    n_tail = tail_grid.shape[0]
    n_scales = root_ns.shape[0]
    tail_counts = np.zeros(n_tail, dtype=np.int64)
    sign_pos = 0
    q_sums = np.zeros((n_scales, 2))
    q_sqsums = np.zeros((n_scales, 2))
    k1, k2 = draw_initial_k(gen, kind, p1, p2)
    for n in range(burn_in + n_samples):
        sq1 = np.sin(np.pi * k1)
        sq2 = np.sin(np.pi * k2)
        s1 = sq1 * sq1
        s2 = sq2 * sq2
        phi = 8.0 * (s1 + s2)
        rs = np.sqrt(s1 + s2)
        c1 = np.sqrt(1.0 - s1) if k1 < 0.5 else -np.sqrt(1.0 - s1)
        c2 = np.sqrt(1.0 - s2) if k2 < 0.5 else -np.sqrt(1.0 - s2)
        e = gen.standard_exponential()
        if n >= burn_in:
            d1 = e * sq1 * c1 / (rs * phi)
            d2 = e * sq2 * c2 / (rs * phi)
            a1 = abs(d1)
            a2 = abs(d2)
            if d1 > 0.0:
                sign_pos += 1
            for i in range(n_tail):
                if a1 > tail_grid[i]:
                    tail_counts[i] += 1
                else:
                    break
            for j in range(n_scales):
                if a1 <= root_ns[j]:
                    q = d1 * d1
                    q_sums[j, 0] += q
                    q_sqsums[j, 0] += q * q
                if a2 <= root_ns[j]:
                    q = d2 * d2
                    q_sums[j, 1] += q
                    q_sqsums[j, 1] += q * q
        k1, k2 = jump_from(gen, s1, s2)
    return tail_counts, sign_pos, q_sums, q_sqsums


@njit(cache=True)
def occupancy_histogram(gen, kind, p1, p2, burn_in, n_samples, bins):
    """Visit counts of the chain on a bins x bins partition of the torus."""
    counts = np.zeros((bins, bins), dtype=np.int64)
    k1, k2 = draw_initial_k(gen, kind, p1, p2)
    for n in range(burn_in + n_samples):
        if n >= burn_in:
            i = min(int(k1 * bins), bins - 1)
            j = min(int(k2 * bins), bins - 1)
            counts[i, j] += 1
        s1 = np.sin(np.pi * k1) ** 2
        s2 = np.sin(np.pi * k2) ** 2
        gen.standard_exponential()  # keep the per-step draw order uniform
        k1, k2 = jump_from(gen, s1, s2)
    return counts


@njit(cache=True)
def multi_step_samples(gen, k01, k02, m_steps, n_samples, out):
    """n_samples independent m-step transitions from the point (k01, k02)."""
    for r in range(n_samples):
        k1 = k01
        k2 = k02
        for _ in range(m_steps):
            s1 = np.sin(np.pi * k1) ** 2
            s2 = np.sin(np.pi * k2) ** 2
            gen.standard_exponential()
            k1, k2 = jump_from(gen, s1, s2)
        out[r, 0] = k1
        out[r, 1] = k2


@njit(cache=True)
def jump_samples(gen, k01, k02, n_samples, out):
    """n_samples independent single jumps from the point (k01, k02)."""
    s1 = np.sin(np.pi * k01) ** 2
    s2 = np.sin(np.pi * k02) ** 2
    for r in range(n_samples):
        k1, k2 = jump_from(gen, s1, s2)
        out[r, 0] = k1
        out[r, 1] = k2
