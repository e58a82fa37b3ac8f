"""Exact, reproducible random generation of the scattering chain.

Randomness contract: every variate is determined by (master_seed, stream_id,
draw index).  Streams are independent counter-based Philox generators keyed
by the 128-bit word (master_seed << 64) | stream_id, so replicas can be
generated in any order, on any worker, with identical results.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .model import DegenerateStateError, total_rate

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class RandomStream:
    """A named, independent randomness source."""

    master_seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        key = ((self.master_seed & _MASK64) << 64) | (self.stream_id & _MASK64)
        return np.random.Generator(np.random.Philox(key=key))


def _as_generator(source) -> np.random.Generator:
    if isinstance(source, RandomStream):
        return source.generator()
    if isinstance(source, np.random.Generator):
        return source
    raise TypeError(f"expected RandomStream or numpy Generator, got {type(source)!r}")


@dataclass(frozen=True)
class InitialLaw:
    """Starting law of the chain: uniform, a point mass, or uniform off a disk.

    All three keep mass away from k = 0: point masses at the origin are
    rejected, and the annulus kind excludes the torus ball of radius delta.
    """

    kind: str = "uniform"
    k0: tuple[float, float] | None = None
    i0: int | None = None
    delta: float = 0.0

    def __post_init__(self):
        if self.kind not in ("uniform", "point", "annulus"):
            raise ValueError(f"unknown initial law kind {self.kind!r}")
        if self.kind == "point":
            if self.k0 is None:
                raise ValueError("point law needs k0")
            if total_rate(np.asarray(self.k0, dtype=float)) <= 0.0:
                raise ValueError("point mass at k = 0 is not a valid initial law")
        if self.kind == "annulus" and not 0.0 < self.delta < 0.5:
            raise ValueError("annulus law needs 0 < delta < 0.5")

    def kernel_args(self) -> tuple[int, float, float]:
        if self.kind == "point":
            return 1, float(self.k0[0]) % 1.0, float(self.k0[1]) % 1.0
        if self.kind == "annulus":
            return 2, self.delta, 0.0
        return 0, 0.0, 0.0


UNIFORM_LAW = InitialLaw()


def sin2_cdf(x):
    """CDF of the density 2 sin^2(pi t) on [0, 1]."""
    x = np.asarray(x, dtype=float)
    return x - np.sin(2.0 * np.pi * x) / (2.0 * np.pi)


def sin2_ppf(u):
    """Inverse CDF, elementwise; residual |F(x) - u| <= 1e-12 on [0, 1]."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    out = np.empty_like(u)
    _kernels.sin2_ppf_fill(u.ravel(), out.ravel())
    return out if out.size > 1 else float(out[0])


def sample_sin2(source, size: int | None = None):
    """Exact draws with density 2 sin^2(pi x) by inverse transform."""
    gen = _as_generator(source)
    u = gen.random(size if size is not None else 1)
    out = np.empty_like(u)
    _kernels.sin2_ppf_fill(u, out)
    return out if size is not None else float(out[0])


def sample_jump(source, k, size: int | None = None):
    """Exact draw(s) from the one-step transition law out of k.

    Selects the component by its weight, gives it a sin^2-distributed
    coordinate and the other one a uniform coordinate.
    """
    k = np.asarray(k, dtype=float)
    if total_rate(k) <= 0.0:
        raise DegenerateStateError("cannot jump from k = 0")
    gen = _as_generator(source)
    n = size if size is not None else 1
    out = np.empty((n, 2))
    _kernels.jump_samples(gen, float(k[0]), float(k[1]), n, out)
    return out if size is not None else out[0]


def sample_initial(source, law: InitialLaw = UNIFORM_LAW):
    """A draw (wave vector, polarization) from the initial law."""
    gen = _as_generator(source)
    kind, p1, p2 = law.kernel_args()
    k1, k2 = _kernels.draw_initial_k(gen, kind, p1, p2)
    if law.kind == "point" and law.i0 is not None:
        pol = law.i0
    else:
        pol = 1 if gen.random() < 0.5 else 2
    return np.array([k1, k2]), pol


@dataclass
class ChainStep:
    """One jump event of the chain."""

    index: int
    k: np.ndarray
    polarization: int
    exp_draw: float
    wait: float
    displacement: np.ndarray


@dataclass
class Chain:
    """Column-oriented record of a simulated chain.

    wave[n] is the state before jump n; draws/waits/displacements are per
    step, with wait = exp_draw / rate(state) and displacement = exp_draw *
    mean_displacement(state).  Polarization alternates deterministically.
    """

    wave: np.ndarray          # (n_steps + 1, 2)
    polarization: np.ndarray  # (n_steps + 1,)
    draws: np.ndarray         # (n_steps,)
    waits: np.ndarray         # (n_steps,)
    displacements: np.ndarray  # (n_steps, 2)
    stream: RandomStream | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.draws)

    def step(self, n: int) -> ChainStep:
        return ChainStep(n, self.wave[n], int(self.polarization[n]),
                         float(self.draws[n]), float(self.waits[n]),
                         self.displacements[n])

    def steps(self):
        for n in range(len(self)):
            yield self.step(n)


def simulate_chain(stream: RandomStream, law: InitialLaw = UNIFORM_LAW,
                   n_steps: int = 1) -> Chain:
    """Simulate the embedded chain for n_steps jumps.

    Deterministic given (stream, law, n_steps).  The initial polarization is
    uniform on {1, 2} unless the law pins it; it alternates afterwards.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    gen = _as_generator(stream)
    kind, p1, p2 = law.kernel_args()
    wave = np.empty((n_steps + 1, 2))
    draws = np.empty(n_steps)
    waits = np.empty(n_steps)
    disp = np.empty((n_steps, 2))
    _kernels.chain_fill(gen, kind, p1, p2, n_steps, wave, draws, waits, disp)
    if law.kind == "point" and law.i0 is not None:
        pol0 = law.i0
    else:
        pol0 = 1 if gen.random() < 0.5 else 2
    polarization = np.where(np.arange(n_steps + 1) % 2 == 0, pol0, 3 - pol0)
    return Chain(wave, polarization.astype(np.int64), draws, waits, disp,
                 stream if isinstance(stream, RandomStream) else None)
