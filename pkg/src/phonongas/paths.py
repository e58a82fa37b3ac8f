"""Deterministic post-processing of a chain: clock, position, rescaled paths.

The chain's clock and position are plain left-to-right prefix sums of the
waits and displacements, so reruns are bit-identical.  Rescaled paths divide
time by n and space by sqrt(n ln n); the bulk/overshoot decomposition splits
each displacement component at the threshold sqrt(n).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import velocity
from .sampling import Chain

PATH_KINDS = ("jump_sum", "position", "clock", "clock_inverse")


class InsufficientTrajectoryError(ValueError):
    """The trajectory is too short for the requested rescaled path."""


@dataclass
class Trajectory:
    """Jump times and positions of one simulated chain.

    times[n] is the clock after n jumps (times[0] = 0); positions[n] the
    accumulated displacement.  Between jumps the walker moves with the
    velocity of the state it sits in, so |position increments| <= wait.
    """

    times: np.ndarray       # (n_steps + 1,)
    positions: np.ndarray   # (n_steps + 1, 2)
    chain: Chain

    def __len__(self) -> int:
        return len(self.chain)


def accumulate(chain: Chain) -> Trajectory:
    """Prefix-sum the chain into a trajectory (fixed left-to-right order)."""
    if len(chain) < 1:
        raise ValueError("empty chain")
    times = np.concatenate([[0.0], np.add.accumulate(chain.waits)])
    positions = np.vstack([np.zeros((1, 2)),
                           np.add.accumulate(chain.displacements, axis=0)])
    return Trajectory(times, positions, chain)


def position_at(traj: Trajectory, t):
    """Linearly interpolated position at clock time(s) t in [0, T_last].

    Exact at jump times; in between the walker moves with the current
    state's velocity.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0.0) or np.any(t > traj.times[-1]):
        raise InsufficientTrajectoryError(
            f"requested time up to {t.max() if t.ndim else float(t)} but the "
            f"trajectory only reaches T = {traj.times[-1]:.6g}; simulate more steps")
    idx = np.searchsorted(traj.times, t, side="right") - 1
    idx = np.clip(idx, 0, len(traj) - 1)
    vel = velocity(traj.chain.wave[idx])
    dt = (t - traj.times[idx])[..., None]
    return traj.positions[idx] + vel * dt


@dataclass
class SamplePath:
    """A rescaled process sampled on a fixed time grid."""

    scale_n: int
    times: np.ndarray
    values: np.ndarray   # (len(times), 2) or (len(times),) for clock kinds
    kind: str


@dataclass
class TruncationPair:
    """Bulk/overshoot split of the rescaled jump sum.

    bulk accumulates the displacement components with |increment| <= sqrt(n);
    overshoot is defined as the untruncated path minus bulk, so additivity is
    exact at every grid time by construction.
    """

    bulk: SamplePath
    overshoot: SamplePath


def _check_budget(traj, n, times, need_clock):
    tmax = float(np.max(times))
    steps_needed = int(math.ceil(n * tmax - 1e-9))
    if need_clock:
        if traj.times[-1] < n * tmax:
            raise InsufficientTrajectoryError(
                f"position path at horizon {tmax} needs clock time >= {n * tmax:.6g} "
                f"but T_last = {traj.times[-1]:.6g}")
    elif len(traj) < steps_needed:
        raise InsufficientTrajectoryError(
            f"jump-sum path at horizon {tmax} needs {steps_needed} steps, "
            f"trajectory has {len(traj)}")
    return tmax


def _snap_index(pos):
    """Split pos into (floor index, fraction), snapping FP-noise onto anchors."""
    eps = 8.0 * np.spacing(np.maximum(1.0, pos))
    j = np.floor(pos + eps).astype(np.int64)
    frac = pos - j
    frac[np.abs(frac) <= eps] = 0.0
    np.clip(frac, 0.0, 1.0, out=frac)
    return j, frac


def _interp_prefix(partial, increments, n, times):
    """Linear interpolation of anchor values partial[j] at times j/n."""
    pos = np.asarray(times, dtype=float) * n
    j, frac = _snap_index(pos)
    j = np.clip(j, 0, len(partial) - 1)
    inc = np.zeros((len(pos), increments.shape[1]))
    inside = j < len(increments)
    inc[inside] = increments[j[inside]]
    return partial[j] + frac[:, None] * inc


def rescaled_path(traj: Trajectory, n: int, times, kind: str) -> SamplePath:
    """One of the rescaled processes on the given time grid.

    jump_sum      : jump sums / sqrt(n ln n), linearly interpolated at j/n
    position      : interpolated position at clock time n*t, / sqrt(n ln n)
    clock         : clock after floor(n t) jumps, / n
    clock_inverse : first jump count with clock >= n*t, / n
    """
    if kind not in PATH_KINDS:
        raise ValueError(f"unknown path kind {kind!r}; choose from {PATH_KINDS}")
    if n < 2:
        raise ValueError("scale n must be >= 2")
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(np.diff(times) <= 0.0) and len(times) > 1:
        raise ValueError("time grid must be strictly increasing")
    norm = 1.0 / math.sqrt(n * math.log(n))
    if kind == "jump_sum":
        _check_budget(traj, n, times, need_clock=False)
        vals = _interp_prefix(traj.positions, traj.chain.displacements, n, times) * norm
    elif kind == "position":
        _check_budget(traj, n, times, need_clock=True)
        vals = position_at(traj, n * times) * norm
    elif kind == "clock":
        _check_budget(traj, n, times, need_clock=False)
        j, _ = _snap_index(n * times)
        j = np.clip(j, 0, len(traj))
        vals = traj.times[j] / n
    else:  # clock_inverse
        _check_budget(traj, n, times, need_clock=True)
        vals = np.searchsorted(traj.times, n * times, side="left") / n
    return SamplePath(n, times, vals, kind)


def truncation_split(chain: Chain, n: int, times) -> TruncationPair:
    """Split the rescaled jump sum at the per-component threshold sqrt(n)."""
    traj = accumulate(chain)
    full = rescaled_path(traj, n, times, "jump_sum")
    root = math.sqrt(n)
    kept = np.where(np.abs(chain.displacements) <= root, chain.displacements, 0.0)
    partial = np.vstack([np.zeros((1, 2)), np.add.accumulate(kept, axis=0)])
    norm = 1.0 / math.sqrt(n * math.log(n))
    bulk_vals = _interp_prefix(partial, kept, n, full.times) * norm
    bulk = SamplePath(n, full.times, bulk_vals, "bulk")
    overshoot = SamplePath(n, full.times, full.values - bulk_vals, "overshoot")
    return TruncationPair(bulk, overshoot)


def project(path: SamplePath, lam) -> SamplePath:
    """Pointwise inner product of a vector path with a unit vector."""
    lam = np.asarray(lam, dtype=float)
    if abs(float(lam @ lam) - 1.0) > 1e-12:
        raise ValueError("projection vector must be unit length")
    if path.values.ndim != 2:
        raise ValueError(f"cannot project scalar path of kind {path.kind!r}")
    return SamplePath(path.scale_n, path.times, path.values @ lam,
                      f"{path.kind}@{lam[0]:g},{lam[1]:g}")


def path_sup(path: SamplePath) -> float:
    """Sup of |values| over the grid (componentwise max for vector paths)."""
    return float(np.max(np.abs(path.values)))


# ---------------------------------------------------------------------------
# CSV export, shortest round-trip float formatting


def _fmt(x: float) -> str:
    return repr(float(x))


def trajectory_to_csv(traj: Trajectory, fname) -> None:
    with open(fname, "w") as fh:
        fh.write("n,T_n,S1,S2\n")
        for j in range(len(traj) + 1):
            fh.write(f"{j},{_fmt(traj.times[j])},{_fmt(traj.positions[j, 0])},"
                     f"{_fmt(traj.positions[j, 1])}\n")


def path_to_csv(path: SamplePath, fname) -> None:
    vals = path.values if path.values.ndim == 2 else path.values[:, None]
    with open(fname, "w") as fh:
        fh.write("time," + ",".join(f"v{i+1}" for i in range(vals.shape[1])) + "\n")
        for j in range(len(path.times)):
            row = ",".join(_fmt(v) for v in vals[j])
            fh.write(f"{_fmt(path.times[j])},{row}\n")


def read_csv_columns(fname) -> dict[str, np.ndarray]:
    with open(fname) as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    data = np.array([[float(c) for c in row] for row in rows])
    return {name: data[:, i] for i, name in enumerate(header)}
