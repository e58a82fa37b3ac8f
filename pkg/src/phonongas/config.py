"""Experiment configuration: a flat, diff-able key = value text format.

Every numeric threshold an experiment checks against is declared here, so a
config file plus a seed fully determines a run, byte for byte.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field, fields


def _lambda_default():
    return [(1.0, 0.0), (0.0, 1.0), (0.7071067811865476, 0.7071067811865476)]


def _p_default():
    return [(1.0, 0.0), (0.0, 2.0), (2.1213203435596424, 2.1213203435596424)]


def _n_scan_default():
    return [2**e for e in range(10, 21)]


@dataclass
class ExperimentConfig:
    """All knobs of the verification laboratory, with desk-scale defaults."""

    experiment: str = "all"
    seed: int = 20260813
    out: str = "runs"
    workers: int = 1
    quick: bool = False

    # quadrature resolutions
    grid: int = 256            # identity checks
    moment_grid: int = 512     # truncated-moment quadratures
    solver_grid: int = 64      # slice evolutions
    dense_grid: int = 16       # dense-operator oracle

    # initial law
    initial_law: str = "uniform"
    initial_k1: float = 0.25
    initial_k2: float = 0.25
    initial_delta: float = 0.1

    # replica experiments
    clt_n: int = 2**18
    clt_replicas: int = 2000
    qv_n: int = 2**16
    qv_replicas: int = 200
    clock_n: int = 2**16
    clock_replicas: int = 400
    trunc_n_values: list = field(default_factory=lambda: [2**12, 2**16, 2**20])
    trunc_replicas: int = 200
    trunc_horizon: float = 4.0
    horizon: float = 1.0
    time_grid_points: int = 256

    # stationary-pass experiments
    tail_samples: int = 10_000_000
    tail_lambda_min: float = 10.0
    tail_lambda_max: float = 1000.0
    tail_points: int = 25
    sigma2_samples: int = 4_000_000
    sigma2_n_values: list = field(default_factory=_n_scan_default)
    stationarity_samples: int = 1_000_000
    stationarity_bins: int = 32
    sampler_samples: int = 1_000_000
    burn_in: int = 50

    # projection vectors (unit 2-vectors)
    lambdas: list = field(default_factory=_lambda_default)

    # solver experiments
    semigroup_dt: float = 0.003125
    semigroup_p: float = 4.0
    semigroup_t_min: float = 1.0
    semigroup_t_max: float = 100.0
    semigroup_points: int = 25
    bump_radius: float = 0.05
    poincare_fields: int = 20
    poincare_p: float = 4.0
    poincare_r_min: float = 1e-3
    poincare_r_max: float = 1.0
    poincare_r_points: int = 25
    diffusion_n: int = 10_000
    diffusion_replicas: int = 10_000
    diffusion_dt: float = 0.05
    diffusion_p_values: list = field(default_factory=_p_default)
    diffusion_t: float = 1.0
    diffusion_preset: str = "self-consistent"   # or "paper"

    # thresholds
    identity_tol: float = 1e-10
    quadrature_stability_tol: float = 1e-8
    dense_oracle_tol: float = 1e-12
    ppf_residual_tol: float = 1e-12
    gof_p: float = 0.001
    ks_p: float = 0.01
    m3_threshold: float = 0.1
    m4_lo: float = 0.85
    m4_hi: float = 1.15
    corr_threshold: float = 0.05
    tail_band: float = 0.15
    sigma_band: float = 3.0
    slope_band: float = 0.2
    tv_threshold: float = 0.02
    qv_dispersion: float = 0.1
    qv_mean_band: float = 0.05
    clock_mean_band: float = 0.01
    clock_ratio_band: float = 0.15
    inverse_clock_spread: float = 0.05
    inverse_clock_band: float = 0.02
    semigroup_stability: float = 2.0
    odd_rate_band: float = 0.02
    away_exponent_min: float = 2.0
    diffusion_rel_tol: float = 0.10
    diffusion_cf_tol: float = 0.05

    def replace(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **kw)

    def quick_scaled(self) -> "ExperimentConfig":
        """Reduced budgets for smoke runs; thresholds are left untouched."""
        if not self.quick:
            return self
        return self.replace(
            clt_n=2**13, clt_replicas=100,
            qv_n=2**12, qv_replicas=40,
            clock_n=2**12, clock_replicas=40,
            trunc_n_values=[2**10, 2**12, 2**14], trunc_replicas=40,
            trunc_horizon=1.0,
            tail_samples=500_000, sigma2_samples=200_000,
            sigma2_n_values=[2**e for e in range(10, 17)],
            stationarity_samples=200_000, sampler_samples=200_000,
            semigroup_t_max=20.0, semigroup_points=10,
            poincare_fields=5,
            diffusion_n=2000, diffusion_replicas=500,
            moment_grid=256,
        )

    # -- flat text round trip ------------------------------------------------

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            lines.append(f"{f.name} = {_format_value(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, base: "ExperimentConfig" = None) -> "ExperimentConfig":
        cfg = base or cls()
        known = {f.name: f for f in fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
            key, _, val = line.partition("=")
            key = key.strip()
            val = val.strip()
            if key not in known:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            try:
                values[key] = _parse_value(val, getattr(cfg, key))
            except ValueError as exc:
                raise ConfigError(f"line {lineno}: field {key!r}: {exc}") from None
        return cfg.replace(**values)

    def content_hash(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()


class ConfigError(ValueError):
    """Configuration file could not be parsed."""


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return "; ".join(_format_value(x) if not isinstance(x, (list, tuple))
                         else ",".join(repr(float(c)) for c in x) for x in v)
    return str(v)


def _parse_value(text: str, template):
    if isinstance(template, bool):
        if text.lower() in ("true", "1", "yes"):
            return True
        if text.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"expected boolean, got {text!r}")
    if isinstance(template, int):
        return int(text)
    if isinstance(template, float):
        return float(text)
    if isinstance(template, list):
        items = [s.strip() for s in text.split(";") if s.strip()]
        if template and isinstance(template[0], tuple):
            return [tuple(float(c) for c in item.split(",")) for item in items]
        return [int(item) if "." not in item else float(item) for item in items]
    return text


def load_config(path, base: ExperimentConfig = None) -> ExperimentConfig:
    with open(path) as fh:
        return ExperimentConfig.from_text(fh.read(), base=base)
