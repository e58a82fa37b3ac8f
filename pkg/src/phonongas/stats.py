"""Statistical reductions for the Monte Carlo experiments.

Every estimator is packaged as an EstimatorReport or TestResult whose
pass/fail verdict is recomputable from its stored fields.  Deterministic
predictions come from the quadrature side of the model module; nothing here
draws randomness.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps


def _as_float(x):
    return None if x is None else float(x)


@dataclass
class EstimatorReport:
    """A point estimate with uncertainty, an optional prediction, and a verdict.

    tol_kind: how `passed` is derived.
      "rel"    : |value - prediction| <= tolerance * |prediction|
      "abs"    : |value - prediction| <= tolerance
      "bounds" : tolerance = (lo, hi), lo <= value <= hi
      "sigma"  : |value - prediction| <= tolerance * std_error
      "upper"  : value <= tolerance
      "lower"  : value >= tolerance
      "moments": verdict from the m3/m4 entries stored in details
      "none"   : informational, always passes
    """

    name: str
    value: float
    std_error: float | None = None
    n_samples: int = 0
    prediction: float | None = None
    tol_kind: str = "none"
    tolerance: object = None
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        v, p = self.value, self.prediction
        if self.tol_kind == "none":
            return True
        if self.tol_kind == "rel":
            return abs(v - p) <= self.tolerance * abs(p)
        if self.tol_kind == "abs":
            return abs(v - (p if p is not None else 0.0)) <= self.tolerance
        if self.tol_kind == "bounds":
            lo, hi = self.tolerance
            return lo <= v <= hi
        if self.tol_kind == "sigma":
            return abs(v - p) <= self.tolerance * self.std_error
        if self.tol_kind == "upper":
            return v <= self.tolerance
        if self.tol_kind == "lower":
            return v >= self.tolerance
        if self.tol_kind == "moments":
            d = self.details
            lo, hi = d["m4_bounds"]
            return (abs(d["m3_normalized"]) < d["m3_threshold"]
                    and lo <= d["m4_ratio"] <= hi)
        raise ValueError(f"unknown tol_kind {self.tol_kind!r}")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "value": _as_float(self.value),
            "std_error": _as_float(self.std_error),
            "n_samples": int(self.n_samples),
            "prediction": _as_float(self.prediction),
            "tol_kind": self.tol_kind,
            "tolerance": list(self.tolerance) if isinstance(self.tolerance, tuple)
                         else _as_float(self.tolerance),
            "passed": bool(self.passed),
            "details": self.details,
        }


@dataclass
class TestResult:
    """Outcome of a goodness-of-fit or correlation test."""

    kind: str
    statistic: float
    p_value: float
    n_samples: int
    threshold: float
    higher_is_better: bool = True  # p-value style thresholds
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        if self.higher_is_better:
            return self.p_value > self.threshold
        return abs(self.statistic) < self.threshold

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "statistic": _as_float(self.statistic),
            "p_value": _as_float(self.p_value),
            "n_samples": int(self.n_samples),
            "threshold": _as_float(self.threshold),
            "higher_is_better": self.higher_is_better,
            "passed": bool(self.passed),
            "details": self.details,
        }


# ---------------------------------------------------------------------------
# goodness of fit


def ks_normal(samples, variance: float, threshold: float = 0.01) -> TestResult:
    """Kolmogorov-Smirnov test of samples against N(0, variance).

    Uses the asymptotic Kolmogorov distribution, adequate for n >= 500.
    """
    samples = np.asarray(samples, dtype=float)
    if len(samples) < 500:
        raise ValueError(f"need >= 500 samples for the asymptotic KS test, got {len(samples)}")
    if variance <= 0.0:
        raise ValueError("predicted variance must be positive")
    res = sps.kstest(samples, "norm", args=(0.0, np.sqrt(variance)), mode="asymp")
    return TestResult("ks_normal", float(res.statistic), float(res.pvalue),
                      len(samples), threshold,
                      details={"variance": float(variance)})


def chi_square_gof(counts, probs, threshold: float = 0.001) -> TestResult:
    """Chi-square test of observed bin counts against exact bin probabilities."""
    counts = np.asarray(counts, dtype=float).ravel()
    probs = np.asarray(probs, dtype=float).ravel()
    total = counts.sum()
    expected = probs * total / probs.sum()
    if expected.min() < 5.0:
        raise ValueError("chi-square binning too fine: expected count below 5")
    stat = float(((counts - expected) ** 2 / expected).sum())
    dof = len(counts) - 1
    p = float(sps.chi2.sf(stat, dof))
    return TestResult("chi_square", stat, p, int(total), threshold,
                      details={"dof": dof})


def ks_uniform_cdf(samples, cdf, threshold: float = 0.001) -> TestResult:
    """KS test of samples against an arbitrary continuous CDF callable."""
    samples = np.asarray(samples, dtype=float)
    res = sps.kstest(samples, cdf, mode="asymp")
    return TestResult("ks_cdf", float(res.statistic), float(res.pvalue),
                      len(samples), threshold)


def sign_symmetry(n_positive: int, n_total: int, threshold: float = 3.0) -> TestResult:
    """Check that a signed variable is symmetric: sign count within threshold sigmas."""
    z = (n_positive - 0.5 * n_total) / np.sqrt(0.25 * n_total)
    p = 2.0 * sps.norm.sf(abs(z))
    return TestResult("sign_symmetry", float(z), float(p), n_total, threshold,
                      higher_is_better=False)


def increment_corr(first, second, threshold: float = 0.05) -> TestResult:
    """Sample correlation between two replica-wise quantities; passes if small."""
    first = np.asarray(first, dtype=float)
    second = np.asarray(second, dtype=float)
    rho = float(np.corrcoef(first, second)[0, 1])
    n = len(first)
    z = rho * np.sqrt(n)
    p = 2.0 * sps.norm.sf(abs(z))
    return TestResult("correlation", rho, float(p), n, threshold,
                      higher_is_better=False)


# ---------------------------------------------------------------------------
# moments


def moment_table(samples, variance: float, m3_threshold: float = 0.1,
                 m4_bounds: tuple[float, float] = (0.85, 1.15)) -> EstimatorReport:
    """Moments of order 2, 3, 4, 6 normalized by their Gaussian predictions.

    The verdict combines |m3 normalized| < m3_threshold and the m4 ratio
    falling inside m4_bounds; orders 2 and 6 are reported unscored.
    """
    z = np.asarray(samples, dtype=float)
    n = len(z)
    v = float(variance)
    ratios = {
        "m2_ratio": float(np.mean(z**2) / v),
        "m3_normalized": float(np.mean(z**3) / v**1.5),
        "m4_ratio": float(np.mean(z**4) / (3.0 * v**2)),
        "m6_ratio": float(np.mean(z**6) / (15.0 * v**3)),
    }
    m3_ok = abs(ratios["m3_normalized"]) < m3_threshold
    m4_ok = m4_bounds[0] <= ratios["m4_ratio"] <= m4_bounds[1]
    return EstimatorReport(
        name="moment_table",
        value=ratios["m4_ratio"],
        std_error=float(np.std(z**4, ddof=1) / (3.0 * v**2 * np.sqrt(n))),
        n_samples=n,
        prediction=1.0,
        tol_kind="moments",
        tolerance=None,
        details={**ratios, "m3_threshold": m3_threshold,
                 "m4_bounds": list(m4_bounds), "m3_passed": bool(m3_ok),
                 "m4_passed": bool(m4_ok)},
    )


# ---------------------------------------------------------------------------
# tail index


def tail_slope(thresholds, exceed_counts, n_samples: int,
               expected: float = -2.0, band: float = 0.15,
               min_count: int = 10) -> EstimatorReport:
    """Log-log regression slope of the empirical survival function.

    Weighted least squares on ln(survival) vs ln(threshold); points with
    fewer than min_count exceedances carry no usable information and are
    dropped.  Weights are the exceedance counts, matching the asymptotic
    variance of ln(empirical survival).
    """
    thresholds = np.asarray(thresholds, dtype=float)
    counts = np.asarray(exceed_counts, dtype=float)
    keep = counts >= min_count
    if keep.sum() < 3:
        raise ValueError("not enough populated thresholds for a tail fit; "
                         "increase the sample budget")
    x = np.log(thresholds[keep])
    y = np.log(counts[keep] / n_samples)
    w = counts[keep]
    wx = np.average(x, weights=w)
    wy = np.average(y, weights=w)
    cov = np.average((x - wx) * (y - wy), weights=w)
    var = np.average((x - wx) ** 2, weights=w)
    slope = cov / var
    resid = y - wy - slope * (x - wx)
    dof = max(len(x) - 2, 1)
    se = np.sqrt(np.average(resid**2, weights=w) / dof / var)
    return EstimatorReport(
        name="tail_slope",
        value=float(slope),
        std_error=float(se),
        n_samples=n_samples,
        prediction=expected,
        tol_kind="abs",
        tolerance=band,
        details={"n_points": int(keep.sum()),
                 "threshold_range": [float(thresholds[keep].min()),
                                     float(thresholds[keep].max())]},
    )


def tv_distance(counts, probs, threshold: float = 0.02) -> EstimatorReport:
    """Total-variation distance between binned empirical and exact laws."""
    counts = np.asarray(counts, dtype=float).ravel()
    probs = np.asarray(probs, dtype=float).ravel()
    emp = counts / counts.sum()
    tv = 0.5 * float(np.abs(emp - probs / probs.sum()).sum())
    return EstimatorReport(
        name="tv_distance", value=tv, std_error=None,
        n_samples=int(counts.sum()), prediction=0.0,
        tol_kind="upper", tolerance=threshold,
        details={"bins": len(counts)},
    )


def mean_report(name, samples, prediction, tol_kind="rel", tolerance=0.05,
                details=None) -> EstimatorReport:
    """Replica mean with its standard error against a deterministic prediction."""
    samples = np.asarray(samples, dtype=float)
    n = len(samples)
    se = float(samples.std(ddof=1) / np.sqrt(n)) if n > 1 else None
    return EstimatorReport(name=name, value=float(samples.mean()),
                           std_error=se, n_samples=n, prediction=float(prediction),
                           tol_kind=tol_kind, tolerance=tolerance,
                           details=details or {})


def slope_fit(x, y):
    """Plain least-squares slope and intercept of y against x."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    A = np.vstack([x, np.ones_like(x)]).T
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    return float(slope), float(intercept)
