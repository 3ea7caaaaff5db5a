"""Design-based point estimators, variance estimators, Wald intervals, and
the union / restricted-union confidence-set algebra.

Every estimator treats outcomes and covariates as fixed; the design bits z
carry all randomness. Unobserved outcomes are represented by a boolean flag
(never a sentinel number), so a zero design weight short-circuits the product
instead of propagating NaN.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import numkit
from .errors import (
    EmptyInput,
    LeverageOne,
    MissingOutcome,
    OutOfRange,
    RankDeficient,
)

_MERGE_GAP = 1e-12
_LEVERAGE_TOL = 1e-8


@dataclass(frozen=True)
class Dataset:
    """Fixed finite-population slice visible to inference.

    z is the design variable (treatment, inclusion, or non-missingness
    depending on the problem). `observed` flags which y entries carry data.
    `treat` holds the experiment arm when z encodes outcome availability;
    y0/y1 hold the two panel outcome columns for difference-in-differences.
    """

    z: np.ndarray
    x: np.ndarray
    y: np.ndarray
    observed: np.ndarray
    treat: np.ndarray | None = None
    y0: np.ndarray | None = None
    y1: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.z)
        for name in ("x", "y", "observed"):
            if len(getattr(self, name)) != n:
                raise EmptyInput(f"{name} length does not match z (N={n})")
        for name in ("treat", "y0", "y1"):
            val = getattr(self, name)
            if val is not None and len(val) != n:
                raise EmptyInput(f"{name} length does not match z (N={n})")

    @property
    def n_units(self) -> int:
        return len(self.z)

    @classmethod
    def for_ate(cls, z, x, y) -> "Dataset":
        z = np.asarray(z, dtype=np.int64)
        return cls(z=z, x=np.atleast_2d(np.asarray(x, dtype=float)),
                   y=np.asarray(y, dtype=float),
                   observed=np.ones(len(z), dtype=bool))

    @classmethod
    def for_survey(cls, z, x, y, observed) -> "Dataset":
        return cls(z=np.asarray(z, dtype=np.int64),
                   x=np.atleast_2d(np.asarray(x, dtype=float)),
                   y=np.asarray(y, dtype=float),
                   observed=np.asarray(observed, dtype=bool))

    @classmethod
    def for_missing(cls, nonmissing, x, y, observed, treat) -> "Dataset":
        return cls(z=np.asarray(nonmissing, dtype=np.int64),
                   x=np.atleast_2d(np.asarray(x, dtype=float)),
                   y=np.asarray(y, dtype=float),
                   observed=np.asarray(observed, dtype=bool),
                   treat=np.asarray(treat, dtype=np.int64))

    @classmethod
    def for_panel(cls, z, x, y0, y1) -> "Dataset":
        z = np.asarray(z, dtype=np.int64)
        y0 = np.asarray(y0, dtype=float)
        y1 = np.asarray(y1, dtype=float)
        return cls(z=z, x=np.atleast_2d(np.asarray(x, dtype=float)),
                   y=y1 - y0, observed=np.ones(len(z), dtype=bool),
                   y0=y0, y1=y1)


@dataclass(frozen=True)
class EstimateWithVariance:
    point: float
    variance: float
    per_unit: np.ndarray | None = None
    warning: str | None = None


def check_propensities(p, n: int | None = None, strict: bool = True) -> np.ndarray:
    p = np.asarray(p, dtype=float).ravel()
    if n is not None and len(p) != n:
        raise EmptyInput(f"propensity vector length {len(p)} != N={n}")
    if strict and (np.any(p <= 0.0) or np.any(p >= 1.0)):
        raise OutOfRange("propensities must lie strictly inside (0,1)")
    return p


def _sample_variance_of_mean(per_unit: np.ndarray) -> float:
    """sum (tau_i - tau_bar)^2 / (N (N-1)); zero for a single unit."""
    n = len(per_unit)
    if n < 2:
        return 0.0
    centered = per_unit - per_unit.mean()
    return float(centered @ centered / (n * (n - 1)))


def ipw_estimate(ds: Dataset, p) -> EstimateWithVariance:
    """Inverse probability weighting estimator with its design-based variance."""
    p = check_propensities(p, ds.n_units)
    if not np.all(ds.observed):
        raise MissingOutcome("IPW contrast needs every outcome observed")
    z = ds.z.astype(float)
    per_unit = z * ds.y / p - (1.0 - z) * ds.y / (1.0 - p)
    return EstimateWithVariance(
        point=float(per_unit.mean()),
        variance=_sample_variance_of_mean(per_unit),
        per_unit=per_unit,
    )


def ht_estimate(ds: Dataset, p) -> EstimateWithVariance:
    """Horvitz-Thompson mean estimator under Poisson/Bernoulli sampling."""
    p = check_propensities(p, ds.n_units)
    sampled = ds.z == 1
    if np.any(sampled & ~ds.observed):
        raise MissingOutcome("a sampled unit has no observed outcome")
    y = np.where(sampled, ds.y, 0.0)  # 0 x NA = 0 via the flag
    n = ds.n_units
    per_unit = sampled * y / p
    variance = float(np.sum((1.0 - p) / (p * p) * sampled * y * y) / (n * n))
    return EstimateWithVariance(
        point=float(per_unit.mean()), variance=variance, per_unit=per_unit,
    )


def missing_outcome_estimate(ds: Dataset, p_nonmiss) -> EstimateWithVariance:
    """Treatment-effect estimator for a Bernoulli(1/2) experiment with
    outcome missingness; ds.z flags availability, ds.treat the arm."""
    p = check_propensities(p_nonmiss, ds.n_units)
    if ds.treat is None:
        raise MissingOutcome("missing-outcome estimator needs treatment bits")
    m = ds.z.astype(float)
    treat = ds.treat.astype(float)
    y = np.where((ds.z == 1) & ds.observed, ds.y, 0.0)
    per_unit = 2.0 * m * treat * y / p - 2.0 * m * (1.0 - treat) * y / p
    warning = None
    if not np.any(ds.z == 1):
        warning = "no outcomes observed; estimate is degenerate"
    return EstimateWithVariance(
        point=float(per_unit.mean()),
        variance=_sample_variance_of_mean(per_unit),
        per_unit=per_unit,
        warning=warning,
    )


def did_estimate(panel: Dataset, p) -> EstimateWithVariance:
    """Weighted difference-in-differences: IPW applied to Y1 - Y0."""
    if panel.y0 is None or panel.y1 is None:
        raise MissingOutcome("difference-in-differences needs both outcome columns")
    diff = Dataset.for_ate(panel.z, panel.x, panel.y1 - panel.y0)
    return ipw_estimate(diff, p)


def covariate_adjusted_variance(per_unit: np.ndarray, Q: np.ndarray) -> float:
    """Hat-matrix-adjusted variance (1/N^2) u' (I - H_Q) u with
    u_i = per_unit_i / sqrt(1 - h_ii); equals the plain sample form when Q is
    the all-ones column."""
    per_unit = np.asarray(per_unit, dtype=float).ravel()
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    if Q.shape[0] != len(per_unit):
        Q = Q.T
    n, ell = Q.shape
    if n <= ell:
        raise RankDeficient(f"need N > L, got N={n}, L={ell}")
    gram = Q.T @ Q
    try:
        lower = numkit.cholesky_factor(gram)
    except Exception as exc:
        raise RankDeficient("Q'Q is not positive definite") from exc
    diag = np.diag(lower)
    if diag.min() <= 1e-10 * max(diag.max(), 1.0):
        raise RankDeficient("Q is rank deficient")
    # h_ii and H u without forming the N x N hat matrix
    half = np.linalg.solve(lower, Q.T)  # L^-1 Q'
    leverage = np.einsum("ij,ij->j", half, half)
    if np.any(leverage >= 1.0 - _LEVERAGE_TOL):
        raise LeverageOne("a leverage value is numerically one")
    u = per_unit / np.sqrt(1.0 - leverage)
    hu = half.T @ (half @ u)
    value = float(u @ u - u @ hu) / (n * n)
    return max(value, 0.0)


def wald_interval(est: EstimateWithVariance, alpha: float) -> tuple[float, float]:
    if not 0.0 < alpha < 1.0:
        raise OutOfRange(f"alpha must be in (0,1), got {alpha}")
    half = numkit.std_normal_quantile(1.0 - alpha / 2.0) * np.sqrt(max(est.variance, 0.0))
    return (est.point - half, est.point + half)


@dataclass(frozen=True)
class IntervalUnion:
    """Finite union of disjoint closed intervals, sorted by lower endpoint."""

    components: tuple[tuple[float, float], ...]

    @property
    def measure(self) -> float:
        return float(sum(hi - lo for lo, hi in self.components))

    def contains(self, value: float) -> bool:
        return any(lo <= value <= hi for lo, hi in self.components)

    def covers_interval(self, lo: float, hi: float) -> bool:
        return any(a <= lo and hi <= b for a, b in self.components)

    def to_json_dict(self) -> dict:
        return {
            "components": [[lo, hi] for lo, hi in self.components],
            "measure": self.measure,
        }


def union_intervals(intervals: Sequence[tuple[float, float]]) -> IntervalUnion:
    """Minimal disjoint sorted representation of a union of closed intervals.

    Components separated by a gap below 1e-12 are merged so the measure is
    stable under run reordering.
    """
    items = list(intervals)
    if not items:
        raise EmptyInput("cannot take the union of zero intervals")
    cleaned = []
    for lo, hi in items:
        lo, hi = float(lo), float(hi)
        if not (np.isfinite(lo) and np.isfinite(hi)) or hi < lo:
            raise EmptyInput(f"malformed interval ({lo}, {hi})")
        cleaned.append((lo, hi))
    cleaned.sort()
    merged = [cleaned[0]]
    for lo, hi in cleaned[1:]:
        last_lo, last_hi = merged[-1]
        if lo <= last_hi + _MERGE_GAP:
            merged[-1] = (last_lo, max(last_hi, hi))
        else:
            merged.append((lo, hi))
    return IntervalUnion(components=tuple(merged))


_ESTIMATOR_KINDS = {
    "ipw": ipw_estimate,
    "ht": ht_estimate,
    "missing": missing_outcome_estimate,
    "did": did_estimate,
}


@dataclass(frozen=True)
class PropagationResult:
    confidence_set: IntervalUnion
    per_run_intervals: tuple[tuple[float, float], ...]
    per_run_points: tuple[float, ...]
    used_runs: tuple[int, ...]
    fallback_unrestricted: bool = False

    def to_json_dict(self) -> dict:
        return {
            "confidence_set": self.confidence_set.to_json_dict(),
            "per_run_intervals": [[lo, hi] for lo, hi in self.per_run_intervals],
            "per_run_points": list(self.per_run_points),
            "used_runs": list(self.used_runs),
            "fallback_unrestricted": self.fallback_unrestricted,
        }


def propagate_ci(ds: Dataset, regen_out, alpha: float,
                 union_mode: str = "unrestricted",
                 alpha_prime: float | None = None,
                 fit=None,
                 estimator: str = "ipw",
                 variance: str = "basic",
                 q_matrix: np.ndarray | None = None) -> PropagationResult:
    """Union (or restricted union) of per-run design-based Wald intervals.

    Restricted mode keeps only the runs whose coefficient draws pass the
    deviation screen and tightens each interval to level alpha - alpha_prime;
    an empty screened set falls back to the unrestricted union with a flag.
    """
    from .regen import restricted_indices  # local import to avoid a cycle

    try:
        estimate_fn = _ESTIMATOR_KINDS[estimator]
    except KeyError:
        raise EmptyInput(f"unknown estimator kind {estimator!r}") from None
    if variance not in ("basic", "covariate_adjusted"):
        raise EmptyInput(f"unknown variance kind {variance!r}")
    if variance == "covariate_adjusted" and q_matrix is None:
        q_matrix = np.column_stack([np.ones(ds.n_units), ds.x])

    vectors = regen_out.propensity_vectors
    m_total = len(vectors)
    level = alpha
    used = list(range(m_total))
    fallback = False
    if union_mode == "restricted":
        if alpha_prime is None or not 0.0 < alpha_prime < alpha:
            raise OutOfRange("restricted union needs 0 < alpha_prime < alpha")
        if regen_out.coefficient_draws is None or fit is None:
            raise EmptyInput(
                "restricted union needs parametric coefficient draws and the fit"
            )
        kept = restricted_indices(regen_out.coefficient_draws, fit, alpha_prime)
        if kept:
            used = list(kept)
            level = alpha - alpha_prime
        else:
            fallback = True
    elif union_mode != "unrestricted":
        raise EmptyInput(f"unknown union mode {union_mode!r}")

    intervals, points = [], []
    for m in used:
        est = estimate_fn(ds, vectors[m])
        if variance == "covariate_adjusted" and est.per_unit is not None:
            est = EstimateWithVariance(
                point=est.point,
                variance=covariate_adjusted_variance(est.per_unit, q_matrix),
                per_unit=est.per_unit,
                warning=est.warning,
            )
        intervals.append(wald_interval(est, level))
        points.append(est.point)
    return PropagationResult(
        confidence_set=union_intervals(intervals),
        per_run_intervals=tuple(intervals),
        per_run_points=tuple(points),
        used_runs=tuple(used),
        fallback_unrestricted=fallback,
    )
