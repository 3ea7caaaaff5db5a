"""Fisher randomization tests for the sharp null under independent Bernoulli
designs, with the max-over-runs combination across regenerated propensity
vectors.

Monte Carlo p-values use the finite-sample-valid (1 + count) / (B + 1) form.
When combining runs, the same block of uniform draws generates every run's
assignment resamples (common random numbers), so M identical propensity
vectors collapse to the single-run p-value exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import MissingOutcome, TooLarge
from .estimators import Dataset, check_propensities
from .numkit import RngStream

_ENUM_LIMIT = 20
_CHUNK_ROWS = 4096


@dataclass(frozen=True)
class TestStatistic:
    """User-chosen statistic T(z, y); batch evaluates a (B, N) block of
    assignments against outcomes broadcastable to the block."""

    tag: str
    fn: Callable[[np.ndarray, np.ndarray], float]
    batch: Callable[[np.ndarray, np.ndarray], np.ndarray]


def _diff_means_batch(zmat, y):
    zf = zmat.astype(float)
    counts_t = zf.sum(axis=1)
    counts_c = zf.shape[1] - counts_t
    sums_t = (zf * y).sum(axis=1)
    sums_c = (np.asarray(y) * np.ones_like(zf)).sum(axis=1) - sums_t
    with np.errstate(divide="ignore", invalid="ignore"):
        diff = sums_t / counts_t - sums_c / counts_c
    # all-treated or all-control resamples score a non-extreme zero
    return np.where((counts_t == 0) | (counts_c == 0), 0.0, np.abs(diff))


def abs_difference_in_means() -> TestStatistic:
    def value(z, y):
        return float(_diff_means_batch(np.asarray(z)[None, :], np.asarray(y))[0])

    return TestStatistic("abs_difference_in_means", value, _diff_means_batch)


def treated_sum() -> TestStatistic:
    def value(z, y):
        return float(np.sum(np.asarray(z) * np.asarray(y)))

    def batch(zmat, y):
        return (zmat.astype(float) * y).sum(axis=1)

    return TestStatistic("treated_sum", value, batch)


def custom_statistic(label: str, fn: Callable[[np.ndarray, np.ndarray], float],
                     batch: Callable | None = None) -> TestStatistic:
    if batch is None:
        def batch(zmat, y):
            y = np.asarray(y)
            if y.ndim == 1:
                return np.array([fn(row, y) for row in zmat])
            return np.array([fn(row, yr) for row, yr in zip(zmat, y)])
    return TestStatistic(label, fn, batch)


def _require_complete(ds: Dataset):
    if not np.all(ds.observed):
        raise MissingOutcome("sharp-null tests need every outcome observed")


def _mc_exceed_counts(vectors, y, stat, t_obs, draws, stream,
                      shift: float = 0.0):
    """For each propensity vector, count resamples with T >= t_obs, reusing
    one uniform block across vectors."""
    vectors = np.atleast_2d(vectors)
    n = vectors.shape[1]
    counts = np.zeros(vectors.shape[0], dtype=np.int64)
    remaining = draws
    while remaining > 0:
        rows = min(_CHUNK_ROWS, remaining)
        u = stream.uniform01((rows, n))
        for k, p in enumerate(vectors):
            zmat = u < p
            y_eval = y if shift == 0.0 else y + shift * zmat
            stats = stat.batch(zmat, y_eval)
            counts[k] += int(np.sum(stats >= t_obs))
        remaining -= rows
    return counts


def fisher_p_value(ds: Dataset, p, stat: TestStatistic, draws: int,
                   stream: RngStream) -> float:
    """Monte Carlo sharp-null p-value (1 + #{T(z_b, y) >= t}) / (B + 1)."""
    _require_complete(ds)
    p = check_propensities(p, ds.n_units, strict=False)
    t_obs = stat.fn(ds.z, ds.y)
    counts = _mc_exceed_counts(p[None, :], ds.y, stat, t_obs, draws, stream)
    return float((1 + counts[0]) / (draws + 1))


def fisher_p_exact(ds: Dataset, p, stat: TestStatistic) -> float:
    """Exact p-value by weighted enumeration of all 2^N assignments."""
    _require_complete(ds)
    n = ds.n_units
    if n > _ENUM_LIMIT:
        raise TooLarge(f"exact enumeration is guarded at N <= {_ENUM_LIMIT}")
    p = check_propensities(p, n, strict=False)
    t_obs = stat.fn(ds.z, ds.y)
    total = 0.0
    codes = np.arange(2 ** n, dtype=np.int64)
    for start in range(0, len(codes), _CHUNK_ROWS):
        chunk = codes[start:start + _CHUNK_ROWS]
        zmat = (chunk[:, None] >> np.arange(n)) & 1
        weights = np.prod(np.where(zmat == 1, p, 1.0 - p), axis=1)
        stats = stat.batch(zmat, ds.y)
        total += float(weights[stats >= t_obs].sum())
    return min(total, 1.0)


@dataclass(frozen=True)
class FisherResult:
    p_value: float
    per_run_p_values: tuple[float, ...]
    statistic_observed: float

    def to_json_dict(self) -> dict:
        return {
            "p_value": self.p_value,
            "per_run_p_values": list(self.per_run_p_values),
            "statistic_observed": self.statistic_observed,
        }


def fisher_propagate(ds: Dataset, regen_out, stat: TestStatistic, draws: int,
                     stream: RngStream) -> FisherResult:
    """Max over regeneration runs of per-run Monte Carlo p-values, all runs
    sharing the observed statistic and the assignment-draw uniforms."""
    _require_complete(ds)
    t_obs = stat.fn(ds.z, ds.y)
    counts = _mc_exceed_counts(regen_out.propensity_vectors, ds.y, stat, t_obs,
                               draws, stream)
    per_run = tuple(float((1 + c) / (draws + 1)) for c in counts)
    return FisherResult(p_value=max(per_run), per_run_p_values=per_run,
                        statistic_observed=float(t_obs))


def shift_pvalues(ds: Dataset, regen_out, stat: TestStatistic,
                  tau_grid, draws: int, stream: RngStream) -> np.ndarray:
    """p-values for constant-shift sharp nulls over a caller-supplied grid;
    inverting them (keep tau0 with p > alpha) yields a confidence set.

    Each grid point removes the hypothesized shift from treated outcomes and
    re-imposes it on resampled assignments, reusing the same uniform block.
    """
    _require_complete(ds)
    out = np.empty(len(tau_grid))
    for k, tau0 in enumerate(tau_grid):
        y_adj = ds.y - tau0 * ds.z
        t_obs = stat.fn(ds.z, y_adj + tau0 * ds.z)
        counts = _mc_exceed_counts(regen_out.propensity_vectors, y_adj, stat,
                                   t_obs, draws, stream.substream(k),
                                   shift=tau0)
        per_run = (1 + counts) / (draws + 1)
        out[k] = float(per_run.max())
    return out
