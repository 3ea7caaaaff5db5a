"""Sensitivity analysis for hidden bias under the marginal sensitivity model.

A tilt vector t in [1/Gamma, Gamma]^N reweights each unit's inverse-propensity
term; the per-run sensitivity interval stretches the Wald interval to the
extremes of the tilted estimate minus/plus its stretched standard error, and a
box-constrained quadratic program decides whether a hypothesized effect stays
inside the union of per-run sensitivity intervals. The objectives are smooth
but not convex, so optimization uses projected gradient descent with Armijo
backtracking from multiple restarts; a dense-grid-plus-refinement oracle is
available for small N to audit the optimizer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numkit
from .errors import NotRejectedAtGammaOne, OptimizerFailure, TooLarge
from .estimators import (
    Dataset,
    EstimateWithVariance,
    IntervalUnion,
    MissingOutcome,
    union_intervals,
    wald_interval,
)
from .numkit import RngStream

_D_STAR_SLACK = -1e-10
_SIGMA_FLOOR = 1e-15


@dataclass(frozen=True)
class SensitivityConfig:
    gamma: float
    alpha: float
    tau0: float = 0.0
    restarts: int = 16
    max_iter: int = 500
    step_tol: float = 1e-10
    corner_oracle_limit: int = 12
    seed: int = 0

    def __post_init__(self):
        if self.gamma < 1.0:
            raise ValueError("gamma must be >= 1")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must be in (0,1)")


def _tilt_terms(ds: Dataset, g_hat: np.ndarray):
    """Per-unit affine pieces: the tilted per-unit term is a_i + b_i t_i."""
    if not np.all(ds.observed):
        raise MissingOutcome("sensitivity analysis needs every outcome observed")
    g = np.asarray(g_hat, dtype=float).ravel()
    z = ds.z.astype(float)
    a = z * ds.y - (1.0 - z) * ds.y
    b = z * ds.y * np.exp(-g) - (1.0 - z) * ds.y * np.exp(g)
    return a, b


def shifted_estimate(ds: Dataset, g_hat: np.ndarray, t: np.ndarray) -> EstimateWithVariance:
    """Tilted IPW estimate with its sample variance; t == 1 recovers the
    plain IPW estimate at propensities sigmoid(g_hat)."""
    a, b = _tilt_terms(ds, g_hat)
    t = np.asarray(t, dtype=float).ravel()
    per_unit = a + b * t
    n = len(per_unit)
    point = float(per_unit.mean())
    if n < 2:
        variance = 0.0
    else:
        centered = per_unit - point
        variance = float(centered @ centered / (n * (n - 1)))
    return EstimateWithVariance(point=point, variance=variance, per_unit=per_unit)


def _batch_moments(a, b, tmat):
    """Mean and sample variance of a + b*t for each row of tmat."""
    u = a + b * tmat
    n = u.shape[1]
    means = u.mean(axis=1)
    if n < 2:
        return means, np.zeros_like(means)
    centered = u - means[:, None]
    variances = np.einsum("ij,ij->i", centered, centered) / (n * (n - 1))
    return means, variances


def _moment_grads(a, b, t):
    n = len(t)
    u = a + b * t
    mean = u.mean()
    centered = u - mean
    var = centered @ centered / (n * (n - 1)) if n > 1 else 0.0
    d_mean = b / n
    d_var = 2.0 * b * centered / (n * (n - 1)) if n > 1 else np.zeros_like(b)
    return mean, var, d_mean, d_var


def _pgd(value_fn, grad_fn, t0, lo, hi, max_iter, step_tol):
    t = np.clip(np.asarray(t0, dtype=float), lo, hi)
    fv = value_fn(t)
    step = 1.0
    converged = False
    for _ in range(max_iter):
        grad = grad_fn(t)
        accepted = False
        for _ in range(60):
            cand = np.clip(t - step * grad, lo, hi)
            move = cand - t
            fc = value_fn(cand)
            if fc <= fv - 1e-4 / max(step, 1e-300) * float(move @ move):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            converged = True  # no descent direction left at float precision
            break
        if np.max(np.abs(move)) <= step_tol * max(1.0, np.max(np.abs(t))):
            t, fv = cand, fc
            converged = True
            break
        t, fv = cand, fc
        step = min(step * 1.3, 1e6)
    return t, fv, converged


def _restart_points(n, z, lo, hi, restarts, stream):
    points = [
        np.ones(n),
        np.full(n, lo),
        np.full(n, hi),
        np.where(z == 1, hi, lo),
        np.where(z == 1, lo, hi),
    ]
    while len(points) < restarts:
        points.append(lo + (hi - lo) * stream.substream(len(points)).uniform01(n))
    return points[:restarts]


def _optimize(value_fn, grad_fn, ds, lo, hi, cfg, stream):
    any_converged = False
    best_t, best_v = None, np.inf
    for t0 in _restart_points(ds.n_units, ds.z, lo, hi, cfg.restarts, stream):
        t, fv, converged = _pgd(value_fn, grad_fn, t0, lo, hi, cfg.max_iter,
                                cfg.step_tol)
        any_converged = any_converged or converged
        if fv < best_v:
            best_t, best_v = t, fv
    if not any_converged:
        raise OptimizerFailure("no projected-gradient restart converged")
    return best_t, best_v


def sensitivity_interval(ds: Dataset, g_hat: np.ndarray,
                         cfg: SensitivityConfig,
                         stream: RngStream | None = None) -> tuple[float, float]:
    """[min_t (tau_t - z sigma_t), max_t (tau_t + z sigma_t)] over the tilt box."""
    a, b = _tilt_terms(ds, g_hat)
    zq = numkit.std_normal_quantile(1.0 - cfg.alpha / 2.0)
    base = shifted_estimate(ds, g_hat, np.ones(ds.n_units))
    wald = wald_interval(base, cfg.alpha)
    if cfg.gamma == 1.0:
        return wald
    if stream is None:
        stream = RngStream(cfg.seed, 0)
    lo_box, hi_box = 1.0 / cfg.gamma, cfg.gamma
    n = ds.n_units

    def lower_val(t):
        mean, var = _batch_moments(a, b, t[None, :])
        return float(mean[0] - zq * np.sqrt(var[0]))

    def lower_grad(t):
        mean, var, d_mean, d_var = _moment_grads(a, b, t)
        sd = max(np.sqrt(var), _SIGMA_FLOOR)
        return d_mean - zq * d_var / (2.0 * sd)

    def upper_neg_val(t):
        mean, var = _batch_moments(a, b, t[None, :])
        return float(-(mean[0] + zq * np.sqrt(var[0])))

    def upper_neg_grad(t):
        mean, var, d_mean, d_var = _moment_grads(a, b, t)
        sd = max(np.sqrt(var), _SIGMA_FLOOR)
        return -(d_mean + zq * d_var / (2.0 * sd))

    _, low = _optimize(lower_val, lower_grad, ds, lo_box, hi_box, cfg,
                       stream.substream(0))
    _, neg_high = _optimize(upper_neg_val, upper_neg_grad, ds, lo_box, hi_box,
                            cfg, stream.substream(1))
    # the box contains t == 1, so the interval must contain the Wald interval
    return (min(low, wald[0]), max(-neg_high, wald[1]))


def sensitivity_union(ds: Dataset, g_list, cfg: SensitivityConfig,
                      stream: RngStream | None = None) -> IntervalUnion:
    if stream is None:
        stream = RngStream(cfg.seed, 0)
    intervals = [
        sensitivity_interval(ds, g, cfg, stream.substream(m))
        for m, g in enumerate(g_list)
    ]
    return IntervalUnion(components=union_intervals(intervals).components)


def _qp_value_grad(a, b, tau0, z2):
    def value(t):
        mean, var = _batch_moments(a, b, t[None, :])
        return float((mean[0] - tau0) ** 2 - z2 * var[0])

    def grad(t):
        mean, var, d_mean, d_var = _moment_grads(a, b, t)
        return 2.0 * (mean - tau0) * d_mean - z2 * d_var

    return value, grad


def test_tau0(ds: Dataset, regen_g, cfg: SensitivityConfig,
              stream: RngStream | None = None) -> tuple[bool, list[float]]:
    """Box-constrained QP membership test: tau0 lies in the union sensitivity
    set iff some run's optimal (tau_t - tau0)^2 - z^2 sigma_t^2 is negative."""
    if stream is None:
        stream = RngStream(cfg.seed, 0)
    zq = numkit.std_normal_quantile(1.0 - cfg.alpha / 2.0)
    z2 = zq * zq
    lo_box, hi_box = 1.0 / cfg.gamma, cfg.gamma
    d_stars = []
    for m, g in enumerate(regen_g):
        a, b = _tilt_terms(ds, g)
        value, grad = _qp_value_grad(a, b, cfg.tau0, z2)
        if cfg.gamma == 1.0:
            d_stars.append(value(np.ones(ds.n_units)))
            continue
        _, d_star = _optimize(value, grad, ds, lo_box, hi_box, cfg,
                              stream.substream(m))
        d_stars.append(float(d_star))
    membership = any(d < _D_STAR_SLACK for d in d_stars)
    return membership, d_stars


def sensitivity_value(ds: Dataset, regen_g, alpha: float, tau0: float,
                      gamma_max: float = 100.0, tol: float = 1e-3,
                      gamma_grid=None, stream: RngStream | None = None,
                      **cfg_kwargs) -> float:
    """Largest Gamma at which tau0 is still rejected, by bisection over the
    monotone membership boundary (or a scan of a caller-supplied grid)."""

    def member(gamma):
        cfg = SensitivityConfig(gamma=gamma, alpha=alpha, tau0=tau0, **cfg_kwargs)
        flag, _ = test_tau0(ds, regen_g, cfg, stream)
        return flag

    if member(1.0):
        raise NotRejectedAtGammaOne(
            "tau0 is inside the confidence set without hidden bias"
        )
    if gamma_grid is not None:
        best = 1.0
        for gamma in sorted(gamma_grid):
            if gamma < 1.0:
                continue
            if member(gamma):
                break
            best = gamma
        return float(best)
    hi = 2.0
    while not member(hi):
        if hi >= gamma_max:
            return float(gamma_max)
        hi = min(hi * 2.0, gamma_max)
    lo = max(1.0, hi / 2.0)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if member(mid):
            hi = mid
        else:
            lo = mid
    return float(lo)


# ---------------------------------------------------------------------------
# Small-N audit oracle: dense corner evaluation plus coordinate refinement.

def _refine_minimum(batch_fn, starts, lo, hi, grid_points=101, sweeps=30):
    best_t, best_v = None, np.inf
    for t0 in starts:
        t = np.array(t0, dtype=float)
        fv = float(batch_fn(t[None, :])[0])
        span = hi - lo
        for sweep in range(sweeps):
            improved = False
            width = span / (2 ** min(sweep, 8))
            for i in range(len(t)):
                cand = np.linspace(max(lo, t[i] - width), min(hi, t[i] + width),
                                   grid_points)
                tmat = np.repeat(t[None, :], grid_points, axis=0)
                tmat[:, i] = cand
                vals = batch_fn(tmat)
                k = int(np.argmin(vals))
                if vals[k] < fv - 1e-15:
                    fv = float(vals[k])
                    t[i] = cand[k]
                    improved = True
            if not improved and sweep >= 6:
                break
        if fv < best_v:
            best_t, best_v = t, fv
    return best_t, best_v


def _oracle_starts(n, lo, hi, batch_fn, extra=9):
    codes = np.arange(2 ** n)
    corners = np.where(((codes[:, None] >> np.arange(n)) & 1) == 1, hi, lo).astype(float)
    vals = batch_fn(corners)
    order = np.argsort(vals)[: min(8, len(vals))]
    starts = [corners[k] for k in order]
    starts.append(np.ones(n))
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((13, n))))
    for _ in range(extra):
        starts.append(lo + (hi - lo) * rng.random(n))
    return starts


def grid_oracle_interval(ds: Dataset, g_hat, cfg: SensitivityConfig) -> tuple[float, float]:
    """Brute-force audit of sensitivity_interval for N <= corner_oracle_limit."""
    n = ds.n_units
    if n > cfg.corner_oracle_limit:
        raise TooLarge(f"oracle guarded at N <= {cfg.corner_oracle_limit}")
    a, b = _tilt_terms(ds, g_hat)
    zq = numkit.std_normal_quantile(1.0 - cfg.alpha / 2.0)
    lo_box, hi_box = 1.0 / cfg.gamma, cfg.gamma

    def lower_batch(tmat):
        means, variances = _batch_moments(a, b, tmat)
        return means - zq * np.sqrt(variances)

    def upper_neg_batch(tmat):
        means, variances = _batch_moments(a, b, tmat)
        return -(means + zq * np.sqrt(variances))

    _, low = _refine_minimum(lower_batch, _oracle_starts(n, lo_box, hi_box, lower_batch),
                             lo_box, hi_box)
    _, neg_high = _refine_minimum(upper_neg_batch,
                                  _oracle_starts(n, lo_box, hi_box, upper_neg_batch),
                                  lo_box, hi_box)
    return (float(low), float(-neg_high))


def grid_oracle_qp(ds: Dataset, g_hat, cfg: SensitivityConfig) -> float:
    """Brute-force audit of one run's QP optimum for small N."""
    n = ds.n_units
    if n > cfg.corner_oracle_limit:
        raise TooLarge(f"oracle guarded at N <= {cfg.corner_oracle_limit}")
    a, b = _tilt_terms(ds, g_hat)
    zq = numkit.std_normal_quantile(1.0 - cfg.alpha / 2.0)
    z2 = zq * zq
    lo_box, hi_box = 1.0 / cfg.gamma, cfg.gamma

    def batch(tmat):
        means, variances = _batch_moments(a, b, tmat)
        return (means - cfg.tau0) ** 2 - z2 * variances

    _, val = _refine_minimum(batch, _oracle_starts(n, lo_box, hi_box, batch),
                             lo_box, hi_box)
    return float(val)
