"""Monte Carlo harness for the coverage comparison: fixed-population
generation, assignment drawing with known oracle propensities, and the
oracle / plug-in / regenerate-and-union / oracle-bias-aware method suite.

All randomness routes through keyed substreams of the experiment seed, so a
report is byte-identical across reruns and across worker counts.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import learners, numkit
from .errors import RegenciError, TooFewReplications
from .estimators import Dataset, ipw_estimate, union_intervals, wald_interval
from .learners import LearnerSpec
from .numkit import RngStream
from .regen import RegenConfig, regen_crossfit, regen_parametric, regen_subsample
from . import glm as glm_mod

_STREAM_POPULATION = 1
_STREAM_TUNING_DRAW = 2
_STREAM_TUNING_SPLITS = 3
_STREAM_REPLICATION = 4

_X3_GUARD = 1e-8
_ORACLE_P_GUARD = 1e-12

ALL_METHODS = ("oracle", "plugin", "propagation", "oba")


@dataclass(frozen=True)
class PopulationSpec:
    n_units: int
    effect_setting: str  # effect1 | effect2
    propensity_setting: str  # selection_model | logistic_model
    seed: int

    def __post_init__(self):
        if self.n_units < 10:
            raise ValueError("n_units must be >= 10")
        if self.effect_setting not in ("effect1", "effect2"):
            raise ValueError(f"unknown effect setting {self.effect_setting!r}")
        if self.propensity_setting not in ("selection_model", "logistic_model"):
            raise ValueError(
                f"unknown propensity setting {self.propensity_setting!r}"
            )


@dataclass(frozen=True)
class FixedPopulation:
    x: np.ndarray  # (N, 5)
    y0: np.ndarray
    y1: np.ndarray
    oracle_p: np.ndarray
    tau: float


def _log_x3_squared(x3: np.ndarray) -> np.ndarray:
    # |x3| below 1e-8 is clamped up to 1e-8 (a measure-zero guard for log)
    return np.log(np.maximum(np.abs(x3), _X3_GUARD) ** 2)


def _selection_index(x: np.ndarray) -> np.ndarray:
    return (0.1 * x[:, 0] ** 3 + 0.3 * x[:, 1] + 0.2 * _log_x3_squared(x[:, 2])
            + 0.1 * x[:, 3] + 0.2 * x[:, 4]
            + 0.1 * np.abs(x[:, 0] * x[:, 1]) + 0.3 * (x[:, 1] * x[:, 3]) ** 2)


def _logistic_index(x: np.ndarray) -> np.ndarray:
    return (0.1 * x[:, 0] ** 3 + 0.3 * x[:, 1] + 0.2 * _log_x3_squared(x[:, 2])
            + 0.1 * x[:, 3] + 0.2 * x[:, 4]
            + 0.2 * np.abs(x[:, 0] * x[:, 1]) + 0.4 * (x[:, 2] * x[:, 3]) ** 2
            + 0.1 * (x[:, 1] * x[:, 3]) ** 2 - 1.0)


def oracle_propensities(x: np.ndarray, propensity_setting: str) -> np.ndarray:
    if propensity_setting == "selection_model":
        p = numkit.normal_cdf(_selection_index(x) - 0.5)
    else:
        p = glm_mod._sigmoid(_logistic_index(x))
    return np.clip(p, _ORACLE_P_GUARD, 1.0 - _ORACLE_P_GUARD)


def baseline_outcome(x: np.ndarray, eps: np.ndarray) -> np.ndarray:
    return (0.15 * x[:, 0] ** 3 + 0.15 * np.abs(x[:, 1]) + 0.1 * x[:, 2] ** 3
            + 0.3 * np.abs(x[:, 3]) + 0.2 * x[:, 4] + 0.1 * eps)


def effect_lift(x: np.ndarray, effect_setting: str) -> np.ndarray:
    if effect_setting == "effect1":
        return 1.0 + 0.3 * np.sin(x[:, 1]) + 0.2 * x[:, 3] + 0.1 * x[:, 4]
    return 1.0 + 0.3 * np.abs(x[:, 0]) + 0.1 * np.tanh(x[:, 4])


def generate_population(spec: PopulationSpec) -> FixedPopulation:
    """Fixed finite population: three standard-normal covariates, two
    Laplace(0, sqrt(2)/2) covariates, nonlinear baseline outcomes, and the
    effect-setting-specific treated outcomes."""
    stream = RngStream(spec.seed, _STREAM_POPULATION)
    n = spec.n_units
    x = np.empty((n, 5))
    x[:, 0] = stream.standard_normal(n)
    x[:, 1] = stream.standard_normal(n)
    x[:, 2] = stream.standard_normal(n)
    x[:, 3] = stream.laplace(np.sqrt(2.0) / 2.0, n)
    x[:, 4] = stream.laplace(np.sqrt(2.0) / 2.0, n)
    eps = stream.standard_normal(n)
    y0 = baseline_outcome(x, eps)
    y1 = y0 + effect_lift(x, spec.effect_setting)
    return FixedPopulation(
        x=x, y0=y0, y1=y1,
        oracle_p=oracle_propensities(x, spec.propensity_setting),
        tau=float(np.mean(y1 - y0)),
    )


def draw_assignment(pop: FixedPopulation, stream: RngStream) -> np.ndarray:
    return (stream.uniform01(len(pop.oracle_p)) < pop.oracle_p).astype(np.int64)


def observed_dataset(pop: FixedPopulation, z: np.ndarray) -> Dataset:
    y = np.where(z == 1, pop.y1, pop.y0)
    return Dataset.for_ate(z, pop.x, y)


def oba_interval(estimates: np.ndarray, tau: float, alpha: float) -> np.ndarray:
    """Oracle bias-aware intervals (T_r - chi, T_r + chi) per replication,
    with chi = SE * sqrt(Q_{1-alpha}(bias^2 / SE^2)) and Q the noncentral
    chi-square(1) quantile; bias and SE come from the replication ensemble."""
    estimates = np.asarray(estimates, dtype=float).ravel()
    if len(estimates) < 2:
        raise TooFewReplications("need at least 2 replications")
    bias = float(np.mean(estimates) - tau)
    se = float(np.std(estimates, ddof=1))
    if se <= 0.0:
        chi = abs(bias)
    else:
        ncp = (bias / se) ** 2
        chi = se * np.sqrt(numkit.noncentral_chisq1_quantile(1.0 - alpha, ncp))
    return np.column_stack([estimates - chi, estimates + chi])


@dataclass(frozen=True)
class MethodRow:
    method: str
    coverage: float
    mean_bias: float | None
    mean_length: float
    length_ratio_oracle: float | None
    failures: int


@dataclass(frozen=True)
class ExperimentReport:
    spec: PopulationSpec
    alpha: float
    replications: int
    tau: float
    rows: tuple[MethodRow, ...]
    propagation_to_oba_ratio: float | None
    tuned_learner: str | None
    runtime_seconds: float
    details: dict | None = None

    def row(self, method: str) -> MethodRow:
        for r in self.rows:
            if r.method == method:
                return r
        raise KeyError(method)

    def to_json_dict(self, include_runtime: bool = False,
                     include_details: bool = False) -> dict:
        # wall-clock excluded by default so reruns are byte-identical
        out = {
            "population": {
                "n_units": self.spec.n_units,
                "effect_setting": self.spec.effect_setting,
                "propensity_setting": self.spec.propensity_setting,
                "seed": self.spec.seed,
            },
            "alpha": self.alpha,
            "replications": self.replications,
            "tau": self.tau,
            "tuned_learner": self.tuned_learner,
            "propagation_to_oba_ratio": self.propagation_to_oba_ratio,
            "methods": [
                {
                    "method": r.method,
                    "coverage": r.coverage,
                    "mean_bias": r.mean_bias,
                    "mean_length": r.mean_length,
                    "length_ratio_oracle": r.length_ratio_oracle,
                    "failures": r.failures,
                }
                for r in self.rows
            ],
        }
        if include_runtime:
            out["runtime_seconds"] = self.runtime_seconds
        if include_details and self.details is not None:
            out["replication_records"] = self.details
        return out


def _mix_seed(base: int, salt: int) -> int:
    return int(np.random.SeedSequence((int(base), int(salt))).generate_state(1)[0])


def _replication_records(pop: FixedPopulation, z: np.ndarray, alpha: float,
                         methods, tuned_spec: LearnerSpec | None,
                         regen_cfg: RegenConfig, rep_index: int,
                         plugin_override: np.ndarray | None = None) -> dict:
    """One replication's per-method (covered, length, point) records."""
    ds = observed_dataset(pop, z)
    out = {}
    if "oracle" in methods:
        est = ipw_estimate(ds, pop.oracle_p)
        lo, hi = wald_interval(est, alpha)
        out["oracle"] = (lo <= pop.tau <= hi, hi - lo, est.point)
    plugin_p = None
    if "plugin" in methods or "oba" in methods:
        if plugin_override is not None:
            plugin_p = np.asarray(plugin_override, dtype=float)
        else:
            model = learners.train(tuned_spec, pop.x, z)
            plugin_p = learners.clip_propensities(model.predict(pop.x),
                                                  regen_cfg.clip_delta)
        est = ipw_estimate(ds, plugin_p)
        lo, hi = wald_interval(est, alpha)
        out["plugin"] = (lo <= pop.tau <= hi, hi - lo, est.point)
    if "propagation" in methods:
        cfg_rep = replace(regen_cfg,
                          master_seed=_mix_seed(regen_cfg.master_seed, rep_index))
        if cfg_rep.mode == "parametric":
            design = np.column_stack([np.ones(ds.n_units), ds.x])
            fit = glm_mod.fit_glm(design, ds.z, glm_mod.get_link(cfg_rep.link))
            regen_out = regen_parametric(fit, design, cfg_rep)
        elif cfg_rep.mode == "crossfit":
            regen_out = regen_crossfit(ds, cfg_rep)
        else:
            regen_out = regen_subsample(ds, cfg_rep)
        intervals = []
        for pvec in regen_out.propensity_vectors:
            intervals.append(wald_interval(ipw_estimate(ds, pvec), alpha))
        union = union_intervals(intervals)
        out["propagation"] = (union.contains(pop.tau), union.measure, None)
    return out


def _run_block(args):
    pop, indices, alpha, methods, tuned_spec, regen_cfg, seed = args
    records = []
    for r in indices:
        z = draw_assignment(pop, RngStream(seed, _STREAM_REPLICATION).substream(r))
        try:
            records.append((r, _replication_records(
                pop, z, alpha, methods, tuned_spec, regen_cfg, r), None))
        except RegenciError as exc:
            records.append((r, None, f"{type(exc).__name__}: {exc}"))
    return records


def run_experiment(spec: PopulationSpec, methods=ALL_METHODS, reps: int = 200,
                   regen_cfg: RegenConfig | None = None, alpha: float = 0.05,
                   learner_grid: list[LearnerSpec] | None = None,
                   threads: int = 1, include_details: bool = False) -> ExperimentReport:
    """Fixed population, `reps` assignment draws, per-method coverage/length
    aggregation, and the bias-aware benchmark built on the plug-in estimator.

    The learner grid is tuned once, on a dedicated assignment draw, and the
    selected spec is reused by the plug-in fit and by both cross-fitting
    learners in every replication.
    """
    if reps < 1:
        raise TooFewReplications("reps must be >= 1")
    if regen_cfg is None:
        regen_cfg = RegenConfig(mode="crossfit", m_runs=100, master_seed=spec.seed)
    started = time.perf_counter()
    pop = generate_population(spec)

    tuned_spec = None
    needs_learner = bool({"plugin", "propagation", "oba"} & set(methods))
    if needs_learner:
        if learner_grid:
            z_tune = draw_assignment(pop, RngStream(spec.seed, _STREAM_TUNING_DRAW))
            tuned_spec = learners.tune_by_mccv(
                learner_grid, pop.x, z_tune, splits=10,
                stream=RngStream(spec.seed, _STREAM_TUNING_SPLITS),
            )
        else:
            tuned_spec = (regen_cfg.learner_a if regen_cfg.learner_a is not None
                          else LearnerSpec(kind="boosted"))
        if regen_cfg.mode in ("crossfit", "subsample"):
            regen_cfg = replace(regen_cfg, learner_a=tuned_spec, learner_b=tuned_spec)

    indices = list(range(reps))
    if threads <= 1:
        blocks = [_run_block((pop, indices, alpha, methods, tuned_spec,
                              regen_cfg, spec.seed))]
    else:
        chunks = [indices[i::threads] for i in range(threads)]
        args = [(pop, chunk, alpha, methods, tuned_spec, regen_cfg, spec.seed)
                for chunk in chunks if chunk]
        with ProcessPoolExecutor(max_workers=threads) as pool:
            blocks = list(pool.map(_run_block, args))

    per_rep: dict[int, dict | None] = {}
    errors: dict[int, str] = {}
    for block in blocks:
        for r, rec, err in block:
            per_rep[r] = rec
            if err is not None:
                errors[r] = err

    def collect(method):
        covered, lengths, points = [], [], []
        failures = 0
        for r in indices:
            rec = per_rep.get(r)
            if rec is None or method not in rec:
                failures += 1
                continue
            cov, length, point = rec[method]
            covered.append(bool(cov))
            lengths.append(float(length))
            if point is not None:
                points.append(float(point))
        return covered, lengths, points, failures

    rows = []
    oracle_mean_length = None
    plugin_points = None
    propagation_mean_length = None
    for method in ("oracle", "plugin", "propagation"):
        if method not in methods:
            continue
        covered, lengths, points, failures = collect(method)
        if not covered:
            raise TooFewReplications(f"every replication failed for {method}")
        mean_length = float(np.mean(lengths))
        mean_bias = (float(np.mean(points) - pop.tau)
                     if method != "propagation" and points else None)
        if method == "oracle":
            oracle_mean_length = mean_length
        if method == "plugin":
            plugin_points = np.array(points)
        if method == "propagation":
            propagation_mean_length = mean_length
        rows.append(MethodRow(
            method=method,
            coverage=float(np.mean(covered)),
            mean_bias=mean_bias,
            mean_length=mean_length,
            length_ratio_oracle=None,
            failures=failures,
        ))
    if oracle_mean_length:
        rows = [replace(r, length_ratio_oracle=r.mean_length / oracle_mean_length)
                for r in rows]

    oba_ratio = None
    if "oba" in methods:
        if plugin_points is None:
            raise TooFewReplications("the bias-aware benchmark needs plug-in points")
        intervals = oba_interval(plugin_points, pop.tau, alpha)
        covered = (intervals[:, 0] <= pop.tau) & (pop.tau <= intervals[:, 1])
        mean_length = float(np.mean(intervals[:, 1] - intervals[:, 0]))
        rows.append(MethodRow(
            method="oba",
            coverage=float(np.mean(covered)),
            mean_bias=None,
            mean_length=mean_length,
            length_ratio_oracle=(mean_length / oracle_mean_length
                                 if oracle_mean_length else None),
            failures=reps - len(plugin_points),
        ))
        if propagation_mean_length is not None and mean_length > 0:
            oba_ratio = propagation_mean_length / mean_length

    details = None
    if include_details:
        details = {
            str(r): ({m: [bool(v[0]), v[1], v[2]] for m, v in per_rep[r].items()}
                     if per_rep.get(r) else {"error": errors.get(r, "unknown")})
            for r in indices
        }
    return ExperimentReport(
        spec=spec, alpha=alpha, replications=reps, tau=pop.tau,
        rows=tuple(rows), propagation_to_oba_ratio=oba_ratio,
        tuned_learner=tuned_spec.label() if tuned_spec else None,
        runtime_seconds=time.perf_counter() - started,
        details=details,
    )
