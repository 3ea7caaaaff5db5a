"""Regeneration of plausible propensity-score vectors.

Three modes produce M vectors per dataset: coefficient sampling around a GLM
fit, two-fold cross-fitting with fresh random partitions per run, and
training on random subsamples. Every run m derives its randomness from
stream(master_seed, m), so results do not depend on execution order and
parallel runs are bit-identical to serial ones. Clipping to
[clip_delta, 1 - clip_delta] happens here, in one place, for every mode.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import glm, learners, numkit
from .errors import PartitionFailure
from .estimators import Dataset
from .learners import LearnerSpec
from .numkit import RngStream

_MAX_REDRAWS = 100


@dataclass(frozen=True)
class RegenConfig:
    mode: str  # parametric | crossfit | subsample
    m_runs: int
    master_seed: int = 0
    alpha_prime: float | None = None
    learner_a: LearnerSpec | None = None
    learner_b: LearnerSpec | None = None
    subsample_rate: float = 0.5
    clip_delta: float = 0.1
    link: str = "logistic"

    def __post_init__(self):
        if self.mode not in ("parametric", "crossfit", "subsample"):
            raise ValueError(f"unknown regeneration mode {self.mode!r}")
        if self.m_runs < 1:
            raise ValueError("m_runs must be >= 1")
        if self.alpha_prime is not None and self.mode != "parametric":
            raise ValueError("alpha_prime only applies to parametric mode")
        if not 0.0 < self.clip_delta < 0.5:
            raise ValueError("clip_delta must be in (0, 0.5)")
        if self.mode == "subsample" and not 0.0 < self.subsample_rate <= 1.0:
            raise ValueError("subsample_rate must be in (0, 1]")

    def specs(self) -> tuple[LearnerSpec, LearnerSpec]:
        a = self.learner_a if self.learner_a is not None else LearnerSpec(kind="glm")
        b = self.learner_b if self.learner_b is not None else a
        return a, b


@dataclass(frozen=True)
class RegenOutput:
    propensity_vectors: np.ndarray  # (M, N), clipped
    coefficient_draws: np.ndarray | None = None  # (M, p), parametric mode
    partitions: np.ndarray | None = None  # (M, N) 0/1, crossfit mode
    clip_delta: float = 0.1
    mode: str = "parametric"

    @property
    def m_runs(self) -> int:
        return self.propensity_vectors.shape[0]


def regen_parametric(fit: glm.GlmFit, X: np.ndarray, cfg: RegenConfig) -> RegenOutput:
    """Draw M coefficient vectors beta_hat + L g / sqrt(N) with L L' equal to
    the averaged-information inverse, then map through the link and clip."""
    if cfg.mode != "parametric":
        raise ValueError("config mode must be 'parametric'")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    lower = numkit.cholesky_factor(fit.omega_hat)
    root_n = np.sqrt(fit.n_units)
    p = len(fit.beta_hat)
    draws = np.empty((cfg.m_runs, p))
    vectors = np.empty((cfg.m_runs, X.shape[0]))
    for m in range(cfg.m_runs):
        gauss = RngStream(cfg.master_seed, m).standard_normal(p)
        beta_m = fit.beta_hat + lower @ gauss / root_n
        draws[m] = beta_m
        vectors[m] = learners.clip_propensities(
            fit.link.psi(X @ beta_m), cfg.clip_delta
        )
    return RegenOutput(propensity_vectors=vectors, coefficient_draws=draws,
                       clip_delta=cfg.clip_delta, mode="parametric")


def restricted_indices(draws: np.ndarray, fit: glm.GlmFit,
                       alpha_prime: float) -> list[int]:
    """Indices of draws whose max studentized coefficient deviation stays
    within 1.01 times the Bonferroni normal quantile."""
    draws = np.atleast_2d(np.asarray(draws, dtype=float))
    p = draws.shape[1]
    scale = np.sqrt(np.diag(fit.omega_hat) / fit.n_units)
    threshold = 1.01 * numkit.std_normal_quantile(1.0 - alpha_prime / (2.0 * p))
    stats = np.max(np.abs(draws - fit.beta_hat) / scale, axis=1)
    return [int(m) for m in np.flatnonzero(stats <= threshold)]


def regen_crossfit(dataset: Dataset, cfg: RegenConfig) -> RegenOutput:
    """Two-fold cross-fitting per run: each unit lands in fold A with
    probability one half, each fold's propensities come from a learner trained
    on the other fold. Degenerate partitions (a side below two units or
    single-class) are redrawn from a fresh substream, up to 100 attempts."""
    if cfg.mode != "crossfit":
        raise ValueError("config mode must be 'crossfit'")
    n = dataset.n_units
    if n < 4:
        raise PartitionFailure("cross-fitting needs at least 4 units")
    spec_a, spec_b = cfg.specs()
    X = dataset.x
    z = dataset.z
    vectors = np.empty((cfg.m_runs, n))
    partitions = np.empty((cfg.m_runs, n), dtype=np.int8)
    for m in range(cfg.m_runs):
        run_stream = RngStream(cfg.master_seed, m)
        done = False
        for attempt in range(_MAX_REDRAWS):
            s = (run_stream.substream(attempt).uniform01(n) < 0.5)
            side_a = np.flatnonzero(s)
            side_b = np.flatnonzero(~s)
            if len(side_a) < 2 or len(side_b) < 2:
                continue
            if z[side_a].min() == z[side_a].max():
                continue
            if z[side_b].min() == z[side_b].max():
                continue
            model_a = learners.train(spec_a, X[side_a], z[side_a],
                                     run_stream.substream(attempt, 0))
            model_b = learners.train(spec_b, X[side_b], z[side_b],
                                     run_stream.substream(attempt, 1))
            pvec = np.empty(n)
            pvec[side_b] = model_a.predict(X[side_b])
            pvec[side_a] = model_b.predict(X[side_a])
            vectors[m] = learners.clip_propensities(pvec, cfg.clip_delta)
            partitions[m] = s.astype(np.int8)
            done = True
            break
        if not done:
            raise PartitionFailure(
                f"run {m}: no usable partition after {_MAX_REDRAWS} redraws"
            )
    return RegenOutput(propensity_vectors=vectors, partitions=partitions,
                       clip_delta=cfg.clip_delta, mode="crossfit")


def regen_subsample(dataset: Dataset, cfg: RegenConfig) -> RegenOutput:
    """Train on a Bernoulli(subsample_rate) subset per run and predict all N
    units; degenerate subsamples are redrawn like crossfit partitions."""
    if cfg.mode != "subsample":
        raise ValueError("config mode must be 'subsample'")
    n = dataset.n_units
    spec, _ = cfg.specs()
    X = dataset.x
    z = dataset.z
    vectors = np.empty((cfg.m_runs, n))
    for m in range(cfg.m_runs):
        run_stream = RngStream(cfg.master_seed, m)
        done = False
        for attempt in range(_MAX_REDRAWS):
            incl = run_stream.substream(attempt).uniform01(n) < cfg.subsample_rate
            idx = np.flatnonzero(incl)
            if len(idx) < 2 or z[idx].min() == z[idx].max():
                continue
            model = learners.train(spec, X[idx], z[idx],
                                   run_stream.substream(attempt, 0))
            vectors[m] = learners.clip_propensities(model.predict(X), cfg.clip_delta)
            done = True
            break
        if not done:
            raise PartitionFailure(
                f"run {m}: no usable subsample after {_MAX_REDRAWS} redraws"
            )
    return RegenOutput(propensity_vectors=vectors, clip_delta=cfg.clip_delta,
                       mode="subsample")


def regenerate(dataset: Dataset, cfg: RegenConfig,
               fit: glm.GlmFit | None = None,
               design: np.ndarray | None = None) -> tuple[RegenOutput, glm.GlmFit | None]:
    """Dispatch on cfg.mode; fits the GLM first in parametric mode.

    The parametric design matrix defaults to an intercept column prepended to
    the dataset covariates.
    """
    if cfg.mode == "parametric":
        if design is None:
            design = np.column_stack([np.ones(dataset.n_units), dataset.x])
        if fit is None:
            fit = glm.fit_glm(design, dataset.z, glm.get_link(cfg.link))
        return regen_parametric(fit, design, cfg), fit
    if cfg.mode == "crossfit":
        return regen_crossfit(dataset, cfg), None
    return regen_subsample(dataset, cfg), None
