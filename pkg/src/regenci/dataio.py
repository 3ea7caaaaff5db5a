"""CSV ingestion and JSON config loading for the command-line surface.

CSV schemas by problem (header row required, covariates named x1..xp):
  ate:     z, y, x1..xp
  survey:  z (inclusion), y (blank when z = 0), x1..xp
  missing: z (non-missingness), y (blank when z = 0), x1..xp, optional treat
  did:     z, y0, y1, x1..xp

Blank outcome cells become unobserved flags; a sampled/non-missing unit with a
blank outcome is rejected as inconsistent.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, InconsistentRow, ParseError, SchemaError
from .estimators import Dataset
from .learners import LearnerSpec, spec_from_dict
from .regen import RegenConfig

PROBLEMS = ("ate", "survey", "missing", "did")


def _x_columns(fieldnames) -> list[str]:
    cols = []
    k = 1
    while f"x{k}" in fieldnames:
        cols.append(f"x{k}")
        k += 1
    if not cols:
        raise SchemaError("no covariate columns x1..xp found")
    return cols


def _parse_float(value: str, row: int, column: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ParseError(f"row {row}, column {column}: cannot parse {value!r}",
                         row=row, column=column) from None


def _parse_bit(value: str, row: int, column: str) -> int:
    v = value.strip()
    if v not in ("0", "1"):
        raise ParseError(f"row {row}, column {column}: expected 0/1, got {value!r}",
                         row=row, column=column)
    return int(v)


def load_csv(path: str, problem: str = "ate") -> Dataset:
    if problem not in PROBLEMS:
        raise SchemaError(f"unknown problem {problem!r}; expected one of {PROBLEMS}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError("missing header row")
        fields = [f.strip() for f in reader.fieldnames]
        required = {"ate": ["z", "y"], "survey": ["z", "y"],
                    "missing": ["z", "y"], "did": ["z", "y0", "y1"]}[problem]
        for col in required:
            if col not in fields:
                raise SchemaError(f"missing required column {col!r}")
        xcols = _x_columns(fields)
        has_treat = problem == "missing" and "treat" in fields
        z, y, y0, y1, obs, treat, x = [], [], [], [], [], [], []
        for r, rowdict in enumerate(reader, start=2):  # header is line 1
            zi = _parse_bit(rowdict["z"], r, "z")
            z.append(zi)
            x.append([_parse_float(rowdict[c], r, c) for c in xcols])
            if problem == "did":
                y0.append(_parse_float(rowdict["y0"], r, "y0"))
                y1.append(_parse_float(rowdict["y1"], r, "y1"))
                continue
            raw = (rowdict["y"] or "").strip()
            if raw == "":
                if problem == "ate":
                    raise ParseError(f"row {r}, column y: blank outcome",
                                     row=r, column="y")
                if zi == 1:
                    raise InconsistentRow(
                        f"row {r}: z = 1 with a blank outcome"
                    )
                obs.append(False)
                y.append(0.0)  # placeholder; the flag short-circuits its use
            else:
                obs.append(True)
                y.append(_parse_float(raw, r, "y"))
            if has_treat:
                treat.append(_parse_bit(rowdict["treat"], r, "treat"))
    if not z:
        raise SchemaError("no data rows")
    xarr = np.asarray(x, dtype=float)
    if problem == "did":
        return Dataset.for_panel(z, xarr, y0, y1)
    if problem == "ate":
        return Dataset.for_ate(z, xarr, y)
    if problem == "missing" and has_treat:
        return Dataset.for_missing(z, xarr, y, obs, treat)
    return Dataset.for_survey(z, xarr, y, obs)


@dataclass(frozen=True)
class AnalysisConfig:
    problem: str = "ate"
    alpha: float = 0.05
    alpha_prime: float | None = None
    union: str = "unrestricted"
    seed: int = 0
    input_path: str | None = None
    output_path: str | None = None
    regen: RegenConfig = field(default_factory=lambda: RegenConfig(
        mode="parametric", m_runs=100))
    learner_grid: tuple[LearnerSpec, ...] = ()
    variance: str = "basic"
    stat: str = "abs_difference_in_means"
    fisher_draws: int = 2000
    sensitivity: dict | None = None
    threads: int = 1

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ConfigError(f"problem must be one of {PROBLEMS}, got {self.problem!r}")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must be in (0,1), got {self.alpha}")
        if self.alpha_prime is not None and not 0.0 < self.alpha_prime < self.alpha:
            raise ConfigError("alpha_prime must satisfy 0 < alpha_prime < alpha")
        if self.union not in ("unrestricted", "restricted"):
            raise ConfigError(f"union must be unrestricted/restricted, got {self.union!r}")


_ANALYSIS_KEYS = {
    "problem", "alpha", "alpha_prime", "union", "seed", "input", "output",
    "regen", "learner_grid", "variance", "stat", "fisher_draws",
    "sensitivity", "threads",
}
_REGEN_KEYS = {
    "mode", "m_runs", "master_seed", "alpha_prime", "learner_a", "learner_b",
    "subsample_rate", "clip_delta", "link",
}


def _regen_from_dict(d: dict) -> RegenConfig:
    unknown = set(d) - _REGEN_KEYS
    if unknown:
        raise ConfigError(f"unknown regen field(s): {sorted(unknown)}")
    kwargs = dict(d)
    for key in ("learner_a", "learner_b"):
        if key in kwargs and kwargs[key] is not None:
            try:
                kwargs[key] = spec_from_dict(kwargs[key])
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"regen.{key}: {exc}") from exc
    try:
        return RegenConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"regen: {exc}") from exc


def analysis_config_from_dict(raw: dict) -> AnalysisConfig:
    unknown = set(raw) - _ANALYSIS_KEYS
    if unknown:
        raise ConfigError(f"unknown config field(s): {sorted(unknown)}")
    kwargs = {}
    for key in ("problem", "alpha", "alpha_prime", "union", "seed",
                "variance", "stat", "fisher_draws", "sensitivity", "threads"):
        if key in raw:
            kwargs[key] = raw[key]
    if "input" in raw:
        kwargs["input_path"] = raw["input"]
    if "output" in raw:
        kwargs["output_path"] = raw["output"]
    if "regen" in raw:
        kwargs["regen"] = _regen_from_dict(raw["regen"])
    if "learner_grid" in raw:
        try:
            kwargs["learner_grid"] = tuple(
                spec_from_dict(d) for d in raw["learner_grid"]
            )
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"learner_grid: {exc}") from exc
    try:
        return AnalysisConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_analysis_config(path: str) -> AnalysisConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    return analysis_config_from_dict(raw)


_EXPERIMENT_KEYS = {
    "population", "replications", "alpha", "methods", "regen", "learner_grid",
    "threads", "include_details", "output",
}
_POPULATION_KEYS = {"n_units", "effect_setting", "propensity_setting", "seed"}


@dataclass(frozen=True)
class ExperimentConfig:
    population: dict
    replications: int = 200
    alpha: float = 0.05
    methods: tuple[str, ...] = ("oracle", "plugin", "propagation", "oba")
    regen: RegenConfig = field(default_factory=lambda: RegenConfig(
        mode="crossfit", m_runs=100))
    learner_grid: tuple[LearnerSpec, ...] = ()
    threads: int = 1
    include_details: bool = False
    output_path: str | None = None


def load_experiment_config(path: str) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    unknown = set(raw) - _EXPERIMENT_KEYS
    if unknown:
        raise ConfigError(f"unknown config field(s): {sorted(unknown)}")
    if "population" not in raw or not isinstance(raw["population"], dict):
        raise ConfigError("config needs a 'population' object")
    unknown_pop = set(raw["population"]) - _POPULATION_KEYS
    if unknown_pop:
        raise ConfigError(f"unknown population field(s): {sorted(unknown_pop)}")
    kwargs = {"population": raw["population"]}
    for key in ("replications", "alpha", "threads", "include_details"):
        if key in raw:
            kwargs[key] = raw[key]
    if "methods" in raw:
        kwargs["methods"] = tuple(raw["methods"])
    if "regen" in raw:
        kwargs["regen"] = _regen_from_dict(raw["regen"])
    if "learner_grid" in raw:
        try:
            kwargs["learner_grid"] = tuple(
                spec_from_dict(d) for d in raw["learner_grid"]
            )
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"learner_grid: {exc}") from exc
    if "output" in raw:
        kwargs["output_path"] = raw["output"]
    return ExperimentConfig(**kwargs)


_REPORT_COLUMNS = ["method", "coverage", "mean_bias", "mean_length",
                   "length_ratio_oracle", "propagation_to_oba_ratio", "failures"]


def write_report_csv(report, path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_REPORT_COLUMNS)
        for row in report.rows:
            ratio = (report.propagation_to_oba_ratio
                     if row.method == "oba" else None)
            writer.writerow([
                row.method,
                repr(row.coverage),
                "" if row.mean_bias is None else repr(row.mean_bias),
                repr(row.mean_length),
                ("" if row.length_ratio_oracle is None
                 else repr(row.length_ratio_oracle)),
                "" if ratio is None else repr(ratio),
                row.failures,
            ])


def read_report_csv(path: str) -> list[dict]:
    rows = []
    with open(path, newline="") as fh:
        for rowdict in csv.DictReader(fh):
            parsed = {"method": rowdict["method"],
                      "failures": int(rowdict["failures"])}
            for col in ("coverage", "mean_bias", "mean_length",
                        "length_ratio_oracle", "propagation_to_oba_ratio"):
                val = rowdict[col]
                parsed[col] = float(val) if val != "" else None
            rows.append(parsed)
    return rows
