"""Command-line surface: fit, propagate, simulate, fisher, sensitivity.

Machine output goes to --out as JSON (deterministic byte-for-byte for fixed
seeds and inputs, independent of --threads); a short human-readable summary
prints to stdout. Exit codes: 0 success, 2 configuration error, 3 data error,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import dataio, fisher as fisher_mod, glm as glm_mod, sensitivity as sens_mod
from .dataio import AnalysisConfig, load_analysis_config, load_experiment_config
from .errors import ConfigError, DataError, NumericalError, RegenciError
from .estimators import propagate_ci
from .harness import PopulationSpec, run_experiment
from .numkit import RngStream
from .regen import RegenConfig, regenerate

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="regenci",
        description="Design-based confidence sets with regenerated propensity scores",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None)
        p.add_argument("--input", default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=None)

    p_fit = sub.add_parser("fit", help="fit a parametric propensity model")
    common(p_fit)
    p_fit.add_argument("--problem", choices=dataio.PROBLEMS, default=None)
    p_fit.add_argument("--link", default=None,
                       choices=["logistic", "probit", "linear_probability"])

    p_prop = sub.add_parser("propagate", help="regenerate-and-union confidence set")
    common(p_prop)
    p_prop.add_argument("--problem", choices=dataio.PROBLEMS, default=None)
    p_prop.add_argument("--m-runs", type=int, default=None)
    p_prop.add_argument("--alpha", type=float, default=None)
    p_prop.add_argument("--alpha-prime", type=float, default=None)
    p_prop.add_argument("--mode", choices=["parametric", "crossfit", "subsample"],
                        default=None)
    p_prop.add_argument("--union", choices=["unrestricted", "restricted"],
                        default=None)

    p_sim = sub.add_parser("simulate", help="run the coverage experiment")
    common(p_sim)
    p_sim.add_argument("--timing", action="store_true",
                       help="include wall-clock runtime in the JSON report")

    p_fish = sub.add_parser("fisher", help="sharp-null randomization test")
    common(p_fish)
    p_fish.add_argument("--problem", choices=dataio.PROBLEMS, default=None)
    p_fish.add_argument("--m-runs", type=int, default=None)
    p_fish.add_argument("--alpha", type=float, default=None)
    p_fish.add_argument("--mode", choices=["parametric", "crossfit", "subsample"],
                        default=None)
    p_fish.add_argument("--stat", choices=["abs_difference_in_means", "treated_sum"],
                        default=None)
    p_fish.add_argument("--draws", type=int, default=None)

    p_sens = sub.add_parser("sensitivity", help="hidden-bias sensitivity analysis")
    common(p_sens)
    p_sens.add_argument("--problem", choices=dataio.PROBLEMS, default=None)
    p_sens.add_argument("--m-runs", type=int, default=None)
    p_sens.add_argument("--alpha", type=float, default=None)
    p_sens.add_argument("--mode", choices=["parametric", "crossfit", "subsample"],
                        default=None)
    p_sens.add_argument("--gamma", type=float, default=None)
    p_sens.add_argument("--tau0", type=float, default=None)
    p_sens.add_argument("--gamma-star", action="store_true",
                        help="also search for the largest rejecting gamma")
    return parser


def _analysis_config(args) -> AnalysisConfig:
    cfg = (load_analysis_config(args.config) if args.config
           else AnalysisConfig())
    updates = {}
    if args.input is not None:
        updates["input_path"] = args.input
    if args.out is not None:
        updates["output_path"] = args.out
    if args.seed is not None:
        updates["seed"] = args.seed
    if getattr(args, "threads", None) is not None:
        updates["threads"] = args.threads
    if getattr(args, "problem", None) is not None:
        updates["problem"] = args.problem
    if getattr(args, "alpha", None) is not None:
        updates["alpha"] = args.alpha
    if getattr(args, "alpha_prime", None) is not None:
        updates["alpha_prime"] = args.alpha_prime
    if getattr(args, "union", None) is not None:
        updates["union"] = args.union
    if getattr(args, "stat", None) is not None:
        updates["stat"] = args.stat
    if getattr(args, "draws", None) is not None:
        updates["fisher_draws"] = args.draws
    regen_updates = {}
    if getattr(args, "mode", None) is not None:
        regen_updates["mode"] = args.mode
    if getattr(args, "m_runs", None) is not None:
        regen_updates["m_runs"] = args.m_runs
    if args.seed is not None:
        regen_updates["master_seed"] = args.seed
    if regen_updates:
        base = dataclasses.asdict(cfg.regen)
        base.update(regen_updates)
        if base["mode"] != "parametric":
            base["alpha_prime"] = None
        for key in ("learner_a", "learner_b"):
            base[key] = getattr(cfg.regen, key)
        try:
            updates["regen"] = RegenConfig(**base)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    try:
        return dataclasses.replace(cfg, **updates)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _require_input(cfg: AnalysisConfig):
    if not cfg.input_path:
        raise ConfigError("an --input CSV (or config 'input') is required")
    if not Path(cfg.input_path).exists():
        raise DataError(f"input file not found: {cfg.input_path}")


def _dataset(cfg: AnalysisConfig):
    _require_input(cfg)
    return dataio.load_csv(cfg.input_path, cfg.problem)


def _estimator_kind(problem: str) -> str:
    return {"ate": "ipw", "survey": "ht", "missing": "missing", "did": "did"}[problem]


def _regen_cfg(cfg: AnalysisConfig) -> RegenConfig:
    regen_cfg = cfg.regen
    if regen_cfg.mode in ("crossfit", "subsample") and regen_cfg.learner_a is None:
        if cfg.learner_grid:
            spec = cfg.learner_grid[0]
            regen_cfg = dataclasses.replace(regen_cfg, learner_a=spec, learner_b=spec)
    return regen_cfg


def _emit(payload: dict, out_path: str | None) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if out_path:
        Path(out_path).write_text(text)


def _cmd_fit(args) -> int:
    cfg = _analysis_config(args)
    ds = _dataset(cfg)
    link_tag = args.link or cfg.regen.link
    design = np.column_stack([np.ones(ds.n_units), ds.x])
    fit = glm_mod.fit_glm(design, ds.z, glm_mod.get_link(link_tag))
    payload = {
        "link": link_tag,
        "beta_hat": list(fit.beta_hat),
        "omega_hat": [list(row) for row in fit.omega_hat],
        "n_units": fit.n_units,
        "converged": fit.converged,
        "iterations": fit.iterations,
    }
    _emit(payload, cfg.output_path)
    print(f"link={link_tag} iterations={fit.iterations}")
    print("beta_hat: " + " ".join(f"{b:+.6f}" for b in fit.beta_hat))
    return EXIT_OK


def _cmd_propagate(args) -> int:
    cfg = _analysis_config(args)
    ds = _dataset(cfg)
    regen_cfg = _regen_cfg(cfg)
    regen_out, fit = regenerate(ds, regen_cfg)
    alpha_prime = (cfg.alpha_prime if cfg.alpha_prime is not None
                   else regen_cfg.alpha_prime)
    result = propagate_ci(
        ds, regen_out, cfg.alpha,
        union_mode=cfg.union,
        alpha_prime=alpha_prime,
        fit=fit,
        estimator=_estimator_kind(cfg.problem),
        variance=cfg.variance,
    )
    payload = {
        "problem": cfg.problem,
        "alpha": cfg.alpha,
        "mode": regen_cfg.mode,
        "m_runs": regen_cfg.m_runs,
        "union": cfg.union,
        **result.to_json_dict(),
    }
    _emit(payload, cfg.output_path)
    comps = " ".join(f"[{lo:.6f}, {hi:.6f}]"
                     for lo, hi in result.confidence_set.components)
    print(f"confidence set ({100 * (1 - cfg.alpha):.0f}%): {comps}")
    print(f"measure: {result.confidence_set.measure:.6f}")
    if result.fallback_unrestricted:
        print("warning: restricted set was empty; fell back to the full union")
    return EXIT_OK


def _cmd_simulate(args) -> int:
    if not args.config:
        raise ConfigError("simulate requires --config")
    exp = load_experiment_config(args.config)
    try:
        spec = PopulationSpec(**exp.population)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"population: {exc}") from exc
    threads = args.threads if args.threads is not None else exp.threads
    report = run_experiment(
        spec, methods=exp.methods, reps=exp.replications, regen_cfg=exp.regen,
        alpha=exp.alpha, learner_grid=list(exp.learner_grid), threads=threads,
        include_details=exp.include_details,
    )
    out_path = args.out or exp.output_path
    payload = report.to_json_dict(include_runtime=args.timing,
                                  include_details=exp.include_details)
    _emit(payload, out_path)
    if out_path:
        dataio.write_report_csv(report, str(Path(out_path).with_suffix(".csv")))
    header = f"{'method':<12}{'coverage':>9}{'bias':>10}{'length':>9}{'vs oracle':>11}"
    print(header)
    for row in report.rows:
        bias = "-" if row.mean_bias is None else f"{row.mean_bias:+.3f}"
        ratio = "-" if row.length_ratio_oracle is None else f"{row.length_ratio_oracle:.3f}"
        print(f"{row.method:<12}{row.coverage:>9.3f}{bias:>10}"
              f"{row.mean_length:>9.3f}{ratio:>11}")
    if report.propagation_to_oba_ratio is not None:
        print(f"propagation/oba length ratio: {report.propagation_to_oba_ratio:.3f}")
    print(f"runtime: {report.runtime_seconds:.1f}s")
    return EXIT_OK


_STATS = {
    "abs_difference_in_means": fisher_mod.abs_difference_in_means,
    "treated_sum": fisher_mod.treated_sum,
}


def _cmd_fisher(args) -> int:
    cfg = _analysis_config(args)
    ds = _dataset(cfg)
    regen_cfg = _regen_cfg(cfg)
    regen_out, _ = regenerate(ds, regen_cfg)
    stat = _STATS[cfg.stat]()
    result = fisher_mod.fisher_propagate(
        ds, regen_out, stat, cfg.fisher_draws,
        RngStream(cfg.seed, 101),
    )
    payload = {
        "stat": cfg.stat,
        "draws": cfg.fisher_draws,
        "mode": regen_cfg.mode,
        **result.to_json_dict(),
    }
    _emit(payload, cfg.output_path)
    print(f"observed {cfg.stat}: {result.statistic_observed:.6f}")
    print(f"combined p-value over {regen_out.m_runs} runs: {result.p_value:.6f}")
    return EXIT_OK


def _cmd_sensitivity(args) -> int:
    cfg = _analysis_config(args)
    ds = _dataset(cfg)
    sens_section = dict(cfg.sensitivity or {})
    if args.gamma is not None:
        sens_section["gamma"] = args.gamma
    if args.tau0 is not None:
        sens_section["tau0"] = args.tau0
    if args.alpha is not None:
        sens_section["alpha"] = args.alpha
    sens_section.setdefault("gamma", 1.0)
    sens_section.setdefault("alpha", cfg.alpha)
    sens_section.setdefault("tau0", 0.0)
    try:
        sens_cfg = sens_mod.SensitivityConfig(
            gamma=float(sens_section["gamma"]),
            alpha=float(sens_section["alpha"]),
            tau0=float(sens_section["tau0"]),
            seed=cfg.seed,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    regen_cfg = _regen_cfg(cfg)
    regen_out, _ = regenerate(ds, regen_cfg)
    logits = np.log(regen_out.propensity_vectors
                    / (1.0 - regen_out.propensity_vectors))
    membership, d_stars = sens_mod.test_tau0(ds, logits, sens_cfg,
                                             RngStream(cfg.seed, 202))
    payload = {
        "gamma": sens_cfg.gamma,
        "tau0": sens_cfg.tau0,
        "alpha": sens_cfg.alpha,
        "membership": bool(membership),
        "per_run_d_star": [float(d) for d in d_stars],
    }
    if args.gamma_star:
        try:
            gamma_star = sens_mod.sensitivity_value(
                ds, logits, sens_cfg.alpha, sens_cfg.tau0,
                stream=RngStream(cfg.seed, 203), seed=cfg.seed,
            )
            payload["gamma_star"] = gamma_star
        except RegenciError as exc:
            payload["gamma_star"] = None
            payload["gamma_star_note"] = f"{type(exc).__name__}: {exc}"
    _emit(payload, cfg.output_path)
    verdict = "inside" if membership else "outside"
    print(f"tau0={sens_cfg.tau0} is {verdict} the sensitivity set at "
          f"gamma={sens_cfg.gamma}")
    if "gamma_star" in payload and payload["gamma_star"] is not None:
        print(f"gamma_star: {payload['gamma_star']:.3f}")
    return EXIT_OK


_COMMANDS = {
    "fit": _cmd_fit,
    "propagate": _cmd_propagate,
    "simulate": _cmd_simulate,
    "fisher": _cmd_fisher,
    "sensitivity": _cmd_sensitivity,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, FloatingPointError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
