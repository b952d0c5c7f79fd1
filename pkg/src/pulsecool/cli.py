"""Configuration-driven experiment runner.

Subcommands: simulate, optimize, robustness, chain, verify.  Experiments
are described by a JSON config (all physical quantities carry explicit
units in their field names); a few common fields can be overridden on the
command line (--out, --seed, --n-fock, --impulsive, --cycle ...).  Every
run writes, inside its output directory only:

* ``results.csv``      machine-readable results table
* ``series_*.csv``     plot-ready (x, y, y_err) series
* ``run_metadata.json`` full config echo, seed, versions, tolerances and
  leak diagnostics, sufficient to reproduce the run byte-for-byte.

Exit codes: 0 success, 1 config error, 2 numerical/truncation failure,
3 I/O error.  The environment variable ``PULSECOOL_OUT`` overrides the
default output directory.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np
import scipy

from . import __version__, chain, cooling, core, noise, optimize, pulses, verify
from .core import SystemParams
from .errors import PulsecoolError

EXPERIMENTS = ("simulate", "optimize", "robustness", "chain", "verify")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_IO = 3

TOLERANCES = {
    "unitarity": 1e-9,
    "state_hermiticity": 1e-10,
    "state_trace": 1e-10,
    "demi_oracle_agreement": 1e-8,
    "demi_scalar_phase": 1e-6,
    "equilibrium_force_residual": 1e-10,
    "truncation_convergence_phonons": 1e-3,
}


class ConfigError(PulsecoolError):
    pass


# ---------------------------------------------------------------------------
# results tables
# ---------------------------------------------------------------------------

def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def emit_results(rows: list[dict], schema: list[str], path) -> None:
    """Write a delimiter-separated table: header row, stable column order,
    full-precision floats, deterministic bytes for fixed inputs."""
    for i, row in enumerate(rows):
        missing = [c for c in schema if c not in row]
        if missing:
            raise ValueError(f"row {i} is missing columns {missing}")
    lines = [",".join(schema)]
    for row in rows:
        lines.append(",".join(_format_value(row[c]) for c in schema))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def parse_results(path) -> tuple[list[dict], list[str]]:
    """Inverse of emit_results (ints, floats and strings round-trip)."""
    text = Path(path).read_text(encoding="utf-8").strip()
    lines = text.split("\n") if text else []
    if not lines:
        raise ValueError("empty results file")
    schema = lines[0].split(",")
    rows = []
    for line in lines[1:]:
        values = []
        for tok in line.split(","):
            if tok == "true":
                values.append(True)
            elif tok == "false":
                values.append(False)
            else:
                try:
                    values.append(int(tok))
                except ValueError:
                    try:
                        values.append(float(tok))
                    except ValueError:
                        values.append(tok)
        rows.append(dict(zip(schema, values)))
    return rows, schema


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def params_from_config(block: dict) -> SystemParams:
    known = {"nu_over_2pi_hz", "omega_over_2pi_hz", "eta", "delta_over_2pi_hz",
             "n_fock", "guard_levels", "leak_threshold"}
    unknown = set(block) - known
    if unknown:
        raise ConfigError(f"params: unknown fields {sorted(unknown)}")
    kwargs = {}
    if "nu_over_2pi_hz" in block:
        kwargs["nu"] = 2 * math.pi * float(block["nu_over_2pi_hz"])
    if "omega_over_2pi_hz" in block:
        kwargs["omega"] = 2 * math.pi * float(block["omega_over_2pi_hz"])
    if "eta" in block:
        kwargs["eta"] = float(block["eta"])
    if "delta_over_2pi_hz" in block:
        kwargs["delta"] = 2 * math.pi * float(block["delta_over_2pi_hz"])
    if "guard_levels" in block:
        kwargs["guard_levels"] = int(block["guard_levels"])
    if "leak_threshold" in block:
        kwargs["leak_threshold"] = float(block["leak_threshold"])
    n_fock = int(block.get("n_fock", 60))
    try:
        return core.make_params(n_fock=n_fock, **kwargs)
    except (ValueError, PulsecoolError) as err:
        raise ConfigError(f"params: {err}") from err


def params_to_config(p: SystemParams) -> dict:
    return {
        "nu_over_2pi_hz": p.nu / (2 * math.pi),
        "omega_over_2pi_hz": p.omega / (2 * math.pi),
        "eta": p.eta,
        "delta_over_2pi_hz": p.delta / (2 * math.pi),
        "n_fock": p.n_fock,
        "guard_levels": p.guard_levels,
        "leak_threshold": p.leak_threshold,
    }


def load_config(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    except json.JSONDecodeError as err:
        raise ConfigError(f"config {path} is not valid JSON: {err}") from err
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    version = cfg.get("schema_version", 1)
    if version != 1:
        raise ConfigError(f"unsupported config schema_version {version}")
    return cfg


def _resolve_cycle(name_or_path: str, params: SystemParams) -> cooling.CoolingCycle:
    if name_or_path in cooling.list_builtin_cycles():
        return cooling.builtin_cycle(name_or_path, params)
    path = Path(name_or_path)
    if not path.is_file():
        raise ConfigError(
            f"cycle {name_or_path!r} is neither a builtin "
            f"({', '.join(cooling.list_builtin_cycles())}) nor an existing file")
    return cooling.load_cycle(path, params)


def _write_metadata(out_dir: Path, experiment: str, cfg_echo: dict,
                    extra: dict | None = None) -> None:
    record = {
        "experiment": experiment,
        "config": cfg_echo,
        "versions": {
            "pulsecool": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "tolerances": TOLERANCES,
    }
    if extra:
        record.update(extra)
    with open(out_dir / "run_metadata.json", "w", encoding="utf-8") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

def run_simulate(params: SystemParams, block: dict, out_dir: Path) -> dict:
    cycle = _resolve_cycle(block["cycle"], params)
    nbar = float(block.get("initial_nbar", 3.0))
    n_reps = int(block.get("n_reps", 25))
    impulsive = bool(block.get("impulsive", False))
    state = core.thermal_state(params, nbar)
    state, trace = cooling.run_repeated(state, cycle, params, n_reps,
                                        impulsive=impulsive)
    rows = [{"step": i, "energy_hbar_nu": e, "guard_population": g}
            for i, (e, g) in enumerate(zip(trace.energies, trace.guard_populations))]
    emit_results(rows, ["step", "energy_hbar_nu", "guard_population"],
                 out_dir / "results.csv")
    emit_results([{"x": r["step"], "y": r["energy_hbar_nu"], "y_err": 0.0}
                  for r in rows], ["x", "y", "y_err"],
                 out_dir / "series_energy.csv")
    dist = state.phonon_distribution()
    emit_results([{"n": i, "population": float(pop)} for i, pop in enumerate(dist)],
                 ["n", "population"], out_dir / "series_phonon_distribution.csv")
    return {
        "final_energy_hbar_nu": trace.energies[-1],
        "steady_state_at": trace.steady_state_at,
        "leak_diagnostics": {
            "max_propagator_leak": trace.max_propagator_leak,
            "leaked_population": trace.leaked_population,
            "max_guard_population": max(trace.guard_populations),
        },
        "cycle_label": cycle.label,
        "cycle_duration_trap_periods":
            cooling.cycle_duration(cycle) / (2 * math.pi / params.nu),
        "pulses_per_cycle": cooling.pulse_count(cycle),
    }


def run_optimize(params: SystemParams, block: dict, out_dir: Path,
                 seed: int) -> dict:
    template = optimize.CycleTemplate(
        n_sequences=int(block.get("n_sequences", 10)),
        pairs_per_sequence=int(block.get("pairs_per_sequence", 3)))
    bound_kw = {k: float(block[k]) for k in ("x_max", "t_p_max", "t_f_max")
                if k in block}
    problem = optimize.make_problem(
        params, float(block.get("initial_nbar", 3.0)), template=template,
        seed=seed,
        objective_mode=block.get("objective_mode", "single_cycle"),
        k_cycles=int(block.get("k_cycles", 3)),
        search_n_fock=int(block.get("search_n_fock", 30)),
        search_leak_threshold=float(block.get("search_leak_threshold", 5e-3)),
        **bound_kw)
    schedule = optimize.AnnealSchedule(
        t0=float(block.get("t0", 1.0)),
        cooling_rate=float(block.get("cooling_rate", 0.999)),
        steps=int(block.get("anneal_steps", 20000)),
        proposal_scale=float(block.get("proposal_scale", 0.05)))
    result = optimize.hybrid_optimize(
        problem, rounds=int(block.get("rounds", 2)), schedule=schedule,
        bfgs_max_iter=int(block.get("bfgs_max_iter", 200)))
    label = block.get("label", f"optimized-nbar{problem.initial_nbar:g}")
    cycle = replace(result.best_cycle, label=label)
    meta = {
        "seed": seed,
        "initial_nbar": problem.initial_nbar,
        "objective_mode": problem.objective_mode,
        "search_n_fock": problem.search_n_fock,
        "schedule": asdict(schedule),
        "best_objective_search": result.best_objective,
        "objective_impulsive_full_fock": result.objective_impulsive_validated,
        "objective_full_dynamics": result.objective_full_dynamics,
        "validation_gap": result.validation_gap,
        "meets_gap_rule": result.meets_gap_rule,
    }
    cooling.save_cycle(cycle, out_dir / f"{label}.json", params, metadata=meta)
    emit_results([{"iteration": i, "objective": v}
                  for i, v in enumerate(result.history)],
                 ["iteration", "objective"], out_dir / "history.csv")
    emit_results([{**{"label": label}, **{k: (v if v is not None else math.nan)
                                          for k, v in meta.items()
                                          if k not in ("schedule",)}}],
                 ["label", "seed", "initial_nbar", "objective_mode",
                  "search_n_fock", "best_objective_search",
                  "objective_impulsive_full_fock", "objective_full_dynamics",
                  "validation_gap", "meets_gap_rule"],
                 out_dir / "results.csv")
    return meta


def run_robustness(params: SystemParams, block: dict, out_dir: Path,
                   seed: int) -> dict:
    cycle = _resolve_cycle(block["cycle"], params)
    spec = noise.NoiseSpec(
        target=block.get("target", "timings"),
        correlation=block.get("correlation", "per_cycle"),
        n_samples=int(block.get("n_samples", 500)),
        seed=seed)
    sigmas = block.get("sigmas", list(noise.DEFAULT_SIGMAS))
    points = noise.monte_carlo_robustness(
        cycle, params, float(block.get("initial_nbar", 3.0)),
        int(block.get("n_reps", 25)), spec, sigmas=sigmas,
        impulsive=bool(block.get("impulsive", True)),
        n_jobs=int(block.get("n_jobs", 1)))
    schema = ["sigma", "target", "correlation", "mean_final", "std_final",
              "n_ok", "n_failed"]
    rows = [asdict(pt) for pt in points]
    emit_results(rows, schema, out_dir / "results.csv")
    emit_results([{"x": pt.sigma, "y": pt.mean_final,
                   "y_err": pt.std_final / math.sqrt(max(pt.n_ok, 1))}
                  for pt in points], ["x", "y", "y_err"],
                 out_dir / "series_robustness.csv")
    return {"seed": seed, "n_failed_total": sum(pt.n_failed for pt in points)}


def run_chain(params: SystemParams, block: dict, out_dir: Path) -> dict:
    kinds = block.get("kinds", list(chain.KINDS))
    spacing = block.get("spacing")
    rows = chain.chain_sweep(int(block.get("n_max", 40)), kinds=kinds,
                             nu=params.nu,
                             spacing=None if spacing is None else float(spacing))
    emit_results(rows, ["N", "kind", "spacing", "nu_com", "n_com"],
                 out_dir / "results.csv")
    for kind in kinds:
        emit_results([{"x": r["N"], "y": r["n_com"], "y_err": 0.0}
                      for r in rows if r["kind"] == kind],
                     ["x", "y", "y_err"], out_dir / f"series_chain_{kind}.csv")
    return {"rows": len(rows)}


def run_verify_experiment(params: SystemParams, out_dir: Path) -> dict:
    checks = verify.run_verification(params)
    emit_results([asdict(c) for c in checks],
                 ["name", "ok", "measured", "threshold", "seconds"],
                 out_dir / "results.csv")
    print(verify.format_report(checks))
    if not verify.all_passed(checks):
        raise PulsecoolError("verification suite failed")
    return {"checks": len(checks), "all_passed": True}


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def run_experiment(config: dict, out_dir) -> int:
    """Execute one configured experiment; returns the process exit code."""
    experiment = config.get("experiment")
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {EXPERIMENTS}, "
                          f"got {experiment!r}")
    params = params_from_config(config.get("params", {}))
    seed = int(config.get("seed", 0))
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as err:
        print(f"cannot create output directory {out_dir}: {err}", file=sys.stderr)
        return EXIT_IO

    block = config.get(experiment, {})
    if not isinstance(block, dict):
        raise ConfigError(f"config block {experiment!r} must be an object")
    try:
        if experiment == "simulate":
            if "cycle" not in block:
                raise ConfigError("simulate: missing required field 'cycle'")
            extra = run_simulate(params, block, out_dir)
        elif experiment == "optimize":
            extra = run_optimize(params, block, out_dir, seed)
        elif experiment == "robustness":
            if "cycle" not in block:
                raise ConfigError("robustness: missing required field 'cycle'")
            extra = run_robustness(params, block, out_dir, seed)
        elif experiment == "chain":
            extra = run_chain(params, block, out_dir)
        else:
            extra = run_verify_experiment(params, out_dir)
    except ConfigError:
        raise
    except PulsecoolError as err:
        print(f"numerical failure in {experiment}: {err}", file=sys.stderr)
        _write_metadata(out_dir, experiment,
                        {**config, "params": params_to_config(params)},
                        {"failure": str(err)})
        return EXIT_NUMERICAL
    except OSError as err:
        print(f"I/O failure in {experiment}: {err}", file=sys.stderr)
        return EXIT_IO
    _write_metadata(out_dir, experiment,
                    {**config, "params": params_to_config(params)},
                    {"result": extra, "seed": seed})
    return EXIT_OK


def _add_common(sub):
    sub.add_argument("--config", help="JSON experiment config")
    sub.add_argument("--out", help="output directory "
                     "(default ./pulsecool-results or $PULSECOOL_OUT)")
    sub.add_argument("--seed", type=int, help="override config seed")
    sub.add_argument("--n-fock", type=int, help="override Fock cutoff")
    sub.add_argument("--impulsive", action="store_true",
                     help="evaluate in the impulsive limit")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pulsecool",
        description="Pulsed sideband-cooling experiments: simulate cycles, "
                    "optimize them, stress-test noise robustness, and compute "
                    "ion-chain mode occupations.")
    subs = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        sub = subs.add_parser(name)
        _add_common(sub)
        if name in ("simulate", "robustness"):
            sub.add_argument("--cycle", help="builtin cycle name or cycle file")
            sub.add_argument("--nbar", type=float, help="initial mean phonons")
            sub.add_argument("--n-reps", type=int, help="cycle applications")
        if name == "robustness":
            sub.add_argument("--n-samples", type=int)
            sub.add_argument("--n-jobs", type=int)
        if name == "chain":
            sub.add_argument("--n-max", type=int)
        if name == "optimize":
            sub.add_argument("--nbar", type=float, help="initial mean phonons")
    return parser


def _apply_overrides(config: dict, args) -> dict:
    if args.seed is not None:
        config["seed"] = args.seed
    if args.n_fock is not None:
        config.setdefault("params", {})["n_fock"] = args.n_fock
    block = config.setdefault(config["experiment"], {})
    if getattr(args, "impulsive", False):
        block["impulsive"] = True
    for attr, key in (("cycle", "cycle"), ("nbar", "initial_nbar"),
                      ("n_reps", "n_reps"), ("n_samples", "n_samples"),
                      ("n_jobs", "n_jobs"), ("n_max", "n_max")):
        value = getattr(args, attr, None)
        if value is not None:
            block[key] = value
    return config


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config) if args.config else {"schema_version": 1}
        config["experiment"] = args.experiment
        config = _apply_overrides(config, args)
        out_dir = (args.out or os.environ.get("PULSECOOL_OUT")
                   or "pulsecool-results")
        return run_experiment(config, out_dir)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
