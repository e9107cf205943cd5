r"""Command line front end.

Subcommands:
  sweep        rate comparison over a power / pilot grid -> sweep.csv, sweep_agg.csv
  convergence  iteration and runtime CDFs at one operating point
               -> cdf_iterations.csv, cdf_runtime.csv
  allocation   per-user power split at one operating point -> allocation.csv

Configs are flat "key = value" files: one assignment per line, '#' starts a
comment, keys are dotted (section.name), unknown or duplicate keys fail fast
with the line number. Every key has a default, so all commands also run
without a config file. Flags: --config, --out, --seed (overrides
system.rng_seed), --threads (0 = all cores).

CSV output is byte-reproducible for a fixed config and seed. Measured wall
times are inherently not, so the wall_time_s column (and the runtime CDF)
contains zeros unless output.measured_timing = true opts out of
reproducibility. Exit codes: 0 success, 1 config error, 2 I/O error,
3 internal error.
"""

import argparse
import os
import sys
from dataclasses import replace

from .harness import (SweepSpec, aggregate_records, convergence_cdf,
                      run_allocation, run_sweep, write_allocation_csv,
                      write_aggregates_csv, write_cdf_csv, write_sweep_csv)
from .model import CovarianceModel, SystemConfig, db_to_linear, generate_covariance
from .precoders import SOLVER_IDS, SolverOptions


class ConfigError(Exception):
    """Invalid configuration content (unknown key, bad value, bad combination)."""


def _parse_int(text):
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"expected an integer, got {text!r}") from None


def _parse_float(text):
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"expected a number, got {text!r}") from None


def _parse_bool(text):
    if text == "true":
        return True
    if text == "false":
        return False
    raise ConfigError(f"expected true or false, got {text!r}")


def _parse_float_list(text):
    items = [s.strip() for s in text.split(",")]
    if any(not s for s in items):
        raise ConfigError(f"malformed number list {text!r}")
    return tuple(_parse_float(s) for s in items)


def _parse_int_list(text):
    items = [s.strip() for s in text.split(",")]
    if any(not s for s in items):
        raise ConfigError(f"malformed integer list {text!r}")
    return tuple(_parse_int(s) for s in items)


def _parse_name_list(text):
    items = tuple(s.strip() for s in text.split(","))
    if any(not s for s in items):
        raise ConfigError(f"malformed name list {text!r}")
    return items


def _choice(*options):
    def parse(text):
        if text not in options:
            raise ConfigError(f"expected one of {', '.join(options)}, got {text!r}")
        return text
    return parse


# key -> (parser, default, help); None defaults mean "derived elsewhere"
CONFIG_KEYS = {
    "system.num_antennas": (_parse_int, 16, "transmit antennas M"),
    "system.num_users": (_parse_int, 4, "single-antenna users K"),
    "system.num_pilots": (_parse_int, 4, "pilot symbols T_dl"),
    "system.rng_seed": (_parse_int, 0, "master seed; trial t uses seed + t"),
    "sweep.power_grid_db": (_parse_float_list, (0.0, 10.0, 20.0, 30.0, 40.0),
                            "downlink powers in dB"),
    "sweep.pilot_counts": (_parse_int_list, None,
                           "pilot grid; defaults to system.num_pilots"),
    "sweep.num_trials": (_parse_int, 50, "Monte Carlo trials per grid cell"),
    "sweep.solvers": (_parse_name_list, SOLVER_IDS,
                      "subset of " + ",".join(SOLVER_IDS)),
    "covariance.kind": (_choice("identity", "exponential", "diagonal"),
                        "exponential", "base covariance model"),
    "covariance.rho": (_parse_float, 0.9, "exponential correlation coefficient"),
    "covariance.diagonal": (_parse_float_list, None,
                            "eigenvalue list for kind = diagonal"),
    "covariance.per_user_rotation": (_parse_bool, True,
                                     "rotate the base model per user (seeded)"),
    "pilot.strategy": (_choice("dft_truncated", "covariance_eigenvectors"),
                       "dft_truncated", "pilot matrix construction"),
    "solver.max_iterations": (_parse_int, None,
                              "iteration cap; default 500 (mmplus 2000)"),
    "solver.rel_tolerance": (_parse_float, 1e-6, "relative convergence tolerance"),
    "solver.bisection_tolerance": (_parse_float, 1e-8,
                                   "relative power tolerance of the bisection"),
    "solver.bisection_max_steps": (_parse_int, 200, "bisection step cap"),
    "convergence.power_db": (_parse_float, 30.0,
                             "operating point of the convergence command"),
    "allocation.power_db": (_parse_float, 40.0,
                            "operating point of the allocation command"),
    "allocation.activity_threshold": (_parse_float, 0.01,
                                      "power fraction above which a user counts as active"),
    "output.measured_timing": (_parse_bool, False,
                               "write real wall times (breaks byte-reproducibility)"),
}


def parse_config(text):
    """Parse config file content into a {key: value} dict over CONFIG_KEYS."""
    values = {key: default for key, (_, default, _) in CONFIG_KEYS.items()}
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in CONFIG_KEYS:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate config key {key!r}")
        if not value:
            raise ConfigError(f"line {lineno}: missing value for {key!r}")
        seen.add(key)
        parser = CONFIG_KEYS[key][0]
        try:
            values[key] = parser(value)
        except ConfigError as err:
            raise ConfigError(f"line {lineno}: {key}: {err}") from None
    return values


def build_spec(values):
    """Turn parsed config values into a validated SweepSpec."""
    try:
        config = SystemConfig(num_antennas=values["system.num_antennas"],
                              num_users=values["system.num_users"],
                              num_pilots=values["system.num_pilots"],
                              power_dl=db_to_linear(values["sweep.power_grid_db"][0]),
                              rng_seed=values["system.rng_seed"])
        covariance = CovarianceModel(kind=values["covariance.kind"],
                                     rho=values["covariance.rho"],
                                     diagonal=None if values["covariance.diagonal"] is None
                                     else list(values["covariance.diagonal"]))
        # validate the covariance recipe now instead of failing mid-sweep
        generate_covariance(covariance, config.num_antennas)
        options = SolverOptions(
            max_iterations=values["solver.max_iterations"],
            rel_tolerance=values["solver.rel_tolerance"],
            bisection_tolerance=values["solver.bisection_tolerance"],
            bisection_max_steps=values["solver.bisection_max_steps"])
        return SweepSpec(config=config,
                         power_grid_db=values["sweep.power_grid_db"],
                         pilot_counts=values["sweep.pilot_counts"],
                         num_trials=values["sweep.num_trials"],
                         solvers=values["sweep.solvers"],
                         covariance=covariance,
                         per_user_rotation=values["covariance.per_user_rotation"],
                         pilot_strategy=values["pilot.strategy"],
                         options=options)
    except ValueError as err:
        raise ConfigError(str(err)) from None


def _strip_timing(records):
    return [replace(r, wall_time_s=0.0 if r.status == "ok" else r.wall_time_s)
            for r in records]


def cmd_sweep(values, out_dir, threads):
    spec = build_spec(values)
    result = run_sweep(spec, threads=threads)
    records = result.records
    if not values["output.measured_timing"]:
        records = _strip_timing(records)
    write_sweep_csv(records, os.path.join(out_dir, "sweep.csv"))
    write_aggregates_csv(aggregate_records(records),
                         os.path.join(out_dir, "sweep_agg.csv"))
    print(f"wrote {len(records)} records to {os.path.join(out_dir, 'sweep.csv')}")
    return 0


def cmd_convergence(values, out_dir, threads):
    spec = build_spec(values)
    spec = replace(spec, power_grid_db=(values["convergence.power_db"],),
                   pilot_counts=None)
    result = run_sweep(spec, threads=threads)
    records = result.records
    if not values["output.measured_timing"]:
        records = _strip_timing(records)
    write_cdf_csv(convergence_cdf(records, "iterations"),
                  os.path.join(out_dir, "cdf_iterations.csv"))
    write_cdf_csv(convergence_cdf(records, "wall_time_s"),
                  os.path.join(out_dir, "cdf_runtime.csv"))
    print(f"wrote CDFs for {len(set(r.solver for r in records))} solvers to {out_dir}")
    return 0


def cmd_allocation(values, out_dir, threads):
    del threads  # allocation batches are small; kept for a uniform interface
    spec = build_spec(values)
    rows, mean_active = run_allocation(spec, values["allocation.power_db"],
                                       threshold=values["allocation.activity_threshold"])
    write_allocation_csv(rows, os.path.join(out_dir, "allocation.csv"))
    for solver in spec.solvers:
        print(f"{solver}: mean active users {mean_active[solver]:.2f}")
    return 0


_COMMANDS = {
    "sweep": cmd_sweep,
    "convergence": cmd_convergence,
    "allocation": cmd_allocation,
}


def _build_parser():
    epilog_lines = ["config keys (defaults in parentheses):"]
    for key, (_, default, help_text) in CONFIG_KEYS.items():
        shown = "unset" if default is None else \
            ",".join(str(v) for v in default) if isinstance(default, tuple) else \
            str(default).lower() if isinstance(default, bool) else str(default)
        epilog_lines.append(f"  {key} ({shown}): {help_text}")
    parser = argparse.ArgumentParser(
        prog="mmprecode",
        description="Robust downlink precoding experiments under imperfect CSI.",
        epilog="\n".join(epilog_lines),
        formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("sweep", "rate comparison over a power/pilot grid"),
                            ("convergence", "iteration and runtime CDFs"),
                            ("allocation", "per-user power split")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="path to a key = value config file")
        p.add_argument("--out", default=".", help="output directory (default: .)")
        p.add_argument("--seed", type=int, help="override system.rng_seed")
        p.add_argument("--threads", type=int, default=1,
                       help="worker processes, 0 = all cores (default: 1)")
    return parser


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        if args.config is None:
            text = ""
        else:
            try:
                with open(args.config, "r", encoding="utf-8") as fh:
                    text = fh.read()
            except OSError as err:
                print(f"cannot read config: {err}", file=sys.stderr)
                return 2
        values = parse_config(text)
        if args.seed is not None:
            values["system.rng_seed"] = args.seed
        if args.threads < 0:
            raise ConfigError("--threads must be >= 0")
        try:
            os.makedirs(args.out, exist_ok=True)
        except OSError as err:
            print(f"cannot create output directory: {err}", file=sys.stderr)
            return 2
        return _COMMANDS[args.command](values, args.out, args.threads)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 1
    except OSError as err:
        print(f"I/O error: {err}", file=sys.stderr)
        return 2
    except Exception as err:  # noqa: BLE001, defensive: map bugs to exit code 3
        print(f"internal error: {type(err).__name__}: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
