"""Command-line front door.

Subcommands: rate-curve, ratio-curve, clone-optimum, simulate,
experiment, validate.  Model parameters resolve in increasing
precedence: built-in defaults < --config file < LDBRANCH_* environment
variables < command-line flags.  Every run writes its artifacts into
--out plus a manifest.json listing each artifact with its SHA-256, so a
run is verifiable and byte-reproducible from (config, seed).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from . import __version__
from .experiments import (
    conditioned_clone_experiment,
    convergence_experiment,
    moment_validation,
    tail_probability_experiment,
    validate_suite,
    write_passage_csv,
)
from .params import (
    CONFIG_KEYS,
    DEFAULT_SETTINGS,
    ConfigError,
    InvalidConfiguration,
    ModelParams,
    MutationLaw,
    ResistantRates,
    apply_cli_overrides,
    apply_env_overrides,
    build_from_settings,
    load_config,
)
from .ratefn import (
    conditioned_rate,
    crossover_rate,
    optimal_clone_factor,
    recurrence_rate,
)
from .simulate import passage_batch, simulate_path

_FMT = "{:.12g}"


def _fmt(x: float) -> str:
    return _FMT.format(float(x))


class _Run:
    """Collects artifacts written under the output directory."""

    def __init__(self, out_dir: str):
        self.out_dir = out_dir
        os.makedirs(out_dir, exist_ok=True)
        self.artifacts: list[str] = []

    def path(self, name: str) -> str:
        self.artifacts.append(name)
        return os.path.join(self.out_dir, name)

    def write_text(self, name: str, text: str) -> None:
        with open(self.path(name), "w", encoding="utf-8", newline="") as fh:
            fh.write(text)

    def write_manifest(self, command: str, settings: dict) -> None:
        entries = []
        for name in sorted(self.artifacts):
            full = os.path.join(self.out_dir, name)
            digest = hashlib.sha256()
            with open(full, "rb") as fh:
                payload = fh.read()
            digest.update(payload)
            entries.append(
                {"name": name, "sha256": digest.hexdigest(), "bytes": len(payload)}
            )
        manifest = {
            "tool": "ldbranch",
            "version": __version__,
            "command": command,
            "settings": {k: settings.get(k) for k in CONFIG_KEYS},
            "artifacts": entries,
        }
        with open(os.path.join(self.out_dir, "manifest.json"), "w",
                  encoding="utf-8", newline="") as fh:
            json.dump(manifest, fh, sort_keys=True, indent=2)
            fh.write("\n")


def _csv(run: _Run, name: str, header: str, rows) -> None:
    lines = [header]
    for row in rows:
        lines.append(",".join(_fmt(v) if isinstance(v, float) else str(v)
                              for v in row))
    run.write_text(name, "\n".join(lines) + "\n")


def _sweep(start: float, stop: float, step: float) -> np.ndarray:
    if step <= 0 or stop < start:
        raise ConfigError(
            f"illegal sweep bounds: start={start}, stop={stop}, step={step}"
        )
    return np.arange(start, stop + step / 2.0, step)


def _with_resistant(params: ModelParams, r1: float) -> ModelParams:
    """Replace r1 holding lambda1 fixed (d1 moves with r1)."""
    lam1 = params.lambda1
    if r1 <= lam1:
        raise ConfigError(
            f"r1 sweep value {r1} must exceed lambda1={lam1} to keep d1 >= 0"
        )
    return ModelParams(params.sensitive, ResistantRates(r1, r1 - lam1),
                       params.mutation, params.regime)


def _with_mu(params: ModelParams, mu: float) -> ModelParams:
    return ModelParams(params.sensitive, params.resistant,
                       MutationLaw(mu, params.alpha), params.regime)


def _cmd_rate_curve(args, params, scenario, seed, run: _Run) -> int:
    if args.quantity == "recurrence":
        evaluate = lambda p, y: recurrence_rate(args.case, y, p)
    elif args.quantity == "crossover":
        evaluate = lambda p, y: crossover_rate(args.case, y, p)
    else:
        evaluate = lambda p, y: conditioned_rate(y, args.clone_factor, p)

    if args.sweep == "y":
        start = args.start if args.start is not None else 0.01
        stop = args.stop if args.stop is not None else 2.0
        step = args.step if args.step is not None else 0.01
        grid = _sweep(start, stop, step)
        rows = [
            (float(v), res.value, res.theta_star)
            for v in grid
            for res in (evaluate(params, float(v)),)
        ]
    elif args.sweep == "r1":
        start = args.start if args.start is not None else 0.21
        stop = args.stop if args.stop is not None else 2.0
        step = args.step if args.step is not None else 0.01
        grid = _sweep(start, stop, step)
        rows = [
            (float(v), res.value, res.theta_star)
            for v in grid
            for res in (evaluate(_with_resistant(params, float(v)), scenario.y),)
        ]
    else:  # mu
        start = args.start if args.start is not None else 0.01
        stop = args.stop if args.stop is not None else 1.0
        step = args.step if args.step is not None else 0.01
        grid = _sweep(start, stop, step)
        rows = [
            (float(v), res.value, res.theta_star)
            for v in grid
            for res in (evaluate(_with_mu(params, float(v)), scenario.y),)
        ]
    _csv(run, "rate-curve.csv", "sweep_value,rate,theta_star", rows)
    return 0


def _cmd_ratio_curve(args, params, scenario, seed, run: _Run) -> int:
    betas = [float(b) for b in args.betas.split(",")]
    grid = _sweep(args.y_start, args.y_stop, args.y_step)
    rows = []
    for y in grid:
        l1 = recurrence_rate(1, float(y), params).value
        l3 = recurrence_rate(3, float(y), params).value
        for beta in betas:
            if not 0.0 < beta <= params.alpha:
                raise ConfigError(
                    f"beta={beta} outside (0, alpha={params.alpha}]"
                )
            rows.append(
                (float(y), beta, scenario.n ** (beta - params.alpha) * l1 / l3)
            )
    _csv(run, "ratio-curve.csv", "y,beta,ratio", rows)
    return 0


def _cmd_clone_optimum(args, params, scenario, seed, run: _Run) -> int:
    grid = _sweep(args.y_start, args.y_stop, args.y_step)
    rows = []
    previous = None
    for y in grid:
        opt = optimal_clone_factor(float(y), params)
        rows.append((float(y), opt.a_star_star, opt.theta1, opt.theta2))
        if previous is not None and opt.a_star_star <= previous:
            raise ArithmeticError(
                f"a** failed to increase at y={float(y)}"
            )
        previous = opt.a_star_star
    _csv(run, "clone-optimum.csv", "y,a_star_star,theta1,theta2", rows)
    return 0


def _cmd_simulate(args, params, scenario, seed, run: _Run) -> int:
    reps = args.replicates
    if args.ledger:
        gammas = np.full(reps, np.nan)
        taus = np.full(reps, np.nan)
        surviving = np.zeros(reps, dtype=np.int64)
        extinct = np.zeros(reps, dtype=np.int64)
        for i in range(reps):
            res = simulate_path(params, scenario, (seed, i), ledger_on=True,
                                log_events=args.event_log)
            if res.passage.gamma is not None:
                gammas[i] = res.passage.gamma
            if res.passage.tau is not None:
                taus[i] = res.passage.tau
            surviving[i] = res.ledger.surviving
            extinct[i] = res.ledger.extinct
            if args.event_log:
                res.event_log.write_csv(run.path(f"events-r{i}.csv"))
        write_passage_csv(run.path("passages.csv"), gammas, taus,
                          surviving=surviving, extinct=extinct)
    else:
        batch = passage_batch(params, scenario, seed, reps,
                              threads=args.threads)
        write_passage_csv(run.path("passages.csv"), batch["gamma"],
                          batch["tau"])
    return 0


def _cmd_experiment(args, params, scenario, seed, run: _Run) -> int:
    raw_dir = run.out_dir if args.raw else None
    if args.name == "convergence":
        n_grid = [int(v) for v in args.n_grid.split(",")]
        report = convergence_experiment(
            params, scenario.a, n_grid, args.replicates, seed,
            threads=args.threads, raw_dir=raw_dir,
        )
    elif args.name == "tail":
        n_grid = [int(v) for v in args.n_grid.split(",")]
        report = tail_probability_experiment(
            params, scenario.a, scenario.y, n_grid, args.replicates, seed,
            threads=args.threads, passage=args.passage, raw_dir=raw_dir,
        )
    elif args.name == "conditioned-clones":
        report = conditioned_clone_experiment(
            params, scenario.y, scenario.n, args.replicates, seed,
            threads=args.threads, raw_dir=raw_dir,
        )
    else:  # moments
        checkpoints = [float(v) for v in args.checkpoints.split(",")]
        report = moment_validation(
            params, scenario.n, checkpoints, args.replicates, seed,
            threads=args.threads,
        )
    if args.raw:
        for name in sorted(os.listdir(run.out_dir)):
            if name.endswith(".csv") and name not in run.artifacts:
                run.artifacts.append(name)
    run.write_text("report.json", report.to_json())
    run.write_text("report.txt", report.to_text())
    sys.stdout.write(report.to_text())
    sys.stdout.write(f"wall_time: {report.wall_time:.2f}s\n")
    return 0 if report.passed else 1


def _cmd_validate(args, params, scenario, seed, run: _Run) -> int:
    report = validate_suite(params, scenario, seed, threads=args.threads)
    run.write_text("report.json", report.to_json())
    run.write_text("report.txt", report.to_text())
    sys.stdout.write(report.to_text())
    sys.stdout.write(f"wall_time: {report.wall_time:.2f}s\n")
    return 0 if report.passed else 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key=value parameter file")
    common.add_argument("--seed", type=int, help="root RNG seed")
    common.add_argument("--out", default="ldbranch-out",
                        help="output directory for artifacts + manifest")
    common.add_argument("--threads", type=int, default=1,
                        help="worker threads for replicated simulation")
    for key in ("r0", "d0", "r1", "d1", "mu", "alpha", "a", "y",
                "horizon_multiplier", "beta"):
        common.add_argument(f"--{key.replace('_', '-')}", dest=key,
                            type=float, default=None)
    common.add_argument("--n", type=int, default=None)
    common.add_argument("--regime",
                        choices=("subthreshold", "critical", "preexisting"),
                        default=None)

    parser = argparse.ArgumentParser(
        prog="ldbranch",
        description="Branching-process recurrence/crossover model: "
                    "simulation, rate functions, experiments.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rate-curve", parents=[common],
                       help="rate function along a parameter sweep")
    p.add_argument("--case", type=int, choices=(1, 2, 3), default=1)
    p.add_argument("--quantity",
                   choices=("recurrence", "crossover", "conditioned"),
                   default="recurrence")
    p.add_argument("--sweep", choices=("y", "r1", "mu"), default="y")
    p.add_argument("--start", type=float, default=None)
    p.add_argument("--stop", type=float, default=None)
    p.add_argument("--step", type=float, default=None)
    p.add_argument("--clone-factor", dest="clone_factor", type=float,
                   default=1.0, help="clone factor for --quantity conditioned")

    p = sub.add_parser("ratio-curve", parents=[common],
                       help="decay-rate ratio between cases 1 and 3")
    p.add_argument("--betas", default="0.1,0.2,0.3,0.4")
    p.add_argument("--y-start", dest="y_start", type=float, default=0.05)
    p.add_argument("--y-stop", dest="y_stop", type=float, default=2.0)
    p.add_argument("--y-step", dest="y_step", type=float, default=0.05)

    p = sub.add_parser("clone-optimum", parents=[common],
                       help="most likely clone factor a** along y")
    p.add_argument("--y-start", dest="y_start", type=float, default=0.25)
    p.add_argument("--y-stop", dest="y_stop", type=float, default=3.0)
    p.add_argument("--y-step", dest="y_step", type=float, default=0.25)

    p = sub.add_parser("simulate", parents=[common],
                       help="replicated exact paths, passage-time CSV")
    p.add_argument("--replicates", type=int, default=100)
    p.add_argument("--ledger", action="store_true",
                   help="track acquired clones individually")
    p.add_argument("--event-log", dest="event_log", action="store_true",
                   help="dump one event-log CSV per replicate (needs --ledger)")

    p = sub.add_parser("experiment", parents=[common],
                       help="run one Monte Carlo campaign")
    p.add_argument("--name", required=True,
                   choices=("convergence", "tail", "conditioned-clones",
                            "moments"))
    p.add_argument("--replicates", type=int, default=1000)
    p.add_argument("--n-grid", dest="n_grid", default="1000,10000,100000")
    p.add_argument("--passage", choices=("recurrence", "crossover"),
                   default="recurrence")
    p.add_argument("--checkpoints", default="2,5,10")
    p.add_argument("--raw", action="store_true",
                   help="also dump per-replicate passage CSVs")

    sub.add_parser("validate", parents=[common],
                   help="run the cross-module invariant suite")
    return parser


_COMMANDS = {
    "rate-curve": _cmd_rate_curve,
    "ratio-curve": _cmd_ratio_curve,
    "clone-optimum": _cmd_clone_optimum,
    "simulate": _cmd_simulate,
    "experiment": _cmd_experiment,
    "validate": _cmd_validate,
}


def _resolve_settings(args) -> dict:
    settings = dict(DEFAULT_SETTINGS)
    if args.config:
        settings.update(load_config(args.config))
    settings = apply_env_overrides(settings)
    overrides = {key: getattr(args, key, None) for key in CONFIG_KEYS}
    settings = apply_cli_overrides(settings, overrides)
    return settings


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        settings = _resolve_settings(args)
        params, scenario, seed = build_from_settings(settings)
        if args.command == "simulate" and args.event_log and not args.ledger:
            raise ConfigError("--event-log requires --ledger")
        run = _Run(args.out)
        status = _COMMANDS[args.command](args, params, scenario, seed, run)
        run.write_manifest(args.command, settings)
        return status
    except (ConfigError, InvalidConfiguration, ArithmeticError,
            RuntimeError, ValueError, OSError) as err:
        failures = (
            err.violations
            if isinstance(err, InvalidConfiguration)
            else [str(err)]
        )
        sys.stdout.write(json.dumps({"failures": failures}) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
