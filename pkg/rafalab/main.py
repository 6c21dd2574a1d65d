import argparse
import os
import sys

import pydantic
import structlog

import rafalab.agent.agents as agents
import rafalab.config as config
import rafalab.harness.audit as audit
import rafalab.harness.sweep as sweep
import rafalab.mdp.setup as setup
import rafalab.mdp.storage as storage
import rafalab.report as report
import rafalab.util as util
import rafalab.verify as verify
from rafalab.errors import ConfigurationError, RafaError, RunAborted
from rafalab.posterior import save_posterior

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2

logger = structlog.get_logger()

description = """
Bayesian model-based agents on linear-mixture MDPs: single runs, seed sweeps,
property verification and sweep reports.

Exit codes: 0 success, 1 runtime failure or failed audit/check, 2 bad config or
arguments. RAFALAB_OUT_DIR overrides [harness] out_dir.
"""


def schema_help() -> str:
    """Config file schema, one line per key, read off the pydantic models."""
    sections = {
        "environment": config.EnvironmentConfig,
        "agent": config.AgentConfig,
        "agent.planner": config.PlannerConfig,
        "agent.switch": config.SwitchCondition,
        "harness": config.HarnessConfig,
        "logging": config.LoggingConfig,
        "[arms]": config.ArmConfig,
    }
    lines = ["config schema (TOML, schema_version = 1, unknown keys rejected):"]
    for section, model in sections.items():
        lines.append(f"  [{section}]")
        for name, field in model.model_fields.items():
            if isinstance(field.default, pydantic.BaseModel):
                continue
            default = "" if field.is_required() else f" = {field.default!r}"
            note = f"  # {field.description}" if field.description else ""
            lines.append(f"    {name}{default}{note}")
    return "\n".join(lines)


def _experiment(args: argparse.Namespace) -> config.ExperimentConfig:
    experiment = config.load_experiment(args.config)
    harness = {}
    if getattr(args, "out", None):
        harness["out_dir"] = args.out
    if getattr(args, "jobs", None):
        harness["jobs"] = args.jobs
    agent = {}
    if getattr(args, "seed", None) is not None:
        agent["seed"] = args.seed
    experiment = experiment.model_copy(
        update={
            "harness": experiment.harness.model_copy(update=harness),
            "agent": experiment.agent.model_copy(update=agent),
        }
    )
    experiment.check_paths()
    return experiment


def _configure_logging(args: argparse.Namespace, experiment=None) -> None:
    log_config = experiment.logging if experiment else config.LoggingConfig()
    util.configure_logging(log_config.log_dir, args.log_level or log_config.level)


def cmd_run(args: argparse.Namespace) -> int:
    experiment = _experiment(args)
    _configure_logging(args, experiment)
    cfg = experiment.agent
    if args.env:
        env = storage.load_environment(args.env)
    else:
        env = setup.generate_environment(
            experiment.environment, util.stream(cfg.seed, "environment")
        )
    stem = f"{'myopic' if cfg.myopic else cfg.variant}-seed{cfg.seed}"
    out_dir = os.path.join(experiment.harness.out_dir, stem)
    storage.save_environment(env, os.path.join(out_dir, "environment.toml"))
    agent = agents.RafaAgent(env, cfg)
    try:
        record = agent.run()
    except RunAborted as error:
        error.record.save(out_dir)
        print(f"run aborted at step {error.step}: {error}", file=sys.stderr)
        return EXIT_FAILED
    paths = record.save(out_dir)
    save_posterior(agent.posterior, os.path.join(out_dir, "posterior.toml"))
    audit_report = audit.audit(record)
    audit_report.save(os.path.join(out_dir, "audit.json"))
    for check in audit_report.checks:
        print(check.line())
    print(f"record {paths['steps']}")
    return EXIT_OK if audit_report.passed else EXIT_FAILED


def cmd_sweep(args: argparse.Namespace) -> int:
    experiment = _experiment(args)
    _configure_logging(args, experiment)
    result = sweep.run_sweep(
        experiment, out_dir=experiment.harness.out_dir, jobs=experiment.harness.jobs
    )
    print(result.summary.to_string(index=False))
    if result.failed:
        print(result.status_table())
        return EXIT_FAILED
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    _configure_logging(args)
    checks = verify.run_suites(args.only, trials=args.trials, seed=args.seed or 0)
    for check in checks:
        print(check.line())
    return EXIT_FAILED if any(check.status == "fail" for check in checks) else EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    experiment = _experiment(args) if args.config else None
    _configure_logging(args, experiment)
    for line in report.report(
        args.members, experiment, baseline=args.baseline, seed=args.seed or 0
    ):
        print(line)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rafalab",
        description=description,
        epilog=schema_help(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--log-level", help="Overrides [logging] level.")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="One run, its record and its audit.")
    run.add_argument("--config", help="Experiment TOML; package defaults if omitted.")
    run.add_argument("--seed", type=int, help="Overrides [agent] seed.")
    run.add_argument("--out", help="Overrides [harness] out_dir.")
    run.add_argument("--env", help="Replay on a saved environment file.")
    run.set_defaults(handler=cmd_run)

    sweep_ = commands.add_parser("sweep", help="Arms x seeds grid into CSV files.")
    sweep_.add_argument(
        "--config", help="Experiment TOML; package defaults if omitted."
    )
    sweep_.add_argument("--out", help="Overrides [harness] out_dir.")
    sweep_.add_argument("--jobs", type=int, help="Overrides [harness] jobs.")
    sweep_.set_defaults(handler=cmd_sweep)

    verify_ = commands.add_parser("verify", help="Property suites, NAME status value.")
    verify_.add_argument(
        "--only",
        action="append",
        choices=list(verify.suites),
        help="Run only this suite; repeatable.",
    )
    verify_.add_argument("--trials", type=int, default=1, help="Trial multiplier.")
    verify_.add_argument("--seed", type=int, help="Master seed of the suites.")
    verify_.set_defaults(handler=cmd_verify)

    report_ = commands.add_parser("report", help="Ratios, switches and baselines.")
    report_.add_argument("members", nargs="+", help="members.csv files of sweeps.")
    report_.add_argument("--config", help="Sweep config, enables entropy budgets.")
    report_.add_argument("--baseline", default="myopic", help="Baseline arm name.")
    report_.add_argument("--seed", type=int, help="Bootstrap seed.")
    report_.set_defaults(handler=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as error:
        return EXIT_OK if error.code == 0 else EXIT_USAGE
    try:
        return args.handler(args)
    except (ConfigurationError, pydantic.ValidationError) as error:
        print(f"configuration error: {error}", file=sys.stderr)
        return EXIT_USAGE
    except RafaError as error:
        logger.error("Command failed.", command=args.command, error=str(error))
        print(f"error: {error}", file=sys.stderr)
        return EXIT_FAILED
    except OSError as error:
        logger.error("Output failed.", command=args.command, error=str(error))
        print(f"error: {error}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
