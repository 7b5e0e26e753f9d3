import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Optional

from thermo_network.analysis.audit import AuditReport, AuditTolerances, cross_validation_audit, run_audits
from thermo_network.analysis.audit_presenter import AuditPresenter, create_audit_report, report_to_json
from thermo_network.network.model import NetworkModel, initial_state
from thermo_network.scenario.demos import DEMOS, build_demo, describe_demos
from thermo_network.scenario.parser import load_scenario, serialize_scenario
from thermo_network.scenario.trajectory_writer import write_trajectory
from thermo_network.simulation.abstract_ldav import LdavOptions
from thermo_network.simulation.integrator import METHODS, IntegrationOptions, Trajectory, integrate_model
from thermo_network.utils.config import load_config
from thermo_network.utils.errors import (
    ConstraintRankError, DivergenceError, DomainError, IntegrityError, ScenarioError, ScopeError,
    StepUnderflowError, ValidationError,
)
from thermo_network.utils.logging_config import setup_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_AUDIT_FAILED = 1
EXIT_USAGE = 2
EXIT_RUNTIME = 3


def parse_arguments(argv: Optional[List[str]] = None) -> argparse.Namespace:
    """Parse command line arguments."""
    parser = argparse.ArgumentParser(
        prog='thermo-network',
        description="Simulate and audit open thermodynamic gas networks"
    )
    parser.add_argument(
        "--config",
        type=Path,
        help="Configuration file (default: config/config.yml or $THERMO_NETWORK_CONFIG)"
    )
    parser.add_argument(
        "--log-level",
        type=str,
        help="Override the configured log level (e.g. DEBUG)"
    )

    subparsers = parser.add_subparsers(dest='command', required=True, help='Command to run')

    def add_run_overrides(sub: argparse.ArgumentParser) -> None:
        sub.add_argument("--tf", type=float, help="Final time in seconds (overrides the run section)")
        sub.add_argument("--dt", type=float, help="Sample interval in seconds (overrides the run section)")
        sub.add_argument("--method", choices=METHODS, help="Integration method (overrides the run section)")

    simulate_parser = subparsers.add_parser('simulate', help='Integrate a scenario and write its trajectory')
    simulate_parser.add_argument("scenario", type=Path, help="Scenario file")
    simulate_parser.add_argument("-o", "--out", type=Path, help="CSV output path (default: stdout)")
    add_run_overrides(simulate_parser)

    audit_parser = subparsers.add_parser('audit', help='Simulate a scenario and run every applicable audit')
    audit_parser.add_argument("scenario", type=Path, help="Scenario file")
    audit_parser.add_argument("--json", action="store_true", help="Print the report as JSON")
    add_run_overrides(audit_parser)

    demo_parser = subparsers.add_parser('demo', help='Build, simulate and audit a demo network')
    demo_parser.add_argument("name", nargs='?', choices=list(DEMOS), help="Demo name")
    demo_parser.add_argument("--list", action="store_true", help="List the demos and their parameters")
    demo_parser.add_argument("--emit-scenario", action="store_true",
                             help="Print the demo as a scenario document instead of running it")
    demo_parser.add_argument("-o", "--out", type=Path, help="CSV output path (default: <output.dir>/<name>.csv)")
    demo_parser.add_argument("--json", action="store_true", help="Print the report as JSON")
    add_run_overrides(demo_parser)

    derive_parser = subparsers.add_parser('derive', help='Cross-validate a scenario against its Lagrangian form')
    derive_parser.add_argument("scenario", type=Path, help="Scenario file")
    derive_parser.add_argument("--json", action="store_true", help="Print the report as JSON")

    args = parser.parse_args(argv)
    if args.command == 'demo' and not args.list and args.name is None:
        parser.error("demo: a demo name is required unless --list is given")
    return args


def _apply_overrides(options: IntegrationOptions, args: argparse.Namespace) -> IntegrationOptions:
    overrides = {'t_final': getattr(args, 'tf', None), 'sample_dt': getattr(args, 'dt', None),
                 'method': getattr(args, 'method', None)}
    return replace(options, **{key: value for key, value in overrides.items() if value is not None})


def _simulate(model: NetworkModel, options: IntegrationOptions) -> Trajectory:
    trajectory = integrate_model(model, initial_state(model), options)
    if not trajectory.termination.completed:
        logger.error(f"Integration of {model.name} stopped early ({trajectory.termination.status}) at "
                     f"t={trajectory.termination.t:g}: {trajectory.termination.reason}")
    return trajectory


def _print_report(report: AuditReport, scenario: str, trajectory: Optional[Trajectory], as_json: bool) -> None:
    if as_json:
        print(report_to_json(report))
        return
    termination = None
    if trajectory is not None:
        termination = f"{trajectory.termination.status} at t={trajectory.termination.t:g}"
    print(create_audit_report(report, scenario, termination, AuditPresenter()))


def _audit_exit(report: AuditReport, trajectory: Optional[Trajectory]) -> int:
    if trajectory is not None and not trajectory.termination.completed:
        return EXIT_RUNTIME
    if not report.passed:
        for check in report.failed():
            logger.error(f"Audit check {check.check} failed: max violation {check.max_violation:.3e} "
                         f"(tolerance {check.tolerance:g}) {check.detail}".rstrip())
        return EXIT_AUDIT_FAILED
    return EXIT_OK


def run_simulate(args: argparse.Namespace, config: Dict) -> int:
    defaults = IntegrationOptions.from_config(config)
    model, options = load_scenario(args.scenario, defaults)
    options = _apply_overrides(options, args)
    trajectory = _simulate(model, options)
    write_trajectory(trajectory, model, args.out if args.out else sys.stdout)
    return EXIT_OK if trajectory.termination.completed else EXIT_RUNTIME


def _run_and_audit(model: NetworkModel, options: IntegrationOptions, config: Dict,
                   out: Optional[Path], as_json: bool) -> int:
    trajectory = _simulate(model, options)
    if out is not None:
        write_trajectory(trajectory, model, out)
    report = run_audits(model, trajectory, options, AuditTolerances.from_config(config),
                        ldav_options=LdavOptions.from_config(config))
    _print_report(report, model.name, trajectory, as_json)
    return _audit_exit(report, trajectory)


def run_audit(args: argparse.Namespace, config: Dict) -> int:
    model, options = load_scenario(args.scenario, IntegrationOptions.from_config(config))
    return _run_and_audit(model, _apply_overrides(options, args), config, None, args.json)


def run_demo(args: argparse.Namespace, config: Dict) -> int:
    if args.list:
        print(describe_demos())
        return EXIT_OK
    model, options = build_demo(args.name)
    options = _apply_overrides(options, args)
    if args.emit_scenario:
        print(serialize_scenario(model, options), end='')
        return EXIT_OK
    out = args.out or Path(config['output']['dir']) / f"{args.name}.csv"
    return _run_and_audit(model, options, config, out, args.json)


def run_derive(args: argparse.Namespace, config: Dict) -> int:
    model, options = load_scenario(args.scenario, IntegrationOptions.from_config(config))
    result = cross_validation_audit(model, options, AuditTolerances.from_config(config),
                                    ldav_options=LdavOptions.from_config(config))
    report = AuditReport(model.name, [result])
    _print_report(report, model.name, None, args.json)
    return _audit_exit(report, None)


COMMANDS = {
    'simulate': run_simulate,
    'audit': run_audit,
    'demo': run_demo,
    'derive': run_derive,
}


def cli_main(argv: Optional[List[str]] = None) -> int:
    """Run one command and return its exit code."""
    try:
        args = parse_arguments(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE

    try:
        config = load_config(args.config)
        if args.log_level:
            config['logging']['level'] = args.log_level.upper()
        setup_logging(config)
    except (OSError, ValueError, AttributeError) as e:
        print(f"Error loading configuration: {e}", file=sys.stderr)
        return EXIT_USAGE

    try:
        return COMMANDS[args.command](args, config)
    except (ScenarioError, ValidationError, ScopeError, FileNotFoundError, KeyError) as e:
        logger.error(f"Error in {args.command}: {e}")
        return EXIT_USAGE
    except (IntegrityError, DomainError, DivergenceError, StepUnderflowError, ConstraintRankError) as e:
        logger.error(f"Runtime error in {args.command}: {e}")
        return EXIT_RUNTIME
    except OSError as e:
        logger.error(f"I/O error in {args.command}: {e}")
        return EXIT_RUNTIME


def main():
    """Main entry point for the thermo-network command."""
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
