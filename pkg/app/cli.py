"""Командная строка симулятора."""
import argparse
import json
import logging
import os
import sys
from typing import Iterable, List, Optional, Sequence

from pydantic import ValidationError

from app import harness
from app.errors import SimulationError
from app.models.report import SummaryReport
from app.scenario_file import load_scenario


LOG_FORMAT = '%(asctime)s.%(msecs)03d %(name)s %(levelname)s %(message)s'
LOG_DATE_FORMAT = '%H:%M:%S'

logger = logging.getLogger('cli')


def default_out_dir() -> str:
    """Каталог артефактов по умолчанию из RAILEDGE_OUT_DIR."""
    return os.environ.get('RAILEDGE_OUT_DIR', 'out')


def _floats(text: str) -> List[float]:
    return [float(part) for part in text.split(',') if part.strip()]


def _ints(text: str) -> List[int]:
    return [int(part) for part in text.split(',') if part.strip()]


def build_parser() -> argparse.ArgumentParser:
    """Разбор аргументов командной строки."""

    parser = argparse.ArgumentParser(prog='railedge', description='Cloud-edge railway monitoring simulator')
    parser.add_argument('--log-level', default='INFO', choices=('DEBUG', 'INFO', 'WARNING', 'ERROR'))
    commands = parser.add_subparsers(dest='command', required=True)

    def scenario_command(command: str, help_text: str) -> argparse.ArgumentParser:
        sub = commands.add_parser(command, help=help_text)
        sub.add_argument('--scenario', required=True, help='scenario INI file')
        sub.add_argument('--out', default=None, help='output directory (default: $RAILEDGE_OUT_DIR or ./out)')
        return sub

    def batch_options(sub: argparse.ArgumentParser):
        sub.add_argument('--seeds', type=_ints, default=None, help='comma separated seeds')
        sub.add_argument('--workers', type=int, default=0, help='worker processes, 0 runs inline')
        sub.add_argument('--keep-runs', action='store_true', help='write per-run artifacts')
        sub.add_argument('--db', default=None, help='store reports in this database URL')

    run = scenario_command('run', 'single run')
    run.add_argument('--policy', default=None, choices=('ppo', 'random', 'round_robin', 'eps', 'cps'))
    run.add_argument('--seed', type=int, default=0)
    run.add_argument('--horizon', type=float, default=None, help='horizon in seconds')
    run.add_argument('--rate', type=float, default=None, help='requests per second')
    run.add_argument('--db', default=None, help='store the report in this database URL')

    train = commands.add_parser('train', help='train the PPO agent')
    train.add_argument('--scenario', required=True)
    train.add_argument('--out', required=True, help='checkpoint path')
    train.add_argument('--curves', default=None, help='learning curves CSV path')
    train.add_argument('--rates', type=_floats, default=None)
    train.add_argument('--seed', type=int, default=None)

    sweep = scenario_command('sweep', 'compare policies over request rates')
    sweep.add_argument('--rates', type=_floats, default=None)
    sweep.add_argument('--policies', default=None, help='comma separated policies')
    batch_options(sweep)

    degrade = scenario_command('degrade', 'network degradation grid')
    degrade.add_argument('--policy', default=None)
    degrade.add_argument('--fractions', type=_floats, default=None)
    degrade.add_argument('--delays', type=_floats, default=None, help='delays in ms, inf allowed')
    batch_options(degrade)

    partition = scenario_command('partition-compare', 'compare partitioning modes')
    partition.add_argument('--rate', type=float, default=None)
    batch_options(partition)

    verify = commands.add_parser('verify-trace', help='check a consensus trace')
    verify.add_argument('log')

    replay = scenario_command('replay', 'rebuild a run from its event log')
    replay.add_argument('log')
    replay.add_argument('--seed', type=int, default=0)
    replay.add_argument('--horizon', type=float, default=None)
    replay.add_argument('--rate', type=float, default=None)
    return parser


def _store(reports: Iterable[SummaryReport], db_url: Optional[str]):
    if db_url is None:
        return
    from app.db.reports import ReportRepository  # pylint: disable=import-outside-toplevel
    repository = ReportRepository(db_url)
    for report in reports:
        repository.add_report(report)


def _print(data):
    print(json.dumps(data, sort_keys=True, indent=2, default=str))


def dispatch(args: argparse.Namespace) -> int:
    """Выполнить команду, вернуть код завершения."""

    if args.command == 'verify-trace':
        report = harness.verify_trace_file(args.log)
        _print({'ok': report.ok, 'coordinators_by_term': report.coordinators_by_term,
                'violations': report.violations})
        return 0 if report.ok else 1

    scenario = load_scenario(args.scenario)
    if args.command == 'train':
        result = harness.run_training(scenario, args.out, curves_path=args.curves, rates=args.rates, seed=args.seed)
        _print({'checkpoint': result.checkpoint, 'episodes': len(result.episodes), 'updates': result.updates,
                 'best_running_mean': result.best_running_mean, 'diverged': result.diverged})
        return 0

    out_dir = args.out or default_out_dir()
    if args.command == 'run':
        report, _ = harness.run_single(scenario, args.policy, args.seed, out_dir=out_dir, horizon_s=args.horizon,
                                       request_rate=args.rate)
        _store([report], args.db)
        _print(report.model_dump())
    elif args.command == 'replay':
        report, _ = harness.run_replay(scenario, args.log, args.seed, out_dir, horizon_s=args.horizon,
                                       request_rate=args.rate)
        _print(report.model_dump())
    elif args.command == 'sweep':
        policies = tuple(args.policies.split(',')) if args.policies else harness.POLICIES
        result = harness.run_workload_sweep(scenario, out_dir, rates=args.rates, policies=policies,
                                            seeds=args.seeds, workers=args.workers, keep_runs=args.keep_runs)
        _store(result.reports, args.db)
        _print([dict(zip(harness.SWEEP_COLUMNS, row)) for row in result.table])
    elif args.command == 'degrade':
        result = harness.run_degradation_grid(scenario, out_dir, policy=args.policy, fractions=args.fractions,
                                              delays=args.delays, seeds=args.seeds, workers=args.workers,
                                              keep_runs=args.keep_runs)
        _store(result.reports, args.db)
        _print({'baseline': result.baseline,
                'cells': [[harness.delay_label(d), f, v] for (d, f), v in result.cells.items()]})
    elif args.command == 'partition-compare':
        result = harness.run_partition_comparison(scenario, out_dir, seeds=args.seeds, request_rate=args.rate,
                                                  workers=args.workers, keep_runs=args.keep_runs)
        _print({mode: dict(zip(('comp_ms', 'trans_ms', 'total_ms'), values))
                for mode, values in result.table.items()})
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Точка входа командной строки.

    Ошибки симулятора, валидации и ввода-вывода печатаются в stderr в виде JSON
    {"error": <класс>, "detail": <сообщение>}, код завершения 1.
    """

    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, format=LOG_FORMAT, datefmt=LOG_DATE_FORMAT)
    try:
        return dispatch(args)
    except (SimulationError, ValidationError, OSError, ValueError) as err:
        logger.debug('Command failed', exc_info=True)
        print(json.dumps({'error': err.__class__.__name__, 'detail': str(err)}), file=sys.stderr)
        return 1
