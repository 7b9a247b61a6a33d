"""
Готовые эксперименты: одиночный прогон, сравнение политик при разной интенсивности
запросов, сетка деградации сети, обучение PPO агента, сравнение режимов разбиения
и воспроизведение прогона по журналу событий.
"""
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.consensus import TraceReport, verify_trace
from app.dumpers import (ConsensusTraceDump, EventLogDump, MetricsCsvDump, SummaryCsvDump, read_json_lines,
                         write_json, write_table)
from app.errors import InvariantError, ScenarioError, TrainingDivergenceError
from app.metrics import mean_of, mean_or_none, summarize
from app.models.geo import DegradationRule
from app.models.report import SummaryReport
from app.models.scenario import Scenario
from app.run_mngr import RunManager
from app.scenario_file import scenario_hash
from app.sched import POLICIES, EpisodeStat, PPOAgent
from app.simulation import EventLog, RunResult, Simulation


logger = logging.getLogger('harness')

PARTITION_MODES = ('serial', 'full_parallel', 'greedy')

# Timeout for degradation runs, large enough that tasks are not cut off
GRID_TIMEOUT_S = 120.0

RUNNING_MEAN_WINDOW = 10

REFERENCE_COLUMNS = ('avg_comp_ms', 'avg_trans_ms', 'avg_total_ms', 'load_std', 'utilization_pct')

# Full-scale reference values (50 RMUs); annotations only, never thresholds
REFERENCE_WORKLOAD: Dict[float, Dict[str, Tuple[float, ...]]] = {
    10.0: {
        'random': (736.56, 16.35, 752.91, 23.36, 13.35),
        'round_robin': (816.09, 14.49, 830.58, 27.63, 15.92),
        'eps': (866.0, 23.04, 889.04, 28.25, 12.01),
        'cps': (486.86, 14.50, 501.36, 47.03, 16.34),
        'ppo': (495.84, 13.92, 509.76, 20.12, 16.49),
    },
    50.0: {
        'random': (878.7, 24.51, 903.21, 25.21, 65.08),
        'round_robin': (828.62, 20.45, 849.07, 23.57, 61.31),
        'eps': (1179.88, 26.27, 1206.15, 21.21, 59.08),
        'cps': (752.06, 17.38, 769.44, 33.43, 68.36),
        'ppo': (621.61, 16.19, 637.80, 17.66, 82.12),
    },
    200.0: {
        'random': (9098.77, 102.21, 9200.98, 19.11, 71.30),
        'round_robin': (8913.2, 131.84, 9045.04, 18.04, 70.54),
        'eps': (9445.04, 357.67, 9802.71, 18.62, 63.95),
        'cps': (4812.17, 63.07, 4875.24, 23.18, 74.02),
        'ppo': (1662.78, 46.56, 1709.34, 13.28, 99.57),
    },
}

REFERENCE_GRID_BASELINE = 637.80
REFERENCE_GRID_FRACTIONS = (0.2, 0.4, 0.6, 0.8, 1.0)
REFERENCE_GRID: Dict[float, Tuple[Optional[float], ...]] = {
    20.0: (652.74, 669.85, 682.49, 739.96, 810.63),
    100.0: (837.89, 879.63, 915.04, 1249.57, 1529.71),
    500.0: (1137.68, 1358.34, 1992.97, 3076.64, 4850.42),
    math.inf: (3172.81, 7653.48, 12436.15, 26010.42, None),
}

SWEEP_COLUMNS = ('request_rate', 'policy', 'avg_comp_ms', 'avg_trans_ms', 'avg_total_ms', 'load_std',
                 'utilization_pct', 'success_rate', 'n_seeds')
GRID_COLUMNS = ('delay_ms', 'fraction', 'avg_total_ms', 'n_success', 'n_tasks')
CURVE_COLUMNS = ('episode', 'total_reward', 'mean_reward', 'length', 'ended_by', 'running_mean')
PARTITION_COLUMNS = ('mode', 'seed', 'comp_ms', 'trans_ms', 'total_ms', 'n_success', 'arrivals_hash')
PARTITION_TABLE_COLUMNS = ('mode', 'comp_ms', 'trans_ms', 'total_ms')


def delay_label(delay_ms: float) -> str:
    """Текстовая метка задержки, бесконечность обозначается inf."""
    return 'inf' if math.isinf(delay_ms) else repr(float(delay_ms))


def scenario_modes(scenario: Scenario) -> Dict[str, str]:
    """Режимы формул и генераторов, которые попадают в каждый отчет."""
    return {
        'distance_mode': scenario.topology.link.distance_mode,
        'rate_mode': scenario.topology.link.rate_mode,
        'reward_mode': scenario.ppo.reward_mode,
        'partition_mode': scenario.partition.mode,
        'arrival_mode': scenario.workload.arrival_mode,
        'template_mode': scenario.workload.template_mode,
    }


def reference_workload() -> Dict[str, Any]:
    """Эталонные значения сравнения политик в виде JSON аннотации."""
    return {repr(rate): {policy: dict(zip(REFERENCE_COLUMNS, values)) for policy, values in rows.items()}
            for rate, rows in REFERENCE_WORKLOAD.items()}


def reference_grid() -> Dict[str, Any]:
    """Эталонные значения сетки деградации в виде JSON аннотации."""
    return {
        'baseline': REFERENCE_GRID_BASELINE,
        'cells': {delay_label(delay): dict(zip((repr(f) for f in REFERENCE_GRID_FRACTIONS), values))
                  for delay, values in REFERENCE_GRID.items()},
    }


def require_checkpoint(scenario: Scenario, policy: str):
    """
    Проверка, что PPO политика может быть запущена.

    Raises:
        ScenarioError: Нет контрольной точки и обучение выключено
    """

    if policy == 'ppo' and scenario.run.checkpoint is None and not scenario.run.train:
        raise ScenarioError('Policy "ppo" needs run.checkpoint or run.train = true')


def _artifact_prefix(out_dir: str, scenario: Scenario, policy: str, rate: float, seed: int, tag: str) -> str:
    parts = [scenario.scenario_id, tag, policy, f'r{rate:g}', f's{seed}']
    return os.path.join(out_dir, '_'.join(part for part in parts if part))


def run_single(scenario: Scenario, policy: Optional[str] = None, seed: int = 0, *, out_dir: Optional[str] = None,
               horizon_s: Optional[float] = None, request_rate: Optional[float] = None,
               agent: Optional[PPOAgent] = None, replay: Optional[EventLog] = None, tag: str = '',
               name: str = 'harness.run') -> Tuple[SummaryReport, RunResult]:
    """
    Одиночный прогон с записью артефактов.

    При заданном out_dir записываются CSV задач, журнал событий, трасса протокола
    координатора и JSON сводного отчета.

    Args:
        scenario (Scenario): Сценарий
        policy (Optional[str]): Политика, по умолчанию из сценария
        seed (int): Seed прогона
        out_dir (Optional[str]): Каталог артефактов
        horizon_s (Optional[float]): Горизонт вместо указанного в сценарии
        request_rate (Optional[float]): Интенсивность запросов вместо указанной в сценарии
        agent (Optional[PPOAgent]): Готовый агент PPO вместо создаваемого по сценарию
        replay (Optional[EventLog]): Журнал для воспроизведения
        tag (str): Дополнительная метка в именах файлов
        name (str): Имя логгера

    Raises:
        ScenarioError: PPO без контрольной точки при выключенном обучении

    Returns:
        Tuple[SummaryReport, RunResult]: Сводный отчет и итоги прогона
    """

    if replay is not None:
        policy = 'replay'
    elif agent is not None:
        policy = 'ppo'
    else:
        policy = policy or scenario.run.policy
        require_checkpoint(scenario, policy)
    rate = request_rate or scenario.workload.request_rate_per_s

    sinks = []
    event_sink = trace_sink = None
    prefix = None
    if out_dir is not None:
        prefix = _artifact_prefix(out_dir, scenario, policy, rate, seed, tag)
        events = EventLogDump(f'{name}.events', f'{prefix}_events.jsonl')
        trace = ConsensusTraceDump(f'{name}.trace', f'{prefix}_consensus.jsonl')
        sinks = [events, trace]
        event_sink, trace_sink = events, trace

    sim_policy = agent if agent is not None else (None if replay is not None else policy)
    try:
        for sink in sinks:
            sink.open()
        result = Simulation(scenario, sim_policy, seed, name=f'{name}.sim', event_sink=event_sink,
                            trace_sink=trace_sink, replay=replay, horizon_s=horizon_s,
                            request_rate=request_rate).run()
    finally:
        for sink in sinks:
            sink.close()

    report = summarize(result.records, result.workers, scenario_id=scenario.scenario_id,
                       scenario_hash=scenario_hash(scenario), policy=policy, seed=seed, request_rate=rate,
                       modes=scenario_modes(scenario))
    if prefix is not None:
        with MetricsCsvDump(f'{name}.metrics', f'{prefix}_metrics.csv') as metrics:
            for record in result.records:
                metrics.write(record)
        write_json(f'{prefix}_summary.json', report.model_dump())
    logger.info(f'{scenario.scenario_id}/{policy}/rate {rate:g}/seed {seed}: '
                f'avg_total={report.avg_total_ms} success_rate={report.success_rate:.3f}')
    return report, result


@dataclass(frozen=True)
class RunJob:
    """Независимое задание прогона для пула процессов."""

    scenario: Scenario
    policy: str
    seed: int
    request_rate: Optional[float] = None
    horizon_s: Optional[float] = None
    out_dir: Optional[str] = None
    tag: str = ''


def execute_job(job: RunJob) -> SummaryReport:
    """Выполнить задание прогона и вернуть сводный отчет."""
    report, _ = run_single(job.scenario, job.policy, job.seed, out_dir=job.out_dir, horizon_s=job.horizon_s,
                           request_rate=job.request_rate, tag=job.tag,
                           name=f'harness.job.{job.tag or job.policy}.s{job.seed}')
    return report


def run_jobs(jobs: Sequence[RunJob], workers: int = 0) -> List[SummaryReport]:
    """Выполнить задания, результаты в порядке заданий."""
    with RunManager('harness.runs', execute_job, workers) as manager:
        return manager.map([(job,) for job in jobs])


# --- обучение ------------------------------------------------------------------


@dataclass
class TrainingResult:
    """Итоги обучения агента."""

    checkpoint: str
    curves_path: Optional[str]
    episodes: List[EpisodeStat] = field(default_factory=list)
    running_means: List[float] = field(default_factory=list)
    best_running_mean: Optional[float] = None
    updates: int = 0
    diverged: bool = False


def run_training(scenario: Scenario, checkpoint: str, *, curves_path: Optional[str] = None,
                 rates: Optional[Sequence[float]] = None, seed: Optional[int] = None,
                 name: str = 'harness.train') -> TrainingResult:
    """
    Обучение PPO агента на последовательности прогонов.

    Раунд обучения проходит по всем интенсивностям запросов, каждый прогон получает
    свой seed. Контрольная точка сохраняется при улучшении скользящего среднего
    награды эпизода. При расхождении обучение прерывается, остается последняя
    сохраненная контрольная точка.

    Args:
        scenario (Scenario): Сценарий
        checkpoint (str): Путь к контрольной точке
        curves_path (Optional[str]): Путь к CSV кривых обучения
        rates (Optional[Sequence[float]]): Интенсивности запросов, по умолчанию run.sweep_rates
        seed (Optional[int]): Начальный seed прогонов, по умолчанию первый из run.seeds
        name (str): Имя логгера

    Raises:
        TrainingDivergenceError: Обучение разошлось до первой сохраненной контрольной точки

    Returns:
        TrainingResult: Итоги обучения
    """

    train_logger = logging.getLogger(name)
    rates = tuple(rates or scenario.run.sweep_rates)
    base_seed = scenario.run.seeds[0] if seed is None else seed
    directory = os.path.dirname(checkpoint)
    if directory:
        os.makedirs(directory, exist_ok=True)

    rng = np.random.default_rng(np.random.SeedSequence([scenario.ppo.seed, base_seed]))
    agent = PPOAgent(f'{name}.agent', scenario.ppo, rng, scenario.mu_e, scenario.mu_t, training=True)
    result = TrainingResult(checkpoint, curves_path)
    rewards: List[float] = []
    saved = False

    run_index = 0
    for round_no in range(scenario.run.training_rounds):
        for rate in rates:
            seen = len(agent.episodes)
            try:
                Simulation(scenario, agent, base_seed + run_index, name=f'{name}.sim{run_index}',
                           horizon_s=scenario.run.training_horizon_s, request_rate=rate).run()
            except TrainingDivergenceError as err:
                train_logger.error(f'Training diverged in round {round_no} at rate {rate:g}: {err}')
                result.diverged = True
                break
            finally:
                run_index += 1
            for stat in agent.episodes[seen:]:
                rewards.append(stat.mean_reward)
                result.running_means.append(float(np.mean(rewards[-RUNNING_MEAN_WINDOW:])))
            if len(agent.episodes) > seen:
                current = result.running_means[-1]
                if result.best_running_mean is None or current > result.best_running_mean:
                    result.best_running_mean = current
                    agent.save(checkpoint)
                    saved = True
                    train_logger.info(f'Checkpoint saved, running mean reward {current:.6f}')
        if result.diverged:
            break

    if not saved:
        if result.diverged:
            raise TrainingDivergenceError('Training diverged before any checkpoint was saved')
        agent.save(checkpoint)
    result.episodes = agent.episodes[:len(result.running_means)]
    result.updates = agent.updates
    if curves_path is not None:
        write_table(curves_path, CURVE_COLUMNS,
                    ((s.episode, s.total_reward, s.mean_reward, s.length, s.ended_by, mean)
                     for s, mean in zip(result.episodes, result.running_means)), name=f'{name}.curves')
    train_logger.info(f'Training finished: episodes={len(result.episodes)} updates={result.updates} '
                      f'diverged={result.diverged}')
    return result


# --- сравнение политик ------------------------------------------------------------


@dataclass
class SweepResult:
    """Итоги сравнения политик."""

    reports: List[SummaryReport]
    table: List[Tuple[Any, ...]]


def _evaluation_scenario(scenario: Scenario, checkpoint: Optional[str]) -> Scenario:
    run = scenario.run.model_copy(update={'checkpoint': checkpoint, 'train': False})
    return scenario.model_copy(update={'run': run})


def _prepare_checkpoints(scenario: Scenario, rates: Sequence[float], out_dir: str) -> Dict[float, str]:
    if scenario.run.checkpoint is not None:
        return {rate: scenario.run.checkpoint for rate in rates}
    if not scenario.run.train:
        raise ScenarioError('Policy "ppo" needs run.checkpoint or run.train = true')
    if scenario.run.per_rate_training:
        checkpoints = {}
        for rate in rates:
            path = os.path.join(out_dir, f'{scenario.scenario_id}_ppo_r{rate:g}.ckpt.json')
            run_training(scenario, path, rates=(rate,),
                         curves_path=os.path.join(out_dir, f'{scenario.scenario_id}_curves_r{rate:g}.csv'))
            checkpoints[rate] = path
        return checkpoints
    path = os.path.join(out_dir, f'{scenario.scenario_id}_ppo_mixed.ckpt.json')
    run_training(scenario, path, rates=rates,
                 curves_path=os.path.join(out_dir, f'{scenario.scenario_id}_curves_mixed.csv'))
    return {rate: path for rate in rates}


def run_workload_sweep(scenario: Scenario, out_dir: str, *, rates: Optional[Sequence[float]] = None,
                       policies: Sequence[str] = POLICIES, seeds: Optional[Sequence[int]] = None,
                       workers: int = 0, keep_runs: bool = False) -> SweepResult:
    """
    Сравнение политик планирования при разных интенсивностях запросов.

    Один сводный отчет на каждую тройку (интенсивность, политика, seed), затем
    сводная таблица средних по seed. Эталонные значения прикладываются к JSON
    отчету как аннотации.

    Raises:
        ScenarioError: PPO без контрольной точки при выключенном обучении

    Returns:
        SweepResult: Отчеты и сводная таблица
    """

    rates = tuple(rates or scenario.run.sweep_rates)
    seeds = tuple(seeds or scenario.run.seeds)
    checkpoints = _prepare_checkpoints(scenario, rates, out_dir) if 'ppo' in policies else {}

    jobs = []
    for rate in rates:
        for policy in policies:
            run_scenario = _evaluation_scenario(scenario, checkpoints.get(rate)) if policy == 'ppo' else scenario
            for seed in seeds:
                jobs.append(RunJob(run_scenario, policy, seed, request_rate=rate,
                                   out_dir=out_dir if keep_runs else None))
    reports = run_jobs(jobs, workers)

    table = []
    for rate in rates:
        for policy in policies:
            group = [r for r in reports if r.request_rate == rate and r.policy == policy]
            table.append((rate, policy, *(mean_of(group, column) for column in REFERENCE_COLUMNS),
                          mean_of(group, 'success_rate'), len(group)))

    prefix = os.path.join(out_dir, f'{scenario.scenario_id}_sweep')
    with SummaryCsvDump('harness.sweep', f'{prefix}_runs.csv') as dump:
        for report in reports:
            dump.write(report)
    write_table(f'{prefix}_table.csv', SWEEP_COLUMNS, table, name='harness.sweep.table')
    write_json(f'{prefix}.json', {
        'scenario_id': scenario.scenario_id,
        'scenario_hash': scenario_hash(scenario),
        'modes': scenario_modes(scenario),
        'table': [dict(zip(SWEEP_COLUMNS, row)) for row in table],
        'reference': reference_workload(),
    })
    return SweepResult(reports, table)


# --- деградация сети ----------------------------------------------------------------


@dataclass
class GridResult:
    """Итоги сетки деградации: базовое значение и ячейки (задержка, доля)."""

    baseline: Optional[float]
    cells: Dict[Tuple[float, float], Optional[float]]
    reports: List[SummaryReport]


def _degraded(scenario: Scenario, fraction: float, delay_ms: float) -> Scenario:
    rule = DegradationRule(affected_fraction=fraction, added_delay_ms=delay_ms, seed=scenario.degradation_grid.seed)
    workload = scenario.workload.model_copy(update={'timeout_s': max(scenario.workload.timeout_s, GRID_TIMEOUT_S)})
    return scenario.model_copy(update={'degradation': rule, 'workload': workload})


def run_degradation_grid(scenario: Scenario, out_dir: str, *, policy: Optional[str] = None,
                         fractions: Optional[Sequence[float]] = None, delays: Optional[Sequence[float]] = None,
                         seeds: Optional[Sequence[int]] = None, workers: int = 0,
                         keep_runs: bool = False) -> GridResult:
    """
    Среднее время ответа при деградации доли каналов mesh сети.

    Базовая ячейка без задержки идет первой. Ячейка без единой успешной задачи
    помечается как недоступная.

    Raises:
        ScenarioError: PPO без контрольной точки при выключенном обучении

    Returns:
        GridResult: Базовое значение, ячейки сетки и отчеты прогонов
    """

    policy = policy or scenario.run.policy
    require_checkpoint(scenario, policy)
    if policy == 'ppo':
        rate = scenario.workload.request_rate_per_s
        checkpoints = _prepare_checkpoints(scenario, (rate,), out_dir)
        scenario = _evaluation_scenario(scenario, checkpoints[rate])
    fractions = tuple(fractions or scenario.degradation_grid.fractions)
    delays = tuple(delays or scenario.degradation_grid.delays_ms)
    seeds = tuple(seeds or scenario.run.seeds)
    grid_logger = logging.getLogger('harness.grid')

    cells_order = [(0.0, 0.0)] + [(delay, fraction) for delay in delays for fraction in fractions]
    jobs = []
    for delay, fraction in cells_order:
        tag = f'd{delay_label(delay)}_f{fraction:g}'
        for seed in seeds:
            jobs.append(RunJob(_degraded(scenario, fraction, delay), policy, seed,
                               out_dir=out_dir if keep_runs else None, tag=tag))
    reports = run_jobs(jobs, workers)

    cells: Dict[Tuple[float, float], Optional[float]] = {}
    rows = []
    for index, cell in enumerate(cells_order):
        group = reports[index * len(seeds):(index + 1) * len(seeds)]
        value = mean_of(group, 'avg_total_ms')
        if value is None:
            grid_logger.warning(f'Cell delay={delay_label(cell[0])} fraction={cell[1]:g} is unavailable')
        cells[cell] = value
        rows.append((delay_label(cell[0]), cell[1], value, sum(r.n_success for r in group),
                     sum(r.n_tasks for r in group)))
    baseline = cells.pop((0.0, 0.0))

    prefix = os.path.join(out_dir, f'{scenario.scenario_id}_grid')
    with SummaryCsvDump('harness.grid', f'{prefix}_runs.csv') as dump:
        for report in reports:
            dump.write(report)
    write_table(f'{prefix}.csv', GRID_COLUMNS, rows, name='harness.grid.table')
    write_json(f'{prefix}.json', {
        'scenario_id': scenario.scenario_id,
        'scenario_hash': scenario_hash(scenario),
        'policy': policy,
        'modes': scenario_modes(scenario),
        'baseline': baseline,
        'cells': {delay_label(delay): {repr(float(fraction)): cells[(delay, fraction)] for fraction in fractions}
                  for delay in delays},
        'reference': reference_grid(),
    })
    return GridResult(baseline, cells, reports)


# --- сравнение режимов разбиения ----------------------------------------------------


@dataclass(frozen=True)
class PartitionJob:
    """Прогон одного режима разбиения."""

    scenario: Scenario
    mode: str
    seed: int
    request_rate: float
    out_dir: Optional[str] = None


def execute_partition_job(job: PartitionJob) -> Tuple[Any, ...]:
    """Строка таблицы сравнения: время вычислений по критическому пути и время передачи."""
    partition = job.scenario.partition.model_copy(update={'mode': job.mode})
    scenario = job.scenario.model_copy(update={'partition': partition})
    _, result = run_single(scenario, 'round_robin', job.seed, out_dir=job.out_dir, request_rate=job.request_rate,
                           tag=job.mode, name=f'harness.partition.{job.mode}.s{job.seed}')
    successful = [r for r in result.records if r.success]
    comp = mean_or_none([r.t_span_ms for r in successful])
    trans = mean_or_none([r.t_trans_ms for r in successful])
    total = mean_or_none([r.t_total_ms for r in successful])
    return job.mode, job.seed, comp, trans, total, len(successful), result.arrivals_hash


@dataclass
class PartitionResult:
    """Итоги сравнения режимов разбиения."""

    rows: List[Tuple[Any, ...]]
    table: Dict[str, Tuple[Optional[float], Optional[float], Optional[float]]]


def run_partition_comparison(scenario: Scenario, out_dir: str, *, modes: Sequence[str] = PARTITION_MODES,
                             seeds: Optional[Sequence[int]] = None, request_rate: Optional[float] = None,
                             workers: int = 0, keep_runs: bool = False) -> PartitionResult:
    """
    Сравнение режимов разбиения при одной и той же последовательности поступлений.

    Планировщик round robin, интенсивность по умолчанию наименьшая из run.sweep_rates.

    Raises:
        InvariantError: Последовательности поступлений режимов различаются при одном seed

    Returns:
        PartitionResult: Строки по (режим, seed) и средние по режимам
    """

    seeds = tuple(seeds or scenario.run.seeds)
    rate = request_rate or min(scenario.run.sweep_rates)
    jobs = [(PartitionJob(scenario, mode, seed, rate, out_dir if keep_runs else None),)
            for seed in seeds for mode in modes]
    with RunManager('harness.partition', execute_partition_job, workers) as manager:
        rows = manager.map(jobs)

    for seed in seeds:
        hashes = {row[6] for row in rows if row[1] == seed}
        if len(hashes) != 1:
            raise InvariantError(f'Arrival traces differ across partition modes for seed {seed}')

    table = {}
    for mode in modes:
        group = [row for row in rows if row[0] == mode]
        table[mode] = tuple(mean_or_none([row[i] for row in group if row[i] is not None]) for i in (2, 3, 4))

    prefix = os.path.join(out_dir, f'{scenario.scenario_id}_partition')
    write_table(f'{prefix}_runs.csv', PARTITION_COLUMNS, rows, name='harness.partition.runs')
    write_table(f'{prefix}.csv', PARTITION_TABLE_COLUMNS, [(mode, *table[mode]) for mode in modes],
                name='harness.partition.table')
    return PartitionResult(rows, table)


# --- журналы ------------------------------------------------------------------------


def run_replay(scenario: Scenario, log_path: str, seed: int, out_dir: str, *, horizon_s: Optional[float] = None,
               request_rate: Optional[float] = None) -> Tuple[SummaryReport, RunResult]:
    """
    Воспроизвести прогон по журналу событий без планировщика.

    Сценарий, seed, горизонт и интенсивность должны совпадать с исходным прогоном.
    """

    log = EventLog.from_records(read_json_lines(log_path))
    logger.info(f'Replaying {len(log.arrivals)} arrivals and {len(log.decisions)} decisions from {log_path}')
    return run_single(scenario, seed=seed, out_dir=out_dir, horizon_s=horizon_s, request_rate=request_rate,
                      replay=log, name='harness.replay')


def verify_trace_file(path: str) -> TraceReport:
    """Проверить трассу протокола координатора из файла."""
    return verify_trace(read_json_lines(path))
