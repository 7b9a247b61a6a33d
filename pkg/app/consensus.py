"""
Протокол отказоустойчивости координатора: heartbeat, кандидатура после случайной
паузы, голосование большинством и объявление нового координатора.

ConsensusNode не имеет своих таймеров: обработчики возвращают Effects с сообщениями
и запросами таймеров, которые исполняет цикл симуляции.
"""
import json
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, Iterable, List, Optional, Set, Tuple, Union

import numpy as np

from app.models.scenario import ConsensusConfig


class Role(str, Enum):
    """Роль узла."""

    COORDINATOR = 'coordinator'
    WORKER = 'worker'
    CANDIDATE = 'candidate'


class MsgKind(str, Enum):
    """Тип сообщения протокола."""

    HEARTBEAT = 'heartbeat'
    VOTE_REQUEST = 'vote_request'
    VOTE_GRANT = 'vote_grant'
    COORDINATOR_ANNOUNCE = 'coordinator_announce'


@dataclass(frozen=True)
class ConsensusMsg:
    """Сообщение протокола, всегда несет текущий term отправителя."""

    kind: MsgKind
    term: int
    sender: str
    payload: Dict = field(default_factory=dict)

    def to_json(self) -> Dict:
        """Описание сообщения для журнала."""
        return {'kind': self.kind.value, 'term': self.term, 'sender': self.sender, 'payload': self.payload}

    @classmethod
    def from_json(cls, data: Dict) -> 'ConsensusMsg':
        """Восстановить сообщение из журнала."""
        return cls(MsgKind(data['kind']), data['term'], data['sender'], data.get('payload', {}))


@dataclass
class RoleState:
    """Состояние узла в протоколе."""

    role: Role = Role.WORKER
    term: int = 0
    voted_for: Optional[str] = None
    last_heartbeat_ms: float = 0.0
    election_timeout_ms: float = 0.0
    votes_received: Set[str] = field(default_factory=set)
    coordinator_id: Optional[str] = None


@dataclass
class Effects:
    """Действия, запрошенные обработчиком: сообщения (адресат или None для рассылки) и таймеры."""

    messages: List[Tuple[Optional[str], ConsensusMsg]] = field(default_factory=list)
    timers: List[Tuple[float, str]] = field(default_factory=list)
    promoted: bool = False
    became_worker: bool = False


TraceSink = Optional[Callable[[Dict], None]]


class ConsensusNode:
    """
    Участник выбора координатора.

    Args:
        node_id (str): Идентификатор узла
        cluster (Iterable[str]): Все участники кластера
        cfg (ConsensusConfig): Временные параметры протокола
        rng (np.random.Generator): Генератор случайных пауз
        trace (TraceSink): Приемник записей трассы
    """

    def __init__(self, node_id: str, cluster: Iterable[str], cfg: ConsensusConfig,
                 rng: np.random.Generator, trace: TraceSink = None):
        self.node_id = node_id
        self.cluster = sorted(cluster)
        self.cfg = cfg
        self.state = RoleState()
        self.alive = True
        self._rng = rng
        self._trace = trace
        self._check_epoch = 0
        self._logger = logging.getLogger(f'consensus.{node_id}')

    def __repr__(self) -> str:
        return (f'{self.__class__.__name__}(node_id={self.node_id!r}, role={self.state.role.value}, '
                f'term={self.state.term})')

    @property
    def cluster_size(self) -> int:
        """Размер кластера."""
        return len(self.cluster)

    def _record(self, now: float, event: str, **detail):
        if self._trace is not None:
            self._trace({'time': now, 'node': self.node_id, 'term': self.state.term,
                         'role': self.state.role.value, 'event': event, **detail})

    def _set_role(self, now: float, role: Role):
        if role is not self.state.role:
            self.state.role = role
            self._record(now, 'role_change')

    def _set_term(self, now: float, term: int):
        if term < self.state.term:
            raise ValueError(f'Term of {self.node_id} cannot decrease: {term} < {self.state.term}')
        if term > self.state.term:
            self.state.term = term
            self.state.voted_for = None
            self.state.votes_received = set()

    def _draw_wait(self) -> float:
        return float(self._rng.uniform(self.cfg.election_wait_lo_ms, self.cfg.election_wait_hi_ms))

    def start_as_coordinator(self, now: float, term: int = 1) -> Effects:
        """Начальное назначение координатором (облако по умолчанию)."""
        self._set_term(now, term)
        self.state.coordinator_id = self.node_id
        self._set_role(now, Role.COORDINATOR)
        return Effects(timers=[(0.0, f'heartbeat:{self.state.term}')], promoted=True)

    def start_as_worker(self, now: float, coordinator_id: Optional[str], term: int = 1) -> Effects:
        """Начальное состояние работника под известным координатором."""
        self._set_term(now, term)
        self.state.coordinator_id = coordinator_id
        self.state.last_heartbeat_ms = now
        self._set_role(now, Role.WORKER)
        self._record(now, 'start')
        return Effects(timers=[self._watch()])

    def _watch(self) -> Tuple[float, str]:
        # a new watch chain makes every older pending check stale
        self._check_epoch += 1
        return self.cfg.heartbeat_timeout_ms, f'heartbeat_check:{self._check_epoch}'

    def on_heartbeat_check(self, now: float, epoch: int) -> Effects:
        """Проверка таймаута heartbeat."""
        if self.state.role is not Role.WORKER or epoch != self._check_epoch:
            return Effects()
        deadline = self.state.last_heartbeat_ms + self.cfg.heartbeat_timeout_ms
        if now < deadline:
            return Effects(timers=[(deadline - now, f'heartbeat_check:{epoch}')])
        return self.on_heartbeat_timeout(now)

    def on_timer(self, now: float, name: str) -> Effects:
        """
        Срабатывание таймера, запрошенного через Effects.

        Raises:
            ValueError: Неизвестное имя таймера
        """

        kind, _, arg = name.partition(':')
        if kind == 'heartbeat':
            return self.on_heartbeat_due(now, int(arg))
        if kind == 'heartbeat_check':
            return self.on_heartbeat_check(now, int(arg))
        if kind == 'candidacy':
            return self.on_candidacy(now, int(arg))
        if kind == 'retry':
            return self.on_election_retry(now, int(arg))
        raise ValueError(f'Unknown consensus timer {name!r}')

    def on_heartbeat_timeout(self, now: float) -> Effects:
        """
        Таймаут heartbeat: переход в кандидаты, новый term, голос за себя,
        рассылка запросов голосов после случайной паузы.
        """

        self._set_term(now, self.state.term + 1)
        self.state.voted_for = self.node_id
        self.state.votes_received = {self.node_id}
        self.state.coordinator_id = None
        self.state.election_timeout_ms = self._draw_wait()
        self._set_role(now, Role.CANDIDATE)
        self._logger.debug(f'Heartbeat timeout at {now:.3f}, candidate for term {self.state.term}')
        effects = Effects(timers=[(self.state.election_timeout_ms, f'candidacy:{self.state.term}')])
        if self._has_majority():
            return self._promote(now, effects)
        return effects

    def on_candidacy(self, now: float, term: int) -> Effects:
        """Окончание случайной паузы: рассылка запросов голосов и запуск таймера повтора."""
        if self.state.role is not Role.CANDIDATE or term != self.state.term:
            return Effects()
        return self._request_votes(now)

    def on_election_retry(self, now: float, term: int) -> Effects:
        """Выборы не завершились: новый term и немедленная повторная рассылка."""
        if self.state.role is not Role.CANDIDATE or term != self.state.term:
            return Effects()
        self._set_term(now, self.state.term + 1)
        self.state.voted_for = self.node_id
        self.state.votes_received = {self.node_id}
        self._record(now, 'retry')
        return self._request_votes(now)

    def _request_votes(self, now: float) -> Effects:
        msg = ConsensusMsg(MsgKind.VOTE_REQUEST, self.state.term, self.node_id)
        self._record(now, 'send', msg=msg.kind.value)
        return Effects(messages=[(None, msg)], timers=[(self._draw_wait(), f'retry:{self.state.term}')])

    def on_vote_request(self, now: float, msg: ConsensusMsg) -> Optional[ConsensusMsg]:
        """
        Обработка запроса голоса.

        Голос отдается при большем term или при равном term, если голос еще не отдан
        или отдан этому же кандидату. Запрос со старым term игнорируется.

        Returns:
            Optional[ConsensusMsg]: VoteGrant или None
        """

        if msg.term < self.state.term:
            return None
        if msg.term > self.state.term:
            self._set_term(now, msg.term)
            if self.state.role is not Role.WORKER:
                self._set_role(now, Role.WORKER)
            self.state.coordinator_id = None
        if self.state.voted_for not in (None, msg.sender):
            return None
        self.state.voted_for = msg.sender
        self.state.last_heartbeat_ms = now
        self._record(now, 'vote', candidate=msg.sender)
        return ConsensusMsg(MsgKind.VOTE_GRANT, self.state.term, self.node_id)

    def on_vote_grant(self, now: float, msg: ConsensusMsg) -> Effects:
        """Учет полученного голоса."""
        if msg.term > self.state.term:
            self._set_term(now, msg.term)
            self._set_role(now, Role.WORKER)
            return Effects(became_worker=True)
        if self.state.role is not Role.CANDIDATE or msg.term != self.state.term:
            return Effects()
        self.state.votes_received.add(msg.sender)
        if self._has_majority():
            return self._promote(now, Effects())
        return Effects()

    def _has_majority(self) -> bool:
        return on_majority(self.state, self.cluster_size)

    def _promote(self, now: float, effects: Effects) -> Effects:
        self.state.coordinator_id = self.node_id
        self._set_role(now, Role.COORDINATOR)
        self._logger.info(f'Promoted to coordinator for term {self.state.term} at {now:.3f} ms')
        announce = ConsensusMsg(MsgKind.COORDINATOR_ANNOUNCE, self.state.term, self.node_id)
        effects.messages.append((None, announce))
        effects.timers.append((self.cfg.heartbeat_interval_ms, f'heartbeat:{self.state.term}'))
        effects.promoted = True
        return effects

    def on_coordinator_msg(self, now: float, msg: ConsensusMsg) -> Effects:
        """
        Обработка heartbeat или объявления координатора.

        Сообщение с term не меньше своего делает узел работником нового координатора.
        """

        if msg.term < self.state.term:
            return Effects()
        was_worker = self.state.role is Role.WORKER
        self._set_term(now, msg.term)
        if self.state.role is Role.COORDINATOR and msg.sender != self.node_id:
            self._logger.info(f'Stepping down in favour of {msg.sender} (term {msg.term})')
        self.state.coordinator_id = msg.sender
        self.state.last_heartbeat_ms = now
        self._set_role(now, Role.WORKER)
        return Effects(became_worker=not was_worker)

    def on_heartbeat_due(self, now: float, term: int) -> Effects:
        """Рассылка heartbeat координатором."""
        if self.state.role is not Role.COORDINATOR or term != self.state.term:
            return Effects()
        msg = ConsensusMsg(MsgKind.HEARTBEAT, self.state.term, self.node_id)
        return Effects(messages=[(None, msg)], timers=[(self.cfg.heartbeat_interval_ms, f'heartbeat:{term}')])

    def on_message(self, now: float, msg: ConsensusMsg) -> Effects:
        """
        Диспетчеризация входящего сообщения.

        Переход в работники из другой роли запускает новую цепочку проверок heartbeat.
        """

        before = self.state.role
        if msg.kind is MsgKind.VOTE_REQUEST:
            grant = self.on_vote_request(now, msg)
            effects = Effects(messages=[(msg.sender, grant)] if grant is not None else [])
        elif msg.kind is MsgKind.VOTE_GRANT:
            effects = self.on_vote_grant(now, msg)
        else:
            effects = self.on_coordinator_msg(now, msg)
        if before is not Role.WORKER and self.state.role is Role.WORKER:
            effects.became_worker = True
            effects.timers.append(self._watch())
        return effects

    def crash(self, now: float):
        """Отказ узла, term сохраняется."""
        self.alive = False
        self._record(now, 'crash')

    def recover(self, now: float) -> Effects:
        """Восстановление узла в роли работника."""
        self.alive = True
        self.state.coordinator_id = None
        self.state.last_heartbeat_ms = now
        self.state.votes_received = set()
        self._set_role(now, Role.WORKER)
        self._record(now, 'recover')
        return Effects(timers=[self._watch()])


def on_majority(candidate: RoleState, cluster_size: int) -> bool:
    """Кандидат получил строгое большинство голосов, включая свой."""
    return candidate.role is not Role.WORKER and len(candidate.votes_received) > cluster_size / 2.0


@dataclass
class TraceReport:
    """Результат проверки трассы протокола."""

    ok: bool
    coordinators_by_term: Dict[int, List[str]]
    violations: List[str]


def verify_trace(records: Iterable[Union[Dict, str]]) -> TraceReport:
    """
    Проверка трассы: не более одного координатора в каждом term и монотонность
    term на каждом узле.

    Args:
        records (Iterable[Union[Dict, str]]): Записи трассы (словари или JSON строки)

    Returns:
        TraceReport: Итог проверки
    """

    coordinators: Dict[int, Set[str]] = defaultdict(set)
    last_term: Dict[str, int] = {}
    violations = []
    for index, record in enumerate(records):
        if isinstance(record, str):
            if not record.strip():
                continue
            record = json.loads(record)
        node, term = record['node'], int(record['term'])
        if term < last_term.get(node, term):
            violations.append(f'record {index}: term of {node} decreased {last_term[node]} -> {term}')
        last_term[node] = max(term, last_term.get(node, term))
        if record.get('role') == Role.COORDINATOR.value:
            coordinators[term].add(node)
    for term, nodes in sorted(coordinators.items()):
        if len(nodes) > 1:
            violations.append(f'term {term}: several coordinators {sorted(nodes)}')
    return TraceReport(not violations, {t: sorted(n) for t, n in sorted(coordinators.items())}, violations)
