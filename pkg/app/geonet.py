"""
Географическая топология сети и модели задержек каналов связи.

Все функции модуля чистые, объект Topology неизменяем: деградация сети и отказ узлов
порождают производные копии.
"""
import math
import logging
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from app.errors import BackhaulUnavailableError, InvalidInputError, UnreachableError
from app.models.geo import DegradationRule, GeoPosition, LinkParams, NodeKind, NodeSpec


EARTH_RADIUS_M = 6_371_000.0
NANJING = GeoPosition(lat=32.0603, lon=118.7969)


def _hav(theta: float) -> float:
    return math.sin(theta / 2.0) ** 2


def haversine_distance(a: GeoPosition, b: GeoPosition, mode: str = 'haversine') -> float:
    """
    Расстояние по дуге большого круга между двумя точками.

    Args:
        a (GeoPosition): Первая точка
        b (GeoPosition): Вторая точка
        mode (str, optional): 'haversine' (стандартная формула) или 'literal'
            (выражение R·hav(Δφ/2) + cosφa·cosφb·hav(Δλ/2) без приведения к расстоянию)

    Raises:
        InvalidInputError: Неизвестный режим вычисления

    Returns:
        float: Расстояние в метрах (в режиме 'literal' единицы не определены)
    """

    phi_a, phi_b = math.radians(a.lat), math.radians(b.lat)
    d_phi = phi_b - phi_a
    d_lambda = math.radians(b.lon - a.lon)
    if mode == 'haversine':
        value = _hav(d_phi) + math.cos(phi_a) * math.cos(phi_b) * _hav(d_lambda)
        value = min(1.0, max(0.0, value))
        return 2.0 * EARTH_RADIUS_M * math.asin(math.sqrt(value))
    if mode == 'literal':
        return EARTH_RADIUS_M * _hav(d_phi / 2.0) + math.cos(phi_a) * math.cos(phi_b) * _hav(d_lambda / 2.0)
    raise InvalidInputError(f'Unknown distance mode: {mode}')


def shannon_rate(link: LinkParams, p_a: float, p_b: float, dist: float) -> float:
    """
    Скорость передачи D2D канала по формуле Шеннона.

    Args:
        link (LinkParams): Параметры канала
        p_a (float): Мощность передатчика первого узла, Вт
        p_b (float): Мощность передатчика второго узла, Вт
        dist (float): Расстояние между узлами, м

    Raises:
        InvalidInputError: Отрицательное расстояние или мощность

    Returns:
        float: Скорость в бит/с
    """

    if dist < 0 or p_a < 0 or p_b < 0:
        raise InvalidInputError(f'Negative link parameters: {dist = } {p_a = } {p_b = }')
    power = min(p_a, p_b)
    if link.rate_mode == 'literal':
        snr = power * link.path_loss_exponent * dist / link.noise_w
    else:
        snr = power * max(dist, link.min_distance_m) ** (-link.path_loss_exponent) / link.noise_w
    return link.bandwidth_bps * math.log2(1.0 + snr)


def mesh_transfer_time(payload_bits: float, hops: Sequence[float]) -> float:
    """
    Время передачи через цепочку ретрансляторов (store-and-forward).

    Args:
        payload_bits (float): Объем данных, бит
        hops (Sequence[float]): Скорости каналов на каждом переходе, бит/с

    Raises:
        UnreachableError: Пустой маршрут или канал с нулевой скоростью

    Returns:
        float: Время в секундах
    """

    if not hops:
        raise UnreachableError('Empty mesh route')
    total = 0.0
    for rate in hops:
        if rate <= 0:
            raise UnreachableError(f'Mesh hop with non-positive rate {rate}')
        total += payload_bits / rate
    return total


def backhaul_rtt(dist: float, link: LinkParams) -> float:
    """
    Время передачи по проводному каналу, определяется временем оборота сигнала.

    Raises:
        BackhaulUnavailableError: Проводной канал отключен
        InvalidInputError: Отрицательное расстояние

    Returns:
        float: Время в секундах
    """

    if not link.backhaul_available:
        raise BackhaulUnavailableError('Backhaul is not available, use the mesh path')
    if dist < 0:
        raise InvalidInputError(f'Negative distance {dist}')
    return 2.0 * dist / (link.propagation_speed_mps * link.attenuation_factor)


class Topology:
    """
    Неизменяемый снимок сети: узлы, D2D граф покрытия, деградация и отказавшие узлы.

    D2D канал между узлами существует, если расстояние не превышает покрытия хотя бы
    одного из них. Маршрут в mesh выбирается по минимуму переходов, при равенстве
    выигрывает путь через узлы с меньшими идентификаторами.
    """

    def __init__(self, nodes: Iterable[NodeSpec], link: LinkParams,
                 degraded: FrozenSet[Tuple[str, str]] = frozenset(),
                 added_delay_ms: float = 0.0, down: FrozenSet[str] = frozenset()):
        self.nodes: Dict[str, NodeSpec] = {node.node_id: node for node in sorted(nodes, key=lambda n: n.node_id)}
        self.link = link
        self.degraded = degraded
        self.added_delay_ms = added_delay_ms
        self.down = down
        self.node_ids: List[str] = list(self.nodes)
        self.cloud_id: Optional[str] = next((n.node_id for n in self.nodes.values() if n.is_cloud), None)

        self._distances: Dict[Tuple[str, str], float] = {}
        for i, a in enumerate(self.node_ids):
            for b in self.node_ids[i + 1:]:
                dist = haversine_distance(self.nodes[a].position, self.nodes[b].position, link.distance_mode)
                self._distances[(a, b)] = dist
                self._distances[(b, a)] = dist

        self.d2d_links: List[Tuple[str, str]] = []
        for i, a in enumerate(self.node_ids):
            for b in self.node_ids[i + 1:]:
                reach = max(self.nodes[a].coverage_m, self.nodes[b].coverage_m)
                if self._distances[(a, b)] <= reach:
                    self.d2d_links.append((a, b))

        self._mesh = nx.Graph()
        self._mesh.add_nodes_from(n for n in self.node_ids if n not in down)
        for a, b in self.d2d_links:
            if a in down or b in down:
                continue
            if (a, b) in degraded and math.isinf(added_delay_ms):
                continue
            self._mesh.add_edge(a, b)
        self._routes: Dict[str, Dict[str, List[str]]] = {}
        self._transfer_cache: Dict[Tuple[float, str, str], float] = {}
        self._intact: Optional[Topology] = None

    def __repr__(self) -> str:
        return (f'{self.__class__.__name__}(nodes={self.node_ids!r}, d2d_links={len(self.d2d_links)}, '
                f'degraded={len(self.degraded)}, down={sorted(self.down)!r})')

    def node(self, node_id: str) -> NodeSpec:
        """
        Получить описание узла.

        Raises:
            InvalidInputError: Узел не найден
        """

        try:
            return self.nodes[node_id]
        except KeyError as err:
            raise InvalidInputError(f'Unknown node "{node_id}"') from err

    def distance(self, a: str, b: str) -> float:
        """Расстояние между узлами в метрах."""
        if a == b:
            return 0.0
        self.node(a)
        self.node(b)
        return self._distances[(a, b)]

    def mesh_route(self, src: str, dst: str) -> Optional[List[str]]:
        """
        Кратчайший по числу переходов маршрут в D2D графе.

        Returns:
            Optional[List[str]]: Список узлов маршрута или None если маршрута нет
        """

        if src not in self._mesh or dst not in self._mesh:
            return None
        if src not in self._routes:
            self._routes[src] = nx.single_source_shortest_path(self._mesh, src)
        return self._routes[src].get(dst)

    def _hop_time(self, payload_bits: float, a: str, b: str) -> float:
        rate = shannon_rate(self.link, self.nodes[a].transmit_power_w,
                            self.nodes[b].transmit_power_w, self._distances[(a, b)])
        seconds = mesh_transfer_time(payload_bits, [rate])
        if tuple(sorted((a, b))) in self.degraded:
            seconds += self.added_delay_ms / 1000.0
        return seconds

    def mesh_time(self, payload_bits: float, src: str, dst: str) -> Optional[float]:
        """Время передачи по mesh в секундах или None если маршрута нет."""

        route = self.mesh_route(src, dst)
        if route is None:
            return None
        try:
            return sum(self._hop_time(payload_bits, a, b) for a, b in zip(route, route[1:]))
        except UnreachableError:
            return None

    def backhaul_time(self, src: str, dst: str) -> Optional[float]:
        """Время передачи по проводному каналу RMU-облако в секундах или None."""

        if self.cloud_id not in (src, dst) or src in self.down or dst in self.down:
            return None
        try:
            return backhaul_rtt(self.distance(src, dst), self.link)
        except BackhaulUnavailableError:
            return None

    def transfer_time(self, payload_bits: float, src: str, dst: str) -> float:
        """
        Время доставки контекста между узлами: минимум из mesh и проводного канала.

        Raises:
            UnreachableError: Ни один путь недоступен

        Returns:
            float: Время в секундах
        """

        if src == dst:
            return 0.0
        key = (payload_bits, src, dst)
        cached = self._transfer_cache.get(key)
        if cached is not None:
            return cached
        candidates = [t for t in (self.mesh_time(payload_bits, src, dst), self.backhaul_time(src, dst))
                      if t is not None]
        if not candidates:
            raise UnreachableError(f'No route from "{src}" to "{dst}"')
        value = min(candidates)
        self._transfer_cache[key] = value
        return value

    def connection_type(self, src: str, dst: str) -> int:
        """
        Тип соединения γ: 0 для проводного канала и локального узла, иначе число D2D переходов.
        """

        if src == dst:
            return 0
        payload = 64 * 1024 * 8
        mesh = self.mesh_time(payload, src, dst)
        wired = self.backhaul_time(src, dst)
        if wired is not None and (mesh is None or wired <= mesh):
            return 0
        route = self.mesh_route(src, dst)
        return len(route) - 1 if route else 0

    def link_rate(self, src: str, dst: str) -> float:
        """Скорость узкого места маршрута в бит/с (0 если маршрута нет)."""

        if src == dst or self.backhaul_time(src, dst) is not None:
            return self.link.bandwidth_bps * math.log2(1.0 + self.max_snr())
        route = self.mesh_route(src, dst)
        if not route:
            return 0.0
        return min(shannon_rate(self.link, self.nodes[a].transmit_power_w, self.nodes[b].transmit_power_w,
                                self._distances[(a, b)]) for a, b in zip(route, route[1:]))

    def loss_rate(self, src: str, dst: str) -> float:
        """Доля каналов маршрута с потерей пакетов."""

        if src == dst or self.backhaul_time(src, dst) is not None:
            return 0.0
        if not math.isinf(self.added_delay_ms) or not self.degraded:
            return 0.0 if self.mesh_route(src, dst) else 1.0
        if self._intact is None:
            self._intact = Topology(self.nodes.values(), self.link, down=self.down)
        route = self._intact.mesh_route(src, dst)
        if not route:
            return 1.0
        hops = list(zip(route, route[1:]))
        lost = sum(1 for a, b in hops if tuple(sorted((a, b))) in self.degraded)
        return lost / len(hops)

    def max_snr(self) -> float:
        """Максимальное отношение сигнал/шум в сети (на минимальной дистанции)."""
        power = max((n.transmit_power_w for n in self.nodes.values()), default=0.0)
        if self.link.rate_mode == 'literal':
            longest = max(self._distances.values(), default=self.link.min_distance_m)
            return power * self.link.path_loss_exponent * longest / self.link.noise_w
        return power * self.link.min_distance_m ** (-self.link.path_loss_exponent) / self.link.noise_w

    def with_down_nodes(self, down: FrozenSet[str]) -> 'Topology':
        """Производная топология без отказавших узлов."""
        return Topology(self.nodes.values(), self.link, self.degraded, self.added_delay_ms, frozenset(down))


def transfer_time(payload_bits: float, src: NodeSpec, dst: NodeSpec, topo: Topology) -> float:
    """
    Время передачи контекста подзадачи между двумя узлами топологии.

    Raises:
        UnreachableError: Маршрут отсутствует (нарушение C3)

    Returns:
        float: Время в секундах
    """

    return topo.transfer_time(payload_bits, src.node_id, dst.node_id)


def apply_degradation(topo: Topology, rule: DegradationRule) -> Topology:
    """
    Выбрать ⌈fraction·|D2D|⌉ каналов по seed правила и назначить им дополнительную задержку.

    Выбранные множества вложены друг в друга при росте доли для одного seed.

    Args:
        topo (Topology): Исходная топология
        rule (DegradationRule): Правило деградации

    Returns:
        Topology: Производная топология
    """

    count = math.ceil(rule.affected_fraction * len(topo.d2d_links) - 1e-12)
    if count <= 0 or rule.added_delay_ms == 0:
        return Topology(topo.nodes.values(), topo.link, down=topo.down)
    order = np.random.default_rng(rule.seed).permutation(len(topo.d2d_links))
    affected = frozenset(topo.d2d_links[int(i)] for i in order[:count])
    logging.getLogger('geonet').debug(f'Degraded {len(affected)} of {len(topo.d2d_links)} links '
                                      f'by {rule.added_delay_ms} ms')
    return Topology(topo.nodes.values(), topo.link, affected, rule.added_delay_ms, topo.down)


def generate_nodes(rmu_count: int, seed: int, spacing_m: float = 900.0) -> List[NodeSpec]:
    """
    Сгенерировать облако и цепочку RMU вдоль железнодорожной линии.

    Диапазоны параметров: емкость RMU 1-10 GFLOPS, очередь из {4, 8, 16},
    покрытие 150-2000 м; облако 200 GFLOPS.

    Args:
        rmu_count (int): Количество RMU
        seed (int): Seed генератора
        spacing_m (float, optional): Шаг между соседними RMU

    Returns:
        List[NodeSpec]: Узлы топологии
    """

    rng = np.random.default_rng(seed)
    meters_per_deg_lat = math.pi * EARTH_RADIUS_M / 180.0
    meters_per_deg_lon = meters_per_deg_lat * math.cos(math.radians(NANJING.lat))
    nodes = [NodeSpec(node_id='cloud', kind=NodeKind.CLOUD, position=NANJING, capacity_gflops=200.0,
                      n_cores=20, concurrency_limit=64, queue_capacity=1024, memory_mb=65536.0,
                      coverage_m=2000.0, transmit_power_w=0.1)]
    for index in range(rmu_count):
        east = spacing_m * (index + 1)
        north = float(rng.uniform(-0.1, 0.1)) * spacing_m
        position = GeoPosition(lat=round(NANJING.lat + north / meters_per_deg_lat, 6),
                               lon=round(NANJING.lon + east / meters_per_deg_lon, 6))
        cores = int(rng.choice([2, 4]))
        nodes.append(NodeSpec(
            node_id=f'rmu-{index + 1:02d}', kind=NodeKind.RMU, position=position,
            capacity_gflops=float(rng.integers(2, 21)) / 2.0, n_cores=cores, concurrency_limit=cores,
            queue_capacity=int(rng.choice([4, 8, 16])), memory_mb=float(rng.choice([1024, 2048, 4096])),
            coverage_m=float(round(rng.uniform(150.0, 2000.0), 1)), transmit_power_w=0.1))
    # neighbouring RMUs must hear each other, otherwise RMU-to-RMU contexts are unroutable
    for index in range(1, len(nodes) - 1):
        left, right = nodes[index], nodes[index + 1]
        gap = haversine_distance(left.position, right.position)
        if gap > max(left.coverage_m, right.coverage_m):
            nodes[index] = left.model_copy(update={'coverage_m': float(math.ceil(gap))})
    return nodes
