"""Charger configuration machinery shared by the environment and the baselines."""
from __future__ import annotations

import bisect
from dataclasses import dataclass
from typing import Iterator, NamedTuple

from .netdata import RoadNetwork
from .plan import ChargingPlan, ChargingStation
from .utility import ChargerCatalog, UtilityParams, analyze


class ConfigEntry(NamedTuple):
    capacity: float
    chargers: tuple[int, ...]
    cost: float


class ConfigChoice(NamedTuple):
    chargers: tuple[int, ...]
    cost: float
    capacity: float
    saturated: bool


def _rank(e: ConfigEntry):
    return (e.cost, sum(e.chargers), e.chargers)


@dataclass(frozen=True)
class ConfigTable:
    """Cheapest charger vector per achievable capacity, sorted by capacity."""
    entries: tuple[ConfigEntry, ...]

    def __post_init__(self):
        # best_from[i]: rank-minimal entry among entries[i:]
        best = []
        cur = None
        for e in reversed(self.entries):
            if cur is None or _rank(e) < _rank(cur):
                cur = e
            best.append(cur)
        object.__setattr__(self, "_best_from", tuple(reversed(best)))
        object.__setattr__(self, "_caps", tuple(e.capacity for e in self.entries))

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def max_capacity(self) -> float:
        return self.entries[-1].capacity


def _vectors(m: int, budget: int) -> Iterator[tuple[int, ...]]:
    """All length-m non-negative integer vectors with sum <= budget."""
    if m == 1:
        for t in range(budget + 1):
            yield (t,)
        return
    for t in range(budget + 1):
        for rest in _vectors(m - 1, budget - t):
            yield (t,) + rest


def table_from_vectors(catalog: ChargerCatalog, vectors) -> ConfigTable:
    """Deduplicate candidate vectors by capacity, keeping the cheapest per capacity.

    Cost ties go to fewer chargers, then the lexicographically smaller
    vector, so the result does not depend on the order of ``vectors``.
    """
    best: dict[float, ConfigEntry] = {}
    for t in vectors:
        t = tuple(int(x) for x in t)
        if sum(t) == 0:
            continue
        cap = float(sum(n * p for n, p in zip(t, catalog.power)))
        price = float(sum(n * c for n, c in zip(t, catalog.cost)))
        key = round(cap, 9)
        e = ConfigEntry(cap, t, price)
        if key not in best or _rank(e) < _rank(best[key]):
            best[key] = e
    return ConfigTable(tuple(sorted(best.values(), key=lambda e: (e.capacity, _rank(e)))))


def build_lookup(catalog: ChargerCatalog, K: int) -> ConfigTable:
    """Exhaustive table over every vector with 1 <= sum(t) <= K."""
    if K < 1:
        raise ValueError("K must be >= 1")
    return table_from_vectors(catalog, _vectors(catalog.m, K))


def cheapest_config(table: ConfigTable, required: float) -> ConfigChoice:
    """Cheapest entry whose capacity covers ``required`` kW.

    Demands beyond the largest capacity return the largest entry with
    ``saturated`` set rather than failing.
    """
    if not table.entries:
        raise ValueError("empty configuration table")
    if required < 0:
        raise ValueError("required capacity must be non-negative")
    i = bisect.bisect_left(table._caps, required - 1e-9)
    if i >= len(table.entries):
        e = table.entries[-1]
        return ConfigChoice(e.chargers, e.cost, e.capacity, True)
    e = table._best_from[i]
    return ConfigChoice(e.chargers, e.cost, e.capacity, False)


def required_capacity(candidate: int, p: ChargingPlan, network: RoadNetwork,
                      params: UtilityParams, rho_target: float | None = None) -> float:
    """kW a new station at ``candidate`` needs to run at ``rho_target`` utilisation.

    An empty station is inserted hypothetically, nodes are reassigned, and
    the arrival rate it would attract is converted to capacity.
    """
    rho_target = params.rho_target if rho_target is None else rho_target
    if not 0.0 < rho_target < 1.0:
        raise ValueError("rho_target must lie in (0, 1)")
    if candidate in p:
        raise ValueError(f"node {candidate} already hosts a station")
    hypo = p.with_station(ChargingStation(candidate, (0,) * params.catalog.m))
    a = analyze(hypo, network, params)
    k = int((a.station_nodes == candidate).argmax())
    D = float(a.D[k])
    if D <= 0:
        return 0.0
    return D * params.E / rho_target


def configure_station(candidate: int, p: ChargingPlan, network: RoadNetwork,
                      params: UtilityParams, table: ConfigTable) -> tuple[ChargingStation, ConfigChoice]:
    choice = cheapest_config(table, required_capacity(candidate, p, network, params))
    return ChargingStation(candidate, choice.chargers), choice


def best_value_charger(catalog: ChargerCatalog, remaining: float) -> int | None:
    """Charger type with the highest kW per EUR that fits in ``remaining``; None if none fits."""
    best = None
    for i, (pw, c) in enumerate(zip(catalog.power, catalog.cost)):
        if c <= remaining and (best is None or pw / c > catalog.power[best] / catalog.cost[best]):
            best = i
    return best
