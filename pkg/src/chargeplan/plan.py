"""Charging stations and charging plans.

A plan is an immutable mapping from node id to station. Every mutating
operation returns a new plan, so environments and greedy loops can keep
the previous plan around for reward and rollback bookkeeping.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping


@dataclass(frozen=True)
class ChargingStation:
    node_id: int
    chargers: tuple[int, ...]

    def __post_init__(self):
        chargers = tuple(int(t) for t in self.chargers)
        if any(t < 0 for t in chargers):
            raise ValueError(f"negative charger count at node {self.node_id}: {chargers}")
        object.__setattr__(self, "chargers", chargers)
        object.__setattr__(self, "node_id", int(self.node_id))

    @property
    def total(self) -> int:
        return sum(self.chargers)

    def add(self, charger_type: int, count: int = 1) -> "ChargingStation":
        t = list(self.chargers)
        t[charger_type] += count
        return ChargingStation(self.node_id, tuple(t))


class ChargingPlan(Mapping[int, ChargingStation]):
    """At most one station per node, keyed and iterated by node id."""

    __slots__ = ("_stations",)

    def __init__(self, stations: Iterable[ChargingStation] = ()):
        by_node: dict[int, ChargingStation] = {}
        for s in stations:
            if s.node_id in by_node:
                raise ValueError(f"two stations at node {s.node_id}")
            by_node[s.node_id] = s
        self._stations = {k: by_node[k] for k in sorted(by_node)}

    def __getitem__(self, node_id: int) -> ChargingStation:
        return self._stations[node_id]

    def __iter__(self) -> Iterator[int]:
        return iter(self._stations)

    def __len__(self) -> int:
        return len(self._stations)

    def __eq__(self, other) -> bool:
        if isinstance(other, ChargingPlan):
            return self._stations == other._stations
        return NotImplemented

    def __hash__(self) -> int:
        return hash(tuple(self._stations.values()))

    def __repr__(self) -> str:
        inner = ", ".join(f"{s.node_id}:{s.chargers}" for s in self._stations.values())
        return f"ChargingPlan({{{inner}}})"

    @property
    def stations(self) -> tuple[ChargingStation, ...]:
        return tuple(self._stations.values())

    @property
    def charger_count(self) -> int:
        return sum(s.total for s in self._stations.values())

    def with_station(self, station: ChargingStation) -> "ChargingPlan":
        """Insert or replace the station at ``station.node_id``."""
        out = dict(self._stations)
        out[station.node_id] = station
        return ChargingPlan(out.values())

    def without(self, node_id: int) -> "ChargingPlan":
        out = dict(self._stations)
        del out[node_id]
        return ChargingPlan(out.values())
