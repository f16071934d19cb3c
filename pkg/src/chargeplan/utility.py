"""Utility model for charging plans: benefit, cost, score, fees and constraints.

Distances are haversine between node coordinates. Meters are used for
coverage radii, kilometres for travel and arrival-rate terms, hours for
all times. The service rate of a station is ``capacity / E`` charges per
hour. Waiting times use the M/D/1 Pollaczek-Khinchine mean queueing delay.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import Sequence

import numpy as np

from .netdata import RoadNetwork, haversine
from .plan import ChargingPlan, ChargingStation

__all__ = [
    "ChargerCatalog", "UtilityParams", "Assignment", "FeasibilityReport", "PlanAnalysis",
    "InstabilityError", "EmptyPlanError", "ServiceRateError",
    "capacity", "influential_radius", "coverage", "weakened_demand", "benefit",
    "assign_stations", "travel_time", "queue_params", "charging_time", "waiting_time",
    "cost", "score", "fee", "plan_fee", "check_constraints", "analyze", "harmonic",
    "ChargingPlan", "ChargingStation",
]

TIE_TOLERANCE_M = 1e-9


class EmptyPlanError(ValueError):
    """Station assignment is undefined for a plan without stations."""


class ServiceRateError(ValueError):
    """A station with zero capacity has no service rate."""

    def __init__(self, node_id: int):
        super().__init__(f"station at node {node_id} has zero capacity; service rate undefined")
        self.node_id = node_id


class InstabilityError(ValueError):
    """Raised when a station's utilisation is at or above 1."""

    def __init__(self, node_id: int, rho: float):
        super().__init__(f"station at node {node_id} is unstable (rho={rho:.6g} >= 1)")
        self.node_id = node_id
        self.rho = rho


@dataclass(frozen=True)
class ChargerCatalog:
    power: tuple[float, ...] = (7.0, 22.0, 50.0)      # kW per charger type
    cost: tuple[float, ...] = (300.0, 750.0, 28000.0)  # EUR per charger type

    def __post_init__(self):
        power = tuple(float(p) for p in self.power)
        cost = tuple(float(c) for c in self.cost)
        if not power or len(power) != len(cost):
            raise ValueError("catalog needs matching, non-empty power and cost vectors")
        if min(power) <= 0 or min(cost) <= 0:
            raise ValueError("charger powers and costs must be positive")
        object.__setattr__(self, "power", power)
        object.__setattr__(self, "cost", cost)

    @property
    def m(self) -> int:
        return len(self.power)

    @property
    def max_power(self) -> float:
        return max(self.power)


@dataclass(frozen=True)
class UtilityParams:
    lam: float = 0.5              # benefit/cost trade-off
    alpha: float = 0.4            # travel vs charging+waiting weight
    omega: float = 0.1            # home-charging discount
    r_max: float = 1000.0         # m
    E: float = 85.0               # kWh per full charge
    velocity: float = 30.0        # km/h
    K: int = 8                    # max chargers per station
    B: float = 5_000_000.0        # EUR
    capacity_scale: float = 50.0  # kW; capacity / capacity_scale feeds the radius sigmoid
    dist_floor: float = 0.01      # km; lower clamp on distances in arrival rates
    arrival_scale: float = 1.0    # multiplier turning demand/km into arrivals per hour
    rho_target: float = 0.9       # utilisation a freshly configured station is sized for
    catalog: ChargerCatalog = field(default_factory=ChargerCatalog)

    def __post_init__(self):
        for name in ("lam", "alpha", "omega"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        for name in ("r_max", "E", "velocity", "capacity_scale", "dist_floor", "arrival_scale"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.B >= 0:
            raise ValueError("B must be non-negative")
        if int(self.K) != self.K or self.K < 1:
            raise ValueError("K must be a positive integer")
        object.__setattr__(self, "K", int(self.K))
        if not 0.0 < self.rho_target < 1.0:
            raise ValueError("rho_target must lie in (0, 1)")

    def with_(self, **changes) -> "UtilityParams":
        return replace(self, **changes)

    @classmethod
    def from_mapping(cls, values: dict) -> "UtilityParams":
        """Build from a flat mapping; ``power``/``charger_cost`` set the catalog."""
        values = dict(values)
        aliases = {"lambda": "lam", "omega_home": "omega"}
        for a, b in aliases.items():
            if a in values:
                values[b] = values.pop(a)
        power = values.pop("power", None)
        ccost = values.pop("charger_cost", None)
        if power is not None or ccost is not None:
            base = ChargerCatalog()
            values["catalog"] = ChargerCatalog(tuple(power or base.power), tuple(ccost or base.cost))
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise KeyError(f"unknown parameter(s): {', '.join(sorted(unknown))}")
        return cls(**values)


@dataclass(frozen=True)
class Assignment:
    station_of: dict[int, int]


@dataclass
class FeasibilityReport:
    within_budget: bool
    charger_bounds_ok: bool
    stable: bool
    violations: list[tuple[str, int | None, float]]

    @property
    def feasible(self) -> bool:
        return self.within_budget and self.charger_bounds_ok and self.stable


def harmonic(n: int) -> float:
    return math.fsum(1.0 / i for i in range(1, n + 1))


# ---------------------------------------------------------------------------
# per-station primitives
# ---------------------------------------------------------------------------

def capacity(s: ChargingStation, catalog: ChargerCatalog) -> float:
    if len(s.chargers) != catalog.m:
        raise ValueError(f"station at node {s.node_id} has {len(s.chargers)} charger types, catalog has {catalog.m}")
    return float(sum(t * c for t, c in zip(s.chargers, catalog.power)))


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def radius_for_capacity(cap, params: UtilityParams):
    return params.r_max * _sigmoid(np.asarray(cap, dtype=float) / params.capacity_scale)


def influential_radius(s: ChargingStation, params: UtilityParams) -> float:
    return float(radius_for_capacity(capacity(s, params.catalog), params))


def fee(s: ChargingStation, network: RoadNetwork, catalog: ChargerCatalog) -> float:
    hardware = sum(t * c for t, c in zip(s.chargers, catalog.cost))
    return float(network.node(s.node_id).estate_cost + hardware)


def plan_fee(p: ChargingPlan, network: RoadNetwork, catalog: ChargerCatalog) -> float:
    return math.fsum(fee(s, network, catalog) for s in p.stations)


# ---------------------------------------------------------------------------
# whole-plan analysis
# ---------------------------------------------------------------------------

@dataclass
class PlanAnalysis:
    """Every per-node and per-station quantity of one plan.

    Station arrays are ordered by node id. ``assigned`` holds, for every
    network node, the position of its station in those arrays (-1 for an
    empty plan). ``mu``/``rho``/``W`` are only meaningful where
    ``cap > 0``; ``W`` is ``inf`` where ``rho >= 1``.
    """
    station_nodes: np.ndarray   # node ids
    station_idx: np.ndarray     # network positions
    cap: np.ndarray             # kW
    radius: np.ndarray          # m
    cov: np.ndarray             # per node
    dem_weak: np.ndarray        # per node
    assigned: np.ndarray        # per node, station position
    assigned_dist_km: np.ndarray
    D: np.ndarray
    mu: np.ndarray
    rho: np.ndarray
    W: np.ndarray
    benefit: float
    travel: float

    @property
    def empty(self) -> bool:
        return self.station_idx.size == 0

    def require_service(self):
        bad = np.flatnonzero(self.cap <= 0)
        if bad.size:
            raise ServiceRateError(int(self.station_nodes[bad[0]]))

    def require_stable(self):
        self.require_service()
        bad = np.flatnonzero(self.rho >= 1.0)
        if bad.size:
            k = bad[0]
            raise InstabilityError(int(self.station_nodes[k]), float(self.rho[k]))

    @property
    def stable(self) -> bool:
        return bool(np.all(self.cap > 0) and np.all(self.rho < 1.0))

    @property
    def charging(self) -> float:
        self.require_service()
        return float(self.rho.sum())

    @property
    def waiting(self) -> float:
        self.require_stable()
        return float((self.W * self.D).sum())

    def cost(self, params: UtilityParams) -> float:
        if self.empty:
            return 0.0
        return params.alpha * self.travel + (1 - params.alpha) * (self.charging + self.waiting)

    def score(self, params: UtilityParams) -> float:
        return params.lam * self.benefit - (1 - params.lam) * self.cost(params)


def weakened_demand_array(network: RoadNetwork, params: UtilityParams) -> np.ndarray:
    return network.demand * (1.0 - params.omega * network.home_share)


def nearest_station(dist_sub: np.ndarray) -> np.ndarray:
    """Column of the nearest station per row; near-ties go to the lowest column."""
    best = dist_sub.min(axis=1, keepdims=True)
    return np.argmax(dist_sub <= best + TIE_TOLERANCE_M, axis=1)


def arrival_rates(assigned, assigned_dist_km, dem_weak, n_stations, params: UtilityParams):
    w = dem_weak / np.maximum(assigned_dist_km, params.dist_floor)
    return params.arrival_scale * np.bincount(assigned, weights=w, minlength=n_stations)


def queue_from(D, cap, params: UtilityParams):
    """Service rate, utilisation and P-K mean wait for arrays of stations."""
    with np.errstate(divide="ignore", invalid="ignore"):
        mu = cap / params.E
        rho = np.where(cap > 0, D / mu, np.inf)
        W = np.where(rho < 1.0, rho / (2.0 * mu * (1.0 - rho)), np.inf)
    return mu, rho, W


def analyze(p: ChargingPlan, network: RoadNetwork, params: UtilityParams) -> PlanAnalysis:
    n = len(network)
    cat = params.catalog
    stations = p.stations
    dem_weak = weakened_demand_array(network, params)
    h = 1.0 - params.omega * network.home_share
    if not stations:
        z = np.zeros(0)
        return PlanAnalysis(
            station_nodes=np.zeros(0, dtype=np.int64), station_idx=np.zeros(0, dtype=np.int64),
            cap=z, radius=z, cov=np.zeros(n, dtype=np.int64), dem_weak=dem_weak,
            assigned=np.full(n, -1, dtype=np.int64), assigned_dist_km=np.full(n, np.nan),
            D=z, mu=z, rho=z, W=z, benefit=0.0, travel=0.0)

    for s in stations:
        if len(s.chargers) != cat.m:
            raise ValueError(f"station at node {s.node_id} has {len(s.chargers)} charger types, catalog has {cat.m}")
    idx = np.array([network.index_of(s.node_id) for s in stations], dtype=np.int64)
    t = np.array([s.chargers for s in stations], dtype=float)
    cap = t @ np.asarray(cat.power)
    radius = radius_for_capacity(cap, params)
    dsub = network.distances[:, idx]
    cov = (dsub <= radius[None, :]).sum(axis=1)
    H = np.concatenate(([0.0], np.cumsum(1.0 / np.arange(1, len(stations) + 1))))
    ben = float((H[cov] * h).sum() / n)

    assigned = nearest_station(dsub)
    dist_km = dsub[np.arange(n), assigned] / 1000.0
    travel = float((dist_km / params.velocity * dem_weak).sum())
    D = arrival_rates(assigned, dist_km, dem_weak, len(stations), params)
    mu, rho, W = queue_from(D, cap, params)
    return PlanAnalysis(
        station_nodes=np.array([s.node_id for s in stations], dtype=np.int64), station_idx=idx,
        cap=cap, radius=radius, cov=cov, dem_weak=dem_weak, assigned=assigned,
        assigned_dist_km=dist_km, D=D, mu=mu, rho=rho, W=W, benefit=ben, travel=travel)


# ---------------------------------------------------------------------------
# public per-quantity operations
# ---------------------------------------------------------------------------

def coverage(v: int, p: ChargingPlan, network: RoadNetwork, params: UtilityParams) -> int:
    node = network.node(v)
    n = 0
    for s in p.stations:
        other = network.node(s.node_id)
        if haversine((node.lat, node.lon), (other.lat, other.lon)) <= influential_radius(s, params):
            n += 1
    return n


def weakened_demand(v: int, network: RoadNetwork, params: UtilityParams) -> float:
    node = network.node(v)
    return node.demand * (1.0 - params.omega * node.home_share)


def benefit(p: ChargingPlan, network: RoadNetwork, params: UtilityParams) -> float:
    return analyze(p, network, params).benefit


def assign_stations(p: ChargingPlan, network: RoadNetwork) -> Assignment:
    if not p:
        raise EmptyPlanError("station assignment is undefined for an empty plan")
    idx = np.array([network.index_of(k) for k in p], dtype=np.int64)
    nearest = nearest_station(network.distances[:, idx])
    keys = list(p)
    return Assignment({int(nid): keys[j] for nid, j in zip(network.ids, nearest)})


def travel_time(p: ChargingPlan, network: RoadNetwork, params: UtilityParams) -> float:
    if not p:
        raise EmptyPlanError("travel time is undefined for an empty plan")
    return analyze(p, network, params).travel


def queue_params(s: ChargingStation, p: ChargingPlan, network: RoadNetwork,
                 params: UtilityParams) -> tuple[float, float, float]:
    """Arrival rate D, service rate mu (per hour) and utilisation rho of ``s`` within ``p``."""
    if s.node_id not in p:
        p = p.with_station(s)
    a = analyze(p, network, params)
    k = int(np.searchsorted(a.station_nodes, s.node_id))
    if a.cap[k] <= 0:
        raise ServiceRateError(s.node_id)
    return float(a.D[k]), float(a.mu[k]), float(a.rho[k])


def charging_time(p: ChargingPlan, network: RoadNetwork, params: UtilityParams) -> float:
    return analyze(p, network, params).charging


def waiting_time(p: ChargingPlan, network: RoadNetwork, params: UtilityParams) -> float:
    return analyze(p, network, params).waiting


def cost(p: ChargingPlan, network: RoadNetwork, params: UtilityParams) -> float:
    return analyze(p, network, params).cost(params)


def score(p: ChargingPlan, network: RoadNetwork, params: UtilityParams) -> float:
    return analyze(p, network, params).score(params)


def check_constraints(p: ChargingPlan, network: RoadNetwork, params: UtilityParams,
                      budget_spent: float | None = None) -> FeasibilityReport:
    """Evaluate budget, per-station charger bound and stability.

    ``budget_spent`` defaults to the fee of the whole plan; environments
    that treat existing stations as sunk cost pass their own running total.
    """
    violations: list[tuple[str, int | None, float]] = []
    spent = plan_fee(p, network, params.catalog) if budget_spent is None else float(budget_spent)
    if spent > params.B:
        violations.append(("budget", None, spent))
    for s in p.stations:
        if s.total > params.K:
            violations.append(("charger_bound", s.node_id, float(s.total)))
    if p:
        a = analyze(p, network, params)
        for nid, rho in zip(a.station_nodes.tolist(), a.rho.tolist()):
            if not rho < 1.0:
                violations.append(("stability", nid, rho))
    kinds = {v[0] for v in violations}
    return FeasibilityReport(
        within_budget="budget" not in kinds,
        charger_bounds_ok="charger_bound" not in kinds,
        stable="stability" not in kinds,
        violations=violations,
    )
