"""Greedy comparison algorithms.

Each baseline extends an initial plan under a budget for new construction
(initial stations are sunk cost) and never emits a plan that breaks the
budget, the per-station charger bound or stability.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

from .netdata import RoadNetwork
from .plan import ChargingPlan, ChargingStation
from .planner import ConfigTable, best_value_charger, build_lookup, configure_station
from .utility import UtilityParams, analyze, plan_fee

ALGORITHMS = ("existing", "best_benefit", "highest_demand", "bounding_optimising_plus", "score_greedy")


def new_spend(initial: ChargingPlan, final: ChargingPlan, network: RoadNetwork, params: UtilityParams) -> float:
    """Fees of construction on top of ``initial`` (baselines only ever add)."""
    return plan_fee(final, network, params.catalog) - plan_fee(initial, network, params.catalog)


def existing_charging(initial: ChargingPlan) -> ChargingPlan:
    return initial


def _free_nodes(plan: ChargingPlan, network: RoadNetwork, excluded=()) -> list[int]:
    return [int(n) for n in network.ids if int(n) not in plan and int(n) not in excluded]


def _topup(plan: ChargingPlan, node: int, remaining: float, network: RoadNetwork,
           params: UtilityParams) -> tuple[ChargingPlan, float]:
    """Add best-value chargers at ``node`` while it runs above rho_target."""
    spent = 0.0
    while True:
        s = plan[node]
        if s.total >= params.K:
            break
        a = analyze(plan, network, params)
        k = int(np.searchsorted(a.station_nodes, node))
        if a.rho[k] <= params.rho_target:
            break
        ctype = best_value_charger(params.catalog, remaining - spent)
        if ctype is None:
            break
        plan = plan.with_station(s.add(ctype))
        spent += params.catalog.cost[ctype]
    return plan, spent


def _placement_loop(initial: ChargingPlan, budget: float, network: RoadNetwork,
                    params: UtilityParams, table: ConfigTable | None, mode: str) -> ChargingPlan:
    table = table or build_lookup(params.catalog, params.K)
    plan = initial
    spent = 0.0
    excluded: set[int] = set()
    while True:
        free = _free_nodes(plan, network, excluded)
        if not free:
            return plan
        base = analyze(plan, network, params)

        if mode == "demand":
            order = sorted(free, key=lambda v: (-base.dem_weak[network.index_of(v)], v))
            node = order[0]
            station, choice = configure_station(node, plan, network, params, table)
            candidate = plan.with_station(station)
        else:
            best = None
            for v in free:
                station, choice = configure_station(v, plan, network, params, table)
                cand = plan.with_station(station)
                a = analyze(cand, network, params)
                if mode == "benefit" and not a.stable:
                    continue
                gain = a.benefit - base.benefit
                if best is None or gain > best[0]:
                    best = (gain, v, cand, choice)
            if best is None:
                return plan
            _, node, candidate, choice = best

        price = float(network.estate_cost[network.index_of(node)]) + choice.cost
        if spent + price > budget:
            return plan
        extra = 0.0
        if mode == "plus":
            candidate, extra = _topup(candidate, node, budget - spent - price, network, params)
        if not analyze(candidate, network, params).stable:
            excluded.add(node)
            continue
        plan = candidate
        spent += price + extra


def best_benefit(initial: ChargingPlan, budget: float, network: RoadNetwork, params: UtilityParams,
                 table: ConfigTable | None = None) -> ChargingPlan:
    """Repeatedly place the station with the largest benefit gain until the next one is unaffordable."""
    return _placement_loop(initial, budget, network, params, table, "benefit")


def highest_demand(initial: ChargingPlan, budget: float, network: RoadNetwork, params: UtilityParams,
                   table: ConfigTable | None = None) -> ChargingPlan:
    """Repeatedly place a station at the free node with the highest weakened demand."""
    return _placement_loop(initial, budget, network, params, table, "demand")


def bounding_optimising_plus(initial: ChargingPlan, budget: float, network: RoadNetwork,
                             params: UtilityParams, table: ConfigTable | None = None) -> ChargingPlan:
    """Best-benefit placement followed by charger top-ups down to rho_target.

    A candidate that stays unstable after topping up is skipped for the
    rest of the run.
    """
    return _placement_loop(initial, budget, network, params, table, "plus")


def score_greedy(initial: ChargingPlan, budget: float, network: RoadNetwork,
                 params: UtilityParams) -> ChargingPlan:
    """Single-move hill climbing on the score.

    Moves are: open a station with one charger of the cheapest type at any
    free node, or add one charger of any type to any station below K. The
    best affordable, stable move is applied while it raises the score.
    Candidates are scanned in node-id order (creates first), so ties go to
    the first one found.
    """
    cat = params.catalog
    cheapest = int(np.argmin(cat.cost))
    plan = initial
    spent = 0.0
    current = analyze(plan, network, params).score(params)
    while True:
        best = None
        moves: list[tuple[ChargingPlan, float]] = []
        for v in _free_nodes(plan, network):
            t = [0] * cat.m
            t[cheapest] = 1
            price = float(network.estate_cost[network.index_of(v)]) + cat.cost[cheapest]
            moves.append((plan.with_station(ChargingStation(v, tuple(t))), price))
        for s in plan.stations:
            if s.total < params.K:
                for i in range(cat.m):
                    moves.append((plan.with_station(s.add(i)), cat.cost[i]))
        for cand, price in moves:
            if spent + price > budget:
                continue
            a = analyze(cand, network, params)
            if not a.stable:
                continue
            delta = a.score(params) - current
            if best is None or delta > best[0]:
                best = (delta, cand, price)
        if best is None or best[0] <= 0:
            return plan
        delta, plan, price = best
        spent += price
        current = analyze(plan, network, params).score(params)


def run_baseline(name: str, initial: ChargingPlan, budget: float, network: RoadNetwork,
                 params: UtilityParams, table: ConfigTable | None = None) -> ChargingPlan:
    fns: dict[str, Callable] = {
        "best_benefit": best_benefit,
        "highest_demand": highest_demand,
        "bounding_optimising_plus": bounding_optimising_plus,
    }
    if name == "existing":
        return existing_charging(initial)
    if name == "score_greedy":
        return score_greedy(initial, budget, network, params)
    if name not in fns:
        raise KeyError(f"unknown baseline {name!r}; choose from {', '.join(ALGORITHMS)}")
    return fns[name](initial, budget, network, params, table)
