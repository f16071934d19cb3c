"""Episodic charging-station placement environment with five discrete actions."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Any

import numpy as np

from .netdata import RoadNetwork
from .plan import ChargingPlan, ChargingStation
from .planner import ConfigTable, best_value_charger, build_lookup, configure_station
from .utility import PlanAnalysis, UtilityParams, analyze, check_constraints

OBS_FEATURES = ("lat", "lon", "demand", "home_share", "estate_cost", "installed_capacity")


class Action(IntEnum):
    CREATE_BY_BENEFIT = 0
    CREATE_BY_DEMAND = 1
    INCREASE_BY_BENEFIT = 2
    INCREASE_BY_DEMAND = 3
    RELOCATE = 4


N_ACTIONS = len(Action)


class EpisodeDoneError(RuntimeError):
    pass


class InfeasiblePlanError(ValueError):
    pass


@dataclass
class EpisodeState:
    plan: ChargingPlan
    spent: float
    step_index: int
    i_max: int
    prev_score: float
    done: bool = False


@dataclass
class _Move:
    """Outcome of resolving an action against the current plan."""
    plan: ChargingPlan | None = None
    fee: float = 0.0
    over_budget: bool = False
    reason: str = ""
    node: int | None = None
    extra: dict[str, Any] = field(default_factory=dict)


def _minmax(x: np.ndarray) -> np.ndarray:
    lo, hi = float(x.min()), float(x.max())
    if hi - lo <= 0:
        return np.zeros_like(x, dtype=float)
    return (x - lo) / (hi - lo)


def _argmin_first(values: np.ndarray) -> int:
    return int(np.argmin(values))


class PlacementEnv:
    """Builds a charging plan one action at a time; reward is the score change.

    Existing stations in the initial plan are sunk cost: only fees of new
    chargers and stations count against the budget ``params.B``.
    """

    def __init__(self, network: RoadNetwork, params: UtilityParams,
                 initial: ChargingPlan | None = None, table: ConfigTable | None = None,
                 i_max: int | None = None):
        self.network = network
        self.params = params
        self.initial = initial if initial is not None else ChargingPlan()
        self.table = table if table is not None else build_lookup(params.catalog, params.K)
        self.i_max = math.ceil(len(network) / 2) if i_max is None else int(i_max)
        self._static = np.stack([
            _minmax(network.lat), _minmax(network.lon), network.demand,
            network.home_share, _minmax(network.estate_cost),
        ], axis=1)
        self._cap_norm = params.K * params.catalog.max_power
        self.state: EpisodeState | None = None
        self._analysis: PlanAnalysis | None = None

    @property
    def obs_dim(self) -> int:
        return len(OBS_FEATURES) * len(self.network) + 1

    @property
    def plan(self) -> ChargingPlan:
        return self.state.plan

    # ------------------------------------------------------------------
    def reset(self, initial: ChargingPlan | None = None) -> np.ndarray:
        if initial is not None:
            self.initial = initial
        p0 = self.initial
        report = check_constraints(p0, self.network, self.params, budget_spent=0.0)
        if not report.feasible:
            raise InfeasiblePlanError(f"initial plan violates constraints: {report.violations}")
        self._analysis = analyze(p0, self.network, self.params)
        self.state = EpisodeState(plan=p0, spent=0.0, step_index=0, i_max=self.i_max,
                                  prev_score=self._analysis.score(self.params))
        return self.observation()

    def observation(self) -> np.ndarray:
        n = len(self.network)
        installed = np.zeros(n)
        a = self._analysis
        if not a.empty:
            installed[a.station_idx] = a.cap / self._cap_norm
        block = np.concatenate([self._static, installed[:, None]], axis=1)
        B = self.params.B
        budget_left = max(0.0, (B - self.state.spent) / B) if B > 0 else 0.0
        return np.concatenate([block.ravel(), [budget_left]])

    def step(self, action: int):
        st = self.state
        if st is None:
            raise EpisodeDoneError("call reset() before step()")
        if st.done:
            raise EpisodeDoneError("episode is done; call reset()")
        action = Action(int(action))
        st.step_index += 1
        move = self.resolve(action)
        reward = 0.0
        applied = False
        info: dict[str, Any] = {"action": action.name, "node": move.node, "fee": 0.0}
        if move.over_budget:
            st.done = True
            info["reason"] = "budget_exceeded"
        elif move.plan is None:
            info["reason"] = move.reason or "noop"
        else:
            a = analyze(move.plan, self.network, self.params)
            if not a.stable:
                info["reason"] = "unstable"
            else:
                new_score = a.score(self.params)
                reward = new_score - st.prev_score
                st.plan, st.prev_score = move.plan, new_score
                st.spent += move.fee
                self._analysis = a
                applied = True
                info["fee"] = move.fee
                info["reason"] = move.reason or "applied"
        info.update(move.extra)
        info["applied"] = applied
        if not st.done and self._saturated():
            st.done = True
            info["reason_done"] = "all_full"
        if not st.done and st.step_index >= st.i_max:
            st.done = True
            info["reason_done"] = "i_max"
        if move.over_budget:
            info["reason_done"] = "budget_exceeded"
        info["score"] = st.prev_score
        return self.observation(), reward, st.done, info

    # ------------------------------------------------------------------
    def _saturated(self) -> bool:
        p = self.state.plan
        return len(p) == len(self.network) and all(s.total >= self.params.K for s in p.stations)

    @property
    def remaining(self) -> float:
        return self.params.B - self.state.spent

    def resolve(self, action: Action) -> _Move:
        """Translate an action into a candidate plan without applying it."""
        if action == Action.CREATE_BY_BENEFIT:
            return self.create_station("benefit")
        if action == Action.CREATE_BY_DEMAND:
            return self.create_station("demand")
        if action == Action.INCREASE_BY_BENEFIT:
            return self.increase_station("benefit")
        if action == Action.INCREASE_BY_DEMAND:
            return self.increase_station("demand")
        return self.relocate()

    def create_station(self, strategy: str) -> _Move:
        p = self.state.plan
        a = self._analysis
        free = np.ones(len(self.network), dtype=bool)
        if not a.empty:
            free[a.station_idx] = False
        if not free.any():
            return self.increase_station(strategy)
        if strategy == "benefit":
            key = np.where(free, a.cov, np.iinfo(np.int64).max)
            i = _argmin_first(key)
        elif strategy == "demand":
            key = np.where(free, a.dem_weak, -np.inf)
            i = int(np.argmax(key))
        else:
            raise ValueError(f"unknown strategy {strategy!r}")
        node = int(self.network.ids[i])
        station, choice = configure_station(node, p, self.network, self.params, self.table)
        cost = float(self.network.estate_cost[i]) + choice.cost
        if cost > self.remaining:
            return _Move(over_budget=True, node=node, fee=cost)
        return _Move(plan=p.with_station(station), fee=cost, node=node, reason="created",
                     extra={"saturated_config": choice.saturated})

    def increase_station(self, strategy: str) -> _Move:
        p = self.state.plan
        a = self._analysis
        if not p:
            return _Move(reason="no_station")
        open_ = np.array([s.total < self.params.K for s in p.stations])
        if not open_.any():
            return _Move(reason="all_stations_full")
        if strategy == "benefit":
            key = np.where(open_, a.cov[a.station_idx], np.iinfo(np.int64).max)
            k = _argmin_first(key)
        elif strategy == "demand":
            key = np.where(open_, a.dem_weak[a.station_idx], -np.inf)
            k = int(np.argmax(key))
        else:
            raise ValueError(f"unknown strategy {strategy!r}")
        station = p.stations[k]
        ctype = best_value_charger(self.params.catalog, self.remaining)
        if ctype is None:
            return _Move(over_budget=True, node=station.node_id)
        fee = self.params.catalog.cost[ctype]
        return _Move(plan=p.with_station(station.add(ctype)), fee=fee, node=station.node_id,
                     reason="increased", extra={"charger_type": ctype})

    def marginal_benefits(self) -> np.ndarray:
        """Benefit lost by removing each station, in station order."""
        a = self._analysis
        n = len(self.network)
        covered = self.network.distances[:, a.station_idx] <= a.radius[None, :]
        h = 1.0 - self.params.omega * self.network.home_share
        with np.errstate(divide="ignore"):
            inv = np.where(a.cov > 0, 1.0 / np.maximum(a.cov, 1), 0.0)
        return (covered * (inv * h)[:, None]).sum(axis=0) / n

    def relocate(self) -> _Move:
        p = self.state.plan
        a = self._analysis
        if len(p) < 2:
            return _Move(reason="too_few_stations")
        donor_k = _argmin_first(self.marginal_benefits())
        donor = p.stations[donor_k]
        pressure = a.W * a.D + a.rho
        eligible = np.array([k != donor_k and s.total < self.params.K for k, s in enumerate(p.stations)])
        if not eligible.any():
            return _Move(reason="no_recipient", node=donor.node_id)
        recip_k = int(np.argmax(np.where(eligible, pressure, -np.inf)))
        recipient = p.stations[recip_k]
        powers = self.params.catalog.power
        present = [i for i, t in enumerate(donor.chargers) if t > 0]
        ctype = min(present, key=lambda i: (powers[i], i))
        left = donor.add(ctype, -1)
        new = p.without(donor.node_id) if left.total == 0 else p.with_station(left)
        new = new.with_station(recipient.add(ctype))
        return _Move(plan=new, fee=0.0, node=donor.node_id, reason="relocated",
                     extra={"recipient": recipient.node_id, "charger_type": ctype,
                            "donor_removed": left.total == 0})


def run_fixed(env: PlacementEnv, action: int, initial: ChargingPlan | None = None):
    """Roll out one episode that always plays ``action``; returns (plan, total reward)."""
    env.reset(initial)
    total = 0.0
    done = False
    while not done:
        _, r, done, _ = env.step(action)
        total += r
    return env.plan, total


def run_policy(env: PlacementEnv, choose, initial: ChargingPlan | None = None):
    """Roll out one episode with ``choose(obs) -> action``; returns (plan, rewards)."""
    obs = env.reset(initial)
    rewards = []
    done = False
    while not done:
        obs, r, done, _ = env.step(choose(obs))
        rewards.append(r)
    return env.plan, rewards
