import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chargeplan.netdata import Node, RoadNetwork, generate_synthetic
from chargeplan.plan import ChargingPlan, ChargingStation
from chargeplan.utility import (
    ChargerCatalog, EmptyPlanError, InstabilityError, PlanAnalysis, ServiceRateError, UtilityParams,
    analyze, assign_stations, benefit, capacity, charging_time, check_constraints, cost, coverage,
    fee, influential_radius, plan_fee, queue_params, score, travel_time, waiting_time, weakened_demand,
)
from conftest import ORACLE_PARAMS, line_network, offset, tiny_network
from oracle import enumerate_plans, nodes_of, oracle_score, prm_of

DEFAULT = UtilityParams()
CAT = DEFAULT.catalog
MU1 = ChargerCatalog(power=(85.0,), cost=(1000.0,))  # one charger of 85 kW serves 1 vehicle/h at E=85


def S(node, *t):
    return ChargingStation(node, tuple(t))


def P(*stations):
    return ChargingPlan(stations)


# --- capacity / radius -------------------------------------------------------------

@pytest.mark.parametrize("t,expected", [((1, 1, 1), 79.0), ((0, 0, 0), 0.0), ((8, 0, 0), 56.0)])
def test_capacity(t, expected):
    assert capacity(S(0, *t), CAT) == expected


def test_radius_at_zero_capacity():
    assert influential_radius(S(0, 0, 0, 0), DEFAULT) == 500.0


def test_radius_limit():
    assert influential_radius(S(0, 0, 0, 1000), DEFAULT) == pytest.approx(1000.0, abs=1e-6)


def test_radius_at_capacity_scale():
    expected = 1000.0 / (1.0 + math.exp(-1.0))
    assert expected == pytest.approx(731.0586, abs=1e-4)
    # 50 kW == capacity_scale
    assert influential_radius(S(0, 0, 0, 1), DEFAULT) == pytest.approx(expected, rel=1e-12)


def test_radius_increasing_in_capacity():
    radii = [influential_radius(S(0, k, 0, 0), DEFAULT) for k in range(9)]
    assert all(a < b for a, b in zip(radii, radii[1:]))
    assert all(500.0 <= r < 1000.0 for r in radii)


# --- coverage / demand / benefit ---------------------------------------------------

def test_coverage_empty_plan(lattice):
    assert coverage(0, ChargingPlan(), lattice, DEFAULT) == 0


@pytest.mark.parametrize("dist,expected", [(400.0, 1), (600.0, 0)])
def test_coverage_radius_500(dist, expected):
    net = line_network([0.0, dist])
    plan = P(S(0, 0, 0, 0))  # r = 500 m
    assert coverage(1, plan, net, DEFAULT) == expected


def test_coverage_counts_own_station():
    net = line_network([0.0, 5000.0])
    assert coverage(0, P(S(0, 1, 0, 0)), net, DEFAULT) == 1


def test_coverage_matches_analysis(lattice):
    plan = P(S(2, 1, 0, 0), S(12, 0, 1, 0), S(20, 0, 0, 1))
    a = analyze(plan, lattice, DEFAULT)
    assert [coverage(v, plan, lattice, DEFAULT) for v in range(len(lattice))] == a.cov.tolist()


def test_weakened_demand():
    net = line_network([0.0, 100.0], demand=[0.8, 0.0], home=[1.0, 1.0])
    assert weakened_demand(0, net, DEFAULT) == pytest.approx(0.72, abs=1e-15)
    assert weakened_demand(0, net, DEFAULT.with_(omega=0.0)) == 0.8
    assert weakened_demand(1, net, DEFAULT) == 0.0


def test_benefit_empty(lattice):
    assert benefit(ChargingPlan(), lattice, DEFAULT) == 0.0


def test_benefit_two_nodes_each_covered_once():
    net = line_network([0.0, 5000.0])
    assert benefit(P(S(0, 1, 0, 0), S(1, 1, 0, 0)), net, DEFAULT) == 1.0


def test_benefit_single_node_double_cover():
    # one station per node, so double coverage needs neighbours; all three nodes are
    # covered twice and share the same term H(2) * (1 - 0.1)
    net = line_network([0.0, 100.0, 200.0], home=[1.0, 1.0, 1.0])
    prm = DEFAULT.with_(omega=0.1)
    a = analyze(P(S(1, 1, 0, 0), S(2, 1, 0, 0)), net, prm)
    assert a.cov.tolist() == [2, 2, 2]
    assert a.benefit == pytest.approx(1.35, abs=1e-12)
    one = RoadNetwork([Node(0, *offset(0.0), 1.0, 1.0, 0.0)])
    assert benefit(P(S(0, 1, 0, 0)), one, prm) == pytest.approx(0.9, abs=1e-15)


# --- assignment ---------------------------------------------------------------------

def test_assignment_single_station(lattice):
    asg = assign_stations(P(S(7, 1, 0, 0)), lattice)
    assert set(asg.station_of.values()) == {7}
    assert len(asg.station_of) == len(lattice)


def test_assignment_tie_goes_to_lower_id():
    nodes = [Node(3, *offset(-500.0), 0, 0, 0), Node(5, *offset(0.0), 1, 0, 0), Node(9, *offset(500.0), 0, 0, 0)]
    net = RoadNetwork(nodes)
    d = net.distances
    assert abs(d[1, 0] - d[1, 2]) < 1e-9
    asg = assign_stations(P(S(9, 1, 0, 0), S(3, 1, 0, 0)), net)
    assert asg.station_of[5] == 3


def test_assignment_strictly_nearer():
    net = line_network([0.0, 1000.0, 1400.0])
    asg = assign_stations(P(S(0, 1, 0, 0), S(2, 1, 0, 0)), net)
    assert asg.station_of[1] == 2


def test_assignment_of_empty_plan(lattice):
    with pytest.raises(EmptyPlanError):
        assign_stations(ChargingPlan(), lattice)


# --- travel ----------------------------------------------------------------------------

def test_travel_zero_when_everyone_hosts(lattice):
    plan = ChargingPlan(S(int(v), 1, 0, 0) for v in lattice.ids)
    assert travel_time(plan, lattice, DEFAULT) == 0.0


def test_travel_one_km():
    net = line_network([0.0, 1000.0], demand=[0.0, 1.0])
    t = travel_time(P(S(0, 1, 0, 0)), net, DEFAULT)
    assert t == pytest.approx(1 / 30, rel=1e-9)
    assert 60 * t == pytest.approx(2.0, rel=1e-9)


def test_travel_scales_inversely_with_velocity(lattice):
    plan = P(S(6, 1, 0, 0), S(18, 0, 1, 0))
    a = travel_time(plan, lattice, DEFAULT)
    b = travel_time(plan, lattice, DEFAULT.with_(velocity=60.0))
    assert b == pytest.approx(a / 2, rel=1e-12)


def test_travel_of_empty_plan(lattice):
    with pytest.raises(EmptyPlanError):
        travel_time(ChargingPlan(), lattice, DEFAULT)


# --- queueing ---------------------------------------------------------------------------

def test_arrival_rate_one_km():
    net = line_network([0.0, 1000.0], demand=[0.0, 0.5])
    D, mu, rho = queue_params(S(0, 1), P(S(0, 1)), net, DEFAULT.with_(catalog=MU1))
    assert D == pytest.approx(0.5, rel=1e-9)
    assert mu == 1.0
    assert rho == pytest.approx(0.5, rel=1e-9)


def test_arrival_rate_distance_floor():
    net = line_network([0.0], demand=[0.3])
    D, _, _ = queue_params(S(0, 1), P(S(0, 1)), net, DEFAULT.with_(catalog=MU1, arrival_scale=0.01))
    # 0.01 * 0.3 / 0.01 km
    assert D == pytest.approx(0.3, rel=1e-12)


def test_zero_capacity_has_no_service_rate():
    net = line_network([0.0, 1000.0])
    with pytest.raises(ServiceRateError):
        queue_params(S(0, 0, 0, 0), P(S(0, 0, 0, 0)), net, DEFAULT)


def _two_far_stations(d1, d2):
    # station A at 0 serving a node 1 km north, station B 10 km away serving a node 1 km beyond
    net = line_network([0.0, 1000.0, 10_000.0, 11_000.0], demand=[0.0, d1, 0.0, d2])
    return net, P(S(0, 1), S(2, 1))


def test_charging_time_single_and_additive():
    prm = DEFAULT.with_(catalog=MU1)
    net, plan = _two_far_stations(0.3, 0.4)
    assert charging_time(plan, net, prm) == pytest.approx(0.7, rel=1e-9)
    net1 = line_network([0.0, 1000.0], demand=[0.0, 0.5])
    assert charging_time(P(S(0, 1)), net1, prm) == pytest.approx(0.5, rel=1e-9)
    assert charging_time(ChargingPlan(), net1, prm) == 0.0


def test_waiting_time_plug_in():
    prm = DEFAULT.with_(catalog=MU1)
    net = line_network([0.0, 1000.0], demand=[0.0, 0.5])
    a = analyze(P(S(0, 1)), net, prm)
    assert a.W[0] == pytest.approx(0.5, rel=1e-9)
    assert waiting_time(P(S(0, 1)), net, prm) == pytest.approx(0.25, rel=1e-9)


def test_waiting_light_traffic():
    prm = DEFAULT.with_(catalog=MU1, arrival_scale=1e-9)
    net = line_network([0.0, 1000.0], demand=[0.0, 0.5])
    assert waiting_time(P(S(0, 1)), net, prm) < 1e-15


def test_waiting_near_divergence():
    prm = DEFAULT.with_(catalog=MU1)
    net = line_network([0.0, 1000.0], demand=[0.0, 0.999])
    a = analyze(P(S(0, 1)), net, prm)
    assert a.rho[0] == pytest.approx(0.999, rel=1e-9)
    assert a.W[0] > 499.0
    assert a.W[0] == pytest.approx(0.999 / (2 * 0.001), rel=1e-6)


def test_unstable_station_is_named():
    prm = DEFAULT.with_(catalog=MU1)
    net = line_network([0.0, 1000.0, 10_000.0, 10_900.0], demand=[0.0, 0.5, 0.0, 1.0])
    with pytest.raises(InstabilityError, match="node 2"):
        waiting_time(P(S(0, 1), S(2, 1)), net, prm)
    with pytest.raises(InstabilityError):
        score(P(S(0, 1), S(2, 1)), net, prm)


# --- cost / score / fee --------------------------------------------------------------------

def test_cost_alpha_one_is_travel(lattice):
    plan = P(S(6, 1, 1, 0), S(18, 0, 1, 1))
    prm = DEFAULT.with_(alpha=1.0, arrival_scale=1e-3)
    assert cost(plan, lattice, prm) == travel_time(plan, lattice, prm)


class _Fixed(PlanAnalysis):
    travel = 1.0
    charging = 1.0
    waiting = 1.0

    def __init__(self):
        self.station_idx = np.array([0])


def test_cost_combination_arithmetic():
    assert _Fixed().cost(DEFAULT) == pytest.approx(1.6, abs=1e-15)


def test_cost_decomposition(lattice):
    prm = DEFAULT.with_(arrival_scale=1e-3)
    plan = P(S(6, 1, 1, 0), S(18, 0, 1, 1))
    expected = 0.4 * travel_time(plan, lattice, prm) + 0.6 * (
        charging_time(plan, lattice, prm) + waiting_time(plan, lattice, prm))
    assert cost(plan, lattice, prm) == pytest.approx(expected, rel=1e-12)


def test_empty_plan_cost_and_score(lattice):
    assert cost(ChargingPlan(), lattice, DEFAULT) == 0.0
    assert score(ChargingPlan(), lattice, DEFAULT) == 0.0


def test_score_examples(lattice):
    class Stub(_Fixed):
        benefit = 2.0

        def cost(self, params):
            return 1.0
    assert Stub().score(DEFAULT) == 0.5
    prm = DEFAULT.with_(lam=1.0, arrival_scale=1e-3)
    plan = P(S(6, 1, 1, 0))
    assert score(plan, lattice, prm) == benefit(plan, lattice, prm)


def test_fee():
    net = line_network([0.0], estate=[1000.0])
    assert fee(S(0, 2, 0, 0), net, CAT) == 1600.0
    assert fee(S(0, 0, 0, 0), net, CAT) == 1000.0
    assert plan_fee(ChargingPlan(), net, CAT) == 0.0


# --- constraints -----------------------------------------------------------------------------

def test_over_budget_report():
    net = line_network([0.0, 1000.0], demand=[0.0, 0.0], estate=[1000.0, 0.0])
    prm = DEFAULT.with_(B=1299.0)
    rep = check_constraints(P(S(0, 1, 0, 0)), net, prm)  # fee 1300
    assert not rep.within_budget
    assert rep.violations == [("budget", None, 1300.0)]


def test_charger_bound_report(lattice):
    rep = check_constraints(P(S(0, 9, 0, 0)), lattice, DEFAULT.with_(arrival_scale=1e-4))
    assert not rep.charger_bounds_ok
    assert rep.within_budget and rep.stable


def test_fully_feasible_report(lattice):
    rep = check_constraints(P(S(0, 1, 0, 0), S(24, 0, 2, 0)), lattice, DEFAULT.with_(arrival_scale=1e-4))
    assert rep.feasible and rep.violations == []


def test_unstable_report():
    net = line_network([0.0, 900.0], demand=[0.0, 1.0])
    rep = check_constraints(P(S(0, 1)), net, DEFAULT.with_(catalog=MU1))
    assert not rep.stable
    assert rep.violations[0][:2] == ("stability", 0)


# --- invariants ---------------------------------------------------------------------------------

NET = generate_synthetic(4, 5, 9, "uniform")
PRM = DEFAULT.with_(arrival_scale=1e-4)

station_st = st.tuples(st.integers(0, 19), st.integers(0, 3), st.integers(0, 3), st.integers(0, 2))


def _plan_from(draw):
    seen = {}
    for node, a, b, c in draw:
        if a + b + c > 0:
            seen[node] = S(node, a, b, c)
    return ChargingPlan(seen.values())


@settings(max_examples=60, deadline=None)
@given(st.lists(station_st, max_size=6), st.integers(0, 5), st.integers(0, 2))
def test_benefit_monotone_under_charger_addition(draw, pick, ctype):
    plan = _plan_from(draw)
    if not plan:
        return
    s = plan.stations[pick % len(plan)]
    bigger = plan.with_station(s.add(ctype))
    assert benefit(bigger, NET, PRM) >= benefit(plan, NET, PRM)


@settings(max_examples=60, deadline=None)
@given(st.lists(station_st, max_size=6), station_st)
def test_marginal_coverage_gain(draw, extra):
    net = NET.replace_features(home_share=np.zeros(len(NET)))
    plan = _plan_from(draw)
    node, a, b, c = extra
    if node in plan or a + b + c == 0:
        return
    new = S(node, a, b, c)
    before = analyze(plan, net, PRM)
    after = analyze(plan.with_station(new), net, PRM)
    covered = net.distances[:, net.index_of(node)] <= influential_radius(new, PRM)
    assert np.all(after.cov - before.cov == covered.astype(int))
    expected = sum(1.0 / (before.cov[v] + 1) for v in np.flatnonzero(covered)) / len(net)
    assert after.benefit - before.benefit == pytest.approx(expected, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.lists(station_st, max_size=6))
def test_omega_zero_ignores_home_share(draw):
    plan = _plan_from(draw)
    prm = PRM.with_(omega=0.0)
    zero_home = NET.replace_features(home_share=np.zeros(len(NET)))
    a, b = analyze(plan, NET, prm), analyze(plan, zero_home, prm)
    assert a.benefit == b.benefit
    assert np.array_equal(a.dem_weak, b.dem_weak)
    assert np.array_equal(a.dem_weak, NET.demand)


@settings(max_examples=40, deadline=None)
@given(st.lists(station_st, max_size=6))
def test_score_affine(draw):
    plan = _plan_from(draw)
    a = analyze(plan, NET, PRM)
    if not a.stable:
        return
    assert a.score(PRM) == pytest.approx(0.5 * (a.benefit - a.cost(PRM)), abs=1e-12)


@pytest.mark.parametrize("seed,n", [(0, 5), (1, 6), (2, 7), (3, 8)])
def test_oracle_equivalence_all_plans(seed, n):
    net = tiny_network(seed, n)
    nodes, prm = nodes_of(net), prm_of(ORACLE_PARAMS)
    checked = unstable = 0
    for raw in enumerate_plans(nodes, ORACLE_PARAMS.K):
        plan = ChargingPlan(S(v, *t) for v, t in raw.items())
        ref = oracle_score(nodes, raw, prm)
        if ref is None:
            with pytest.raises(InstabilityError):
                score(plan, net, ORACLE_PARAMS)
            unstable += 1
            continue
        ours = score(plan, net, ORACLE_PARAMS)
        assert ours == pytest.approx(ref, rel=1e-9, abs=1e-12)
        checked += 1
    assert checked + unstable == 3 ** n
