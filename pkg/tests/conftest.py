import math
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from chargeplan.netdata import EARTH_RADIUS_M, Node, RoadNetwork, generate_synthetic
from chargeplan.utility import ChargerCatalog, UtilityParams

LAT0, LON0 = 52.0, 9.0
DEG_PER_M = math.degrees(1.0 / EARTH_RADIUS_M)


def offset(north_m: float, east_m: float = 0.0, lat0: float = LAT0, lon0: float = LON0):
    """(lat, lon) of a point ``north_m``/``east_m`` meters from the anchor."""
    lat = lat0 + north_m * DEG_PER_M
    lon = lon0 + east_m * DEG_PER_M / math.cos(math.radians(lat0))
    return lat, lon


def line_network(positions_m, demand=None, home=None, estate=None):
    """Nodes on a north-south line at the given offsets (meters), ids 0..n-1."""
    n = len(positions_m)
    demand = demand if demand is not None else [1.0] * n
    home = home if home is not None else [0.0] * n
    estate = estate if estate is not None else [1000.0] * n
    nodes = [Node(i, *offset(y), demand[i], home[i], estate[i]) for i, y in enumerate(positions_m)]
    edges = [(i, i + 1) for i in range(n - 1)] + [(i + 1, i) for i in range(n - 1)]
    return RoadNetwork(nodes, edges)


def tiny_network(seed: int, n: int = 6):
    """Random small network inside a ~1.2 km square with cheap estate costs."""
    rng = np.random.default_rng(seed)
    nodes = []
    for i in range(n):
        lat, lon = offset(*rng.uniform(0, 1200, 2))
        nodes.append(Node(i, lat, lon, float(rng.uniform(0.1, 1.0)), float(rng.uniform(0, 1)),
                          float(np.round(rng.uniform(1000, 1200), 2))))
    return RoadNetwork(nodes, [(i, (i + 1) % n) for i in range(n)])


ORACLE_PARAMS = UtilityParams(K=2, B=5000.0, arrival_scale=1e-4,
                              catalog=ChargerCatalog(power=(7.0,), cost=(300.0,)))


@pytest.fixture
def params():
    return UtilityParams()


@pytest.fixture
def oracle_params():
    return ORACLE_PARAMS


@pytest.fixture(scope="session")
def lattice():
    return generate_synthetic(5, 5, 3, "hotspot")


# --- acceptance reporting ------------------------------------------------------------

ACCEPTANCE: dict[int, str] = {}


def record_criterion(number: int, title: str, ok: bool, detail: str) -> bool:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} -- {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
