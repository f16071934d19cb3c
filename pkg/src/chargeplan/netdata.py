"""Road-network data: nodes, edges, CSV ingestion and synthetic lattices."""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .plan import ChargingPlan, ChargingStation

EARTH_RADIUS_M = 6_371_000.0

NODE_COLUMNS = ("id", "lat", "lon", "demand", "home_share", "estate_cost")
EDGE_COLUMNS = ("src", "dst")
TRIP_COLUMNS = ("lat", "lon")

# synthetic lattice anchor (central Hannover) and spacing
_SYNTH_ORIGIN = (52.3759, 9.7320)
SYNTH_SPACING_M = 200.0


class NetworkDataError(ValueError):
    """Raised for malformed or inconsistent network input."""


@dataclass(frozen=True)
class Node:
    id: int
    lat: float
    lon: float
    demand: float
    home_share: float
    estate_cost: float

    def validate(self):
        vals = (self.lat, self.lon, self.demand, self.home_share, self.estate_cost)
        if not all(math.isfinite(v) for v in vals):
            raise NetworkDataError(f"node {self.id}: non-finite feature")
        if not -90.0 <= self.lat <= 90.0 or not -180.0 <= self.lon <= 180.0:
            raise NetworkDataError(f"node {self.id}: coordinates out of range")
        if not 0.0 <= self.demand <= 1.0:
            raise NetworkDataError(f"node {self.id}: demand {self.demand} outside [0, 1]")
        if not 0.0 <= self.home_share <= 1.0:
            raise NetworkDataError(f"node {self.id}: home_share {self.home_share} outside [0, 1]")
        if self.estate_cost < 0:
            raise NetworkDataError(f"node {self.id}: negative estate_cost")


class RoadNetwork:
    """Directed road graph with per-node features.

    Nodes are stored sorted by id, so array position order equals id order
    and "lower index" tie-breaks coincide with "lower node id". Feature
    arrays and the pairwise haversine matrix are computed once and marked
    read-only.
    """

    def __init__(self, nodes: Sequence[Node], edges: Sequence[tuple[int, int]] = ()):
        if not nodes:
            raise NetworkDataError("a road network needs at least one node")
        nodes = sorted(nodes, key=lambda n: n.id)
        index: dict[int, int] = {}
        for n in nodes:
            if n.id in index:
                raise NetworkDataError(f"duplicate node id {n.id}")
            n.validate()
            index[n.id] = len(index)
        for src, dst in edges:
            for end in (src, dst):
                if end not in index:
                    raise NetworkDataError(f"edge ({src}, {dst}) references unknown node id {end}")
        self.nodes: tuple[Node, ...] = tuple(nodes)
        self.edges: tuple[tuple[int, int], ...] = tuple((int(a), int(b)) for a, b in edges)
        self._index = index

        self.ids = _frozen(np.array([n.id for n in nodes], dtype=np.int64))
        self.lat = _frozen(np.array([n.lat for n in nodes], dtype=float))
        self.lon = _frozen(np.array([n.lon for n in nodes], dtype=float))
        self.demand = _frozen(np.array([n.demand for n in nodes], dtype=float))
        self.home_share = _frozen(np.array([n.home_share for n in nodes], dtype=float))
        self.estate_cost = _frozen(np.array([n.estate_cost for n in nodes], dtype=float))
        self._dist: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.nodes)

    def __eq__(self, other) -> bool:
        if not isinstance(other, RoadNetwork):
            return NotImplemented
        return self.nodes == other.nodes and self.edges == other.edges

    def __repr__(self) -> str:
        return f"RoadNetwork(|V|={len(self.nodes)}, |E|={len(self.edges)})"

    def index_of(self, node_id: int) -> int:
        try:
            return self._index[int(node_id)]
        except KeyError:
            raise KeyError(f"unknown node id {node_id}") from None

    def node(self, node_id: int) -> Node:
        return self.nodes[self.index_of(node_id)]

    @property
    def distances(self) -> np.ndarray:
        """Pairwise haversine distances in meters, shape (|V|, |V|)."""
        if self._dist is None:
            self._dist = _frozen(haversine_matrix(self.lat, self.lon))
        return self._dist

    def replace_features(self, **columns: Sequence[float]) -> "RoadNetwork":
        """Copy of the network with some per-node feature columns replaced."""
        fields = {f: getattr(self, f) for f in ("demand", "home_share", "estate_cost")}
        for name, values in columns.items():
            if name not in fields:
                raise KeyError(f"not a replaceable feature: {name}")
            fields[name] = np.asarray(values, dtype=float)
        nodes = [
            Node(n.id, n.lat, n.lon, float(fields["demand"][i]),
                 float(fields["home_share"][i]), float(fields["estate_cost"][i]))
            for i, n in enumerate(self.nodes)
        ]
        return RoadNetwork(nodes, self.edges)


@dataclass(frozen=True)
class TripEndpointSet:
    points: tuple[tuple[float, float], ...]
    bbox: tuple[float, float, float, float]  # lat_min, lon_min, lat_max, lon_max

    @classmethod
    def from_points(cls, points, bbox=None) -> "TripEndpointSet":
        """Build the set, dropping points outside ``bbox`` (default: the points' own hull)."""
        pts = [(float(a), float(b)) for a, b in points]
        if bbox is None:
            if not pts:
                raise ValueError("bbox is required for an empty trip set")
            lats, lons = zip(*pts)
            bbox = (min(lats), min(lons), max(lats), max(lons))
        lat0, lon0, lat1, lon1 = bbox
        kept = tuple(p for p in pts if lat0 <= p[0] <= lat1 and lon0 <= p[1] <= lon1)
        return cls(kept, tuple(float(x) for x in bbox))


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def haversine(a: tuple[float, float], b: tuple[float, float]) -> float:
    """Great-circle distance in meters between two (lat, lon) pairs in degrees."""
    lat1, lon1 = map(math.radians, a)
    lat2, lon2 = map(math.radians, b)
    h = (math.sin((lat2 - lat1) / 2) ** 2
         + math.cos(lat1) * math.cos(lat2) * math.sin((lon2 - lon1) / 2) ** 2)
    return 2 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def haversine_matrix(lat: np.ndarray, lon: np.ndarray) -> np.ndarray:
    phi = np.radians(lat)
    lam = np.radians(lon)
    dphi = phi[:, None] - phi[None, :]
    dlam = lam[:, None] - lam[None, :]
    h = np.sin(dphi / 2) ** 2 + np.cos(phi)[:, None] * np.cos(phi)[None, :] * np.sin(dlam / 2) ** 2
    d = 2 * EARTH_RADIUS_M * np.arcsin(np.minimum(1.0, np.sqrt(h)))
    np.fill_diagonal(d, 0.0)
    return d


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------

def _read_rows(path, required: Sequence[str]):
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in required if c not in header]
        if missing:
            raise NetworkDataError(f"{path.name}: missing column(s) {', '.join(missing)}")
        # row numbers count the header as row 1
        return header, [(i, row) for i, row in enumerate(reader, start=2)]


def _parse(path, rowno: int, column: str, raw: str, kind=float):
    try:
        return kind(raw)
    except (TypeError, ValueError):
        raise NetworkDataError(f"{Path(path).name} row {rowno}: bad {column} value {raw!r}") from None


def load_network(nodes_path, edges_path, normalize: bool = False) -> RoadNetwork:
    """Read ``nodes.csv`` and ``edges.csv`` into a validated network.

    With ``normalize`` the demand column is divided by its maximum, so raw
    counts can be fed in directly.
    """
    _, node_rows = _read_rows(nodes_path, NODE_COLUMNS)
    raw = []
    seen: dict[int, int] = {}
    for rowno, row in node_rows:
        vals = {c: _parse(nodes_path, rowno, c, row[c]) for c in NODE_COLUMNS[1:]}
        nid = _parse(nodes_path, rowno, "id", row["id"], int)
        if nid in seen:
            raise NetworkDataError(
                f"{Path(nodes_path).name} row {rowno}: duplicate node id {nid} (first at row {seen[nid]})")
        seen[nid] = rowno
        raw.append((rowno, nid, vals))
    if not raw:
        raise NetworkDataError(f"{Path(nodes_path).name}: no nodes")

    if normalize:
        peak = max(v["demand"] for _, _, v in raw)
        if peak < 0:
            raise NetworkDataError("negative demand values cannot be normalized")
        if peak > 0:
            for _, _, v in raw:
                v["demand"] = v["demand"] / peak

    nodes = []
    for rowno, nid, v in raw:
        node = Node(nid, v["lat"], v["lon"], v["demand"], v["home_share"], v["estate_cost"])
        try:
            node.validate()
        except NetworkDataError as exc:
            raise NetworkDataError(f"{Path(nodes_path).name} row {rowno}: {exc}") from None
        nodes.append(node)

    _, edge_rows = _read_rows(edges_path, EDGE_COLUMNS)
    edges = []
    for rowno, row in edge_rows:
        src = _parse(edges_path, rowno, "src", row["src"], int)
        dst = _parse(edges_path, rowno, "dst", row["dst"], int)
        for end in (src, dst):
            if end not in seen:
                raise NetworkDataError(
                    f"{Path(edges_path).name} row {rowno}: unknown node id {end}")
        edges.append((src, dst))
    return RoadNetwork(nodes, edges)


def write_network(network: RoadNetwork, nodes_path, edges_path):
    with Path(nodes_path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(NODE_COLUMNS)
        for n in network.nodes:
            w.writerow([n.id, repr(n.lat), repr(n.lon), repr(n.demand),
                        repr(n.home_share), repr(n.estate_cost)])
    with Path(edges_path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EDGE_COLUMNS)
        w.writerows(network.edges)


def load_trips(path, bbox=None) -> TripEndpointSet:
    _, rows = _read_rows(path, TRIP_COLUMNS)
    pts = [(_parse(path, r, "lat", row["lat"]), _parse(path, r, "lon", row["lon"])) for r, row in rows]
    return TripEndpointSet.from_points(pts, bbox)


# ---------------------------------------------------------------------------
# demand from trip endpoints
# ---------------------------------------------------------------------------

def _cell(value: float, lo: float, hi: float, grid: int) -> int:
    # boundary points go to the lower cell: ceil(x) - 1, clamped
    if hi <= lo:
        return 0
    x = (value - lo) / (hi - lo) * grid
    return min(grid - 1, max(0, math.ceil(x) - 1))


def demand_from_trips(trips: TripEndpointSet, network: RoadNetwork, grid: int = 32) -> RoadNetwork:
    """Set each node's demand to its grid cell's trip count over the busiest cell's count."""
    if grid < 1:
        raise ValueError("grid must be >= 1")
    lat0, lon0, lat1, lon1 = trips.bbox
    counts = np.zeros((grid, grid), dtype=np.int64)
    for lat, lon in trips.points:
        counts[_cell(lat, lat0, lat1, grid), _cell(lon, lon0, lon1, grid)] += 1
    peak = counts.max()
    if peak == 0:
        warnings.warn("empty trip set: all node demands set to 0", RuntimeWarning, stacklevel=2)
        return network.replace_features(demand=np.zeros(len(network)))
    norm = counts / peak
    demand = [norm[_cell(n.lat, lat0, lat1, grid), _cell(n.lon, lon0, lon1, grid)] for n in network.nodes]
    return network.replace_features(demand=demand)


# ---------------------------------------------------------------------------
# existing stations
# ---------------------------------------------------------------------------

def load_existing_stations(path, network: RoadNetwork, K: int = 8, m: int | None = None) -> ChargingPlan:
    """Read ``node_id,t1..tm`` rows into a plan.

    Rows for the same node are summed; a station above ``K`` chargers is
    clamped by dropping chargers from the lowest-index (lowest-power) type
    first, with a warning.
    """
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return ChargingPlan()
        if not header or header[0] != "node_id":
            raise NetworkDataError(f"{Path(path).name}: first column must be node_id")
        types = header[1:]
        if m is not None and len(types) != m:
            raise NetworkDataError(f"{Path(path).name}: expected {m} charger columns, got {len(types)}")
        merged: dict[int, list[int]] = {}
        for rowno, row in enumerate(reader, start=2):
            if not row:
                continue
            nid = _parse(path, rowno, "node_id", row[0], int)
            if nid not in network._index:
                raise NetworkDataError(f"{Path(path).name} row {rowno}: unknown node id {nid}")
            t = [_parse(path, rowno, types[i], row[1 + i], int) for i in range(len(types))]
            if any(x < 0 for x in t):
                raise NetworkDataError(f"{Path(path).name} row {rowno}: negative charger count")
            acc = merged.setdefault(nid, [0] * len(types))
            for i, x in enumerate(t):
                acc[i] += x

    stations = []
    for nid, t in merged.items():
        excess = sum(t) - K
        if excess > 0:
            warnings.warn(f"station at node {nid} has {sum(t)} chargers, clamped to K={K}",
                          RuntimeWarning, stacklevel=2)
            for i in range(len(t)):
                drop = min(t[i], excess)
                t[i] -= drop
                excess -= drop
        if sum(t) > 0:
            stations.append(ChargingStation(nid, tuple(t)))
    return ChargingPlan(stations)


def write_stations(plan: ChargingPlan, path, m: int):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node_id"] + [f"t{i + 1}" for i in range(m)])
        for s in plan.stations:
            w.writerow([s.node_id, *s.chargers])


# ---------------------------------------------------------------------------
# synthetic lattices
# ---------------------------------------------------------------------------

DEMAND_PROFILES = ("uniform", "hotspot", "gradient")


def hotspot_kernel(lattice_distance, rows: int, cols: int):
    """Demand at a given Manhattan lattice distance from the hotspot."""
    scale = max(1.0, max(rows, cols) / 4.0)
    return np.exp(-np.asarray(lattice_distance, dtype=float) / scale)


def generate_synthetic(rows: int, cols: int, seed: int, demand_profile: str = "uniform") -> RoadNetwork:
    """A rows x cols lattice, 200 m spacing, 4-neighbour edges in both directions.

    Home shares and estate costs (EUR 1000-10000) are drawn from ``seed``;
    demand follows ``demand_profile``.
    """
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be >= 1")
    if demand_profile not in DEMAND_PROFILES:
        raise ValueError(f"unknown demand profile {demand_profile!r}")
    rng = np.random.default_rng(seed)
    lat0, lon0 = _SYNTH_ORIGIN
    dlat = math.degrees(SYNTH_SPACING_M / EARTH_RADIUS_M)
    dlon = dlat / math.cos(math.radians(lat0))

    r_idx, c_idx = np.divmod(np.arange(rows * cols), cols)
    home = rng.uniform(0.0, 1.0, rows * cols)
    estate = np.round(rng.uniform(1000.0, 10000.0, rows * cols), 2)
    if demand_profile == "uniform":
        demand = rng.uniform(0.0, 1.0, rows * cols)
    elif demand_profile == "hotspot":
        centre = int(rng.integers(rows * cols))
        cr, cc = divmod(centre, cols)
        demand = hotspot_kernel(np.abs(r_idx - cr) + np.abs(c_idx - cc), rows, cols)
    else:
        span = rows + cols - 2
        demand = (r_idx + c_idx) / span if span else np.ones(rows * cols)

    nodes = [
        Node(i, lat0 + r * dlat, lon0 + c * dlon, float(demand[i]), float(home[i]), float(estate[i]))
        for i, (r, c) in enumerate(zip(r_idx.tolist(), c_idx.tolist()))
    ]
    edges = []
    for i, (r, c) in enumerate(zip(r_idx.tolist(), c_idx.tolist())):
        if c + 1 < cols:
            edges += [(i, i + 1), (i + 1, i)]
        if r + 1 < rows:
            edges += [(i, i + cols), (i + cols, i)]
    return RoadNetwork(nodes, edges)
