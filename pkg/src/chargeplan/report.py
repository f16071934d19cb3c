"""Plan metrics, comparison tables relative to a reference plan, GeoJSON export."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

from .netdata import RoadNetwork
from .plan import ChargingPlan
from .utility import UtilityParams, analyze, capacity, fee, plan_fee

TABLE_COLUMNS = ("algorithm", "score_pct", "benefit_pct", "wait_pct", "travel_pct",
                 "charging_pct", "travel_max_min", "wait_max_min")
RATIO_FIELDS = ("score", "benefit", "wait", "travel", "charging")
NA = "n/a"


@dataclass(frozen=True)
class PlanMetrics:
    score: float
    benefit: float
    wait: float              # h
    travel: float            # h
    charging: float          # h
    travel_max: float | None  # min; None for an empty plan
    wait_max: float | None    # min; None for an empty plan
    fee_spent: float         # EUR
    station_count: int
    charger_count: int

    def as_dict(self) -> dict:
        return asdict(self)


def evaluate_metrics(p: ChargingPlan, network: RoadNetwork, params: UtilityParams,
                     budget_spent: float | None = None) -> PlanMetrics:
    a = analyze(p, network, params)
    spent = plan_fee(p, network, params.catalog) if budget_spent is None else float(budget_spent)
    if a.empty:
        return PlanMetrics(0.0, 0.0, 0.0, 0.0, 0.0, None, None, spent, 0, 0)
    a.require_stable()
    travel_max_h = float((a.assigned_dist_km / params.velocity).max())
    return PlanMetrics(
        score=a.score(params), benefit=a.benefit, wait=a.waiting, travel=a.travel,
        charging=a.charging, travel_max=60.0 * travel_max_h, wait_max=60.0 * float(a.W.max()),
        fee_spent=spent, station_count=len(p), charger_count=p.charger_count,
    )


@dataclass
class RelativeTable:
    reference: str
    rows: list[dict]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TABLE_COLUMNS)
        for r in self.rows:
            w.writerow([_fmt(r[c]) for c in TABLE_COLUMNS])
        return buf.getvalue()

    def to_text(self) -> str:
        header = ["algorithm", "score", "benefit", "wait", "travel", "charging",
                  "travel_max [min]", "wait_max [min]"]
        body = []
        for r in self.rows:
            cells = [r["algorithm"]]
            cells += [_fmt_pct(r[f"{f}_pct"]) for f in RATIO_FIELDS]
            cells += [_fmt(r["travel_max_min"], 2), _fmt(r["wait_max_min"], 2)]
            body.append(cells)
        widths = [max(len(row[i]) for row in [header] + body) for i in range(len(header))]
        lines = ["  ".join(h.ljust(w) if i == 0 else h.rjust(w) for i, (h, w) in enumerate(zip(header, widths)))]
        lines.append("  ".join("-" * w for w in widths))
        for row in body:
            lines.append("  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(row, widths))))
        return "\n".join(lines) + "\n"


def _fmt(v, digits: int = 4) -> str:
    if v is None:
        return NA
    if isinstance(v, str):
        return v
    return f"{v:.{digits}f}"


def _fmt_pct(v) -> str:
    return NA if v is None else f"{v:.0f}%"


def relative_table(models: Sequence[tuple[str, PlanMetrics]], reference: str) -> RelativeTable:
    """Ratio columns as percentages of ``reference``; max columns as absolute minutes.

    A zero reference value makes that ratio column not applicable (``None``).
    """
    lookup = dict(models)
    if reference not in lookup:
        raise KeyError(f"reference {reference!r} not among models")
    ref = lookup[reference]
    rows = []
    for name, m in models:
        row = {"algorithm": name}
        for f in RATIO_FIELDS:
            base = getattr(ref, f)
            row[f"{f}_pct"] = None if base == 0 else 100.0 * getattr(m, f) / base
        row["travel_max_min"] = m.travel_max
        row["wait_max_min"] = m.wait_max
        rows.append(row)
    return RelativeTable(reference, rows)


def plan_geojson(p: ChargingPlan, network: RoadNetwork, params: UtilityParams) -> dict:
    features = []
    for s in p.stations:
        node = network.node(s.node_id)
        features.append({
            "type": "Feature",
            "geometry": {"type": "Point", "coordinates": [node.lon, node.lat]},
            "properties": {
                "node_id": s.node_id,
                "chargers": list(s.chargers),
                "capacity_kw": capacity(s, params.catalog),
                "fee": fee(s, network, params.catalog),
            },
        })
    return {"type": "FeatureCollection", "features": features}


def export_plan(p: ChargingPlan, network: RoadNetwork, path, params: UtilityParams | None = None):
    params = params or UtilityParams()
    doc = plan_geojson(p, network, params)
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return Path(path)
