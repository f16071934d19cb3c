"""Command-line entry point: ``chargeplan {synth,plan,train,compare,validate}``.

Exit codes: 0 success, 1 plan failed validation, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import baselines
from .agent import QNetwork, evaluate_policy, train, write_log
from .config import load_config
from .env import PlacementEnv
from .netdata import (
    DEMAND_PROFILES, NetworkDataError, demand_from_trips, generate_synthetic, load_existing_stations,
    load_network, load_trips, write_network, write_stations,
)
from .plan import ChargingPlan
from .report import evaluate_metrics, export_plan, relative_table
from .utility import check_constraints

log = logging.getLogger("chargeplan")

POLICY_ALGO = "pcrl"


class UsageError(Exception):
    pass


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("CHARGEPLAN_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"CHARGEPLAN_SEED must be an integer, got {env!r}") from None


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="TOML parameter file")
    p.add_argument("--seed", type=int, help="random seed (default: $CHARGEPLAN_SEED or 0)")


def _network_args(p: argparse.ArgumentParser):
    p.add_argument("--nodes", type=Path, required=True, help="nodes CSV")
    p.add_argument("--edges", type=Path, required=True, help="edges CSV")
    p.add_argument("--stations", type=Path, help="existing stations CSV (initial plan)")
    p.add_argument("--trips", type=Path, help="trip endpoints CSV; replaces node demand")
    p.add_argument("--grid", type=int, default=32, help="trip grid cells per side")
    p.add_argument("--normalize", action="store_true", help="divide node demand by its maximum")
    p.add_argument("--budget", type=float, help="budget for new construction (overrides B)")


def _config(args):
    if args.config is not None and not args.config.exists():
        raise UsageError(f"config file not found: {args.config}")
    return load_config(args.config)


def _scratch_arg(p: argparse.ArgumentParser):
    p.add_argument("--from-scratch", action="store_true",
                   help="ignore --stations when planning (non-incremental); 'existing' still reports them")


def _load(args):
    params, tcfg = _config(args)
    if getattr(args, "budget", None) is not None:
        params = params.with_(B=args.budget)
    for f in ("nodes", "edges", "stations", "trips"):
        path = getattr(args, f, None)
        if path is not None and not path.exists():
            raise UsageError(f"{f} file not found: {path}")
    net = load_network(args.nodes, args.edges, normalize=args.normalize)
    if args.trips is not None:
        net = demand_from_trips(load_trips(args.trips), net, args.grid)
    initial = ChargingPlan()
    if args.stations is not None:
        initial = load_existing_stations(args.stations, net, K=params.K, m=params.catalog.m)
    return params, tcfg, net, initial


def _write_text(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _metrics_json(m) -> str:
    return json.dumps(m.as_dict(), sort_keys=True)


# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    net = generate_synthetic(args.rows, args.cols, _seed(args), args.profile)
    args.out.mkdir(parents=True, exist_ok=True)
    write_network(net, args.out / "nodes.csv", args.out / "edges.csv")
    print(f"wrote {len(net)} nodes, {len(net.edges)} edges to {args.out}")
    return 0


def _policy_plan(args, params, net, initial):
    if args.policy is None:
        raise UsageError(f"--algo {POLICY_ALGO} needs --policy <checkpoint>")
    if not args.policy.exists():
        raise UsageError(f"policy file not found: {args.policy}")
    policy = QNetwork.load(args.policy)
    env = PlacementEnv(net, params, initial)
    if policy.sizes[0] != env.obs_dim:
        raise UsageError(f"policy expects {policy.sizes[0]} inputs, network gives {env.obs_dim}")
    plan, metrics = evaluate_policy(policy, env)
    return plan, metrics


def _run_algo(name, args, params, net, initial):
    if getattr(args, "from_scratch", False) and name != "existing":
        initial = ChargingPlan()
    if name == POLICY_ALGO:
        return _policy_plan(args, params, net, initial)
    if name not in baselines.ALGORITHMS:
        raise UsageError(f"unknown algorithm {name!r}; choose from "
                         f"{', '.join(baselines.ALGORITHMS + (POLICY_ALGO,))}")
    plan = baselines.run_baseline(name, initial, params.B, net, params)
    spent = baselines.new_spend(initial, plan, net, params)
    return plan, evaluate_metrics(plan, net, params, budget_spent=spent)


def cmd_plan(args) -> int:
    params, _, net, initial = _load(args)
    plan, metrics = _run_algo(args.algo, args, params, net, initial)
    if args.out is not None:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        write_stations(plan, args.out, params.catalog.m)
    if args.geojson is not None:
        args.geojson.parent.mkdir(parents=True, exist_ok=True)
        export_plan(plan, net, args.geojson, params)
    print(_metrics_json(metrics))
    return 0


def cmd_train(args) -> int:
    params, tcfg, net, initial = _load(args)
    tcfg = replace(tcfg, seed=_seed(args))
    if args.from_scratch:
        initial = ChargingPlan()
    if args.episodes is not None:
        tcfg = replace(tcfg, episodes_max=args.episodes)
    env = PlacementEnv(net, params, initial)
    result = train(env, tcfg)
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    result.policy.save(out / "policy.json")
    write_log(result.log, out / "train_log.csv")
    write_stations(result.best_plan, out / "plan.csv", params.catalog.m)
    print(f"best greedy score {result.best_score!r}; wrote policy.json, train_log.csv, plan.csv to {out}")
    return 0


def cmd_compare(args) -> int:
    params, _, net, initial = _load(args)
    names = [n.strip() for n in args.algos.split(",") if n.strip()]
    if args.policy is not None and POLICY_ALGO not in names:
        names.append(POLICY_ALGO)
    if args.reference not in names:
        raise UsageError(f"reference {args.reference!r} must be one of the compared algorithms")
    rows = []
    for name in names:
        _, metrics = _run_algo(name, args, params, net, initial)
        rows.append((name, metrics))
    table = relative_table(rows, args.reference)
    if args.out is not None:
        _write_text(args.out, table.to_csv())
    print(table.to_text(), end="")
    return 0


def cmd_validate(args) -> int:
    params, _, net, _ = _load(args)
    if not args.plan.exists():
        raise UsageError(f"plan file not found: {args.plan}")
    plan = load_existing_stations(args.plan, net, K=10**9, m=params.catalog.m)
    report = check_constraints(plan, net, params, budget_spent=args.spent)
    for kind, node, value in report.violations:
        where = "" if node is None else f" at node {node}"
        print(f"violation: {kind}{where} ({value!r})")
    print("feasible" if report.feasible else "infeasible")
    return 0 if report.feasible else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="chargeplan", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic lattice network")
    _common(p)
    p.add_argument("--rows", type=int, required=True)
    p.add_argument("--cols", type=int, required=True)
    p.add_argument("--profile", choices=DEMAND_PROFILES, default="hotspot")
    p.add_argument("--out", type=Path, default=Path("."))
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("plan", help="run one algorithm and write its plan")
    _common(p)
    _network_args(p)
    _scratch_arg(p)
    p.add_argument("--algo", required=True)
    p.add_argument("--policy", type=Path, help="policy checkpoint for --algo pcrl")
    p.add_argument("--out", type=Path, help="plan CSV (node_id,t1..tm)")
    p.add_argument("--geojson", type=Path, help="GeoJSON export of the plan")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("train", help="train the DQN placement agent")
    _common(p)
    _network_args(p)
    _scratch_arg(p)
    p.add_argument("--episodes", type=int, help="override train.episodes_max")
    p.add_argument("--out-dir", type=Path, required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("compare", help="compare algorithms relative to a reference")
    _common(p)
    _network_args(p)
    _scratch_arg(p)
    p.add_argument("--algos", default=",".join(baselines.ALGORITHMS))
    p.add_argument("--policy", type=Path, help="add the trained policy as 'pcrl'")
    p.add_argument("--reference", default="existing")
    p.add_argument("--out", type=Path, help="CSV table output")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("validate", help="check a plan file against the constraints")
    _common(p)
    _network_args(p)
    p.add_argument("--plan", type=Path, required=True)
    p.add_argument("--spent", type=float, help="budget spent (default: full plan fee)")
    p.set_defaults(func=cmd_validate)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"chargeplan: error: {exc}", file=sys.stderr)
        return 2
    except (NetworkDataError, KeyError, ValueError) as exc:
        print(f"chargeplan: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
