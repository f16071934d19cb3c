"""Parameter files.

A TOML file with utility parameters at top level and an optional
``[train]`` table for the DQN settings::

    lambda = 0.5
    arrival_scale = 0.0001
    power = [7, 22, 50]
    charger_cost = [300, 750, 28000]

    [train]
    episodes_max = 500

Keys that are not given keep their defaults.
"""
from __future__ import annotations

import sys
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .agent import TrainConfig
from .utility import UtilityParams


def load_config(path=None) -> tuple[UtilityParams, TrainConfig]:
    if path is None:
        return UtilityParams(), TrainConfig()
    with Path(path).open("rb") as fh:
        data = tomllib.load(fh)
    train = data.pop("train", {})
    return UtilityParams.from_mapping(data), TrainConfig.from_mapping(train)


def dump_params(params: UtilityParams) -> str:
    """TOML text that round-trips through :func:`load_config`."""
    lines = [
        f"lambda = {params.lam!r}",
        f"alpha = {params.alpha!r}",
        f"omega = {params.omega!r}",
        f"r_max = {params.r_max!r}",
        f"E = {params.E!r}",
        f"velocity = {params.velocity!r}",
        f"K = {params.K}",
        f"B = {params.B!r}",
        f"capacity_scale = {params.capacity_scale!r}",
        f"dist_floor = {params.dist_floor!r}",
        f"arrival_scale = {params.arrival_scale!r}",
        f"rho_target = {params.rho_target!r}",
        f"power = {list(params.catalog.power)!r}",
        f"charger_cost = {list(params.catalog.cost)!r}",
    ]
    return "\n".join(lines) + "\n"
