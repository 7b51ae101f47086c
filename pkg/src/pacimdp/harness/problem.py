"""Problem specification and its structured-text configuration format."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
import yaml

from ..geometry import ABSORBING, Partition
from ..linsys import LinearSystem
from .samplers import NoiseSampler, sampler_from_dict

SCHEMA = "pacimdp/1"


@dataclass
class ProblemSpec:
    """Reach-avoid synthesis problem: reach the goal within K grouped steps from x0 with probability >= eta."""

    name: str
    system: LinearSystem
    partition: Partition
    group: int = 1
    K: float = 8
    eta: float = 0.5
    x0: list | None = None
    alpha: float | None = None
    beta: float | None = None
    N0: int = 100
    gamma: float = 2.0
    N_max: int = 1600
    symmetric: bool = False
    rho: int | None = None
    noise: NoiseSampler | None = None
    seed: int = 0

    def validate(self):
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("eta must lie in [0, 1]")
        if self.gamma <= 1.0:
            raise ValueError("gamma must exceed 1")
        if (self.alpha is None) == (self.beta is None):
            raise ValueError("give exactly one of alpha and beta")
        if self.system.n != self.partition.dim:
            raise ValueError("system and partition dimensions differ")
        if self.x0 is not None and self.partition.locate(self.x0) is ABSORBING:
            raise ValueError(f"initial state {self.x0} lies outside the partitioned domain")
        if self.rho is not None and math.isinf(self.K):
            raise ValueError("aggregation (rho) needs a finite horizon")
        return self

    @property
    def confidence_mode(self):
        if self.rho is not None:
            return "aggregated"
        return "symmetric" if self.symmetric else "generic"


def _boxes_to_cells(boxes, counts):
    """Cell-index boxes: each box lists an inclusive [lo, hi] index range per dimension."""
    cells = set()
    for box in boxes or []:
        if len(box) != len(counts):
            raise ValueError(f"cell box {box} does not match grid dimension {len(counts)}")
        cells.update(itertools.product(*[range(int(lo), int(hi) + 1) for lo, hi in box]))
    return cells


def _horizon(v):
    if isinstance(v, str) and v.lower() in ("inf", "infinity", "oo"):
        return math.inf
    return v if isinstance(v, float) and math.isinf(v) else int(v)


def spec_from_dict(cfg) -> ProblemSpec:
    if cfg.get("schema", SCHEMA) != SCHEMA:
        raise ValueError(f"unsupported config schema {cfg.get('schema')!r}, expected {SCHEMA}")
    s = cfg["system"]
    box = s.get("input_box", {})
    system = LinearSystem(s["A"], s["B"], s.get("q"), box.get("low"), box.get("high"))
    p = cfg["partition"]
    counts = tuple(p["counts"])
    part = Partition(p["origin"], p["widths"], counts,
                     _boxes_to_cells(cfg.get("goal"), counts),
                     _boxes_to_cells(cfg.get("critical"), counts) - _boxes_to_cells(cfg.get("goal"), counts))
    prop = cfg.get("property", {})
    conf = cfg.get("confidence", {})
    samp = cfg.get("sampling", {})
    scheme = cfg.get("scheme", {})
    noise = sampler_from_dict(cfg["noise"]) if "noise" in cfg else None
    return ProblemSpec(
        name=cfg.get("name", "custom"), system=system, partition=part, group=int(s.get("group", 1)),
        K=_horizon(prop.get("K", 8)), eta=float(prop.get("eta", 0.5)), x0=prop.get("x0"),
        alpha=conf.get("alpha"), beta=conf.get("beta"),
        N0=int(samp.get("N0", 100)), gamma=float(samp.get("gamma", 2.0)), N_max=int(samp.get("Nmax", 1600)),
        symmetric=bool(scheme.get("symmetric", False)), rho=scheme.get("rho"),
        noise=noise, seed=int(cfg.get("seed", 0)),
    ).validate()


def load_config(path) -> ProblemSpec:
    with open(path) as fh:
        return spec_from_dict(yaml.safe_load(fh))
