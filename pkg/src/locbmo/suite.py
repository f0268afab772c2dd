"""Named test functions on grid spaces for the square-function experiments."""
from __future__ import annotations

import math

import numpy as np

from .counterexample import grid_functions
from .space import DiscreteSpace

DEFAULT_SUITE = (
    {"kind": "one"},
    {"kind": "log_spike"},
    {"kind": "fg_abs"},
    {"kind": "indicator", "lo": 0.0, "hi": 1.0},
    {"kind": "eigenvector", "index": 0},
    {"kind": "eigenvector", "index": 1},
    {"kind": "random", "seed": 0},
)


def random_smooth(space: DiscreteSpace, seed: int, modes: int = 8, period: float = 8.0) -> np.ndarray:
    """Seeded trigonometric sum with 1/k decay; values depend only on the coordinates."""
    rng = np.random.default_rng(seed)
    x = space.points[:, 0]
    amp = rng.standard_normal(modes) / np.arange(1, modes + 1)
    phase = rng.uniform(0, 2 * math.pi, modes)
    k = np.arange(1, modes + 1)
    return (amp[None, :] * np.cos(2 * math.pi * k[None, :] * x[:, None] / period + phase[None, :])).sum(axis=1)


def eigenvector(family, index: int) -> np.ndarray:
    """L^2(mu)-normalized eigenvector, signed so its largest entry is positive."""
    space = family.space
    v = family.eigvecs[:, index] / np.sqrt(space.masses)
    if v[np.argmax(np.abs(v))] < 0:
        v = -v
    return v


def suite_name(spec: dict) -> str:
    kind = spec["kind"]
    if kind == "eigenvector":
        return f"eigenvector{spec['index']}"
    if kind == "random":
        return f"random{spec['seed']}"
    if kind == "indicator":
        return f"indicator[{spec['lo']:g},{spec['hi']:g}]"
    return kind


def build_suite(space: DiscreteSpace, specs=DEFAULT_SUITE, family=None, seed: int | None = None) -> dict:
    """Evaluate function specs on ``space``; ``seed`` shifts every random member's seed."""
    out = {}
    x = space.points[:, 0]
    for spec in specs:
        kind = spec["kind"]
        if kind == "one":
            v = np.ones(space.size)
        elif kind == "zero":
            v = np.zeros(space.size)
        elif kind == "log_spike":
            v = grid_functions(space).f
        elif kind == "fg_abs":
            v = np.abs(grid_functions(space).fg)
        elif kind == "indicator":
            v = ((x >= spec["lo"]) & (x <= spec["hi"])).astype(float)
        elif kind == "eigenvector":
            if family is None:
                raise ValueError("eigenvector members need a kernel family")
            v = eigenvector(family, int(spec["index"]))
        elif kind == "random":
            v = random_smooth(space, int(spec["seed"]) + (seed or 0), int(spec.get("modes", 8)))
        else:
            raise ValueError(f"unknown suite member {kind!r}")
        out[suite_name(spec)] = v
    return out
