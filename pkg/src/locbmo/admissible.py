"""Admissible functions rho, Schrodinger auxiliary radii and reverse Holder constants."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .space import DiscreteSpace, ball_integrals, ball_volumes, radius_grid

DEFAULT_K0_GRID = (0.0, 0.25, 0.5, 1.0, 2.0, 4.0)


class RhoInfiniteError(ValueError):
    pass


class VanishingPotentialError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class AdmissibleFn:
    values: np.ndarray
    c0: float = float("nan")
    k0: float = float("nan")
    capped: np.ndarray | None = None

    def __post_init__(self):
        if not np.all(self.values > 0):
            raise ValueError("rho must be strictly positive")


@dataclass(frozen=True, eq=False)
class Potential:
    values: np.ndarray
    spec: dict = field(default_factory=dict)

    def __post_init__(self):
        if np.any(self.values < 0):
            raise ValueError("potential must be non-negative")


@dataclass(frozen=True)
class AdmissibilityCertificate:
    c0: float
    k0: float
    curve: tuple  # ((k0, c0), ...) over the whole k0 grid


def constant_rho(space: DiscreteSpace, value: float = 1.0) -> AdmissibleFn:
    return AdmissibleFn(np.full(space.size, float(value)), c0=1.0, k0=0.0)


def potential_from_spec(space: DiscreteSpace, spec: dict) -> Potential:
    """Build V from ``{"kind": constant|power|indicator|table, ...}``.

    power: ``scale * |x|^exponent``; indicator: ``scale`` on the box
    ``[lo, hi]`` along every axis, zero elsewhere; table: explicit values.
    """
    kind = spec["kind"]
    pts = space.points
    r = np.sqrt((pts**2).sum(axis=1))
    scale = float(spec.get("scale", spec.get("value", 1.0)))
    if kind == "constant":
        v = np.full(space.size, scale)
    elif kind == "power":
        v = scale * r ** float(spec["exponent"])
    elif kind == "indicator":
        lo, hi = float(spec["lo"]), float(spec["hi"])
        inside = np.all((pts >= lo) & (pts <= hi), axis=1)
        v = np.where(inside, scale, 0.0)
    elif kind == "table":
        v = np.asarray(spec["values"], dtype=float)
        if v.shape != (space.size,):
            raise ValueError("table potential needs one value per point")
    else:
        raise ValueError(f"unknown potential kind {kind!r}")
    return Potential(v, dict(spec))


def schrodinger_rho(space: DiscreteSpace, v: Potential, radii=None) -> AdmissibleFn:
    """rho(x) = sup{r : r^2 * (V averaged over B(x, r)) <= 1} on a radius grid.

    The whole grid is swept (the condition need not be monotone in r).  When
    the condition still holds at the largest radius, rho is capped at
    ``2 * diam`` and flagged in ``capped``.
    """
    vals = np.asarray(v.values, dtype=float)
    if not np.any(vals > 0):
        raise RhoInfiniteError("rho is infinite: potential vanishes on the window")
    radii = radius_grid(space, 200) if radii is None else np.asarray(radii, dtype=float)
    centers = np.arange(space.size)
    vol = ball_volumes(space, centers, radii)
    vint = ball_integrals(space, vals, centers, radii)
    ok = radii[None, :] ** 2 * vint / vol <= 1.0
    rho = np.full(space.size, radii[0])
    any_ok = ok.any(axis=1)
    last = ok.shape[1] - 1 - np.argmax(ok[:, ::-1], axis=1)
    rho[any_ok] = radii[last[any_ok]]
    capped = ok[:, -1]
    rho[capped] = 2.0 * space.diam
    return AdmissibleFn(rho, capped=capped)


def _admissibility_ratio_log(space: DiscreteSpace, rho: np.ndarray):
    # log of rho(y)/rho(x) and log(1 + d/rho(y)) over all pairs (x rows, y cols)
    lr = np.log(rho)
    ratio = lr[None, :] - lr[:, None]
    growth = np.log1p(space.dist / rho[None, :])
    return ratio, growth


def admissibility_certificate(
    space: DiscreteSpace, rho, k0_grid: Sequence[float] = DEFAULT_K0_GRID
) -> AdmissibilityCertificate:
    """Smallest C0 over the k0 grid with 1/rho(x) <= C0/rho(y) (1 + d/rho(y))^k0.

    Ties in C0 go to the smaller k0.
    """
    rho = np.asarray(getattr(rho, "values", rho), dtype=float)
    if not np.all(rho > 0):
        raise ValueError("rho must be strictly positive")
    ratio, growth = _admissibility_ratio_log(space, rho)
    curve = []
    for k0 in k0_grid:
        c0 = float(np.exp((ratio - k0 * growth).max()))
        curve.append((float(k0), max(c0, 1.0)))
    best = min(curve, key=lambda kc: (kc[1], kc[0]))
    return AdmissibilityCertificate(c0=best[1], k0=best[0], curve=tuple(curve))


def with_certificate(space: DiscreteSpace, rho: AdmissibleFn, k0_grid=DEFAULT_K0_GRID) -> AdmissibleFn:
    cert = admissibility_certificate(space, rho, k0_grid)
    return AdmissibleFn(rho.values, c0=cert.c0, k0=cert.k0, capped=rho.capped)


def admissibility_holds(space: DiscreteSpace, rho, c0: float, k0: float, rtol: float = 1e-12) -> bool:
    rho = np.asarray(getattr(rho, "values", rho), dtype=float)
    lhs = 1.0 / rho[:, None]
    rhs = c0 / rho[None, :] * (1 + space.dist / rho[None, :]) ** k0
    return bool(np.all(lhs <= rhs * (1 + rtol)))


def comparability_constant(c0: float, k0: float, a: float) -> float:
    """C_a with rho(y)/C_a <= rho(x) <= C_a rho(y) whenever d(x, y) <= a rho(x).

    Applying the admissibility bound in both directions gives
    C_a = C0 (1 + a)^k0.
    """
    return max(1.0, c0 * (1.0 + a) ** k0)


def comparability_holds(space: DiscreteSpace, rho, a: float, c_a: float) -> bool:
    rho = np.asarray(getattr(rho, "values", rho), dtype=float)
    near = space.dist <= a * rho[:, None]
    q = rho[:, None] / rho[None, :]
    tol = 1 + 1e-12
    return bool(np.all((q[near] <= c_a * tol) & (q[near] >= 1 / (c_a * tol))))


def reverse_holder_constant(space: DiscreteSpace, v: Potential, q: float, family) -> float:
    """sup over the family of (avg_B V^q)^(1/q) / avg_B V; zero-average balls skipped."""
    return reverse_holder_scan(space, v, q, family)[0]


def reverse_holder_scan(space: DiscreteSpace, v: Potential, q: float, family):
    """Return (sup ratio, per-ball ratios with NaN where skipped, skipped count)."""
    if not q > 1:
        raise ValueError("reverse Holder order must exceed 1")
    vals = np.asarray(v.values, dtype=float)
    ratios = np.full(len(family), np.nan)
    for r, idx in family.by_radius():
        m = space.dist_rows(family.centers[idx]) < r
        w = m * space.masses[None, :]
        mass = w.sum(axis=1)
        avg1 = (w @ vals) / mass
        avgq = (w @ vals**q) / mass
        pos = avg1 > 0
        ratios[idx[pos]] = avgq[pos] ** (1 / q) / avg1[pos]
    skipped = int(np.isnan(ratios).sum())
    if skipped == len(family):
        raise VanishingPotentialError("potential vanishes on family")
    return float(np.nanmax(ratios)), ratios, skipped
