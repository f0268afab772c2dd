"""Ball averages, mean oscillations and the localized BMO/BLO norms.

All suprema over balls are taken over an explicit :class:`BallFamily`, so
every norm is a lower approximation of the continuum supremum and comes
with the ball that attains it.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from .admissible import AdmissibleFn
from .space import Ball, DiscreteSpace, radius_grid


class EmptyBallError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class BallFamily:
    centers: np.ndarray
    radii: np.ndarray
    class_d: np.ndarray

    def __len__(self) -> int:
        return len(self.centers)

    def ball(self, i: int) -> Ball:
        return Ball(int(self.centers[i]), float(self.radii[i]))

    def by_radius(self) -> Iterator[tuple[float, np.ndarray]]:
        """Yield ``(radius, ball indices)`` groups in increasing radius order."""
        for r in np.unique(self.radii):
            yield float(r), np.flatnonzero(self.radii == r)

    def classified(self, rho) -> "BallFamily":
        """Same balls with the class-D mask recomputed from ``rho``."""
        rho_v = np.asarray(getattr(rho, "values", rho), dtype=float)
        return BallFamily(self.centers, self.radii, self.radii >= rho_v[self.centers])

    def subset(self, mask) -> "BallFamily":
        mask = np.asarray(mask, dtype=bool)
        return BallFamily(self.centers[mask], self.radii[mask], self.class_d[mask])


@dataclass(frozen=True)
class NormReport:
    oscillation_part: float
    local_part: float
    total: float
    argmax_balls: tuple  # (oscillation ball or None, local ball or None)
    q: float = 1.0

    @property
    def parts_max(self) -> float:
        return max(self.oscillation_part, self.local_part)


def evenly_spaced(n: int, budget: int | None) -> np.ndarray:
    if budget is None or budget >= n:
        return np.arange(n)
    return np.unique(np.round(np.linspace(0, n - 1, budget)).astype(int))


def build_ball_family(
    space: DiscreteSpace,
    rho: AdmissibleFn | np.ndarray,
    center_budget: int | None = 400,
    radius_count: int = 40,
    radii=None,
    extra_centers=(),
) -> BallFamily:
    """Centers (evenly subsampled above ``center_budget``) times a log radius grid."""
    rho_v = np.asarray(getattr(rho, "values", rho), dtype=float)
    centers = evenly_spaced(space.size, center_budget)
    if len(extra_centers):
        centers = np.unique(np.concatenate([centers, np.asarray(extra_centers, dtype=int)]))
    radii = radius_grid(space, radius_count) if radii is None else np.asarray(radii, dtype=float)
    cc, rr = np.meshgrid(centers, radii, indexing="ij")
    cc, rr = cc.ravel(), rr.ravel()
    return BallFamily(cc, rr, rr >= rho_v[cc])


def _members(space: DiscreteSpace, b: Ball) -> np.ndarray:
    m = space.dist_rows(b.center)[0] < b.radius
    if not m.any():
        raise EmptyBallError(f"empty ball {b}")
    return m


def ball_average(space: DiscreteSpace, f, b: Ball) -> float:
    m = _members(space, b)
    w = space.masses[m]
    return float(w @ np.asarray(f, dtype=float)[m] / w.sum())


def mean_oscillation(space: DiscreteSpace, f, b: Ball, q: float = 1.0) -> float:
    if q < 1:
        raise ValueError("q must be >= 1")
    m = _members(space, b)
    w = space.masses[m] / space.masses[m].sum()
    fb = np.asarray(f, dtype=float)[m]
    return float((w @ np.abs(fb - w @ fb) ** q) ** (1 / q))


def essinf_ball(space: DiscreteSpace, f, b: Ball) -> float:
    return float(np.asarray(f, dtype=float)[_members(space, b)].min())


def ball_statistics(space: DiscreteSpace, f, family: BallFamily, kind: str, q: float = 1.0) -> np.ndarray:
    """Per-ball values of one functional for every ball of ``family``.

    kind: ``"mo"`` (mean |f - f_B|^q)^(1/q), ``"lo"`` (mean (f - min_B f)^q)^(1/q),
    ``"size"`` (mean |f|^q)^(1/q), ``"avg"`` f_B, ``"min"`` min_B f.
    """
    f = np.asarray(f, dtype=float)
    out = np.empty(len(family))
    for r, idx in family.by_radius():
        m = space.dist_rows(family.centers[idx]) < r
        w = m * space.masses[None, :]
        w /= w.sum(axis=1, keepdims=True)
        if kind == "avg":
            out[idx] = w @ f
        elif kind == "min":
            out[idx] = np.where(m, f[None, :], np.inf).min(axis=1)
        elif kind == "size":
            out[idx] = (w @ np.abs(f) ** q) ** (1 / q)
        elif kind == "mo":
            fb = w @ f
            out[idx] = ((w * np.abs(f[None, :] - fb[:, None]) ** q).sum(axis=1)) ** (1 / q)
        elif kind == "lo":
            lo = np.where(m, f[None, :], np.inf).min(axis=1)
            out[idx] = ((w * (f[None, :] - lo[:, None]) ** q).sum(axis=1)) ** (1 / q)
        else:
            raise ValueError(f"unknown statistic {kind!r}")
    return out


def _localized_norm(space, f, rho, family, q, osc_kind) -> NormReport:
    if rho is not None:
        family = family.classified(rho)
    if len(family) == 0:
        raise ValueError("empty ball family")
    if q < 1:
        raise ValueError("q must be >= 1")
    small = ~family.class_d
    osc = loc = 0.0
    osc_ball = loc_ball = None
    if small.any():
        sub = family.subset(small)
        vals = ball_statistics(space, f, sub, osc_kind, q)
        i = int(np.argmax(vals))
        osc, osc_ball = float(vals[i]), sub.ball(i)
    if family.class_d.any():
        sub = family.subset(family.class_d)
        vals = ball_statistics(space, f, sub, "size", q)
        i = int(np.argmax(vals))
        loc, loc_ball = float(vals[i]), sub.ball(i)
    return NormReport(osc, loc, osc + loc, (osc_ball, loc_ball), q)


def bmo_rho_norm(space: DiscreteSpace, f, rho, q: float, family: BallFamily) -> NormReport:
    """Localized BMO norm: oscillation over small balls plus size over class-D balls."""
    return _localized_norm(space, f, rho, family, q, "mo")


def blo_rho_norm(space: DiscreteSpace, f, rho, q: float, family: BallFamily) -> NormReport:
    """Localized BLO norm: mean of (f - min_B f)^q over small balls plus size over class-D balls."""
    return _localized_norm(space, f, rho, family, q, "lo")


def bmo_phi_norm(
    space: DiscreteSpace,
    f,
    phi: Callable[[np.ndarray], np.ndarray],
    family: BallFamily,
    tilde: bool = False,
) -> float:
    """sup over the family of MO(f, B) / phi(r_B), plus |f_{B(0,1)}| when ``tilde``."""
    mo = ball_statistics(space, f, family, "mo", 1.0)
    val = float((mo / phi(family.radii)).max())
    if tilde:
        val += abs(ball_average(space, f, Ball(space.index_of([0.0] * space.dim), 1.0)))
    return val
