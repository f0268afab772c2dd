"""Finite discretizations of doubling metric measure spaces.

A :class:`DiscreteSpace` is a grid window of R^d with a metric and positive
point masses.  Balls are open (``d(x, y) < r``) unless ``closed=True``.
Distances are computed from integer lattice coordinates so that ties are
exact and ball membership does not depend on floating-point rounding of the
point coordinates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import shortest_path

METRICS = ("euclidean", "sup_norm", "graph_path")


class SpaceError(ValueError):
    pass


@dataclass(frozen=True)
class Ball:
    center: int
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise SpaceError(f"ball radius must be positive, got {self.radius}")


@dataclass(frozen=True)
class DoublingCertificate:
    c1: float
    c2: float
    n: float
    n_lsq: float
    samples: int


class PairVolume(NamedTuple):
    value: float
    degenerate: bool


@dataclass(frozen=True, eq=False)
class DiscreteSpace:
    """Grid window ``{-extent, ..., extent}^dim`` with pitch ``spacing``."""

    lattice: np.ndarray  # (N, dim) integer coordinates
    spacing: float
    masses: np.ndarray
    metric: str = "euclidean"
    spec: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.metric not in METRICS:
            raise SpaceError(f"unknown metric {self.metric!r}")
        if len(self.masses) != len(self.lattice):
            raise SpaceError("one mass per point required")
        if len(self.lattice) < 2:
            raise SpaceError("a space needs at least two points")
        if not np.all(self.masses > 0) or not np.all(np.isfinite(self.masses)):
            raise SpaceError("point masses must be positive and finite")

    @property
    def size(self) -> int:
        return len(self.lattice)

    @property
    def dim(self) -> int:
        return self.lattice.shape[1]

    @property
    def points(self) -> np.ndarray:
        return self.lattice * self.spacing

    @property
    def total_mass(self) -> float:
        return float(self.masses.sum())

    @cached_property
    def dist(self) -> np.ndarray:
        """Full (N, N) distance matrix."""
        if self.metric == "graph_path":
            return _grid_graph_distances(self.lattice, self.spacing)
        return self.dist_rows(np.arange(self.size))

    def dist_rows(self, rows) -> np.ndarray:
        """Distances from the points ``rows`` to every point, shape (len(rows), N)."""
        rows = np.atleast_1d(np.asarray(rows, dtype=int))
        if self.metric == "graph_path" or "dist" in self.__dict__:
            return self.dist[rows]
        diff = np.abs(self.lattice[rows, None, :] - self.lattice[None, :, :])
        if self.metric == "euclidean":
            lat = np.sqrt((diff.astype(float) ** 2).sum(axis=-1))
        else:
            lat = diff.max(axis=-1).astype(float)
        return lat * self.spacing

    @cached_property
    def diam(self) -> float:
        if self.metric == "graph_path":
            return float(self.dist.max())
        lo, hi = self.lattice.min(axis=0), self.lattice.max(axis=0)
        span = (hi - lo).astype(float)
        if self.metric == "euclidean":
            return float(np.sqrt((span**2).sum()) * self.spacing)
        return float(span.max() * self.spacing)

    @cached_property
    def _sorted_rows(self):
        d = self.dist
        order = np.argsort(d, axis=1, kind="stable")
        return order, np.take_along_axis(d, order, axis=1)

    @cached_property
    def _cum_mass(self):
        order, _ = self._sorted_rows
        return _prefix_sums(self.masses[order])

    def index_of(self, coords: Sequence[float]) -> int:
        """Index of the grid point nearest to ``coords``."""
        c = np.atleast_1d(np.asarray(coords, dtype=float))
        return int(np.argmin(((self.points - c) ** 2).sum(axis=1)))


def _grid_graph_distances(lattice: np.ndarray, spacing: float) -> np.ndarray:
    index = {tuple(p): i for i, p in enumerate(lattice.tolist())}
    src, dst = [], []
    for i, p in enumerate(lattice.tolist()):
        for axis in range(len(p)):
            q = list(p)
            q[axis] += 1
            j = index.get(tuple(q))
            if j is not None:
                src.append(i)
                dst.append(j)
    n = len(lattice)
    adj = coo_matrix((np.full(len(src), spacing), (src, dst)), shape=(n, n)).tocsr()
    return shortest_path(adj, method="D", directed=False)


def _cell_masses_power(lattice: np.ndarray, h: float, a: float) -> np.ndarray:
    dim = lattice.shape[1]
    if dim == 1:
        # exact cell integral of |x|^a
        def prim(x):
            return np.sign(x) * np.abs(x) ** (a + 1) / (a + 1)

        x = lattice[:, 0] * h
        return prim(x + h / 2) - prim(x - h / 2)
    sub = 8
    offs = (np.arange(sub) + 0.5) / sub - 0.5
    grid = np.stack(np.meshgrid(*([offs] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
    pts = (lattice[:, None, :] + grid[None, :, :]) * h
    w = np.sqrt((pts**2).sum(axis=-1)) ** a
    return w.mean(axis=1) * h**dim


def build_grid_space(
    dim: int,
    extent: float,
    spacing: float,
    weight="lebesgue",
    metric: str = "euclidean",
) -> DiscreteSpace:
    """Grid ``{-extent, ..., extent}^dim`` with masses from ``weight``.

    ``weight`` is ``"lebesgue"`` (mass h^dim), ``"counting"`` (mass 1) or
    ``("power", a)`` / ``{"power": a}`` for w(x) = |x|^a with a > -1, in which
    case each point carries the weight's integral over its grid cell.
    """
    if dim not in (1, 2):
        raise SpaceError("only dim 1 and 2 are supported")
    if not extent > 0:
        raise SpaceError("extent must be positive")
    if not (0 < spacing < extent):
        raise SpaceError("spacing must lie in (0, extent)")
    n = int(round(extent / spacing))
    axis = np.arange(-n, n + 1)
    lattice = np.stack(np.meshgrid(*([axis] * dim), indexing="ij"), axis=-1).reshape(-1, dim)

    kind, a = _parse_weight(weight)
    if kind == "lebesgue":
        masses = np.full(len(lattice), spacing**dim)
    elif kind == "counting":
        masses = np.ones(len(lattice))
    else:
        masses = _cell_masses_power(lattice, spacing, a)
    spec = {"dim": dim, "extent": extent, "spacing": spacing, "metric": metric,
            "weight": weight if isinstance(weight, str) else {"power": a}}
    return DiscreteSpace(lattice=lattice, spacing=float(spacing), masses=masses,
                         metric=metric, spec=spec)


def integer_model(extent: int = 10) -> DiscreteSpace:
    """Z with the usual distance and counting measure, on ``{-extent..extent}``."""
    return build_grid_space(1, float(extent), 1.0, "counting")


def space_from_spec(spec: dict) -> DiscreteSpace:
    return build_grid_space(
        int(spec["dim"]), float(spec["extent"]), float(spec["spacing"]),
        spec.get("weight", "lebesgue"), spec.get("metric", "euclidean"),
    )


def _parse_weight(weight):
    if isinstance(weight, str):
        if weight not in ("lebesgue", "counting"):
            raise SpaceError(f"unknown weight {weight!r}")
        return weight, None
    if isinstance(weight, dict):
        a = weight.get("power")
    else:
        name, a = weight
        if name != "power":
            raise SpaceError(f"unknown weight {weight!r}")
    if a is None or not a > -1:
        raise SpaceError("power weight needs exponent a > -1 (local integrability)")
    return "power", float(a)


# -- queries ---------------------------------------------------------------


def ball_members(space: DiscreteSpace, x: int, r: float, closed: bool = False) -> np.ndarray:
    d = space.dist_rows(x)[0]
    return d <= r if closed else d < r


def ball_measure(space: DiscreteSpace, x: int, r: float, closed: bool = False) -> float:
    if not r > 0:
        raise SpaceError("radius must be positive")
    return float(space.masses[ball_members(space, x, r, closed)].sum())


def _prefix_sums(a: np.ndarray) -> np.ndarray:
    return np.concatenate([np.zeros((a.shape[0], 1)), np.cumsum(a, axis=1)], axis=1)


def _lookup(space, cum, centers, radii, closed):
    _, sd = space._sorted_rows
    centers = np.atleast_1d(np.asarray(centers, dtype=int))
    radii = np.asarray(radii, dtype=float)
    side = "right" if closed else "left"
    out = np.empty((len(centers),) + radii.shape[-1:])
    for i, c in enumerate(centers):
        rr = radii if radii.ndim == 1 else radii[i]
        out[i] = cum[c, np.searchsorted(sd[c], rr, side=side)]
    return out


def ball_volumes(space: DiscreteSpace, centers, radii, closed: bool = False) -> np.ndarray:
    """``V(x, r)`` for every center and radius, shape (len(centers), len(radii)).

    ``radii`` may also be a 2-D array with one row of radii per center.
    """
    return _lookup(space, space._cum_mass, centers, radii, closed)


def ball_integrals(space: DiscreteSpace, g, centers, radii, closed: bool = False) -> np.ndarray:
    """Integral of ``g`` over each ``B(x, r)``, same layout as :func:`ball_volumes`."""
    order, _ = space._sorted_rows
    cum = _prefix_sums((np.asarray(g, dtype=float) * space.masses)[order])
    return _lookup(space, cum, centers, radii, closed)


def vxy(space: DiscreteSpace, x: int, y: int) -> PairVolume:
    """``V(x, y) = mu(B(x, d(x, y)))``; the pair x = y is flagged degenerate."""
    if x == y:
        return PairVolume(0.0, True)
    r = float(space.dist_rows(x)[0, y])
    return PairVolume(ball_measure(space, x, r), False)


def vxy_matrix(space: DiscreteSpace) -> np.ndarray:
    """All ``V(x, y)`` at once (zero on the diagonal)."""
    _, sd = space._sorted_rows
    cm = space._cum_mass
    d = space.dist
    out = np.empty_like(d)
    for i in range(space.size):
        out[i] = cm[i, np.searchsorted(sd[i], d[i], side="left")]
    return out


def radius_grid(space: DiscreteSpace, count: int = 40, r_min=None, r_max=None) -> np.ndarray:
    """Log-spaced radii from ``spacing`` to ``diam``."""
    lo = space.spacing if r_min is None else r_min
    hi = space.diam if r_max is None else r_max
    return np.geomspace(lo, hi, count)


def doubling_certificate(
    space: DiscreteSpace,
    lambda_grid: Sequence[float] = (1.5, 2.0, 3.0, 4.0, 8.0),
    radii=None,
    centers=None,
) -> DoublingCertificate:
    """Fit ``C1`` and ``(C2, n)`` with ``mu(B(x, lr)) <= C2 l^n mu(B(x, r))``.

    ``n`` is the least-squares log-log exponent (through the origin, since
    the ratio is 1 at l = 1) and ``c2`` the smallest constant making the
    bound hold on every sample with that exponent.
    """
    lambdas = np.asarray(lambda_grid, dtype=float)
    if np.any(lambdas < 1):
        raise SpaceError("lambda values must be >= 1")
    radii = radius_grid(space) if radii is None else np.asarray(radii, dtype=float)
    centers = np.arange(space.size) if centers is None else np.asarray(centers)
    base = ball_volumes(space, centers, radii)
    c1 = float((ball_volumes(space, centers, 2 * radii) / base).max())

    logs_l, logs_q = [], []
    for lam in lambdas:
        q = ball_volumes(space, centers, lam * radii) / base
        logs_l.append(np.full(q.size, math.log(lam)))
        logs_q.append(np.log(q).ravel())
    ll = np.concatenate(logs_l)
    lq = np.concatenate(logs_q)
    denom = float(ll @ ll)
    n_lsq = float(ll @ lq / denom) if denom > 0 else 0.0
    n = max(n_lsq, 1e-12)
    c2 = float(np.exp((lq - n * ll).max()))
    return DoublingCertificate(c1=max(c1, 1.0), c2=c2, n=n, n_lsq=n_lsq, samples=lq.size)
