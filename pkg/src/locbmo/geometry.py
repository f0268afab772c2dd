"""Annular decay, weak and monotone geodesic properties, and chain balls."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .norms import evenly_spaced
from .space import Ball, DiscreteSpace, ball_volumes

DELTA_GRID = tuple(round(0.1 * k, 1) for k in range(1, 11))
_TOL = 1e-12


# -- annular decay -----------------------------------------------------------


@dataclass(frozen=True)
class AnnularDecayCertificate:
    delta: float
    k_const: float
    worst_triple: tuple  # (x, r, s)
    table: tuple = ()  # ((delta, K), ...)
    samples: int = 0


def _annulus_samples(space: DiscreteSpace, sample_budget, r_count, r_floor, tau):
    """(centers, r, s) with s a lattice multiple of the spacing and r > tau * s."""
    h = space.spacing
    centers = evenly_spaced(space.size, sample_budget)
    r_lo = max(r_floor, h)
    if r_lo >= space.diam:
        raise ValueError("radius floor exceeds the diameter")
    radii = np.geomspace(r_lo, space.diam, r_count)
    rs, ss = [], []
    for r in radii:
        top = max(1, int(math.floor(r / (tau * h) - 1e-9)))
        mult = np.unique(np.round(np.geomspace(1, top, min(top, 12))).astype(int))
        s = mult * h
        s = s[r > tau * s]
        rs.extend([r] * len(s))
        ss.extend(s)
    return centers, np.asarray(rs), np.asarray(ss)


def _annulus_ratios(space, centers, rs, ss):
    # (mu(B(x, r+s)) - mu(B(x, r))) / mu(B(x, r)) per center and (r, s) pair
    # the outer radius is shrunk by round-off size so that a lattice sphere at
    # exactly r + s stays outside the open ball
    inner = ball_volumes(space, centers, rs)
    outer = ball_volumes(space, centers, (rs + ss) * (1 - 1e-12))
    return (outer - inner) / inner


def annular_decay_certificate(
    space: DiscreteSpace,
    sample_budget: int | None = 200,
    r_count: int = 24,
    r_floor_factor: float = 5.0,
    delta_grid=DELTA_GRID,
    k_cap: float | None = None,
) -> AnnularDecayCertificate:
    """Fit (delta, K) in mu(B(x,r+s)) - mu(B(x,r)) <= K (s/r)^delta mu(B(x,r)).

    Radii start at ``r_floor_factor * spacing``: below that the lattice
    shells dominate the annulus.  The pair is chosen by largest delta, then
    smallest K; with ``k_cap`` only deltas whose K stays below the cap count.
    """
    if space.size < 2:
        raise ValueError("annular decay needs at least two points")
    centers, rs, ss = _annulus_samples(space, sample_budget, r_count, r_floor_factor * space.spacing, 1.0)
    ann = _annulus_ratios(space, centers, rs, ss)
    lq = np.log(ss / rs)
    table = []
    worst = {}
    for d in delta_grid:
        ratio = ann / np.exp(d * lq)[None, :]
        a = int(np.argmax(ratio))
        i, j = divmod(a, ratio.shape[1])
        table.append((float(d), float(ratio.flat[a])))
        worst[float(d)] = (int(centers[i]), float(rs[j]), float(ss[j]))
    ok = [(d, k) for d, k in table if k_cap is None or k <= k_cap]
    if not ok:
        raise ValueError("no delta meets the K cap")
    d, k = max(ok, key=lambda dk: (dk[0], -dk[1]))
    return AnnularDecayCertificate(d, max(k, 1.0), worst[d], tuple(table), ann.size)


def p_tau_constant(space: DiscreteSpace, tau: float, delta: float, sample_budget: int | None = 200,
                   r_count: int = 24, r_floor_factor: float = 5.0) -> float:
    """Sup ratio in the annulus inequality restricted to r > tau * s."""
    centers, rs, ss = _annulus_samples(space, sample_budget, r_count, r_floor_factor * space.spacing, tau)
    ann = _annulus_ratios(space, centers, rs, ss)
    return float((ann / (ss / rs) ** delta).max())


def p_tau_convert(tau: float, c_p_tau: float, delta: float, c1: float, direction: str = "ii") -> float:
    """Constant conversion between the r > tau s form and the r > s form.

    direction "ii": ceil(tau)^(1 - delta) * c_p_tau * c1;
    direction "i": the constant carries over unchanged.
    """
    if not tau > 1:
        raise ValueError("tau must exceed 1")
    if not 0 < delta <= 1:
        raise ValueError("delta must lie in (0, 1]")
    if c1 < 1:
        raise ValueError("doubling constant is at least 1")
    if direction == "i":
        return float(c_p_tau)
    if direction != "ii":
        raise ValueError("direction is 'i' or 'ii'")
    return math.ceil(tau) ** (1 - delta) * c_p_tau * c1


# -- weak geodesic -----------------------------------------------------------


@dataclass(frozen=True)
class GeodesicCertificate:
    kind: str  # weak | monotone
    constant: float
    status: str  # holds | fails
    witness: dict | None = None
    vacuous: bool = False
    by_scale: tuple = ()  # ((s, sup ratio), ...)


def weak_geodesic_certificate(
    space: DiscreteSpace,
    sample_budget: int | None = 40,
    s_floor_fraction: float = 1.0,
    s_count: int = 12,
    s_top: float | None = None,
    r_count: int = 24,
    growth_factor: float = 10.0,
) -> GeodesicCertificate:
    """C3 = sup of d(y, closed B(x, r)) / s over y in the closed shell r < d(x, y) <= r + s.

    Scales run from ``s_top`` down to ``s_floor_fraction * spacing``.  Radii
    combine a log grid with r = d(x, w) - s for the distinct distances d(x, w),
    which places a lattice point exactly on the outer sphere.  The property is
    reported failing when the sup at the smallest s exceeds the sup at the
    largest s by more than ``growth_factor``.
    """
    if space.size < 2:
        raise ValueError("need at least two points")
    h = space.spacing
    s_floor = s_floor_fraction * h
    s_top = 4 * h if s_top is None else s_top
    s_vals = np.geomspace(s_top, s_floor, s_count) if s_top > s_floor else np.array([s_floor])
    centers = evenly_spaced(space.size, sample_budget)
    origin = np.sqrt((space.points**2).sum(axis=1))
    best = np.full(len(s_vals), -np.inf)
    wit = [None] * len(s_vals)
    rgrid = np.geomspace(s_floor, space.diam, r_count)
    order_all, sd_all = space._sorted_rows
    for x in centers:
        order, sd = order_all[x], sd_all[x]
        # cum[m - 1, y]: distance from y to the m nearest points of x
        cum = np.minimum.accumulate(space.dist[order], axis=0)
        distinct = np.unique(sd[1:])
        for k, s in enumerate(s_vals):
            rs = np.concatenate([rgrid, distinct - s])
            rs = np.unique(rs[rs > 0])
            m_in = np.searchsorted(sd, rs * (1 + _TOL), side="right")
            m_out = np.searchsorted(sd, (rs + s) * (1 + _TOL), side="right")
            for r, a, b in zip(rs, m_in, m_out):
                if b <= a:
                    continue
                ys = order[a:b]
                vals = cum[a - 1, ys] / s
                # equal distances to x: the last point in sorted order wins
                i = len(vals) - 1 - int(np.argmax(vals[::-1]))
                val = float(vals[i])
                cur = wit[k]
                # ties go to the smaller radius, then to the center nearest the origin
                better = cur is None or val > best[k] * (1 + 1e-12)
                tie = cur is not None and abs(val - best[k]) <= 1e-12 * best[k]
                if better or tie and (r, origin[x]) < (cur["r"], origin[cur["x"]]):
                    best[k] = max(val, best[k])
                    wit[k] = {"x": int(x), "r": float(r), "s": float(s), "y": int(ys[i]), "distance": float(cum[a - 1, ys[i]])}
    seen = np.isfinite(best)
    by_scale = tuple((float(s), float(b)) for s, b in zip(s_vals, best) if np.isfinite(b))
    if not seen.any():
        return GeodesicCertificate("weak", 0.0, "holds", None, True, ())
    c3 = float(best[seen].max())
    lo, hi = int(np.flatnonzero(seen)[-1]), int(np.flatnonzero(seen)[0])
    fails = best[hi] > 0 and best[lo] > growth_factor * best[hi] or best[hi] == 0 and best[lo] > 0 and lo != hi
    vacuous = not seen.all()
    if fails:
        return GeodesicCertificate("weak", c3, "fails", wit[lo], vacuous, by_scale)
    return GeodesicCertificate("weak", c3, "holds", None, vacuous, by_scale)


# -- monotone geodesic -------------------------------------------------------


@dataclass(frozen=True)
class MonotoneChain:
    points: tuple
    ok: bool
    method: str  # greedy | search | none
    stuck: int | None = None


def _candidates(space: DiscreteSpace, cur: int, x: int, s: float, c4: float) -> np.ndarray:
    dcur = space.dist_rows(cur)[0]
    dx = space.dist_rows(x)[0]
    ok = (dcur <= c4 * s * (1 + _TOL)) & (dx <= dx[cur] - s + _TOL * max(1.0, s))
    idx = np.flatnonzero(ok)
    return idx[np.lexsort((idx, dx[idx]))]


def monotone_geodesic_chain(space: DiscreteSpace, x: int, y: int, s: float, c4: float,
                            search_limit: int = 200_000) -> MonotoneChain:
    """Chain y = x_0, ..., x_m = x with steps <= c4 s and distance to x dropping by >= s.

    Greedy nearest-progress first; if it gets stuck, a depth-first search over
    the same candidate sets decides whether any chain exists.
    """
    if c4 < 1:
        raise ValueError("c4 must be at least 1")
    if not s > 0:
        raise ValueError("s must be positive")
    if space.dist_rows(x)[0][y] < s * (1 - _TOL):
        raise ValueError("need d(x, y) >= s")
    chain = [int(y)]
    cur = int(y)
    while cur != x:
        cand = _candidates(space, cur, x, s, c4)
        if len(cand) == 0:
            break
        cur = int(cand[0])
        chain.append(cur)
    if cur == x:
        return MonotoneChain(tuple(chain), True, "greedy")
    stuck = cur
    failed = set()
    path = [int(y)]
    stack = [iter(_candidates(space, int(y), x, s, c4))]
    steps = 0
    while stack and steps < search_limit:
        steps += 1
        nxt = next(stack[-1], None)
        if nxt is None:
            failed.add(path.pop())
            stack.pop()
            continue
        nxt = int(nxt)
        if nxt in failed:
            continue
        path.append(nxt)
        if nxt == x:
            return MonotoneChain(tuple(path), True, "search")
        stack.append(iter(_candidates(space, nxt, x, s, c4)))
    return MonotoneChain(tuple(chain), False, "none", stuck)


def monotone_geodesic_certificate(space: DiscreteSpace, c4: float, s_values, sample_budget: int | None = 30):
    """Check chains for sampled pairs at each scale; returns a GeodesicCertificate."""
    pts = evenly_spaced(space.size, sample_budget)
    for s in s_values:
        for x in pts:
            for y in pts:
                if space.dist_rows(int(x))[0][y] < s:
                    continue
                ch = monotone_geodesic_chain(space, int(x), int(y), float(s), c4)
                if not ch.ok:
                    return GeodesicCertificate("monotone", c4, "fails",
                                               {"x": int(x), "y": int(y), "s": float(s), "stuck": ch.stuck})
    return GeodesicCertificate("monotone", c4, "holds")


# -- chain balls -------------------------------------------------------------


class ChainBallError(RuntimeError):
    pass


@dataclass(frozen=True)
class ChainBallWitness:
    base_ball: Ball
    central: Ball
    target: int
    chain: tuple  # balls from the central one to a ball containing the target
    alpha: float
    beta: float
    t_trace: tuple = ()

    def to_json(self) -> dict:
        return {
            "base_ball": asdict(self.base_ball),
            "central": asdict(self.central),
            "target": self.target,
            "chain": [asdict(b) for b in self.chain],
            "alpha": self.alpha,
            "beta": self.beta,
            "t_trace": list(self.t_trace),
        }


def _first_step(space, start, z, t, c4):
    chain = monotone_geodesic_chain(space, z, start, t / c4, c4)
    if not chain.ok:
        raise ChainBallError(f"no monotone chain from {start} to {z} at scale {t / c4}")
    return chain.points[1]


def chain_ball_construct(space: DiscreteSpace, base: Ball, x: int, c4: float, s_resolver=None) -> ChainBallWitness:
    """Chain of sub-balls from B(z, 3r/4) to the point x, following monotone chains toward z.

    ``s_resolver(start, z, t)`` returns the first point of a monotone chain
    from ``start`` to ``z`` with steps at most t and progress t / c4.
    """
    z, r = base.center, base.radius
    dz = space.dist_rows(z)[0]
    if not dz[x] < r:
        raise ValueError("x must lie in the base ball")
    resolve = s_resolver or (lambda start, zz, t: _first_step(space, start, zz, t, c4))
    central = Ball(z, 0.75 * r)
    alpha, beta = 4 * c4 / 3, 4.0 / 3.0
    if dz[x] < central.radius:
        w = ChainBallWitness(base, central, int(x), (central,), alpha, beta, ())
        _raise_on_violation(space, w)
        return w
    outer = []
    ts = []
    cur = int(x)
    while True:
        t = (r - dz[cur]) / 2
        ts.append(float(t))
        outer.append(Ball(cur, 1.5 * t))
        nxt = int(resolve(cur, z, t))
        if dz[nxt] < central.radius:
            break
        cur = nxt
        if len(ts) > space.size:
            raise ChainBallError("chain construction did not terminate")
    w = ChainBallWitness(base, central, int(x), (central,) + tuple(reversed(outer)), alpha, beta, tuple(ts))
    _raise_on_violation(space, w)
    return w


def verify_chain_ball(space: DiscreteSpace, w: ChainBallWitness, tol: float = 1e-12) -> list:
    """Violated clauses of the chain-ball conditions; empty when the witness is sound."""
    bad = []
    z, r = w.base_ball.center, w.base_ball.radius
    dist = space.dist_rows
    if w.chain[0] != w.central:
        bad.append("i: chain does not start at the central ball")
    last = w.chain[-1]
    if not dist(last.center)[0][w.target] < last.radius:
        bad.append("i: target not in the last ball")
    for a, b in zip(w.chain, w.chain[1:]):
        both = (dist(a.center)[0] < a.radius) & (dist(b.center)[0] < b.radius)
        if not both.any():
            bad.append(f"ii: {a} and {b} do not meet")
    dz = dist(z)[0]
    for b in w.chain:
        if not dist(b.center)[0][w.target] < w.alpha * b.radius:
            bad.append(f"iii: target outside alpha * {b}")
        if w.beta * b.radius > (r - dz[b.center]) * (1 + tol) + tol:
            bad.append(f"iv: beta-depth fails for {b}")
        members = dist(b.center)[0] < b.radius
        if np.any(dz[members] >= r):
            bad.append(f"containment: {b} leaves the base ball")
    return bad


def _raise_on_violation(space, w):
    bad = verify_chain_ball(space, w)
    if bad:
        raise ChainBallError("; ".join(bad))


def growth_holds(trace, c4: float, tol: float = 1e-12) -> bool:
    """t_{j+1} - t_j >= t_j / (2 c4) along a construction trace."""
    return all(b - a >= a / (2 * c4) * (1 - tol) - tol for a, b in zip(trace, trace[1:]))


def chain_length_bound(r: float, t0: float, c4: float) -> float:
    """Upper bound on k(x) from geometric growth of t_j up to r/8."""
    return math.log(r / (8 * t0)) / math.log(1 + 1 / (2 * c4)) + 1
