"""A bmo function whose absolute value is not in blo.

``f(x) = log(2/|x|)`` near the origin times the bmo multiplier
``g(x) = sin Psi_*(|x|)``.  All interval computations use the coordinate
``u = log(2/x)``, in which the critical radii are ``u_k = log 2 * e^{pi k/4 - 1}``
and ``Psi_* = 1 + log(u / log 2)``; this keeps radii far below the double
underflow threshold exact.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from .admissible import constant_rho
from .norms import BallFamily, build_ball_family, blo_rho_norm, bmo_phi_norm, bmo_rho_norm
from .space import build_grid_space, radius_grid

LOG2 = math.log(2.0)
SQRT2 = math.sqrt(2.0)
KINDS = ("psi", "phi_star", "phi_lower_star", "psi_lower_star")


class ScaleUnresolvableError(ValueError):
    pass


# -- scale functions -------------------------------------------------------


def psi(r: float) -> float:
    """Reciprocal of the integral of dt/t over [min(1, r), 2]."""
    if r <= 0:
        raise ValueError("r must be positive")
    return 1.0 / math.log(2.0 / min(1.0, r))


def psi_lower_star(r: float) -> float:
    if r <= 0:
        raise ValueError("r must be positive")
    if r > 1:
        return 1.0
    return 1.0 + math.log(math.log(2.0 / r) / LOG2)


def psi_lower_star_u(u):
    """Psi_* as a function of u = log(2/r), valid for r <= 1 (u >= log 2)."""
    return 1.0 + np.log(np.asarray(u, dtype=float) / LOG2)


def phi_star(r: float) -> float:
    """Integral of psi(t)/t from 1 to max(r, 2)."""
    if r <= 0:
        raise ValueError("r must be positive")
    return math.log(r) / LOG2 if r >= 2 else 1.0


def eval_scale_fn(kind: str, r: float) -> float:
    """Closed forms; ``phi_star`` and ``phi_lower_star`` use phi = psi."""
    if kind == "psi":
        return psi(r)
    if kind == "phi_star":
        return phi_star(r)
    if kind in ("phi_lower_star", "psi_lower_star"):
        return psi_lower_star(r)
    raise ValueError(f"unknown scale function {kind!r}")


def _log_integral(phi: Callable[[float], float], a: float, b: float) -> float:
    # int_a^b phi(t)/t dt computed in s = log t
    la, lb = math.log(a), math.log(b)
    if la == lb:
        return 0.0
    lo, hi = min(la, lb), max(la, lb)
    pts = [p for p in (0.0,) if lo < p < hi]
    if hi - lo > 50:
        pts += list(-np.geomspace(1.0, -lo, 24)[1:-1]) if lo < -1 else []
        pts = sorted(p for p in pts if lo < p < hi)
    val, _ = quad(lambda s: phi(math.exp(s)), lo, hi, points=pts or None, limit=500,
                  epsabs=0.0, epsrel=1e-13)
    return val if lb > la else -val


def scale_fn_quadrature(kind: str, r: float, phi: Callable[[float], float] = psi) -> float:
    """Same functions by adaptive quadrature of their defining integrals."""
    if r <= 0:
        raise ValueError("r must be positive")
    if kind == "psi":
        return 1.0 / _log_integral(lambda t: 1.0, min(1.0, r), 2.0)
    if kind == "phi_star":
        return _log_integral(phi, 1.0, r if r >= 2 else 2.0)
    if kind in ("phi_lower_star", "psi_lower_star"):
        return _log_integral(phi, r if r <= 1 else 1.0, 2.0)
    raise ValueError(f"unknown scale function {kind!r}")


def psi_lower_star_quadrature_log(log_r: float) -> float:
    """Psi_* at r = e^{log_r} by quadrature in s = log t; usable below underflow."""
    if log_r > 0:
        return 1.0
    if log_r == 0:
        return 1.0
    lo = log_r
    pts = sorted(p for p in (-np.geomspace(1.0, -lo, 40)[1:-1] if lo < -1 else []) if lo < p < 0)
    with warnings.catch_warnings():
        # the requested tolerance sits at round-off level
        warnings.simplefilter("ignore")
        val, _ = quad(lambda s: 1.0 / (LOG2 - s), lo, 0.0, points=pts or None, limit=1000,
                      epsabs=0.0, epsrel=2e-14)
    return 1.0 + val


# -- multiplier and the log function ---------------------------------------


def multiplier_g(x: float) -> float:
    """sin Psi_*(|x|); at x = 0, where no limit exists, 0 is returned."""
    r = abs(float(x))
    return 0.0 if r == 0 else math.sin(psi_lower_star(r))


def f_log(x: float) -> float:
    r = abs(float(x))
    if r > 2:
        return 0.0
    if r == 0:
        raise ValueError("f_log is unbounded at 0; use grid_functions for grid values")
    return math.log(2.0 / r)


@dataclass(frozen=True, eq=False)
class GridFunctions:
    f: np.ndarray
    g: np.ndarray
    fg: np.ndarray
    clamped: np.ndarray  # points where |x| = 0 was replaced by spacing/2


def grid_functions(space) -> GridFunctions:
    """f, g and fg at the grid points; the origin takes the value at spacing/2."""
    r = np.sqrt((space.points**2).sum(axis=1))
    clamped = r == 0
    r = np.where(clamped, 0.5 * space.spacing, r)
    f = np.where(r <= 2, np.log(2.0 / r), 0.0)
    small = r <= 1
    g = np.sin(np.where(small, 1.0 + np.log(np.log(2.0 / np.minimum(r, 1.0)) / LOG2), 1.0))
    return GridFunctions(f, g, f * g, clamped)


# -- critical radii ---------------------------------------------------------


def u_k(k: int) -> float:
    """log(2 / r_k)."""
    if k < 2:
        raise ValueError("critical radii start at k = 2")
    return LOG2 * math.exp(math.pi * k / 4 - 1)


def log_rk(k: int) -> float:
    return LOG2 - u_k(k)


def solve_rk(k: int) -> float:
    """r_k with Psi_*(r_k) = pi k / 4; underflows to 0.0 for k >= 11 (use log_rk)."""
    return 2.0 * math.exp(-u_k(k))


def solve_rk_bisection(k: int) -> float:
    """log r_k by root finding on the quadrature evaluator (independent oracle)."""
    if k < 2:
        raise ValueError("critical radii start at k = 2")
    target = math.pi * k / 4
    lo = -1.0
    while psi_lower_star_quadrature_log(lo) < target:
        lo *= 2
    return brentq(lambda s: psi_lower_star_quadrature_log(s) - target, lo, 0.0,
                  xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)


def critical_radii(ks) -> dict:
    return {int(k): solve_rk(int(k)) for k in ks}


# -- shape of fg on [r_{8m+4}, r_{8m+3}] -----------------------------------


def max_feasible_m() -> int:
    # largest m with u_{8m+4} below the double overflow threshold
    kmax = (math.log(np.finfo(float).max) - math.log(LOG2) + 1) * 4 / math.pi
    return int((kmax - 4) // 8)


def _check_m(m: int):
    if m < 1:
        raise ValueError("m must be >= 1")
    try:
        ua = u_k(8 * m + 4)
    except OverflowError:
        ua = math.inf
    if not math.isfinite(ua):
        raise ScaleUnresolvableError(f"scale unresolvable for m={m}; largest feasible m is {max_feasible_m()}")


@dataclass(frozen=True)
class ShapeReport:
    m: int
    samples: int
    min_fg: float
    min_first_derivative: float  # of x (fg)'(x), sign-equivalent to (fg)'
    max_second_derivative: float  # of x^2 (fg)''(x), sign-equivalent to (fg)''
    endpoint_value: float
    endpoint_expected: float
    ok: bool


def shape_terms(u):
    """fg, x (fg)' and x^2 (fg)'' as functions of u = log(2/x)."""
    u = np.asarray(u, dtype=float)
    p = psi_lower_star_u(u)
    s, c = np.sin(p), np.cos(p)
    return u * s, -(s + c), (s + c) + (c - s) / u


def verify_shape(m: int, samples: int = 1000) -> ShapeReport:
    """Sign conditions of fg on the open interval (r_{8m+4}, r_{8m+3}).

    Samples are uniform in Psi_* over ((2m + 3/4) pi, (2m + 1) pi).  The scaled
    derivatives x (fg)' and x^2 (fg)'' have the signs of (fg)' and (fg)''.
    """
    _check_m(m)
    lo, hi = (2 * m + 0.75) * math.pi, (2 * m + 1) * math.pi
    p = lo + (hi - lo) * (np.arange(samples) + 0.5) / samples
    u = LOG2 * np.exp(p - 1.0)
    fg, d1, d2 = shape_terms(u)
    ub = u_k(8 * m + 3)
    end = float(shape_terms(ub)[0])
    expected = SQRT2 / 2 * ub
    ok = bool(fg.min() >= 0 and d1.min() > 0 and d2.max() < 0
              and abs(end - expected) <= 1e-8 * max(1.0, expected))
    return ShapeReport(m, samples, float(fg.min()), float(d1.min()), float(d2.max()), end, expected, ok)


# -- blo divergence ---------------------------------------------------------


def interval_average(m: int) -> float:
    """Average of fg over [r_{8m+4}, r_{8m+3}] with respect to dx, in log space."""
    _check_m(m)
    ua, ub = u_k(8 * m + 4), u_k(8 * m + 3)
    delta = ua - ub
    top = min(delta, 60.0)

    def integrand(v):
        u = ub + v
        return u * math.sin(1.0 + math.log(u / LOG2)) * math.exp(-v)

    val, _ = quad(integrand, 0.0, top, limit=200, epsabs=0.0, epsrel=1e-12)
    return val / -math.expm1(-delta)


def lower_bound(m: int) -> float:
    """(sqrt 2 / 4) log(2 / r_{8m+3})."""
    return SQRT2 / 4 * u_k(8 * m + 3)


@dataclass
class DivergenceTable:
    rows: list  # (m, log2_r_8m3, interval_average, lower_bound, ratio)
    notes: list
    increasing: bool
    all_above: bool


def blo_divergence(m_list) -> DivergenceTable:
    rows, notes = [], []
    for m in m_list:
        try:
            avg = interval_average(int(m))
        except ScaleUnresolvableError as exc:
            notes.append(str(exc))
            continue
        lb = lower_bound(int(m))
        rows.append((int(m), log_rk(8 * int(m) + 3) / LOG2, avg, lb, avg / lb))
    bounds = [r[3] for r in rows]
    return DivergenceTable(
        rows, notes,
        increasing=all(b2 > b1 for b1, b2 in zip(bounds, bounds[1:])),
        all_above=all(r[2] >= r[3] for r in rows),
    )


# -- grid scans ---------------------------------------------------------------


@dataclass
class BoundednessScan:
    spacings: list
    bmo_sups: list
    bmo_ratios: list
    blo_base: list  # lower-oscillation part over balls with radius >= base_r_min
    blo_extended: list  # same, with small balls around the origin added
    blo_growth: float  # extended / base at the finest spacing
    multiplier_tilde: list  # tilde-BMO^psi functional of Psi_*(|x|)


def bmo_boundedness_scan(
    window: float = 2.5,
    h: float = 0.01,
    center_budget: int | None = 400,
    radius_count: int = 40,
    base_r_min: float = 0.1,
    near_zero: float = 0.05,
) -> BoundednessScan:
    """Local bmo norm of |fg| over grid ball families at spacings h, h/2, h/4.

    The lower-oscillation functional is evaluated on balls with radius at
    least ``base_r_min`` and on the family extended by radii down to the
    spacing around centers within ``near_zero`` of the origin.  This is
    numerical evidence, not a proof.
    """
    spacings, bmo, blo_b, blo_e, tilde = [], [], [], [], []
    for hh in (h, h / 2, h / 4):
        space = build_grid_space(1, window, hh)
        rho = constant_rho(space, 1.0)
        fg = np.abs(grid_functions(space).fg)
        fam = build_ball_family(space, rho, center_budget, radius_count)
        bmo.append(bmo_rho_norm(space, fg, rho, 1.0, fam).total)
        base = build_ball_family(space, rho, center_budget, radius_count,
                                 radii=radius_grid(space, radius_count, r_min=base_r_min))
        near = np.flatnonzero(np.abs(space.points[:, 0]) <= near_zero)
        ext = build_ball_family(space, rho, None, radius_count)
        ext = ext.subset(np.isin(ext.centers, near))
        both = BallFamily(np.concatenate([base.centers, ext.centers]),
                          np.concatenate([base.radii, ext.radii]),
                          np.concatenate([base.class_d, ext.class_d]))
        blo_b.append(blo_rho_norm(space, fg, rho, 1.0, base).oscillation_part)
        blo_e.append(blo_rho_norm(space, fg, rho, 1.0, both).oscillation_part)
        r = np.maximum(np.abs(space.points[:, 0]), hh / 2)
        psi_star = np.array([psi_lower_star(x) for x in r])
        tilde.append(bmo_phi_norm(space, psi_star, np.vectorize(psi), fam, tilde=True))
        spacings.append(hh)
    ratios = [bmo[i + 1] / bmo[i] for i in range(2)]
    return BoundednessScan(spacings, bmo, ratios, blo_b, blo_e, blo_e[-1] / blo_b[-1], tilde)
