"""Littlewood-Paley square functions by quadrature in log t, and the
BMO -> BLO boundedness experiment built on them."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .kernels import KernelFamily
from .norms import BallFamily, blo_rho_norm, bmo_rho_norm
from .space import DiscreteSpace, ball_volumes


@dataclass(frozen=True, eq=False)
class SquareFunctionResult:
    values: np.ndarray
    kind: str  # g | S | g_lambda_star
    lam: float | None
    truncation: tuple

    def __post_init__(self):
        if self.kind not in ("g", "S", "g_lambda_star"):
            raise ValueError(f"unknown square function {self.kind!r}")
        if (self.lam is None) != (self.kind != "g_lambda_star"):
            raise ValueError("lambda is present exactly for g_lambda_star")


def _truncation(family: KernelFamily) -> tuple:
    return (family.grid.t_min, family.grid.t_max)


def g_function(family: KernelFamily, f) -> SquareFunctionResult:
    """sqrt(sum_t |Q_t f(x)|^2 dlog t); ``f`` may be (N,) or (N, F)."""
    q = family.apply(f)
    w = family.grid.log_weights.reshape((-1,) + (1,) * (q.ndim - 1))
    vals = np.sqrt((w * q**2).sum(axis=0))
    return SquareFunctionResult(vals, "g", None, _truncation(family))


@lru_cache(maxsize=4)
def _distance_index(space: DiscreteSpace):
    # sorted distinct distances and the index of d(x, y) among them
    du, inv = np.unique(space.dist, return_inverse=True)
    return du, inv.reshape(space.dist.shape).astype(np.int32)


def _cone_density(family: KernelFamily, f) -> np.ndarray:
    """|Q_t f(y)|^2 mu_y / V_t(y), shape (T, N, F)."""
    space = family.space
    q = family.apply(np.asarray(f, dtype=float).reshape(space.size, -1))
    vt = ball_volumes(space, np.arange(space.size), family.grid.t_values).T  # (T, N)
    return q**2 * (space.masses[None, :] / vt)[:, :, None]


def _shape_like(vals: np.ndarray, f) -> np.ndarray:
    return vals[:, 0] if np.ndim(f) == 1 else vals


def lusin_area(family: KernelFamily, f) -> SquareFunctionResult:
    """Cone {d(x, y) < t} integral of the kernel-weighted density."""
    du, inv = _distance_index(family.space)
    dens = _cone_density(family, f)
    acc = np.zeros(dens.shape[1:])
    for k, t in enumerate(family.grid.t_values):
        cut = np.searchsorted(du, t, side="left")
        acc += family.grid.log_weights[k] * ((inv < cut).astype(float) @ dens[k])
    return SquareFunctionResult(_shape_like(np.sqrt(acc), f), "S", None, _truncation(family))


def g_lambda_stars(family: KernelFamily, f, lams) -> dict:
    """g_lambda* for several lambda sharing one density evaluation."""
    lams = [float(l) for l in lams]
    if any(l <= 0 for l in lams):
        raise ValueError("lambda must be positive")
    du, inv = _distance_index(family.space)
    dens = _cone_density(family, f)
    acc = {l: np.zeros(dens.shape[1:]) for l in lams}
    for k, t in enumerate(family.grid.t_values):
        base = np.log(t / (t + du))
        for l in lams:
            acc[l] += family.grid.log_weights[k] * (np.exp(l * base)[inv] @ dens[k])
    return {
        l: SquareFunctionResult(_shape_like(np.sqrt(a), f), "g_lambda_star", l, _truncation(family))
        for l, a in acc.items()
    }


def g_lambda_star(family: KernelFamily, f, lam: float) -> SquareFunctionResult:
    """Square function with global weight (t/(t + d(x, y)))^lambda."""
    return g_lambda_stars(family, f, [lam])[float(lam)]


def l2_norm(space: DiscreteSpace, f) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    m = space.masses if f.ndim == 1 else space.masses[:, None]
    return np.sqrt((m * f**2).sum(axis=0))


def eigen_g_constant(u_lo: float = 0.0, u_hi: float = math.inf) -> float:
    """sqrt of int (u e^-u)^2 du/(2u) over [u_lo, u_hi]; the full-line value is sqrt(1/8)."""
    from scipy.integrate import quad

    val, _ = quad(lambda u: 0.5 * u * math.exp(-2 * u), u_lo, u_hi, epsabs=1e-14, epsrel=1e-12)
    return math.sqrt(val)


# -- boundedness experiment ------------------------------------------------

NORM_KINDS = ("S2_blo/f_bmo2", "S_blo/f_bmo", "gstar2_blo/f_bmo2", "gstar_blo/f_bmo")


@dataclass
class ExperimentTable:
    rows: list = field(default_factory=list)  # (function_id, lambda, norm_kind, num, den, ratio, flagged)
    maxima: dict = field(default_factory=dict)  # (norm_kind, lambda) -> max ratio
    skipped: list = field(default_factory=list)
    dim: int = 1

    def max_ratio(self, kind: str, lam=None) -> float:
        key = (kind, None if lam is None else float(lam))
        return self.maxima[key]


def boundedness_experiment(
    space: DiscreteSpace,
    family: KernelFamily,
    rho,
    suite: dict,
    lambda_list,
    balls: BallFamily,
    q: float = 1.0,
) -> ExperimentTable:
    """Ratios of BLO norms of S f, g_lambda* f and their squares to BMO norms of f.

    Rows with lambda <= 3n fall outside the range where the quadratic bound
    is known and are flagged.
    """
    n = space.dim
    lambda_list = [float(l) for l in lambda_list]
    table = ExperimentTable(dim=n)
    names = list(suite)
    fmat = np.column_stack([np.asarray(suite[k], dtype=float) for k in names])
    s_vals = lusin_area(family, fmat).values
    stars = g_lambda_stars(family, fmat, lambda_list)

    def add(name, lam, kind, num, den, flagged):
        ratio = num / den
        table.rows.append((name, lam, kind, num, den, ratio, flagged))
        key = (kind, lam)
        table.maxima[key] = max(table.maxima.get(key, -math.inf), ratio)

    for c, name in enumerate(names):
        f_bmo = bmo_rho_norm(space, fmat[:, c], rho, q, balls).total
        if not f_bmo > 0:
            table.skipped.append(f"{name}: zero BMO norm")
            continue
        sf = s_vals[:, c]
        add(name, None, NORM_KINDS[0], blo_rho_norm(space, sf**2, rho, q, balls).total, f_bmo**2, False)
        add(name, None, NORM_KINDS[1], blo_rho_norm(space, sf, rho, q, balls).total, f_bmo, False)
        for lam in lambda_list:
            gs = stars[lam].values[:, c]
            flag = lam <= 3 * n
            add(name, lam, NORM_KINDS[2], blo_rho_norm(space, gs**2, rho, q, balls).total, f_bmo**2, flag)
            add(name, lam, NORM_KINDS[3], blo_rho_norm(space, gs, rho, q, balls).total, f_bmo, flag)
    return table


def default_lambda_sweep(n: int) -> list:
    return sorted({n + 1, 2 * n, 3 * n + 1, 4 * n})


def plot_rows(space: DiscreteSpace, s: SquareFunctionResult, g: SquareFunctionResult, gstar: SquareFunctionResult):
    """(x, S f, g f, g_lambda* f) per point for external plotting."""
    x = space.points[:, 0]
    return np.column_stack([x, s.values, g.values, gstar.values])
