"""Command-line driver: JSON config in, CSV/JSON artifacts out.

Exit codes: 0 ok, 1 config validation error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import copy
import json
import logging
import math
import sys
from pathlib import Path

import jsonschema
import numpy as np
from threadpoolctl import threadpool_limits

from . import counterexample as cx
from . import geometry as geo
from .admissible import (
    RhoInfiniteError,
    VanishingPotentialError,
    admissibility_certificate,
    constant_rho,
    potential_from_spec,
    schrodinger_rho,
)
from .io import config_hash, write_csv, write_json
from .kernels import KernelError, decay_certificate, scale_grid, schrodinger_family, verify_decay_certificate
from .norms import build_ball_family, blo_rho_norm, bmo_rho_norm
from .space import Ball, SpaceError, doubling_certificate, space_from_spec
from .sqfun import boundedness_experiment, default_lambda_sweep, g_function, g_lambda_stars, lusin_area, plot_rows
from .suite import DEFAULT_SUITE, build_suite

log = logging.getLogger("locbmo")

SCHEMA_VERSION = 1
COMMANDS = ("norms", "squarefn", "bounds", "counterexample", "geometry", "certify-kernels")

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["schema_version"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "seed": {"type": "integer"},
        "space": {
            "type": "object",
            "required": ["dim", "extent", "spacing"],
            "additionalProperties": False,
            "properties": {
                "dim": {"enum": [1, 2]},
                "extent": _pos,
                "spacing": _pos,
                "weight": {
                    "oneOf": [
                        {"enum": ["lebesgue", "counting"]},
                        {"type": "object", "required": ["power"], "properties": {"power": _num},
                         "additionalProperties": False},
                    ]
                },
                "metric": {"enum": ["euclidean", "sup_norm", "graph_path"]},
            },
        },
        "potential": {
            "type": "object",
            "required": ["kind"],
            "properties": {"kind": {"enum": ["constant", "power", "indicator", "table"]}},
        },
        "rho": {
            "type": "object",
            "required": ["kind"],
            "additionalProperties": False,
            "properties": {"kind": {"enum": ["constant", "schrodinger"]}, "value": _pos},
        },
        "scale_grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"t_min": _pos, "t_max": _pos, "per_octave": {"type": "integer", "minimum": 1}},
        },
        "balls": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "center_budget": {"type": ["integer", "null"], "minimum": 1},
                "radius_count": {"type": "integer", "minimum": 2},
            },
        },
        "suite": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["kind"],
                "properties": {
                    "kind": {"enum": ["one", "zero", "log_spike", "fg_abs", "indicator", "eigenvector", "random"]},
                    "seed": {"type": "integer"},
                    "index": {"type": "integer", "minimum": 0},
                    "lo": _num,
                    "hi": _num,
                    "modes": {"type": "integer", "minimum": 1},
                },
                "allOf": [
                    {"if": {"properties": {"kind": {"const": "random"}}},
                     "then": {"required": ["seed"]}},
                    {"if": {"properties": {"kind": {"const": "eigenvector"}}},
                     "then": {"required": ["index"]}},
                    {"if": {"properties": {"kind": {"const": "indicator"}}},
                     "then": {"required": ["lo", "hi"]}},
                ],
            },
        },
        "params": {
            "type": "object",
            "properties": {
                "q": {"type": "number", "minimum": 1},
                "q_list": {"type": "array", "items": {"type": "number", "minimum": 1}},
                "lambda": _pos,
                "lambda_list": {"type": "array", "items": _pos},
                "m_list": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                "k_range": {"type": "array", "items": {"type": "integer", "minimum": 2}, "minItems": 2, "maxItems": 2},
                "tau": {"type": "number", "exclusiveMinimum": 1},
                "c4": {"type": "number", "minimum": 1},
                "s_floor_fraction": _pos,
                "growth_factor": _pos,
                "chain_samples": {"type": "integer", "minimum": 1},
                "x_budget": {"type": "integer", "minimum": 1},
                "interior_margin": {"type": "number", "minimum": 0},
                "grid_scan": {"type": "boolean"},
                "scan_window": _pos,
                "scan_spacing": _pos,
            },
        },
    },
}

DEFAULT_CONFIG = {
    "schema_version": SCHEMA_VERSION,
    "seed": 0,
    "space": {"dim": 1, "extent": 4.0, "spacing": 0.02, "weight": "lebesgue", "metric": "euclidean"},
    "potential": {"kind": "constant", "value": 1.0},
    "rho": {"kind": "schrodinger"},
    "balls": {"center_budget": 200, "radius_count": 30},
    "suite": list(DEFAULT_SUITE),
    "params": {},
}


class ConfigError(ValueError):
    pass


def _field_path(err: jsonschema.ValidationError) -> str:
    return "/".join(str(p) for p in err.absolute_path) or "<root>"


def load_config(path, seed: int | None = None) -> dict:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    return validate_config(raw, seed)


def validate_config(raw: dict, seed: int | None = None) -> dict:
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise ConfigError(f"{_field_path(e)}: {e.message}")
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    for key, val in raw.items():
        if isinstance(val, dict) and isinstance(cfg.get(key), dict):
            cfg[key] = {**cfg[key], **val}
        else:
            cfg[key] = val
    if seed is not None:
        cfg["seed"] = int(seed)
    sp = cfg["space"]
    if not sp["spacing"] < sp["extent"]:
        raise ConfigError("space/spacing: must be smaller than extent")
    return cfg


# -- shared setup -------------------------------------------------------------


def _space(cfg):
    w = cfg["space"].get("weight", "lebesgue")
    spec = dict(cfg["space"])
    if isinstance(w, dict):
        spec["weight"] = ("power", float(w["power"]))
    return space_from_spec(spec)


def _rho(cfg, space, v=None):
    spec = cfg["rho"]
    if spec["kind"] == "constant":
        return constant_rho(space, spec.get("value", 1.0))
    v = potential_from_spec(space, cfg["potential"]) if v is None else v
    return schrodinger_rho(space, v)


def _family(cfg, space):
    v = potential_from_spec(space, cfg["potential"])
    sg = cfg.get("scale_grid", {})
    t_min = sg.get("t_min", space.spacing)
    t_max = sg.get("t_max", 4 * space.diam)
    return schrodinger_family(space, v, scale_grid(t_min, t_max, sg.get("per_octave", 8))), v


def _balls(cfg, space, rho):
    b = cfg["balls"]
    return build_ball_family(space, rho, b.get("center_budget"), b.get("radius_count", 30))


def _suite(cfg, space, family=None):
    specs = cfg["suite"]
    needs_family = any(s["kind"] == "eigenvector" for s in specs)
    if needs_family and family is None:
        family, _ = _family(cfg, space)
    return build_suite(space, specs, family, cfg.get("seed", 0))


# -- commands -----------------------------------------------------------------


def cmd_norms(cfg, out: Path, digest: str):
    space = _space(cfg)
    rho = _rho(cfg, space)
    balls = _balls(cfg, space, rho)
    suite = _suite(cfg, space)
    q_list = cfg["params"].get("q_list", [1.0, 2.0])
    rows = []
    for name, f in suite.items():
        for q in q_list:
            for kind, fn in (("bmo_rho", bmo_rho_norm), ("blo_rho", blo_rho_norm)):
                rep = fn(space, f, rho, float(q), balls)
                # extremal ball of the larger part; ties go to the oscillation part
                osc_ball, loc_ball = rep.argmax_balls
                local = loc_ball is not None and (osc_ball is None or rep.local_part > rep.oscillation_part)
                b = loc_ball if local else osc_ball
                rows.append((name, q, kind, rep.oscillation_part, rep.local_part, rep.total,
                             b.center, b.radius, local))
    write_csv(out / "norms.csv", ("function_id", "q", "norm", "oscillation_part", "local_part", "total",
                                  "argmax_center", "argmax_radius", "class_d_flag"),
              rows, digest, "norms", "bmo_rho_norm/blo_rho_norm")
    cert = admissibility_certificate(space, rho)
    write_csv(out / "admissibility.csv", ("k0", "c0"), cert.curve, digest, "admissible", "admissibility_certificate")


def cmd_squarefn(cfg, out: Path, digest: str):
    space = _space(cfg)
    family, _ = _family(cfg, space)
    suite = _suite(cfg, space, family)
    lam = float(cfg["params"].get("lambda", 2 * space.dim))
    names = list(suite)
    fmat = np.column_stack([suite[n] for n in names])
    s = lusin_area(family, fmat)
    g = g_function(family, fmat)
    gs = g_lambda_stars(family, fmat, [lam])[lam]
    summary = []
    for c, name in enumerate(names):
        one = lambda r: type(r)(r.values[:, c], r.kind, r.lam, r.truncation)
        write_csv(out / f"sqfun_{name}.csv", ("x", "S", "g", "g_lambda_star"),
                  plot_rows(space, one(s), one(g), one(gs)), digest, "sqfun", "plot_data")
        l2 = lambda v: float(np.sqrt(space.masses @ v**2))
        summary.append((name, lam, l2(s.values[:, c]), l2(g.values[:, c]), l2(gs.values[:, c]),
                        float((s.values[:, c] / np.maximum(gs.values[:, c], 1e-300)).max())))
    write_csv(out / "sqfun_summary.csv", ("function_id", "lambda", "l2_S", "l2_g", "l2_g_lambda_star", "max_S_over_gstar"),
              summary, digest, "sqfun", "g_function/lusin_area/g_lambda_star")


def cmd_bounds(cfg, out: Path, digest: str):
    space = _space(cfg)
    family, v = _family(cfg, space)
    rho = _rho(cfg, space, v)
    balls = _balls(cfg, space, rho)
    suite = _suite(cfg, space, family)
    lams = cfg["params"].get("lambda_list", default_lambda_sweep(space.dim))
    table = boundedness_experiment(space, family, rho, suite, lams, balls, cfg["params"].get("q", 1.0))
    write_csv(out / "bounds.csv",
              ("function_id", "lambda", "norm_kind", "numerator", "denominator", "ratio", "outside_hypothesis"),
              table.rows, digest, "sqfun", "boundedness_experiment")
    maxima = sorted(table.maxima.items(), key=lambda kv: (kv[0][0], -1 if kv[0][1] is None else kv[0][1]))
    write_csv(out / "bounds_max.csv", ("norm_kind", "lambda", "max_ratio"),
              [(k, l, r) for (k, l), r in maxima], digest, "sqfun", "boundedness_experiment")
    for note in table.skipped:
        log.warning("skipped %s", note)


def cmd_counterexample(cfg, out: Path, digest: str):
    p = cfg["params"]
    m_list = p.get("m_list", list(range(1, 9)))
    table = cx.blo_divergence(m_list)
    write_csv(out / "divergence.csv", ("m", "log2_r_8m3", "interval_average", "paper_lower_bound", "ratio"),
              table.rows, digest, "counterexample", "blo_divergence")
    shape = []
    for m in m_list:
        try:
            rep = cx.verify_shape(int(m))
        except cx.ScaleUnresolvableError as exc:
            log.warning("%s", exc)
            continue
        shape.append((rep.m, rep.samples, rep.min_fg, rep.min_first_derivative, rep.max_second_derivative))
    write_csv(out / "shape.csv", ("m", "samples", "min_fg", "min_first_derivative", "max_second_derivative"),
              shape, digest, "counterexample", "verify_shape")
    k0, k1 = p.get("k_range", [2, 20])
    radii = [(k, cx.log_rk(k), cx.solve_rk(k), float(cx.psi_lower_star_u(cx.u_k(k))) - math.pi * k / 4)
             for k in range(k0, k1 + 1)]
    write_csv(out / "radii.csv", ("k", "log_r_k", "r_k", "psi_star_residual"), radii, digest,
              "counterexample", "solve_rk")
    if p.get("grid_scan", False):
        scan = cx.bmo_boundedness_scan(p.get("scan_window", 2.5), p.get("scan_spacing", 0.01))
        rows = [(h, b, lb, le, t) for h, b, lb, le, t in
                zip(scan.spacings, scan.bmo_sups, scan.blo_base, scan.blo_extended, scan.multiplier_tilde)]
        write_csv(out / "bmo_scan.csv", ("spacing", "bmo_sup_abs_fg", "blo_osc_base", "blo_osc_extended",
                                         "tilde_bmo_psi_multiplier"),
                  rows, digest, "counterexample", "bmo_boundedness_scan (numerical evidence)")
    if not table.increasing:
        raise ArithmeticError("lower-bound sequence is not increasing")


def cmd_geometry(cfg, out: Path, digest: str):
    space = _space(cfg)
    p = cfg["params"]
    rows = []
    ad = geo.annular_decay_certificate(space)
    rows.append(("annular_decay", json.dumps({"delta": ad.delta, "K": ad.k_const}), "holds",
                 json.dumps(ad.worst_triple)))
    wg = geo.weak_geodesic_certificate(space, s_floor_fraction=p.get("s_floor_fraction", 1.0),
                                       growth_factor=p.get("growth_factor", 10.0))
    rows.append(("weak_geodesic", json.dumps({"C3": wg.constant, "vacuous": wg.vacuous}), wg.status,
                 json.dumps(wg.witness, sort_keys=True)))
    # lattice chains move in multiples of the spacing, so C4 = 3 is the
    # smallest constant that works for every s >= spacing / 3
    c4 = float(p.get("c4", 3.0))
    h = space.spacing
    mg = geo.monotone_geodesic_certificate(space, c4, [h, 1.25 * h, 2.5 * h], sample_budget=20)
    rows.append(("monotone_geodesic", json.dumps({"C4": c4}), mg.status, json.dumps(mg.witness, sort_keys=True)))
    dc = doubling_certificate(space)
    rows.append(("doubling", json.dumps({"C1": dc.c1, "C2": dc.c2, "n": dc.n}), "holds", ""))
    tau = float(p.get("tau", 2.0))
    c_tau = geo.p_tau_constant(space, tau, ad.delta)
    conv = geo.p_tau_convert(tau, c_tau, ad.delta, dc.c1)
    rows.append(("p_tau", json.dumps({"tau": tau, "C_P_tau": c_tau, "C_P_converted": conv,
                                      "C_P_direct": ad.k_const}),
                 "holds" if conv >= ad.k_const else "fails", ""))
    witnesses = []
    if mg.status == "holds" and space.metric == "graph_path":
        witnesses = _chain_ball_runs(space, c4, int(p.get("chain_samples", 200)))
        ok = all(w["verified"] for w in witnesses)
        rows.append(("chain_ball", json.dumps({"alpha": 4 * c4 / 3, "beta": 4 / 3, "runs": len(witnesses)}),
                     "holds" if ok else "fails", ""))
        write_json(out / "chain_witnesses.json", witnesses, digest)
    write_csv(out / "geometry.csv", ("property", "constants", "status", "worst_witness"), rows, digest,
              "geometry", "certificates")


def _chain_ball_runs(space, c4, budget):
    from .norms import evenly_spaced

    runs = []
    zs = evenly_spaced(space.size, max(1, int(math.sqrt(budget))))
    for z in zs:
        for r in (0.25 * space.diam, 0.5 * space.diam):
            dz = space.dist_rows(int(z))[0]
            inside = np.flatnonzero(r - dz >= 2 * space.spacing)
            for x in inside[evenly_spaced(len(inside), max(1, budget // (2 * len(zs))))]:
                w = geo.chain_ball_construct(space, Ball(int(z), float(r)), int(x), c4)
                d = w.to_json()
                d["verified"] = not geo.verify_chain_ball(space, w)
                d["growth_ok"] = geo.growth_holds(w.t_trace, c4)
                runs.append(d)
    return runs


def cmd_certify_kernels(cfg, out: Path, digest: str):
    space = _space(cfg)
    family, v = _family(cfg, space)
    rho = _rho(cfg, space, v)
    p = cfg["params"]
    xb, margin = p.get("x_budget", 200), p.get("interior_margin", 1.0)
    cert = decay_certificate(family, rho, x_budget=xb, interior_margin=margin)
    ok = verify_decay_certificate(family, rho, cert, x_budget=xb, interior_margin=margin)
    write_csv(out / "kernel_ratios_i.csv", ("t", "x", "y", "lhs", "rhs", "ratio", "gamma", "delta1"),
              [(r[0], int(r[1]), int(r[2]), r[3], r[4], r[5], r[6], r[7]) for r in cert.rows_i],
              digest, "kernels", "decay_certificate (Q)_i worst triple per scale")
    write_csv(out / "kernel_ratios_ii.csv", ("t", "x", "lhs", "rhs", "ratio", "delta2"),
              [(r[0], int(r[1]), r[2], r[3], r[4], r[5]) for r in cert.rows_ii],
              digest, "kernels", "decay_certificate (Q)_ii worst point per scale")
    rows = [("Q_i", g, d1, "", c) for (g, d1), c in sorted(cert.table_i.items())]
    rows += [("Q_ii", "", "", d2, c) for d2, c in sorted(cert.table_ii.items())]
    write_csv(out / "kernel_certificate.csv", ("condition", "gamma", "delta1", "delta2", "constant"),
              rows, digest, "kernels", "decay_certificate")
    bound = float(np.abs(family.multipliers).max())
    write_csv(out / "kernel_checks.csv", ("check", "value", "ok"),
              [("reverification", "", ok), ("max_multiplier", bound, bound <= math.exp(-1))],
              digest, "kernels", "verify_decay_certificate")
    if not ok:
        raise ArithmeticError("kernel certificate failed re-verification")


HANDLERS = {
    "norms": cmd_norms,
    "squarefn": cmd_squarefn,
    "bounds": cmd_bounds,
    "counterexample": cmd_counterexample,
    "geometry": cmd_geometry,
    "certify-kernels": cmd_certify_kernels,
}

NUMERICAL_ERRORS = (ArithmeticError, np.linalg.LinAlgError, KernelError, RhoInfiniteError,
                    VanishingPotentialError, geo.ChainBallError, cx.ScaleUnresolvableError)


def run(command: str, cfg: dict, out, threads: int | None = None) -> int:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    digest = config_hash(cfg)
    try:
        with threadpool_limits(limits=threads):
            HANDLERS[command](cfg, out, digest)
    except NUMERICAL_ERRORS as exc:
        log.error("%s: numerical failure: %s", command, exc)
        return 2
    except (SpaceError, ValueError, KeyError) as exc:
        log.error("%s: invalid configuration: %s", command, exc)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="locbmo", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="JSON experiment config")
    ap.add_argument("--out", default="out", help="output directory")
    ap.add_argument("--threads", type=int, default=None, help="BLAS thread cap")
    ap.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    return run(args.command, cfg, args.out, args.threads)


if __name__ == "__main__":
    sys.exit(main())
