"""Command-line front end: ``orbit``, ``family``, ``graph`` and ``sample``.

Exit codes: 0 success, 1 numerical failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import dynamics as dyn
from .continuation import (
    CSV_HEADER,
    SCENARIOS,
    build_graph,
    continue_family,
    detect_birth_death,
    detect_events,
    evaluate,
    fmt,
    scenario_graph,
    trace_csv,
)
from .fixtures import FAMILIES, fixture_rows
from .integrator import DEFAULT_CONFIG, IntegrationConfig
from .symmetries import (
    SEED_PARAMS,
    OrbitSeed,
    PeriodicOrbit,
    orbit_samples,
    refine_orbit,
    select_crossing,
)

log = logging.getLogger("hill_orbits")

EXIT_OK, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2
PARAM_NAMES = ("q1", "q2", "q3", "q1dot", "q2dot")


class UsageError(Exception):
    pass


# ------------------------------------------------------------------ config

def read_config(path) -> dict:
    """``key = value`` lines; ``#`` starts a comment. Keys use flag names with ``_``."""
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{n}: expected key = value")
        key, val = key.strip().replace("-", "_"), val.strip()
        out[key] = val.split() if key == "gamma_range" else val
    return out


def _apply_config(parser: argparse.ArgumentParser, argv) -> argparse.Namespace:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        cfg = read_config(known.config)
        for sub in _subparsers(parser).values():
            given = {k: v for k, v in cfg.items() if k in {a.dest for a in sub._actions}}
            for a in sub._actions:
                if a.dest in given:
                    a.required = False
            sub.set_defaults(**given)
    args = parser.parse_args(argv)
    return args


def _subparsers(parser):
    for a in parser._actions:
        if isinstance(a, argparse._SubParsersAction):
            return a.choices
    return {}


def integration_config(args) -> IntegrationConfig:
    cfg = DEFAULT_CONFIG
    if getattr(args, "step", None) is not None:
        cfg = replace(cfg, step=float(args.step))
    if getattr(args, "floor", None) is not None:
        cfg = replace(cfg, floor=float(args.floor))
    if cfg.step <= 0 or cfg.floor <= 0:
        raise UsageError("tolerances and step sizes must be positive")
    return cfg


# ------------------------------------------------------------------ seeds

def _nearest_row(family: str, gamma: float):
    rows = fixture_rows(family)
    if not rows:
        return None
    return min(rows, key=lambda r: abs(r.gamma - gamma))


def seed_from_args(args, gamma: float | None = None) -> tuple[OrbitSeed, float | None]:
    """Seed and segment-time hint from flags, falling back to the family's fixture row."""
    fam = args.family
    if fam not in FAMILIES:
        raise UsageError(f"unknown family {fam!r}; known: {', '.join(FAMILIES)}")
    g = float(args.gamma if gamma is None else gamma)
    start, target, planar = FAMILIES[fam]
    start = args.start or start
    target = args.target or target
    if args.spatial:
        planar = False
    row = _nearest_row(fam, g)
    exact = row is not None and math.isclose(row.gamma, g, abs_tol=1e-9)
    # off-row starts use the nearest row as the corrector's initial guess
    use_row = row is not None and getattr(args, "fixture", False)
    names = SEED_PARAMS[start][0]
    if planar:
        names = tuple(n for n in names if n not in ("q3", "q3dot"))
    params = {}
    for n in names:
        v = getattr(args, n, None)
        if v is None and use_row:
            v = row.params.get(n)
        if v is None:
            raise UsageError(f"missing free parameter --{n} for a {start} seed")
        params[n] = float(v)
    sign = args.sign if args.sign is not None else (row.sign if row is not None else 1)
    hint = args.hint
    if hint is None and (exact or use_row):
        hint = row.t_hint
    return OrbitSeed(start, target, g, params, sign=int(sign), planar=planar, family=fam), hint


def refine_from_args(args, cfg) -> PeriodicOrbit:
    seed, hint = seed_from_args(args)
    if hint is not None:
        seed = select_crossing(seed, float(hint), cfg)
    elif args.crossings:
        seed = replace(seed, crossings=int(args.crossings))
    return refine_orbit(seed, cfg)


# ------------------------------------------------------------------ reports

def orbit_report(orbit: PeriodicOrbit, cfg=DEFAULT_CONFIG) -> dict:
    """Initial data, periods, blocks, multipliers, signatures and indices of one orbit."""
    pt = evaluate(orbit, cfg)
    v = orbit.velocity
    st, idx, per = pt.stability, pt.index, pt.periods
    doc = {
        "family": orbit.seed.family,
        "gamma": orbit.gamma,
        "start": orbit.seed.start,
        "target": orbit.seed.target,
        "planar": orbit.seed.planar,
        "q0": v.q.tolist(),
        "qdot0": v.qdot.tolist(),
        "segment_time": orbit.segment_time,
        "T_q": orbit.period,
        "residual": orbit.residual,
        "closure": orbit.closure,
        "T_s": per.t_synodic if per else 365.25 * orbit.period / (2 * math.pi),
        "T_a": per.t_anomalistic if per else None,
        "T_d": per.t_draconitic if per else None,
        "blocks": [],
        "multipliers": [],
        "mu_p": idx.mu_p if idx else None,
        "mu_s": idx.mu_s if idx else None,
        "mu": idx.mu_total if idx else None,
    }
    if st is not None:
        for b in st.blocks:
            doc["blocks"].append({"class": b.kind, "trace": b.trace, "angle": b.angle,
                                  "multiplier": b.multiplier, "signs": b.signs})
        doc["multipliers"] = [[complex(m).real, complex(m).imag] for m in st.multipliers]
    return doc


def _text_report(doc: dict, digits: int) -> str:
    def f(x):
        return fmt(x, digits) if x is not None else "-"

    rows = [("family", doc["family"]), ("gamma", f(doc["gamma"])),
            ("symmetry", f'{doc["start"]} -> {doc["target"]}' + (" (planar)" if doc["planar"] else "")),
            ("q(0)", " ".join(f(x) for x in doc["q0"])), ("qdot(0)", " ".join(f(x) for x in doc["qdot0"])),
            ("T_q", f(doc["T_q"])), ("T_s", f(doc["T_s"])), ("T_a", f(doc["T_a"])), ("T_d", f(doc["T_d"]))]
    for i, b in enumerate(doc["blocks"]):
        val = f"angle {f(b['angle'])}" if b["angle"] is not None else f"lambda {f(b['multiplier'])}"
        rows.append((f"block {i + 1}", f"{b['class']} {b['signs']} tr {f(b['trace'])} {val}"))
    for i, (re, im) in enumerate(doc["multipliers"]):
        rows.append((f"multiplier {i + 1}", f"{f(re)} {'+' if im >= 0 else '-'} {f(abs(im))}i"))
    rows.append(("mu_p / mu_s / mu", f'{f(doc["mu_p"])} / {f(doc["mu_s"])} / {f(doc["mu"])}'))
    rows.append(("residual / closure", f'{doc["residual"]:.2e} / {doc["closure"]:.2e}'))
    w = max(len(k) for k, _ in rows)
    return "\n".join(f"{k.ljust(w)}  {v}" for k, v in rows) + "\n"


def _figure(orbit: PeriodicOrbit, path, cfg):
    try:
        import matplotlib
    except ImportError as e:
        raise UsageError("--figure needs matplotlib (pip install hill-orbits[plot])") from e

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    _, X = orbit_samples(orbit, 2000, cfg)
    fig, ax = plt.subplots(1, 2 if not orbit.seed.planar else 1, figsize=(8 if not orbit.seed.planar else 4, 4),
                           squeeze=False)
    ax[0, 0].plot(X[:, 0], X[:, 1], lw=0.8)
    ax[0, 0].set(xlabel="q1", ylabel="q2", aspect="equal")
    if not orbit.seed.planar:
        ax[0, 1].plot(X[:, 1], X[:, 2], lw=0.8)
        ax[0, 1].set(xlabel="q2", ylabel="q3", aspect="equal")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


# ------------------------------------------------------------------ commands

def cmd_orbit(args) -> int:
    cfg = integration_config(args)
    orbit = refine_from_args(args, cfg)
    doc = orbit_report(orbit, cfg)
    text = _text_report(doc, args.digits)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if args.json:
        Path(args.json).write_text(json.dumps(doc, indent=2))
    if args.figure:
        _figure(orbit, args.figure, cfg)
    return EXIT_OK


def cmd_family(args) -> int:
    cfg = integration_config(args)
    g0, g1 = (float(x) for x in args.gamma_range)
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        if g0 == g1:
            csv.writer(out, lineterminator="\n").writerow(CSV_HEADER)
            return EXIT_OK
        args.gamma = g0
        seed, hint = seed_from_args(args, g0)
        trace = continue_family(seed, (g0, g1), float(args.step0), cfg, float(args.step_min),
                                t_hint=hint, name=args.family)
        trace.events = sorted(trace.events + detect_events(trace, int(args.covers), cfg)
                              + detect_birth_death(trace), key=lambda e: e.position)
        out.write(trace_csv(trace, args.digits))
    finally:
        if args.out:
            out.close()
    for e in trace.events:
        log.info("%s %s cover %d at gamma=%.6g index %s -> %s", e.kind, e.block, e.cover,
                 e.gamma_star, e.index_before, e.index_after)
    reached = math.isclose(trace.points[-1].gamma, g1, abs_tol=1e-9)
    if not reached and not any(e.kind in ("collision-approach", "birth-death") for e in trace.events):
        print(f"continuation stopped at gamma={trace.points[-1].gamma:.6g}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_graph(args) -> int:
    cfg = integration_config(args)
    if args.scenario:
        graph, _ = scenario_graph(args.scenario, cfg)
    else:
        if not args.family or args.gamma_range is None:
            raise UsageError("graph needs --scenario or --family with --gamma-range")
        g0, g1 = (float(x) for x in args.gamma_range)
        args.gamma = g0
        seed, hint = seed_from_args(args, g0)
        trace = continue_family(seed, (g0, g1), float(args.step0), cfg, t_hint=hint, name=args.family)
        trace.cover = int(args.cover)
        trace.events = detect_events(trace, trace.cover, cfg)
        graph = build_graph([trace])
    dot = graph.to_dot()
    if args.dot:
        Path(args.dot).write_text(dot)
    else:
        sys.stdout.write(dot)
    if args.json:
        Path(args.json).write_text(graph.to_json())
    for v in graph.vertices:
        if not v.balanced:
            log.warning("Euler imbalance at %s: %d before, %d after", v.label, v.chi_before, v.chi_after)
    return EXIT_OK


def cmd_sample(args) -> int:
    cfg = integration_config(args)
    orbit = refine_from_args(args, cfg)
    n = int(args.samples)
    if n < 2:
        raise UsageError("--samples must be at least 2")
    t, X = orbit_samples(orbit, n, cfg)
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["t", "q1", "q2", "q3"])
        for ti, x in zip(t, X):
            w.writerow([f"{ti:.{args.digits + 4}g}"] + [f"{c:.{args.digits + 4}g}" for c in x[:3]])
    finally:
        if args.out:
            out.close()
    return EXIT_OK


# ------------------------------------------------------------------ parser

def _seed_flags(p):
    p.add_argument("--family", required=True, help="family template: " + ", ".join(FAMILIES))
    p.add_argument("--start", choices=sorted(SEED_PARAMS), help="override start fixed set")
    p.add_argument("--target", choices=sorted(SEED_PARAMS), help="override target fixed set")
    p.add_argument("--spatial", action="store_true", help="keep q3 / q3dot as free data")
    p.add_argument("--sign", type=int, choices=(-1, 1), help="sign of the energy-determined velocity")
    p.add_argument("--hint", type=float, help="expected segment time (selects the crossing count)")
    p.add_argument("--crossings", type=int, help="crossing count when no hint is given")
    p.add_argument("--fixture", action="store_true", help="take missing parameters from the nearest fixture row")
    for n in PARAM_NAMES:
        p.add_argument(f"--{n}", type=float)


def _common(p):
    p.add_argument("--config", help="key = value file overriding defaults")
    p.add_argument("--step", type=float, help="RK4 step size")
    p.add_argument("--floor", type=float, help="collision floor")
    p.add_argument("--digits", type=int, default=6, help="significant digits in output")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hill-orbits", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("orbit", help="refine one orbit and report its stability and indices")
    _common(p)
    _seed_flags(p)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--out", help="text report path (default: stdout)")
    p.add_argument("--json", help="JSON report path")
    p.add_argument("--figure", help="optional PNG of the orbit (needs matplotlib)")
    p.set_defaults(func=cmd_orbit)

    p = sub.add_parser("family", help="continue a family in gamma and write CSV")
    _common(p)
    _seed_flags(p)
    p.add_argument("--gamma-range", nargs=2, type=float, required=True, metavar=("FROM", "TO"))
    p.add_argument("--step0", type=float, default=0.05)
    p.add_argument("--step-min", type=float, default=1e-4)
    p.add_argument("--covers", type=int, default=6, help="cover bound K for events")
    p.add_argument("--out", help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_family, fixture=True)

    p = sub.add_parser("graph", help="bifurcation graph as DOT and JSON")
    _common(p)
    p.add_argument("--scenario", choices=sorted(SCENARIOS))
    p.add_argument("--family")
    p.add_argument("--start", choices=sorted(SEED_PARAMS))
    p.add_argument("--target", choices=sorted(SEED_PARAMS))
    p.add_argument("--spatial", action="store_true")
    p.add_argument("--sign", type=int, choices=(-1, 1))
    p.add_argument("--hint", type=float)
    p.add_argument("--gamma-range", nargs=2, type=float, metavar=("FROM", "TO"))
    p.add_argument("--cover", type=int, default=1)
    p.add_argument("--step0", type=float, default=0.05)
    for n in PARAM_NAMES:
        p.add_argument(f"--{n}", type=float)
    p.add_argument("--dot", help="DOT path (default: stdout)")
    p.add_argument("--json", help="JSON path")
    p.set_defaults(func=cmd_graph, fixture=True)

    p = sub.add_parser("sample", help="write t,q1,q2,q3 samples of one orbit")
    _common(p)
    _seed_flags(p)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--out", help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_sample)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = _apply_config(parser, argv)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ArithmeticError, RuntimeError, ValueError) as e:
        print(f"numerical failure: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
