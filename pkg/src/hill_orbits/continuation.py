"""Family continuation in Γ, event detection, branch switching and bifurcation graphs.

Points are accepted on a Γ grid by natural continuation with a secant
predictor; near folds the corrector switches to pseudo-arclength in the
joint ``(free parameters, Γ)`` space. The crossing count of the shooting
segment is re-selected at every step from the predicted segment time.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq

from . import dynamics as dyn
from .indices import (
    DegenerateIndex,
    IndexReport,
    PeriodTriple,
    cover_index,
    cz_index,
    good_bad,
    index_iteration,
    iterate_block,
    lunar_periods,
    euler_characteristic,
)
from .integrator import DEFAULT_CONFIG, IntegrationConfig, IntegrationError, flow
from .monodromy import StabilityReport, StructureError, stability
from .symmetries import (
    FIXED_SETS,
    OrbitSeed,
    OutsideHillRegion,
    PeriodicOrbit,
    ShootingError,
    _residual_index,
    _seed_jacobian,
    build_seed_state,
    refine_orbit,
    select_crossing,
    shoot,
)

#: switch to pseudo-arclength when |d(free)/dΓ| exceeds this
SLOPE_SWITCH = 50.0
#: return to natural stepping below this slope
SLOPE_RETURN = 10.0
EVENT_XTOL = 1e-5
COLLISION_FACTOR = 10.0

_NUMERIC = (ShootingError, IntegrationError, OutsideHillRegion, dyn.CollisionError,
            np.linalg.LinAlgError, FloatingPointError)


class ContinuationError(RuntimeError):
    pass


# ------------------------------------------------------------------ records

@dataclass
class FamilyPoint:
    gamma: float
    orbit: PeriodicOrbit
    stability: StabilityReport | None
    index: IndexReport | None
    periods: PeriodTriple | None
    arclength: bool = False

    @property
    def seed(self) -> OrbitSeed:
        return self.orbit.seed

    @property
    def free(self) -> np.ndarray:
        return self.orbit.seed.free_vector()

    @property
    def mu(self) -> int | None:
        return None if self.index is None else self.index.mu_total


@dataclass
class FamilyEvent:
    kind: str
    gamma_star: float
    block: str = ""
    cover: int = 1
    index_before: int | None = None
    index_after: int | None = None
    position: float = 0.0
    detail: dict = field(default_factory=dict)

    @property
    def label(self) -> str:
        k = self.kind if self.cover == 1 or self.kind != "root-of-unity" else f"root-of-unity({self.cover})"
        return f"{k}@{self.gamma_star:.6g}"


@dataclass
class FamilyTrace:
    """Accepted points of one family in continuation order."""

    name: str
    points: list = field(default_factory=list)
    events: list = field(default_factory=list)
    direction: int = -1
    cover: int = 1
    mirrored: bool = True
    parent: str | None = None
    attach_gamma: float | None = None
    index_mode: str = "total"

    @property
    def gammas(self) -> np.ndarray:
        return np.array([p.gamma for p in self.points])


# ------------------------------------------------------------------ point evaluation

def evaluate(orbit: PeriodicOrbit, cfg: IntegrationConfig = DEFAULT_CONFIG,
             with_index: bool = True, arclength: bool = False) -> FamilyPoint:
    """Stability, indices and lunar periods of a converged orbit."""
    try:
        st = stability(orbit, cfg)
    except StructureError:
        st = None
    idx = None
    if with_index:
        try:
            idx = cz_index(orbit, cfg)
        except DegenerateIndex:
            idx = None
    per = lunar_periods(orbit, idx, st) if idx is not None and st is not None else None
    return FamilyPoint(orbit.gamma, orbit, st, idx, per, arclength)


def _shoot_seed(seed: OrbitSeed, t_hint: float | None, cfg: IntegrationConfig) -> PeriodicOrbit:
    if t_hint is not None:
        seed = select_crossing(seed, t_hint, cfg)
    return refine_orbit(seed, cfg)


def _extended_system(seed: OrbitSeed, cfg: IntegrationConfig, h: float = 1e-7):
    """Residual and Jacobian with respect to ``(free parameters, Γ)``."""
    t, r, c = shoot(seed, cfg, with_frame=True)
    M = c.frame.columns
    xp = build_seed_state(replace(seed, gamma=seed.gamma + h)).as_array()
    xm = build_seed_state(replace(seed, gamma=seed.gamma - h)).as_array()
    dx0 = np.column_stack([_seed_jacobian(seed), (xp - xm) / (2 * h)])
    f = dyn.vector_field(c.state)
    dx = M @ dx0
    sec = seed.target_set.section
    dxt = dx + np.outer(f, -dx[sec] / f[sec])
    return t, r, dxt[_residual_index(seed)], c


def _arclength_correct(seed: OrbitSeed, y_pred: np.ndarray, tangent: np.ndarray,
                       cfg: IntegrationConfig, tol: float = 1e-10, max_iter: int = 20) -> PeriodicOrbit:
    y = y_pred.copy()
    n = y.size - 1
    cur = seed.with_free(y[:n], gamma=y[n])
    for _ in range(max_iter):
        t, r, J, c = _extended_system(cur, cfg)
        F = np.concatenate([r, [tangent @ (y - y_pred)]])
        if np.max(np.abs(F)) < tol:
            return refine_orbit(cur, cfg)
        A = np.vstack([J, tangent])
        y = y - np.linalg.lstsq(A, F, rcond=None)[0]
        cur = cur.with_free(y[:n], gamma=y[n])
    raise ShootingError("pseudo-arclength corrector did not converge")


def _slope(a: FamilyPoint, b: FamilyPoint) -> float:
    dg = b.gamma - a.gamma
    dp = np.linalg.norm(b.free - a.free)
    return math.inf if dg == 0 else dp / abs(dg)


def _collision(orbit: PeriodicOrbit, cfg: IntegrationConfig) -> bool:
    return orbit.min_radius < COLLISION_FACTOR * cfg.floor


def continue_family(seed0: OrbitSeed, gamma_range, step0: float = 0.05,
                    cfg: IntegrationConfig = DEFAULT_CONFIG, step_min: float = 1e-4,
                    t_hint: float | None = None, name: str | None = None,
                    with_index: bool = True, max_points: int = 2000,
                    arclength_step: float | None = None) -> FamilyTrace:
    """Trace a family from ``seed0`` across ``gamma_range = (start, stop)``.

    Parameters
    ----------
    seed0 : OrbitSeed
        Seed at ``gamma_range[0]`` (its Γ is overwritten).
    step0 : float
        Nominal Γ spacing of accepted points.
    t_hint : float, optional
        Expected segment time of the first orbit, used to pick the crossing.

    Returns
    -------
    FamilyTrace
        Failures after the first point end the trace with a
        ``family-endpoint`` event instead of raising.
    """
    g0, g1 = float(gamma_range[0]), float(gamma_range[1])
    lo, hi = min(g0, g1), max(g0, g1)
    direction = -1 if g1 < g0 else 1
    trace = FamilyTrace(name or seed0.family, direction=direction)
    first = _shoot_seed(replace(seed0, gamma=g0), t_hint, cfg)
    trace.points.append(evaluate(first, cfg, with_index))
    if g0 == g1:
        return trace
    ds = arclength_step or 2 * step0
    h = step0
    mode = "natural"
    ntarget = 1
    while len(trace.points) < max_points:
        last = trace.points[-1]
        if _collision(last.orbit, cfg):
            trace.events.append(FamilyEvent("collision-approach", last.gamma,
                                            position=len(trace.points) - 1))
            break
        prev = trace.points[-2] if len(trace.points) > 1 else None
        if mode == "natural":
            grid = g0 + direction * ntarget * step0
            g_next = last.gamma + direction * h
            if direction * (g_next - grid) > 0:
                g_next = grid
            if direction * (g_next - g1) > 0:
                g_next = g1
            if prev is not None and prev.gamma != last.gamma:
                w = (g_next - last.gamma) / (last.gamma - prev.gamma)
                p_pred = last.free + w * (last.free - prev.free)
                t_pred = last.orbit.segment_time + w * (last.orbit.segment_time - prev.orbit.segment_time)
            else:
                p_pred, t_pred = last.free, last.orbit.segment_time
            try:
                orb = _shoot_seed(last.seed.with_free(p_pred, gamma=g_next), t_pred, cfg)
                if np.linalg.norm(orb.seed.free_vector() - p_pred) > 0.5 * max(1.0, np.linalg.norm(p_pred)):
                    raise ShootingError("corrector jumped to another branch")
            except _NUMERIC:
                h *= 0.5
                if h < step_min:
                    if prev is not None and _slope(prev, last) > SLOPE_RETURN:
                        mode = "arclength"
                        continue
                    trace.events.append(FamilyEvent("family-endpoint", last.gamma,
                                                    position=len(trace.points) - 1,
                                                    detail={"reason": "corrector stagnation"}))
                    break
                continue
            pt = evaluate(orb, cfg, with_index)
            trace.points.append(pt)
            if g_next == grid:
                ntarget += 1
            h = min(step0, 2 * h)
            if g_next == g1:
                break
            if _slope(last, pt) > SLOPE_SWITCH:
                mode = "arclength"
        else:
            if prev is None:
                break
            ya = np.append(prev.free, prev.gamma)
            yb = np.append(last.free, last.gamma)
            tan = yb - ya
            tan /= np.linalg.norm(tan)
            try:
                orb = _arclength_correct(last.seed, yb + ds * tan, tan, cfg)
            except _NUMERIC:
                ds *= 0.5
                if ds < step_min:
                    trace.events.append(FamilyEvent("family-endpoint", last.gamma,
                                                    position=len(trace.points) - 1,
                                                    detail={"reason": "arclength stagnation"}))
                    break
                continue
            pt = evaluate(orb, cfg, with_index, arclength=True)
            if not lo - 1e-12 <= pt.gamma <= hi + 1e-12:
                break
            trace.points.append(pt)
            if _slope(last, pt) < SLOPE_RETURN:
                direction = 1 if pt.gamma > last.gamma else -1
                g0, ntarget, h, mode = pt.gamma, 1, step0, "natural"
                # the far end of the range follows the new direction
                g1 = hi if direction > 0 else lo
    trace.direction = direction
    return trace


# ------------------------------------------------------------------ block data

def block_traces(st: StabilityReport | None) -> list:
    """``[(label, trace)]`` per block or multiplier pair; NaN for a complex quadruple."""
    if st is None:
        return []
    labels = ("planar", "spatial") if st.planar else ("pair1", "pair2")
    if not st.planar and st.blocks[0].kind == "complex-quadruple":
        return [(l, math.nan) for l in labels]
    return [(l, float(b.trace)) for l, b in zip(labels, st.blocks)]


def _root_levels(K: int) -> list:
    """``(k, j, 2cos(2πj/k))`` for primitive ``j/k`` with ``0 ≤ j ≤ k/2``."""
    out = []
    for k in range(1, K + 1):
        for j in range(0, k // 2 + 1):
            if math.gcd(j, k) == 1:
                out.append((k, j, 2 * math.cos(2 * math.pi * j / k)))
    return out


def _block_angle_of(st: StabilityReport | None, label: str) -> float | None:
    """Rotation angle in ``(0, 2π)`` of an elliptic block; ``π`` at trace −2."""
    if st is None:
        return None
    i = 0 if label in ("planar", "pair1") else 1
    if i >= len(st.blocks):
        return None
    blk = st.blocks[i]
    if blk.elliptic:
        return blk.angle
    if blk.kind == "degenerate" and blk.trace < 0:
        return math.pi
    return None


def _crossed(fa: float, fb: float) -> bool:
    # half-open: a zero at the left end belongs to the previous interval
    return fa != 0 and (fb == 0 or fa * fb < 0)


def _interp_seed(a: FamilyPoint, b: FamilyPoint, g: float):
    w = (g - a.gamma) / (b.gamma - a.gamma)
    p = a.free + w * (b.free - a.free)
    t = a.orbit.segment_time + w * (b.orbit.segment_time - a.orbit.segment_time)
    return a.seed.with_free(p, gamma=g), t


def _trace_at(a, b, g, label, cfg):
    seed, t = _interp_seed(a, b, g)
    orb = _shoot_seed(seed, t, cfg)
    return dict(block_traces(stability(orb, cfg)))[label]


def _angle_at(a, b, g, label, cfg):
    seed, t = _interp_seed(a, b, g)
    ang = _block_angle_of(stability(_shoot_seed(seed, t, cfg), cfg), label)
    if ang is None:
        raise ValueError("block left the elliptic range during bisection")
    return ang


def _cover_mu(pt: FamilyPoint, k: int, cfg) -> int | None:
    if pt.index is None or pt.stability is None:
        return None
    if k == 1:
        return pt.index.mu_total
    try:
        if pt.stability.planar:
            return index_iteration(pt.index, pt.stability.block_p.elliptic,
                                   pt.stability.block_s.elliptic, k)
        return cover_index(pt.orbit, k, cfg)
    except (DegenerateIndex, ValueError):
        return None


def detect_events(trace: FamilyTrace, covers_up_to: int = 6, cfg: IntegrationConfig = DEFAULT_CONFIG,
                  refine: bool = True, xtol: float = EVENT_XTOL) -> list:
    """Eigenvalue-1 crossings of every block and of its covers up to ``covers_up_to``.

    A ``k``-th cover event is a root ``e^{2πij/k}`` (``gcd(j, k) = 1``) of
    a block multiplier; ``k = 1`` is an index jump of the orbit itself.
    Between two elliptic points the rotation angle is tested against
    ``2πj/k``, which also catches tangential touches of the trace at
    ``2cos(2πj/k)``; otherwise the trace is tested.
    """
    levels = _root_levels(covers_up_to)
    order = {"planar": 0, "pair1": 0, "spatial": 1, "pair2": 1}
    events = []
    pts = trace.points
    for i in range(len(pts) - 1):
        a, b = pts[i], pts[i + 1]
        ta, tb = dict(block_traces(a.stability)), dict(block_traces(b.stability))
        natural = not (a.arclength or b.arclength) and a.gamma != b.gamma
        for label in ta:
            if label not in tb or math.isnan(ta[label]) or math.isnan(tb[label]):
                continue
            pa, pb = _block_angle_of(a.stability, label), _block_angle_of(b.stability, label)
            use_angle = pa is not None and pb is not None
            for k, j, c in levels:
                if use_angle:
                    if k == 1:
                        continue
                    roots = {2 * math.pi * j / k, 2 * math.pi * (k - j) / k}
                    hits = [r for r in roots if _crossed(pa - r, pb - r)]
                    if not hits:
                        continue
                    r = hits[0]
                    g = a.gamma + (b.gamma - a.gamma) * (pa - r) / (pa - pb)
                    fun = lambda x, r=r: _angle_at(a, b, x, label, cfg) - r
                else:
                    fa, fb = ta[label] - c, tb[label] - c
                    if not _crossed(fa, fb):
                        continue
                    g = a.gamma + (b.gamma - a.gamma) * fa / (fa - fb)
                    fun = lambda x, c=c: _trace_at(a, b, x, label, cfg) - c
                if refine and natural:
                    try:
                        g = brentq(fun, a.gamma, b.gamma, xtol=xtol)
                    except (ValueError, RuntimeError) + _NUMERIC:
                        pass
                before, after = _cover_mu(a, k, cfg), _cover_mu(b, k, cfg)
                kind = "index-jump" if k == 1 else "root-of-unity"
                frac = (g - a.gamma) / (b.gamma - a.gamma) if b.gamma != a.gamma else 0.5
                events.append(FamilyEvent(kind, float(g), label, k, before, after,
                                          i + min(max(frac, 0.0), 0.999), {"j": j, "level": c}))
    # traversal order; coincident events are all kept, planar block first
    events.sort(key=lambda e: (round(e.position, 4), order.get(e.block, 2), e.cover))
    return events


def detect_birth_death(trace: FamilyTrace) -> list:
    """Folds in Γ along the trace, checked for an index difference of exactly 1."""
    out = []
    pts = trace.points
    for i in range(1, len(pts) - 1):
        d1 = pts[i].gamma - pts[i - 1].gamma
        d2 = pts[i + 1].gamma - pts[i].gamma
        if d1 * d2 >= 0:
            continue
        # vertex of the parabola through the three Γ values
        g = np.array([pts[i - 1].gamma, pts[i].gamma, pts[i + 1].gamma])
        s = np.cumsum([0.0] + [np.linalg.norm(np.append(pts[k + 1].free, pts[k + 1].gamma)
                                              - np.append(pts[k].free, pts[k].gamma))
                               for k in (i - 1, i)])
        c2, c1, c0 = np.polyfit(s, g, 2)
        gstar = c0 - c1 * c1 / (4 * c2) if c2 != 0 else pts[i].gamma
        ma, mb = pts[i - 1].mu, pts[i + 1].mu
        ok = ma is not None and mb is not None and abs(ma - mb) == 1
        out.append(FamilyEvent("birth-death", float(gstar), "", 1, ma, mb, float(i),
                               {"index_difference_one": ok}))
    return out


# ------------------------------------------------------------------ anchored check

def _step_delta(ca, cb) -> int:
    """Index change of one block between two classes (eigenvalue-1 rule)."""
    ea, eb = ca.elliptic, cb.elliptic
    pa = ca.kind.startswith("pos")
    pb = cb.kind.startswith("pos")
    if ea and pb:
        return 1 if ca.angle > math.pi else -1
    if pa and eb:
        return -1 if cb.angle > math.pi else 1
    return 0


def anchored_indices(trace: FamilyTrace, anchor: int | None = None, strict: bool = True) -> list:
    """Propagate the total index along the trace, changing only at eigenvalue-1 crossings.

    Raises
    ------
    ContinuationError
        When ``strict`` and the propagated index differs from the
        per-orbit unwrapped one.
    """
    pts = trace.points
    mu = anchor if anchor is not None else pts[0].mu
    out = [mu]
    for a, b in zip(pts[:-1], pts[1:]):
        if mu is None or a.stability is None or b.stability is None:
            mu = b.mu
        else:
            blocks_a, blocks_b = a.stability.blocks, b.stability.blocks
            if len(blocks_a) == len(blocks_b):
                mu += sum(_step_delta(x, y) for x, y in zip(blocks_a, blocks_b))
            else:
                mu = b.mu
        if strict and b.mu is not None and mu is not None and mu != b.mu:
            raise ContinuationError(f"anchored index {mu} disagrees with unwrapped {b.mu} at Γ={b.gamma}")
        out.append(mu)
    return out


# ------------------------------------------------------------------ branch switching

def _symmetric_points(orbit: PeriodicOrbit, cfg, tol=1e-7):
    """States at multiples of ``T/4`` with the fixed sets they lie on: ``[(time, state, names)]``."""
    T = orbit.period
    run = replace(cfg, max_time=2 * T + 1)
    out = []
    for j in range(4):
        x = orbit.initial.as_array() if j == 0 else flow(orbit.initial, j * T / 4, run).as_array()
        names = [n for n, fs in FIXED_SETS.items() if np.max(np.abs(x[list(fs.zero)])) < tol]
        out.append((j * T / 4, x, names))
    return out


def _seed_from_state(x, start: str, target: str, planar: bool, gamma: float, family: str) -> OrbitSeed:
    v = dyn.to_velocity(dyn.PhaseState.from_array(x))
    q, qd = v.q, v.qdot
    if start == "rho1":
        params, dep = {"q1": q[0], "q3": q[2]}, qd[1]
    elif start == "rhobar1":
        params, dep = {"q1": q[0], "q2dot": qd[1]}, qd[2]
    elif start == "rho2":
        params, dep = {"q2": q[1], "q3": q[2]}, qd[0]
    else:
        params, dep = {"q2": q[1], "q1dot": qd[0]}, qd[2]
    params = {k: float(v) for k, v in params.items() if not (planar and k in ("q3", "q3dot"))}
    return OrbitSeed(start, target, gamma, params, sign=1 if dep >= 0 else -1, planar=planar, family=family)


def _candidate_pairs(points, k: int, planar: bool):
    """``(state, start, target, segment quarters)`` admissible for a ``k``-th cover branch."""
    out = []
    # the second half of the points are symmetry images of the first half
    for i, (_, x, names) in enumerate(points[:2]):
        for start in names:
            if planar and start.startswith("rhobar"):
                continue
            for target in points[(i + k) % 4][2]:
                if target != start and not (planar and target.startswith("rhobar")):
                    out.append((x, start, target, k))
            if start in points[(i + 2 * k) % 4][2]:
                out.append((x, start, start, 2 * k))
    return out


def _moving(seed: OrbitSeed, spatial: bool) -> list:
    if not spatial:
        return list(seed.free_names)
    if seed.start in ("rho1", "rho2"):
        return ["q3"]
    # the energy-determined out-of-plane velocity grows as the in-plane one shrinks
    return [n for n in seed.free_names if n.endswith("dot")]


def branch_switch(event: FamilyEvent, trace: FamilyTrace, cfg: IntegrationConfig = DEFAULT_CONFIG,
                  delta: float = 1e-3, amplitudes=(2e-3, 1e-2, 3e-2),
                  distinct: float = 1e-4, max_iter: int = 12, signs=(1,)) -> list:
    """Seeds of families bifurcating at ``event``.

    Candidates start at symmetric points of the parent at ``Γ* ± delta``.
    A ``k``-th cover branch keeps two of the parent's symmetries, so its
    segment runs from one symmetric point to the fixed set the parent
    reaches ``k`` quarter periods (or ``2k`` for a simply-symmetric branch)
    later. The start state is displaced in the fixed set's free
    coordinates that the degenerate block moves: all of them for a planar
    event, the out-of-plane one for a spatial event.

    Only the first side of ``Γ*`` that yields a branch is searched, and
    only one displacement sign by default; the σ-image of a spatial
    branch follows from ``mirror_seed``.

    Returns
    -------
    list of OrbitSeed
        Refined seeds whose initial state differs from every symmetric
        point of the parent by more than ``distinct``. Empty when nothing
        converges.
    """
    if event.kind not in ("index-jump", "root-of-unity"):
        raise ValueError("branch switching needs an index-jump or root-of-unity event")
    pts = trace.points
    i = min(int(event.position), len(pts) - 2) if len(pts) > 1 else 0
    a, b = pts[i], pts[min(i + 1, len(pts) - 1)]
    k = event.cover
    spatial = event.block in ("spatial", "pair1", "pair2") or not a.seed.planar
    planar = a.seed.planar and not spatial
    found = []
    for side in (-1, 1):
        g = event.gamma_star + side * delta
        seed, t = _interp_seed(a, b, g) if a.gamma != b.gamma else (a.seed, a.orbit.segment_time)
        try:
            parent = _shoot_seed(replace(seed, gamma=g), t, cfg)
        except _NUMERIC:
            continue
        spts = _symmetric_points(parent, cfg)
        refs = [x for _, x, _ in spts]
        for x, start, target, quarters in _candidate_pairs(spts, k, planar):
            base = _seed_from_state(x, start, target, planar, g, f"{trace.name}-branch{k}")
            hint = quarters * parent.period / 4
            for sgn in signs:
                for amp in amplitudes:
                    p = dict(base.params)
                    for n in _moving(base, spatial):
                        p[n] = p.get(n, 0.0) + sgn * amp
                    cand = replace(base, params=p)
                    try:
                        orb = refine_orbit(select_crossing(cand, hint, cfg), cfg, max_iter=max_iter)
                    except _NUMERIC:
                        continue
                    if orb.closure > 1e-6 or abs(orb.period - k * parent.period) > 0.2 * parent.period:
                        continue
                    x0 = orb.initial.as_array()
                    if min(np.max(np.abs(x0 - y)) for y in refs) <= distinct:
                        continue
                    if any(np.max(np.abs(x0 - f.initial.as_array())) < 1e-6 for f in found):
                        break
                    found.append(orb)
                    break
        if found:
            break
    return [o.seed for o in found]


# ------------------------------------------------------------------ graphs

@dataclass
class BranchEdge:
    """A family attached to a vertex: index, side and multiplicity (2 with its mirror)."""

    name: str
    mu: int
    parent: str
    gamma_star: float
    side: str
    multiplicity: int = 2
    quality: str = "good"
    annotated: bool = False


@dataclass
class Vertex:
    family: str
    cover: int
    gamma: float
    before: list
    after: list

    @property
    def chi_before(self) -> int:
        return euler_characteristic(self.before)

    @property
    def chi_after(self) -> int:
        return euler_characteristic(self.after)

    @property
    def balanced(self) -> bool:
        return self.chi_before == self.chi_after

    @property
    def label(self) -> str:
        b = [m for m, _, _ in self.before if m is not None]
        a = [m for m, _, _ in self.after if m is not None]
        return f"{self.family}^{self.cover} {b[0] if b else '?'}->{a[0] if a else '?'} at {self.gamma:.4g}"


@dataclass
class BifurcationGraph:
    vertices: list = field(default_factory=list)
    edges: list = field(default_factory=list)

    def to_json(self) -> str:
        doc = {
            "vertices": [dict(id=i, family=v.family, cover=v.cover, gamma=v.gamma,
                              before=[list(e) for e in v.before], after=[list(e) for e in v.after],
                              chi_before=v.chi_before, chi_after=v.chi_after, balanced=v.balanced)
                         for i, v in enumerate(self.vertices)],
            "edges": self.edges,
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    def to_dot(self) -> str:
        lines = ["graph bifurcation {", "  rankdir=BT;"]
        nodes = set()
        for i, v in enumerate(self.vertices):
            flag = "" if v.balanced else " (imbalance)"
            lines.append(f'  v{i} [label="{v.label}\\nchi {v.chi_before} / {v.chi_after}{flag}"];')
            nodes.add(f"v{i}")
        for e in self.edges:
            for end in (e["source"], e["target"]):
                if end not in nodes:
                    nodes.add(end)
                    lines.append(f'  {end} [shape=point];')
            style = ', style=dashed' if e.get("dashed") else ""
            lines.append(f'  {e["source"]} -- {e["target"]} [label="{e["family"]} {e["mu"]}"{style}];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def _cover_quality(pt: FamilyPoint, n: int, mode: str = "total", cfg=DEFAULT_CONFIG):
    """Index of the ``n``-th cover at ``pt`` and its good/bad label."""
    st, idx = pt.stability, pt.index
    if idx is None or st is None or not st.planar:
        return _cover_mu(pt, n, cfg), "good"
    mp = iterate_block(idx.mu_p, idx.theta_final, st.block_p.elliptic, n)
    if mode == "planar":
        return mp, "good" if n == 1 or (mp - idx.mu_p) % 2 == 0 else "bad"
    ms = iterate_block(idx.mu_s, idx.vartheta_final, st.block_s.elliptic, n)
    return mp + ms, good_bad(idx.mu_p, idx.mu_s, mp, ms, n).quality


def _parent_vertices(tr: FamilyTrace, bedges, tol, cfg):
    n = tr.cover
    evs = [e for e in tr.events if e.kind in ("index-jump", "root-of-unity") and n % e.cover == 0]
    if tr.index_mode == "planar":
        evs = [e for e in evs if e.block == "planar"]
    verts = []
    seen = set()
    for e in evs:
        i = int(e.position)
        if i in seen:
            continue
        a, b = tr.points[i], tr.points[i + 1]
        ma, qa = _cover_quality(a, n, tr.index_mode, cfg)
        mb, qb = _cover_quality(b, n, tr.index_mode, cfg)
        if ma == mb and qa == qb:
            continue
        seen.add(i)
        (mh, qh), (ml, ql) = ((ma, qa), (mb, qb)) if a.gamma > b.gamma else ((mb, qb), (ma, qa))
        before, after = [(mh, 1, qh)], [(ml, 1, ql)]
        for be in bedges:
            if be.parent == tr.name and abs(be.gamma_star - e.gamma_star) < tol:
                (before if be.side == "before" else after).append((be.mu, be.multiplicity, be.quality))
        verts.append(Vertex(tr.name, n, e.gamma_star, before, after))
    return sorted(verts, key=lambda v: -v.gamma)


def build_graph(traces, branches=(), tol: float = 5e-3,
                cfg: IntegrationConfig = DEFAULT_CONFIG) -> BifurcationGraph:
    """Bifurcation graph of covered parent traces and attached branch families.

    Parameters
    ----------
    traces : list of FamilyTrace
        Parents; each contributes a vertex at every event whose cover
        divides ``trace.cover`` and that changes the covered index or
        its good/bad label.
    branches : list of BranchEdge or FamilyTrace
        Families attached at a vertex (matched by parent name and Γ*
        within ``tol``). Traces need ``parent`` and ``attach_gamma`` and
        contribute the index of their point nearest the vertex.

    Notes
    -----
    Parent segments run from higher to lower Γ. A branch attached to two
    vertices becomes an edge between them; otherwise it ends in a free node.
    Every spatial branch with multiplicity 2 gets a dashed σ-mirror edge.
    """
    G = BifurcationGraph()
    bedges = [b for b in branches if isinstance(b, BranchEdge)]
    for t in branches:
        if isinstance(t, FamilyTrace) and t.points and t.parent and t.attach_gamma is not None:
            gstar = t.attach_gamma
            near = min(t.points, key=lambda p: abs(p.gamma - gstar))
            far = max(t.points, key=lambda p: abs(p.gamma - gstar))
            side = "before" if far.gamma > gstar else "after"
            bedges.append(BranchEdge(t.name, near.mu, t.parent, gstar, side, 2 if t.mirrored else 1))
    attach = {}
    for tr in traces:
        n = tr.cover
        verts = _parent_vertices(tr, bedges, tol, cfg)
        base = len(G.vertices)
        G.vertices.extend(verts)
        tag = f"{tr.name}^{n}" if n > 1 else tr.name
        ends = [f"{_node(tag)}_top"] + [f"v{base + j}" for j in range(len(verts))] + [f"{_node(tag)}_bottom"]
        if verts:
            mus = [v.before[0][0] for v in verts] + [verts[-1].after[0][0]]
        else:
            mus = [_cover_quality(tr.points[0], n, tr.index_mode, cfg)[0]]
            ends = ends[:1] + ends[-1:]
        for j in range(len(ends) - 1):
            G.edges.append(dict(source=ends[j], target=ends[j + 1], family=tag, mu=mus[j], dashed=False))
        for j, v in enumerate(verts):
            for be in bedges:
                if be.parent == tr.name and abs(be.gamma_star - v.gamma) < tol:
                    attach.setdefault(be.name, []).append((f"v{base + j}", be))
    for name, ends in attach.items():
        if len(ends) == 1:
            ends = ends + [(f"{_node(name)}_end", ends[0][1])]
        for (u, be), (w, _) in zip(ends[:-1], ends[1:]):
            G.edges.append(dict(source=u, target=w, family=name, mu=be.mu, dashed=False,
                                annotated=be.annotated))
            if be.multiplicity == 2:
                tgt = w if w.startswith("v") else f"{_node(name)}_mirror_end"
                G.edges.append(dict(source=u, target=tgt, family=name + "*", mu=be.mu, dashed=True,
                                    annotated=be.annotated))
    return G


def _node(name: str) -> str:
    return "".join(c if c.isalnum() else "_" for c in name.replace("'", "p"))


# ------------------------------------------------------------------ scenarios

@dataclass(frozen=True)
class ParentSpec:
    family: str
    cover: int
    window: tuple
    fixture_gamma: float
    index_mode: str = "total"


@dataclass(frozen=True)
class BranchSpec:
    family: str
    parent: str
    gamma_star: float
    fixture_gamma: float | None = None
    mu: int | None = None
    side: str | None = None
    multiplicity: int = 2


#: vertex neighbourhoods of the published bifurcation graphs
SCENARIOS = {
    "planar": (
        [ParentSpec("g", 1, (4.56, 4.44), 4.49999, "planar")],
        [BranchSpec("g'", "g", 4.49999, 4.45, side="after")],
    ),
    "double": (
        [ParentSpec("g", 2, (3.09, 3.03), 3.057471), ParentSpec("g'", 2, (4.30, 4.27), 4.285183)],
        [BranchSpec("g1v", "g", 3.057471, 3.046842, side="after"),
         BranchSpec("g_1v^YOZ", "g", 3.057471, None, mu=10, side="after")],
    ),
    "third": (
        [ParentSpec("g", 3, (3.90, 3.85), 3.876616), ParentSpec("g'", 3, (4.37, 4.33), 4.347942),
         ParentSpec("f", 5, (0.79, 0.72), 0.755141)],
        [BranchSpec("fg23", "g", 3.876616, 3.876404), BranchSpec("fg2cut3", "g", 3.876616, 3.833903),
         BranchSpec("fg'23", "g'", 4.347942, 4.347872), BranchSpec("fg'2cut3", "g'", 4.347942, 4.347931),
         BranchSpec("fg23", "f", 0.755141, 0.755192)],
    ),
}


def _fixture_trace(parent: ParentSpec, cfg, step: float):
    from .fixtures import fixture_row
    row = fixture_row(parent.family, parent.fixture_gamma)
    hi, lo = parent.window
    orb = _shoot_seed(row.seed(), row.t_hint, cfg)
    t_hint = orb.segment_time
    tr = continue_family(orb.seed, (hi, lo), step, cfg, t_hint=t_hint, name=parent.family)
    tr.cover = parent.cover
    tr.index_mode = parent.index_mode
    tr.events = detect_events(tr, parent.cover, cfg)
    return tr


def _branch_edge(b: BranchSpec, cfg, vertex_gamma: float, mode: str = "total") -> BranchEdge:
    from .fixtures import fixture_row, fixture_rows
    if b.fixture_gamma is None:
        return BranchEdge(b.family, b.mu, b.parent, vertex_gamma, b.side or "after",
                          b.multiplicity, annotated=True)
    side = b.side or ("before" if b.fixture_gamma > vertex_gamma else "after")
    first = fixture_row(b.family, b.fixture_gamma)
    # rows right at the vertex can have a multiplier at 1; step away along the branch
    rows = sorted((r for r in fixture_rows(b.family)
                   if (r.gamma - vertex_gamma) * (b.fixture_gamma - vertex_gamma) > 0),
                  key=lambda r: abs(r.gamma - b.fixture_gamma))
    for row in [first] + [r for r in rows if r is not first][:3]:
        try:
            idx = cz_index(_shoot_seed(row.seed(), row.t_hint, cfg), cfg)
        except DegenerateIndex:
            continue
        mu = idx.mu_p if mode == "planar" else idx.mu_total
        return BranchEdge(b.family, mu, b.parent, vertex_gamma, side, b.multiplicity)
    raise ContinuationError(f"no nondegenerate fixture row of {b.family} near Γ={b.fixture_gamma}")


def scenario_graph(name: str, cfg: IntegrationConfig = DEFAULT_CONFIG, step: float = 0.01,
                   families=None):
    """Graph of a named scenario from fixture seeds.

    Parents are continued across a short window around the vertex and
    their cover events located; branch indices come from the fixture row
    nearest each vertex, or from the annotation when a family has no rows.
    ``families`` restricts the parents (and their branches) to those named.

    Returns
    -------
    graph : BifurcationGraph
    traces : list of FamilyTrace
    """
    parents, branches = SCENARIOS[name]
    if families is not None:
        parents = [p for p in parents if p.family in families]
        branches = [b for b in branches if b.parent in families]
    traces = [_fixture_trace(p, cfg, step) for p in parents]
    edges = []
    for b in branches:
        tr, p = next((t, p) for t, p in zip(traces, parents) if p.family == b.parent
                     and abs(p.fixture_gamma - b.gamma_star) < 1e-6)
        evs = [e for e in tr.events if tr.cover % e.cover == 0]
        g = min(evs, key=lambda e: abs(e.gamma_star - b.gamma_star)).gamma_star if evs else b.gamma_star
        edges.append(_branch_edge(b, cfg, g, p.index_mode))
    return build_graph(traces, edges, tol=1e-6), traces


# ------------------------------------------------------------------ CSV

CSV_HEADER = ["gamma", "q1_0", "q3_0", "q2dot_0", "q3dot_0", "T_s", "tr_Ap", "class_p",
              "angle_or_lambda_p", "T_a", "tr_As", "class_s", "angle_or_lambda_s", "T_d",
              "mu_p", "mu_s", "mu", "sign_C", "sign_B", "events"]


def fmt(x, digits: int = 6) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.{digits}g}"


def point_row(pt: FamilyPoint, events: str = "", digits: int = 6) -> list:
    v = pt.orbit.velocity
    st, idx, per = pt.stability, pt.index, pt.periods
    trs = dict(block_traces(st))
    blocks = st.blocks if st is not None else []
    bp = blocks[0] if len(blocks) > 0 else None
    bs = blocks[1] if len(blocks) > 1 else None
    tr_keys = list(trs)

    def sgn(b, attr):
        if b is None:
            return ""
        return {1: "+", -1: "-", 0: "0"}[getattr(b, attr)]

    return [fmt(pt.gamma, digits), fmt(v.q[0], digits), fmt(v.q[2], digits), fmt(v.qdot[1], digits),
            fmt(v.qdot[2], digits), fmt(per.t_synodic if per else 365.25 * pt.orbit.period / (2 * math.pi), digits),
            fmt(trs[tr_keys[0]], digits) if tr_keys else "", bp.kind if bp else "",
            fmt(bp.value, digits) if bp else "", fmt(per.t_anomalistic if per else None, digits),
            fmt(trs[tr_keys[1]], digits) if len(tr_keys) > 1 else "", bs.kind if bs else "",
            fmt(bs.value, digits) if bs else "", fmt(per.t_draconitic if per else None, digits),
            fmt(idx.mu_p if idx else None), fmt(idx.mu_s if idx else None), fmt(idx.mu_total if idx else None),
            ";".join(sgn(b, "sign_c") for b in blocks), ";".join(sgn(b, "sign_b") for b in blocks), events]


def trace_csv(trace: FamilyTrace, digits: int = 6) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    by_point = {}
    for e in trace.events:
        by_point.setdefault(min(len(trace.points) - 1, math.ceil(e.position)), []).append(e.label)
    for i, pt in enumerate(trace.points):
        w.writerow(point_row(pt, " ".join(by_point.get(i, [])), digits))
    return buf.getvalue()


def mirror_seed(seed: OrbitSeed) -> OrbitSeed:
    """Seed of the σ-image family (spatial coordinates reversed)."""
    p = dict(seed.params)
    for k in ("q3",):
        if k in p:
            p[k] = -p[k]
    sign = seed.sign
    if seed.dependent_name == "q3dot":
        sign = -sign
    return replace(seed, params=p, sign=sign, family=seed.family + "*")


__all__ = [
    "FamilyPoint", "FamilyEvent", "FamilyTrace", "BranchEdge", "Vertex", "BifurcationGraph",
    "ContinuationError", "evaluate", "continue_family", "block_traces", "detect_events",
    "detect_birth_death", "anchored_indices", "branch_switch", "build_graph", "trace_csv",
    "CSV_HEADER", "mirror_seed", "SCENARIOS", "scenario_graph",
]
