"""Linear symmetry group, fixed-point sets, seeds and symmetric shooting."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from . import dynamics as dyn
from .dynamics import PhaseState, VelocityState
from .integrator import (DEFAULT_CONFIG, IntegrationConfig, TangentFrame,
                         crossing_times, flow, locate_section_crossing, sample)

COORDS = ("q1", "q2", "q3", "p1", "p2", "p3")


@dataclass(frozen=True)
class SymmetryElement:
    name: str
    signs: tuple

    @property
    def matrix(self) -> np.ndarray:
        return np.diag(np.asarray(self.signs, dtype=float))

    @property
    def kind(self) -> str:
        M = self.matrix
        return "symplectic" if np.allclose(M.T @ dyn.J6 @ M, dyn.J6) else "anti-symplectic"

    def __call__(self, x):
        if isinstance(x, PhaseState):
            return PhaseState.from_array(self.matrix @ x.as_array())
        return np.asarray(x, dtype=float) * np.asarray(self.signs, dtype=float)

    def __matmul__(self, other: "SymmetryElement") -> "SymmetryElement":
        s = tuple(int(a * b) for a, b in zip(self.signs, other.signs))
        return element_from_signs(s)


GROUP = {
    "id": SymmetryElement("id", (1, 1, 1, 1, 1, 1)),
    "-id": SymmetryElement("-id", (-1, -1, -1, -1, -1, -1)),
    "sigma": SymmetryElement("sigma", (1, 1, -1, 1, 1, -1)),
    "-sigma": SymmetryElement("-sigma", (-1, -1, 1, -1, -1, 1)),
    "rho1": SymmetryElement("rho1", (1, -1, 1, -1, 1, -1)),
    "rho2": SymmetryElement("rho2", (-1, 1, 1, 1, -1, -1)),
    "rhobar1": SymmetryElement("rhobar1", (1, -1, -1, -1, 1, 1)),
    "rhobar2": SymmetryElement("rhobar2", (-1, 1, -1, 1, -1, 1)),
}


def element_from_signs(signs) -> SymmetryElement:
    signs = tuple(int(s) for s in signs)
    for g in GROUP.values():
        if g.signs == signs:
            return g
    raise KeyError(f"{signs} is not in the symmetry group")


def composition_table() -> dict:
    return {(a, b): (GROUP[a] @ GROUP[b]).name for a in GROUP for b in GROUP}


@dataclass(frozen=True)
class FixedSetSpec:
    """Fixed-point set of an anti-symplectic symmetry.

    ``free`` are the coordinates that are unconstrained on the set, ``zero``
    the complement. ``section`` is the coordinate whose sign change marks a
    return to the set, ``dependent`` the momenta that the linearized energy
    condition may be solved for, in order of preference.
    """

    symmetry: str
    free: tuple
    zero: tuple
    section: int
    dependent: tuple

    @property
    def element(self) -> SymmetryElement:
        return GROUP[self.symmetry]

    def project(self, x) -> np.ndarray:
        x = np.array(x, dtype=float)
        x[list(self.zero)] = 0.0
        return x


FIXED_SETS = {
    "rho1": FixedSetSpec("rho1", (0, 2, 4), (1, 3, 5), 1, (4,)),
    "rhobar1": FixedSetSpec("rhobar1", (0, 4, 5), (1, 2, 3), 1, (5, 4)),
    "rho2": FixedSetSpec("rho2", (1, 2, 3), (0, 4, 5), 0, (3,)),
    "rhobar2": FixedSetSpec("rhobar2", (1, 3, 5), (0, 2, 4), 0, (5, 3)),
}

# free seed parameters and the velocity fixed by the energy condition
SEED_PARAMS = {
    "rho1": (("q1", "q3"), "q2dot"),
    "rhobar1": (("q1", "q2dot"), "q3dot"),
    "rho2": (("q2", "q3"), "q1dot"),
    "rhobar2": (("q2", "q1dot"), "q3dot"),
}

PLANAR_DROP = {"q3", "q3dot"}


class OutsideHillRegion(ValueError):
    pass


class ShootingError(RuntimeError):
    pass


@dataclass(frozen=True)
class OrbitSeed:
    """Symmetry-constrained initial data.

    Parameters
    ----------
    start, target : str
        Names of the anti-symplectic symmetries whose fixed sets the
        shooting segment starts on and ends on.
    gamma : float
        Jacobi value.
    params : mapping
        Free parameters, e.g. ``{"q1": 0.176}`` for a planar start on
        Fix(rho1) or ``{"q1": .., "q2dot": ..}`` on Fix(rhobar1).
    sign : int
        Sign of the velocity obtained from the energy condition.
    crossings : int
        Which section crossing ends the segment.
    planar : bool
        Restrict to Fix(sigma).
    cover : int
        Iterate analysed downstream.
    family : str
        Label only.
    """

    start: str
    target: str
    gamma: float
    params: Mapping[str, float]
    sign: int = 1
    crossings: int = 1
    planar: bool = True
    cover: int = 1
    family: str = ""

    @property
    def start_set(self) -> FixedSetSpec:
        return FIXED_SETS[self.start]

    @property
    def target_set(self) -> FixedSetSpec:
        return FIXED_SETS[self.target]

    @property
    def multiplicity(self) -> int:
        return 2 if self.start == self.target else 4

    @property
    def free_names(self) -> tuple:
        names = SEED_PARAMS[self.start][0]
        if self.planar:
            names = tuple(n for n in names if n not in PLANAR_DROP)
        return names

    @property
    def dependent_name(self) -> str:
        return SEED_PARAMS[self.start][1]

    def free_vector(self) -> np.ndarray:
        return np.array([self.params[n] for n in self.free_names], dtype=float)

    def with_free(self, values, gamma=None) -> "OrbitSeed":
        p = dict(self.params)
        for n, v in zip(self.free_names, np.atleast_1d(values)):
            p[n] = float(v)
        return replace(self, params=p, gamma=self.gamma if gamma is None else float(gamma))


def _velocity_state(seed: OrbitSeed, floor: float = dyn.COLLISION_FLOOR) -> VelocityState:
    P = {k: float(v) for k, v in seed.params.items()}
    if seed.planar:
        for k in PLANAR_DROP:
            P[k] = 0.0
    q = np.zeros(3)
    qd = np.zeros(3)
    g = seed.gamma
    start = seed.start
    if start in ("rho1", "rhobar1"):
        q[0] = P["q1"]
        if start == "rho1":
            q[2] = P.get("q3", 0.0)
        else:
            qd[1] = P["q2dot"]
    else:
        q[1] = P["q2"]
        if start == "rho2":
            q[2] = P.get("q3", 0.0)
        else:
            qd[0] = P["q1dot"]
    r = np.linalg.norm(q)
    if r < floor:
        raise dyn.CollisionError("seed position at the collision floor")
    rad = 2.0 / r + 3.0 * q[0] ** 2 - q[2] ** 2 - qd @ qd - g
    if rad < 0:
        raise OutsideHillRegion(f"energy radicand {rad:.3e} < 0: outside Hill region")
    dep = {"q1dot": 0, "q2dot": 1, "q3dot": 2}[seed.dependent_name]
    qd[dep] = np.copysign(np.sqrt(rad), seed.sign)
    return VelocityState(q, qd)


def build_seed_state(seed: OrbitSeed) -> PhaseState:
    """Initial phase state of ``seed`` with the dependent velocity from the energy condition."""
    return dyn.to_phase(_velocity_state(seed))


def seed_velocity(seed: OrbitSeed) -> VelocityState:
    return _velocity_state(seed)


def perpendicularity_residual(s, target: FixedSetSpec, planar: bool = False) -> np.ndarray:
    """Zero-coordinates of ``target`` evaluated at ``s``, excluding the section coordinate."""
    x = s.as_array() if isinstance(s, PhaseState) else np.asarray(s, dtype=float)
    idx = [i for i in target.zero if i != target.section]
    if planar:
        idx = [i for i in idx if i not in (2, 5)]
    return x[idx]


def select_crossing(seed: OrbitSeed, t_hint: float, cfg: IntegrationConfig = DEFAULT_CONFIG) -> OrbitSeed:
    """Return ``seed`` with ``crossings`` set to the crossing nearest ``t_hint``.

    The crossing count of a branch changes when loops form, while the
    segment time stays continuous; continuation therefore tracks the time.
    """
    x0 = build_seed_state(seed)
    ts = crossing_times(x0, seed.target_set.section, 1.5 * t_hint + 0.05, cfg)
    ts = ts[ts > 1e-9]
    if ts.size == 0:
        raise ShootingError("no section crossing near the expected segment time")
    k = int(np.argmin(np.abs(ts - t_hint))) + 1
    return replace(seed, crossings=k)


def _residual_index(seed: OrbitSeed):
    t = seed.target_set
    idx = [i for i in t.zero if i != t.section]
    if seed.planar:
        idx = [i for i in idx if i not in (2, 5)]
    return idx


def shoot(seed: OrbitSeed, cfg: IntegrationConfig = DEFAULT_CONFIG, with_frame=False):
    """Integrate from the seed to the ``seed.crossings``-th section crossing.

    Returns
    -------
    segment_time : float
    residual : ndarray
    crossing : Crossing
        Full crossing record (state and, if requested, the transported frame).
    """
    s0 = build_seed_state(seed)
    c = locate_section_crossing(s0, seed.target_set.section, cfg, count=seed.crossings,
                                M0=TangentFrame.identity() if with_frame else None,
                                include_start=False)
    return c.time, perpendicularity_residual(c.state, seed.target_set, seed.planar), c


@dataclass
class PeriodicOrbit:
    """Converged symmetric periodic orbit."""

    seed: OrbitSeed
    initial: PhaseState
    segment_time: float
    period: float
    residual: float
    closure: float = np.nan
    iterations: int = 0
    min_radius: float = np.inf
    samples: np.ndarray | None = field(default=None, repr=False)

    @property
    def gamma(self) -> float:
        return self.seed.gamma

    @property
    def velocity(self) -> VelocityState:
        return dyn.to_velocity(self.initial)


def _seed_jacobian(seed: OrbitSeed, eps=1e-7) -> np.ndarray:
    p = seed.free_vector()
    cols = []
    for i in range(p.size):
        dp = np.zeros_like(p)
        h = eps * max(1.0, abs(p[i]))
        dp[i] = h
        xp = build_seed_state(seed.with_free(p + dp)).as_array()
        xm = build_seed_state(seed.with_free(p - dp)).as_array()
        cols.append((xp - xm) / (2 * h))
    return np.column_stack(cols)


def _newton_system(seed: OrbitSeed, cfg: IntegrationConfig):
    t, r, c = shoot(seed, cfg, with_frame=True)
    M = c.frame.columns
    dx0 = _seed_jacobian(seed)
    f = dyn.vector_field(c.state)
    dx = M @ dx0
    sec = seed.target_set.section
    dt = -dx[sec] / f[sec]
    dxt = dx + np.outer(f, dt)
    J = dxt[_residual_index(seed)]
    return t, r, J, c


def refine_orbit(seed: OrbitSeed, cfg: IntegrationConfig = DEFAULT_CONFIG, tol: float = 1e-10,
                 max_iter: int = 25, tol_close: float = 1e-8, check_closure: bool = True,
                 max_step: float | None = None) -> PeriodicOrbit:
    """Newton correction of the free parameters at fixed Γ.

    The Jacobian is taken from the transported variational frame; a
    backtracking line search guards against overshooting.

    Raises
    ------
    ShootingError
        On divergence or when no crossing is found.
    """
    cur = seed
    t, r, J, c = _newton_system(cur, cfg)
    # later shots cannot legitimately run much longer than the first
    cfg = replace(cfg, max_time=min(cfg.max_time, 3.0 * t + 1.0))
    it = 0
    while np.max(np.abs(r)) >= tol:
        if it >= max_iter:
            raise ShootingError(f"no convergence after {max_iter} iterations (|r|={np.max(np.abs(r)):.2e})")
        if np.linalg.cond(J) > 1e12:
            J = _fd_jacobian(cur, cfg)
        step = -np.linalg.lstsq(J, r, rcond=None)[0]
        if max_step is not None:
            n = np.max(np.abs(step))
            if n > max_step:
                step *= max_step / n
        p = cur.free_vector()
        lam = 1.0
        nr = np.max(np.abs(r))
        while True:
            trial = cur.with_free(p + lam * step)
            try:
                t2, r2, J2, c2 = _newton_system(trial, cfg)
                ok = np.max(np.abs(r2)) < nr or lam < 1e-3
            except (OutsideHillRegion, dyn.CollisionError, RuntimeError):
                ok = False
                if lam < 1e-3:
                    raise ShootingError("line search left the admissible region")
            if ok:
                break
            lam *= 0.5
        cur, t, r, J, c = trial, t2, r2, J2, c2
        it += 1
    x0 = build_seed_state(cur)
    T = cur.multiplicity * t
    orbit = PeriodicOrbit(cur, x0, t, T, float(np.max(np.abs(r))) if r.size else 0.0,
                          iterations=it, min_radius=c.rmin)
    if check_closure:
        xe = flow(x0, T, replace(cfg, max_time=max(cfg.max_time, 1.01 * T)))
        orbit.closure = float(np.max(np.abs(xe.as_array() - x0.as_array())))
    return orbit


def _fd_jacobian(seed: OrbitSeed, cfg, eps=1e-7):
    p = seed.free_vector()
    cols = []
    for i in range(p.size):
        dp = np.zeros_like(p)
        dp[i] = eps * max(1.0, abs(p[i]))
        _, rp, _ = shoot(seed.with_free(p + dp), cfg)
        _, rm, _ = shoot(seed.with_free(p - dp), cfg)
        cols.append((rp - rm) / (2 * dp[i]))
    return np.column_stack(cols)


def orbit_samples(orbit: PeriodicOrbit, n: int = 1000, cfg: IntegrationConfig = DEFAULT_CONFIG,
                  periods: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Times and states at ``n`` equally spaced points over ``periods`` periods."""
    T = orbit.period * periods
    ts = np.linspace(0.0, T, n)
    return ts, sample(orbit.initial, ts, replace(cfg, max_time=max(cfg.max_time, 1.01 * T)))
