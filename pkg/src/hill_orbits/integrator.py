"""Fixed-step RK4 propagation of the state and of the state with a tangent frame.

Section crossings are bracketed on the RK4 grid, located on a cubic Hermite
interpolant by bisection and then polished by secant iteration on a partial
RK4 step so that the monitored coordinate vanishes to ``tol_event``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .dynamics import (COLLISION_FLOOR, CollisionError, PhaseState, _field,
                       _field_with_frame)


@dataclass(frozen=True)
class IntegrationConfig:
    """Integration settings.

    Parameters
    ----------
    step : float
        RK4 step in Hill time units.
    tol_event : float
        Target ``|coordinate|`` at a located section crossing.
    max_time : float
        Upper bound on any single propagation.
    floor : float
        Collision floor on ``|q|``.
    """

    step: float = 1e-5
    tol_event: float = 1e-12
    max_time: float = 200.0
    floor: float = COLLISION_FLOOR

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("step must be positive")
        if not self.tol_event > 0:
            raise ValueError("tol_event must be positive")
        if not self.max_time > 0:
            raise ValueError("max_time must be positive")


DEFAULT_CONFIG = IntegrationConfig()


@dataclass
class TangentFrame:
    """Six tangent vectors stored as the columns of a 6x6 matrix."""

    columns: np.ndarray
    basis_tag: str = "canonical"

    @classmethod
    def identity(cls) -> "TangentFrame":
        return cls(np.eye(6))


class IntegrationError(RuntimeError):
    pass


# ---------------------------------------------------------------- kernels

@njit(cache=True)
def _rk4(y, h, frame, out):
    n = y.shape[0]
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    if frame:
        _field_with_frame(y, k1)
        _field_with_frame(y + 0.5 * h * k1, k2)
        _field_with_frame(y + 0.5 * h * k2, k3)
        _field_with_frame(y + h * k3, k4)
    else:
        _field(y, k1)
        _field(y + 0.5 * h * k1, k2)
        _field(y + 0.5 * h * k2, k3)
        _field(y + h * k3, k4)
    out[:] = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@njit(cache=True)
def _radius(y):
    return np.sqrt(y[0] * y[0] + y[1] * y[1] + y[2] * y[2])


@njit(cache=True)
def _propagate(y0, t, h, frame, floor):
    """Integrate to time ``t`` (either sign). Returns (y, min radius)."""
    y = y0.copy()
    nxt = np.empty_like(y)
    sgn = 1.0 if t >= 0 else -1.0
    T = abs(t)
    n = int(np.floor(T / h))
    rmin = _radius(y)
    for _ in range(n):
        _rk4(y, sgn * h, frame, nxt)
        y[:] = nxt
        r = _radius(y)
        if r < rmin:
            rmin = r
            if r < floor:
                return y, rmin
    rest = T - n * h
    if rest > 0.0:
        _rk4(y, sgn * rest, frame, nxt)
        y[:] = nxt
        r = _radius(y)
        if r < rmin:
            rmin = r
    return y, rmin


@njit(cache=True)
def _sample(y0, times, h, frame, floor):
    """States at increasing nonnegative ``times`` (first may be 0)."""
    m = times.shape[0]
    out = np.empty((m, y0.shape[0]))
    y = y0.copy()
    nxt = np.empty_like(y)
    tc = 0.0
    rmin = _radius(y)
    for i in range(m):
        target = times[i]
        while tc + h <= target:
            _rk4(y, h, frame, nxt)
            y[:] = nxt
            tc += h
            r = _radius(y)
            if r < rmin:
                rmin = r
            if r < floor:
                return out[:i], rmin
        rest = target - tc
        if rest > 0.0:
            _rk4(y, rest, frame, nxt)
            out[i] = nxt
        else:
            out[i] = y
    return out, rmin


@njit(cache=True)
def _hermite(f0, d0, f1, d1, h, s):
    # cubic Hermite value at fraction s of an interval of length h
    s2 = s * s
    s3 = s2 * s
    return ((2 * s3 - 3 * s2 + 1) * f0 + (s3 - 2 * s2 + s) * h * d0
            + (-2 * s3 + 3 * s2) * f1 + (s3 - s2) * h * d1)


@njit(cache=True)
def _crossing(y0, idx, count, h, tmax, tol, frame, floor):
    """Advance to the ``count``-th sign change of coordinate ``idx``.

    Returns (status, t, y, rmin) with status 0 on success, 1 if no crossing
    before ``tmax``, 2 on collision.
    """
    y = y0.copy()
    nxt = np.empty_like(y)
    f0 = np.empty(y.shape[0])
    f1 = np.empty(y.shape[0])
    t = 0.0
    found = 0
    rmin = _radius(y)
    # a start exactly on the section is not a crossing
    _field(y[:6], f0[:6])
    while t < tmax:
        _rk4(y, h, frame, nxt)
        a = y[idx]
        b = nxt[idx]
        _field(nxt[:6], f1[:6])
        r = _radius(nxt)
        if r < rmin:
            rmin = r
        if r < floor:
            return 2, t, nxt, rmin
        crossed = (a < 0.0 and b >= 0.0) or (a > 0.0 and b <= 0.0)
        if crossed and b == 0.0:
            found += 1
            if found == count:
                return 0, t + h, nxt.copy(), rmin
            crossed = False
        elif crossed:
            found += 1
        if crossed and found == count:
            da = f0[idx]
            db = f1[idx]
            lo = 0.0
            hi = 1.0
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                v = _hermite(a, da, b, db, h, mid)
                if (v < 0.0) == (a < 0.0) and v != 0.0:
                    lo = mid
                else:
                    hi = mid
            tau = 0.5 * (lo + hi) * h
            # secant polish on the actual partial RK4 step
            _rk4(y, tau, frame, nxt)
            g1 = nxt[idx]
            tau_prev = tau
            g_prev = g1
            _field(nxt[:6], f1[:6])
            tau = tau - g1 / f1[idx]
            for _ in range(30):
                _rk4(y, tau, frame, nxt)
                g = nxt[idx]
                if abs(g) <= tol:
                    break
                denom = g - g_prev
                if denom == 0.0:
                    break
                tau_new = tau - g * (tau - tau_prev) / denom
                tau_prev = tau
                g_prev = g
                tau = tau_new
            _rk4(y, tau, frame, nxt)
            return 0, t + tau, nxt.copy(), rmin
        y[:] = nxt
        f0[:6] = f1[:6]
        t += h
    return 1, t, y, rmin


@njit(cache=True)
def _crossing_times(y0, idx, h, tmax, floor):
    """Approximate times of all sign changes of coordinate ``idx`` up to ``tmax``."""
    y = y0.copy()
    nxt = np.empty_like(y)
    out = []
    t = 0.0
    while t < tmax:
        _rk4(y, h, False, nxt)
        a = y[idx]
        b = nxt[idx]
        if _radius(nxt) < floor:
            break
        if (a < 0.0 and b >= 0.0) or (a > 0.0 and b <= 0.0):
            out.append(t + h * a / (a - b))
        y[:] = nxt
        t += h
    return out


# ---------------------------------------------------------------- public API

def _pack(s: PhaseState, M0=None) -> np.ndarray:
    x = s.as_array()
    if M0 is None:
        return x
    M = M0.columns if isinstance(M0, TangentFrame) else np.asarray(M0, float)
    return np.concatenate([x, M.reshape(36)])


def rk4_step(s: PhaseState, h: float, floor: float = COLLISION_FLOOR) -> PhaseState:
    """One classical RK4 step of size ``h`` (negative for backward flow)."""
    if h == 0:
        return s
    y = s.as_array()
    out = np.empty(6)
    _rk4(y, float(h), False, out)
    if np.linalg.norm(out[:3]) < floor or not np.all(np.isfinite(out)):
        raise CollisionError("collision during RK4 step")
    return PhaseState.from_array(out)


def _check(rmin, cfg, what="flow"):
    if rmin < cfg.floor:
        raise CollisionError(f"{what}: |q| reached {rmin:.3e} (< floor {cfg.floor:.1e})")


def flow(s: PhaseState, t: float, cfg: IntegrationConfig = DEFAULT_CONFIG) -> PhaseState:
    """Flow ``s`` for time ``t`` with fixed RK4 steps and a final partial step."""
    if not np.isfinite(t):
        raise ValueError("t must be finite")
    if abs(t) > cfg.max_time:
        raise IntegrationError(f"|t|={abs(t)} exceeds max_time={cfg.max_time}")
    y, rmin = _propagate(s.as_array(), float(t), cfg.step, False, cfg.floor)
    _check(rmin, cfg)
    return PhaseState.from_array(y)


def flow_with_frame(s: PhaseState, M0, t: float,
                    cfg: IntegrationConfig = DEFAULT_CONFIG):
    """Jointly propagate the state and a tangent frame.

    Returns
    -------
    (PhaseState, TangentFrame)
        Final state and ``dφ^t · M0``.
    """
    if M0 is None:
        M0 = TangentFrame.identity()
    if abs(t) > cfg.max_time:
        raise IntegrationError(f"|t|={abs(t)} exceeds max_time={cfg.max_time}")
    tag = M0.basis_tag if isinstance(M0, TangentFrame) else "canonical"
    y, rmin = _propagate(_pack(s, M0), float(t), cfg.step, True, cfg.floor)
    _check(rmin, cfg)
    return PhaseState.from_array(y[:6]), TangentFrame(y[6:].reshape(6, 6).copy(), tag)


def sample(s: PhaseState, times, cfg: IntegrationConfig = DEFAULT_CONFIG,
           M0=None):
    """States (and optionally frames) at nondecreasing nonnegative times.

    Returns an array of shape ``(len(times), 6)`` or ``(len(times), 42)``.
    """
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0) or (times.size and times[0] < 0):
        raise ValueError("times must be nondecreasing and nonnegative")
    frame = M0 is not None
    out, rmin = _sample(_pack(s, M0), times, cfg.step, frame, cfg.floor)
    _check(rmin, cfg, "sample")
    return out


def crossing_times(s: PhaseState, coord: int, tmax: float,
                   cfg: IntegrationConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Approximate times of every zero crossing of ``coord`` in ``(0, tmax]``."""
    return np.array(_crossing_times(s.as_array(), int(coord), cfg.step, float(tmax), cfg.floor))


@dataclass
class Crossing:
    time: float
    state: PhaseState
    frame: TangentFrame | None = None
    rmin: float = field(default=np.inf)


def locate_section_crossing(s: PhaseState, coord: int, cfg: IntegrationConfig = DEFAULT_CONFIG,
                            count: int = 1, M0=None, include_start: bool = True) -> Crossing:
    """Time and state of the ``count``-th zero crossing of coordinate ``coord``.

    Parameters
    ----------
    s : PhaseState
        Start state.
    coord : int
        Index into ``(q1, q2, q3, p1, p2, p3)`` of the monitored coordinate.
    count : int
        Which crossing terminates the search. A start lying exactly on the
        section does not count toward ``count``.
    M0 : TangentFrame, optional
        When given, the frame is transported alongside.
    include_start : bool
        If true and the start already lies on the section, return ``t = 0``.
    """
    on_section = abs(s.as_array()[coord]) <= cfg.tol_event
    if count == 0 or (include_start and on_section):
        return Crossing(0.0, s, M0 if M0 is not None else None, float(np.linalg.norm(s.q)))
    frame = M0 is not None
    status, t, y, rmin = _crossing(_pack(s, M0), int(coord), int(count), cfg.step,
                                   cfg.max_time, cfg.tol_event, frame, cfg.floor)
    if status == 2:
        raise CollisionError(f"collision before crossing (|q| = {rmin:.3e})")
    if status == 1:
        raise IntegrationError(f"no crossing of coordinate {coord} before t={cfg.max_time}")
    st = PhaseState.from_array(y[:6])
    fr = TangentFrame(y[6:].reshape(6, 6).copy()) if frame else None
    return Crossing(float(t), st, fr, float(rmin))
