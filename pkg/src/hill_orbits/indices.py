"""Rotation functions, Conley–Zehnder indices, covers and lunar periods.

The linearized flow is expressed in a unitary transverse frame built from
the gradient of ``H``: in complex coordinates ``z = q − i p`` the matrix
``J6`` acts as multiplication by ``i``, and the frame

    f1 = (−conj G2, conj G1, 0) / |·|,    f2 = conj(G × f1) / |·|

is Hermitian-orthogonal to ``G = ∇H`` and to each other. Real frame columns
are ``[f1, f2, J f1, J f2]``; since the frame depends only on the state it
is periodic along a periodic orbit, so the transverse path

    Φ(t) = E(t)ᵀ · dφ^t · E(0)

is a symplectic path starting at the identity. In frame coordinates a
positive quadratic Hamiltonian rotates counterclockwise in each
``(a_k, b_k)`` plane, which fixes the orientation of all angles below.
For planar orbits ``f1`` is planar and ``f2`` is ``±e_q3`` up to phase, so
``Φ`` splits into a planar and a spatial 2x2 path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .integrator import DEFAULT_CONFIG, IntegrationConfig
from .monodromy import (
    BlockClass,
    StabilityReport,
    grad_h,
    stability,
    transport,
)
from .symmetries import PeriodicOrbit

DAYS_PER_YEAR = 365.25

#: tolerance when snapping a hyperbolic unwrapped angle to a multiple of π
SNAP_TOL = 0.3


class DegenerateIndex(ArithmeticError):
    """Index undefined (degenerate endpoint) or inconsistent between methods."""


# ------------------------------------------------------------------ frames

def _to_complex(x):
    # real (q, p) -> z = q - i p
    x = np.asarray(x)
    return x[..., :3] - 1j * x[..., 3:]


def _to_real(z):
    return np.concatenate([z.real, -z.imag], axis=-1)


def transverse_frame(states) -> np.ndarray:
    """Real 6x4 unitary transverse frames ``[f1, f2, J f1, J f2]``.

    Parameters
    ----------
    states : (..., 6) array_like

    Returns
    -------
    ndarray, shape (..., 6, 4)
    """
    X = np.atleast_2d(np.asarray(states, dtype=float))
    G = _to_complex(np.array([grad_h(x) for x in X]))
    f1 = np.stack([-np.conj(G[:, 1]), np.conj(G[:, 0]), np.zeros(len(G))], axis=1)
    n1 = np.linalg.norm(f1, axis=1)
    if np.any(n1 < 1e-12):
        raise DegenerateIndex("gradient normal to the planar coordinates; frame undefined")
    f1 /= n1[:, None]
    f2 = np.conj(np.cross(G, f1))
    f2 /= np.linalg.norm(f2, axis=1)[:, None]
    cols = [f1, f2, 1j * f1, 1j * f2]
    E = np.stack([_to_real(c) for c in cols], axis=-1)
    return E[0] if np.ndim(states) == 1 else E


@dataclass
class TransversePath:
    """Transverse symplectic path over one period, frame coordinates ``(a1, a2, b1, b2)``."""

    times: np.ndarray
    path: np.ndarray
    planar: bool

    def block(self, which: str) -> np.ndarray:
        """2x2 sub-path of a planar orbit, ``which`` in {planar, spatial}."""
        k = {"planar": 0, "spatial": 1}[which]
        idx = np.ix_([k, k + 2], [k, k + 2])
        return self.path[(slice(None),) + idx]

    def iterate(self, n: int) -> np.ndarray:
        """Path of the ``n``-th cover, ``Φ(t + jT) = Φ(t) Φ(T)^j``."""
        if n < 1:
            raise ValueError("cover must be >= 1")
        P = self.path
        out = [P]
        MT = P[-1]
        acc = np.eye(P.shape[-1])
        for _ in range(1, n):
            acc = acc @ MT
            out.append((P @ acc)[1:])
        return np.concatenate(out, axis=0)


def transverse_path(orbit: PeriodicOrbit, cfg: IntegrationConfig = DEFAULT_CONFIG,
                    n_samples: int | None = None) -> TransversePath:
    rec = transport(orbit, cfg, n_samples)
    E = transverse_frame(rec.states)
    P = np.einsum("tij,tjk,kl->til", np.transpose(E, (0, 2, 1)), rec.frames, E[0])
    return TransversePath(rec.times, P, orbit.seed.planar)


# ------------------------------------------------------------------ CZ by graph

def _unwrap_total(z) -> float:
    a = np.unwrap(np.angle(z))
    return float(a[-1] - a[0])


def cz_index_path(path) -> int:
    """Conley–Zehnder index of a sampled symplectic path starting at ``I``.

    Counts crossings of the graph Lagrangian with the diagonal through the
    unitary representation ``W = (X + iY)(X − iY)⁻¹``. The path is given in
    coordinates ``(a_1..a_n, b_1..b_n)`` with counterclockwise rotation in
    each ``(a_k, b_k)`` plane positive.

    Parameters
    ----------
    path : (N, 2n, 2n) array_like
        Samples fine enough that ``arg det W`` moves by less than ``π/2``
        between consecutive samples.

    Returns
    -------
    int

    Raises
    ------
    DegenerateIndex
        If the endpoint has eigenvalue 1.
    """
    P = np.asarray(path, dtype=float)
    n = P.shape[-1] // 2
    I = np.eye(n)
    C = np.block([[I, np.zeros((n, n))], [np.zeros((n, n)), -I]])
    # graph of P under (x, Px) -> (Cx, Px) in (R^{4n}, standard); Q and P row blocks
    frame = np.concatenate([np.broadcast_to(C, P.shape), P], axis=1)
    X = np.concatenate([frame[:, :n], frame[:, 2 * n:3 * n]], axis=1)
    Y = np.concatenate([frame[:, n:2 * n], frame[:, 3 * n:]], axis=1)
    W = (X + 1j * Y) @ np.linalg.inv(X - 1j * Y)
    # reference Lagrangian: image of the diagonal
    Xd = np.concatenate([C[:n], np.eye(2 * n)[:n]], axis=0)
    Yd = np.concatenate([C[n:], np.eye(2 * n)[n:]], axis=0)
    Wd = (Xd + 1j * Yd) @ np.linalg.inv(Xd - 1j * Yd)
    Wr = W @ np.linalg.inv(Wd)
    d = np.linalg.det(Wr)
    steps = np.abs(np.angle(d[1:] / d[:-1]))
    if steps.size and steps.max() > np.pi / 2:
        raise DegenerateIndex("path sampled too coarsely for the Maslov count")
    total = _unwrap_total(d)
    ev = np.linalg.eigvals(Wr[-1])
    if np.min(np.abs(ev - 1.0)) < 1e-9:
        raise DegenerateIndex("endpoint has eigenvalue 1")
    princ = np.mod(np.angle(ev), 2 * np.pi).sum()
    mu = n + (total - princ) / (2 * np.pi)
    r = int(round(mu))
    if abs(mu - r) > 1e-6:
        raise DegenerateIndex(f"non-integral index {mu:.6f}")
    return r


# ------------------------------------------------------------------ rotation

def unwrapped_argument(path2, v0=None) -> np.ndarray:
    """Continuous argument of ``Φ(t) v0`` in a 2x2 path, increments in ``(−π, π]``.

    Raises
    ------
    DegenerateIndex
        If one increment reaches ``π/2`` (sampling too coarse).
    """
    P = np.asarray(path2, dtype=float)
    if v0 is None:
        v0 = np.array([1.0, 0.0])
    w = P @ np.asarray(v0, dtype=float)
    z = w[:, 0] + 1j * w[:, 1]
    inc = np.angle(z[1:] / z[:-1])
    if inc.size and np.abs(inc).max() >= np.pi / 2:
        raise DegenerateIndex("sampling too coarse for the rotation function")
    return np.angle(z[0]) + np.concatenate([[0.0], np.cumsum(inc)]) - np.angle(v0[0] + 1j * v0[1])


def _block_angle(M2) -> float | None:
    """Rotation angle in ``(0, 2π)`` of an elliptic 2x2 matrix in frame orientation."""
    a = 0.5 * np.trace(M2)
    if abs(a) >= 1.0:
        return None
    th = math.acos(a)
    # counterclockwise iff the lower-left entry is positive
    return th if M2[1, 0] > 0 else 2 * math.pi - th


def _real_eigvec(M2):
    w, V = np.linalg.eig(M2)
    k = int(np.argmax(np.abs(w)))
    return np.real(V[:, k]), float(np.real(w[k]))


def rotation_function(path2):
    """Rotation function of a 2x2 transverse path.

    Returns
    -------
    theta : float
        Unwrapped endpoint angle. Elliptic: ``2πk + φ`` with ``k`` the number
        of complete turns of a transported vector. Hyperbolic: the unwrapped
        angle of the dominant eigenvector snapped to a multiple of ``π``.
    raw : float
        Unsnapped unwrapped angle.
    """
    P = np.asarray(path2, dtype=float)
    MT = P[-1]
    phi = _block_angle(MT)
    if phi is not None:
        raw = float(unwrapped_argument(P)[-1])
        k = math.floor((raw - phi) / (2 * math.pi) + 0.5)
        return 2 * math.pi * k + phi, raw
    v, lam = _real_eigvec(MT)
    raw = float(unwrapped_argument(P, v)[-1])
    m = round(raw / math.pi)
    if abs(raw - m * math.pi) > SNAP_TOL:
        raise DegenerateIndex(f"hyperbolic angle {raw:.4f} not near a multiple of π")
    if (m % 2 == 1) != (lam < 0):
        raise DegenerateIndex("multiple of π inconsistent with multiplier sign")
    return m * math.pi, raw


def rotation_number(orbit: PeriodicOrbit, block: str = "planar",
                    cfg: IntegrationConfig = DEFAULT_CONFIG, n_samples: int | None = None) -> float:
    """Unwrapped rotation angle ``θ(T)`` of the planar or spatial block of a planar orbit."""
    if not orbit.seed.planar:
        raise ValueError("rotation functions split only for planar orbits")
    tp = transverse_path(orbit, cfg, n_samples)
    return rotation_function(tp.block(block))[0]


def index_from_angle(theta: float, elliptic: bool) -> int:
    """``2⌊θ/2π⌋ + 1`` for elliptic blocks, ``θ/π`` for hyperbolic ones."""
    if elliptic:
        return 2 * math.floor(theta / (2 * math.pi)) + 1
    return int(round(theta / math.pi))


# ------------------------------------------------------------------ reports

@dataclass
class IndexReport:
    """Conley–Zehnder indices of one orbit."""

    mu_p: int | None
    mu_s: int | None
    mu_total: int
    rot_p: int | None = None
    rot_s: int | None = None
    theta_final: float | None = None
    vartheta_final: float | None = None
    method: str = "unwrapped"


def _rot(theta):
    return None if theta is None else math.floor(theta / (2 * math.pi))


def cz_index(orbit: PeriodicOrbit, cfg: IntegrationConfig = DEFAULT_CONFIG,
             n_samples: int | None = None) -> IndexReport:
    """Conley–Zehnder indices from the transverse path.

    Planar orbits get per-block indices from the rotation function, checked
    against the graph count of each block. Spatial orbits get the total
    index from the graph count of the 4x4 path.

    Raises
    ------
    DegenerateIndex
        Degenerate endpoint or disagreement between the two counts.
    """
    tp = transverse_path(orbit, cfg, n_samples)
    if not orbit.seed.planar:
        return IndexReport(None, None, cz_index_path(tp.path), method="graph")
    out = {}
    for name in ("planar", "spatial"):
        P = tp.block(name)
        theta, _ = rotation_function(P)
        ell = _block_angle(P[-1]) is not None
        mu = index_from_angle(theta, ell)
        mu_graph = cz_index_path(P)
        if mu != mu_graph:
            raise DegenerateIndex(f"{name} block: rotation gives {mu}, graph count gives {mu_graph}")
        out[name] = (mu, theta)
    (mp, th), (ms, vth) = out["planar"], out["spatial"]
    return IndexReport(mp, ms, mp + ms, _rot(th), _rot(vth), th, vth)


def iterate_block(mu: int, theta: float, elliptic: bool, n: int) -> int:
    """Index of the ``n``-th iterate of one 2x2 block."""
    if n < 1:
        raise ValueError("cover must be >= 1")
    if elliptic:
        return 2 * math.floor(n * theta / (2 * math.pi)) + 1
    return n * mu


def index_iteration(report: IndexReport, elliptic_p: bool, elliptic_s: bool, n: int) -> int:
    """Total index of the ``n``-th cover of a planar orbit, per block then summed."""
    if report.mu_p is None:
        raise ValueError("per-block iteration needs a planar orbit")
    return (iterate_block(report.mu_p, report.theta_final, elliptic_p, n)
            + iterate_block(report.mu_s, report.vartheta_final, elliptic_s, n))


def cover_index(orbit: PeriodicOrbit, n: int, cfg: IntegrationConfig = DEFAULT_CONFIG,
                block: str | None = None) -> int:
    """Direct graph count on the ``n``-fold iterated transverse path."""
    tp = transverse_path(orbit, cfg)
    if block is None:
        P = TransversePath(tp.times, tp.path, tp.planar).iterate(n)
    else:
        sub = TransversePath(tp.times, tp.block(block), tp.planar)
        P = sub.iterate(n)
    return cz_index_path(P)


@dataclass
class PeriodTriple:
    """Synodic, anomalistic and draconitic periods in days."""

    t_synodic: float
    t_anomalistic: float | None
    t_draconitic: float | None
    lunarity: float


def synodic_days(period: float) -> float:
    return DAYS_PER_YEAR * period / (2 * math.pi)


def _neighbour_period(ts, mu, phi):
    if mu is None or phi is None:
        return None
    return 2 * math.pi * ts / ((mu - 1) * math.pi + phi)


def lunar_periods(orbit: PeriodicOrbit, report: IndexReport, stab: StabilityReport | None = None) -> PeriodTriple:
    """``T_s``, and ``T_a``/``T_d`` where the respective block is elliptic."""
    ts = synodic_days(orbit.period)
    m = 2 * math.pi / orbit.period
    if stab is None or not stab.planar:
        return PeriodTriple(ts, None, None, m)
    bp, bs = stab.block_p, stab.block_s
    ta = _neighbour_period(ts, report.mu_p, bp.angle) if bp.elliptic else None
    td = _neighbour_period(ts, report.mu_s, bs.angle) if bs.elliptic else None
    return PeriodTriple(ts, ta, td, m)


# ------------------------------------------------------------------ covers

@dataclass
class CoverReport:
    cover: int
    mu_of_cover: int
    quality: str


def good_bad(mu_p: int, mu_s: int, mu_p_n: int, mu_s_n: int, n: int) -> CoverReport:
    """Good iff both block indices keep their parity under the ``n``-fold cover."""
    good = n == 1 or ((mu_p - mu_p_n) % 2 == 0 and (mu_s - mu_s_n) % 2 == 0)
    return CoverReport(n, mu_p_n + mu_s_n, "good" if good else "bad")


def cover_report(orbit: PeriodicOrbit, n: int, report: IndexReport | None = None,
                 stab: StabilityReport | None = None,
                 cfg: IntegrationConfig = DEFAULT_CONFIG) -> CoverReport:
    report = report or cz_index(orbit, cfg)
    stab = stab or stability(orbit, cfg)
    mp = iterate_block(report.mu_p, report.theta_final, stab.block_p.elliptic, n)
    ms = iterate_block(report.mu_s, report.vartheta_final, stab.block_s.elliptic, n)
    return good_bad(report.mu_p, report.mu_s, mp, ms, n)


def euler_characteristic(entries) -> int:
    """``Σ multiplicity · (−1)^μ`` over good entries.

    Parameters
    ----------
    entries : iterable of (mu, multiplicity, quality)
    """
    return sum(m * (-1) ** mu for mu, m, q in entries if q == "good")


def block_is_elliptic(b: BlockClass) -> bool:
    return b.elliptic
