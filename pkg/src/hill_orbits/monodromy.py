"""Monodromy, reduced monodromy in symmetry-adapted Lagrangian bases,
Floquet multipliers, block classification and signatures.

Symplectic form convention: ``omega(u, v) = u_p·v_q − u_q·v_p``, under
which the reduced bases below satisfy ``omega(v_i, w_j) = δ_ij``.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import dynamics as dyn
from .integrator import DEFAULT_CONFIG, IntegrationConfig, TangentFrame, sample
from .symmetries import FIXED_SETS, PeriodicOrbit

TOL_DET = 5e-4
TOL_TRACE = 1e-6

OMEGA = -dyn.J6


def omega(u, v) -> float:
    return float(np.asarray(u) @ OMEGA @ np.asarray(v))


class StructureError(ValueError):
    """Block entries inconsistent with the Sp^rho0 sign structure."""


class DegenerateBasis(ValueError):
    pass


# ------------------------------------------------------------------ transport

@dataclass
class TransportRecord:
    """Linearized flow sampled along one period."""

    times: np.ndarray
    states: np.ndarray
    frames: np.ndarray

    @property
    def monodromy(self) -> np.ndarray:
        return self.frames[-1]


def transport(orbit: PeriodicOrbit, cfg: IntegrationConfig = DEFAULT_CONFIG,
              n_samples: int | None = None) -> TransportRecord:
    """States and ``dφ^t`` on a uniform grid over one period (cached on the orbit)."""
    if n_samples is None:
        n_samples = int(max(2048, math.ceil(orbit.period / 2e-4)))
    key = ("transport", n_samples, cfg.step)
    cache = orbit.__dict__.setdefault("_cache", {})
    if key in cache:
        return cache[key]
    T = orbit.period
    ts = np.linspace(0.0, T, n_samples + 1)
    run_cfg = replace(cfg, max_time=max(cfg.max_time, 1.01 * T))
    Y = sample(orbit.initial, ts, run_cfg, M0=TangentFrame.identity())
    rec = TransportRecord(ts, Y[:, :6], Y[:, 6:].reshape(-1, 6, 6))
    cache[key] = rec
    return rec


def monodromy_matrix(orbit: PeriodicOrbit, cfg: IntegrationConfig = DEFAULT_CONFIG) -> np.ndarray:
    return transport(orbit, cfg).monodromy


# ------------------------------------------------------------------ bases

_DUAL = {0: (3, -1.0), 1: (4, -1.0), 2: (5, -1.0), 3: (0, 1.0), 4: (1, 1.0), 5: (2, 1.0)}


def _unit(i):
    e = np.zeros(6)
    e[i] = 1.0
    return e


def dual_vector(i: int) -> np.ndarray:
    """Vector ``w`` with ``omega(e_i, w) = 1`` paired to coordinate ``i``."""
    j, s = _DUAL[i]
    return s * _unit(j)


def grad_h(x) -> np.ndarray:
    f = np.empty(6)
    dyn._field(np.asarray(x, float), f)
    return np.concatenate([-f[3:], f[:3]])


@dataclass
class LagrangianBasis:
    """Reduced symmetry-adapted basis ``(v_1..v_n | w_1..w_n)`` plus ``X_H``."""

    v: list
    w: list
    xh: np.ndarray
    dependent: int
    free: tuple

    def matrix(self) -> np.ndarray:
        return np.column_stack(self.v + self.w)


def reduced_basis(x0, start: str, planar: bool = False) -> LagrangianBasis:
    """Energy-constrained Lagrangian basis at a point of ``Fix(start)``.

    Two free coordinates of the fixed set (one in the planar case) are
    kept, the remaining momentum is solved from the linearized energy
    condition and the dual vectors complete the symplectic pairs.
    """
    x0 = np.asarray(x0, dtype=float)
    fs = FIXED_SETS[start]
    free = [i for i in fs.free if not (planar and i in (2, 5))]
    g = grad_h(x0)
    scale = np.max(np.abs(g))
    dep = None
    for d in fs.dependent:
        if d in free and abs(g[d]) > 1e-10 * max(scale, 1.0):
            dep = d
            break
    if dep is None:
        cand = [i for i in free if i >= 3]
        dep = max(cand, key=lambda i: abs(g[i]))
        if abs(g[dep]) <= 1e-14:
            raise DegenerateBasis("energy gradient vanishes on the fixed set")
    keep = [i for i in free if i != dep]
    v = []
    for i in keep:
        e = _unit(i)
        e[dep] = -g[i] / g[dep]
        v.append(e)
    w = [dual_vector(i) for i in keep]
    return LagrangianBasis(v, w, dyn.vector_field(dyn.PhaseState.from_array(x0)), dep, tuple(keep))


def _reduce(M, basis: LagrangianBasis, coords=None) -> np.ndarray:
    x_h = basis.xh
    # fill the complement of TΣ with J·X_H (transverse to the energy surface)
    gdir = dyn.J6 @ x_h
    B = np.column_stack(basis.v + basis.w + [x_h, gdir])
    images = M @ basis.matrix()
    if coords is not None:
        B = B[coords]
        images = images[coords]
    coef = np.linalg.lstsq(B, images, rcond=None)[0]
    n = len(basis.v)
    return coef[: 2 * n]


# ------------------------------------------------------------------ results

@dataclass
class ReducedMonodromyPlanar:
    Ap: np.ndarray
    As: np.ndarray

    @property
    def det_p(self) -> float:
        return float(np.linalg.det(self.Ap))

    @property
    def det_s(self) -> float:
        return float(np.linalg.det(self.As))

    def assembled(self) -> np.ndarray:
        R = np.zeros((4, 4))
        R[:2, :2] = self.Ap
        R[2:, 2:] = self.As
        return R


@dataclass
class ReducedMonodromySpatial:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def assembled(self) -> np.ndarray:
        return np.block([[self.A, self.B], [self.C, self.D]])

    def structure_residuals(self) -> dict:
        A, B, C, D = self.A, self.B, self.C, self.D
        return {
            "B_sym": float(np.max(np.abs(B - B.T))),
            "C_sym": float(np.max(np.abs(C - C.T))),
            "CA_sym": float(np.max(np.abs(C @ A - (C @ A).T))),
            "AB_sym": float(np.max(np.abs(A @ B - (A @ B).T))),
            "A2_BC_I": float(np.max(np.abs(A @ A - B @ C - np.eye(2)))),
            "D_AT": float(np.max(np.abs(D - A.T))),
        }


def planar_reduced_monodromy(orbit: PeriodicOrbit, cfg: IntegrationConfig = DEFAULT_CONFIG,
                             M: np.ndarray | None = None) -> ReducedMonodromyPlanar:
    """Reduced planar block ``Ā_p`` and spatial block ``A_s`` of a planar orbit.

    ``A_s`` is written in the pair ``(e_q3, −e_p3)``; ``Ā_p`` in
    ``(ṽ, w̃)`` with ``ṽ`` on the energy surface and ``w̃`` dual to ``ṽ``.
    """
    x0 = orbit.initial.as_array()
    if abs(x0[2]) > 1e-12 or abs(x0[5]) > 1e-12:
        raise ValueError("orbit is not planar")
    if M is None:
        M = monodromy_matrix(orbit, cfg)
    basis = reduced_basis(x0, orbit.seed.start, planar=True)
    if abs(omega(basis.v[0], basis.w[0]) - 1.0) > 1e-12:
        raise DegenerateBasis("omega(v, w) != 1")
    Ap = _reduce(M, basis, coords=[0, 1, 3, 4])
    S = np.diag([1.0, -1.0])
    As = S @ M[np.ix_([2, 5], [2, 5])] @ S
    return ReducedMonodromyPlanar(Ap, As)


def spatial_reduced_monodromy(orbit: PeriodicOrbit, cfg: IntegrationConfig = DEFAULT_CONFIG,
                              M: np.ndarray | None = None) -> ReducedMonodromySpatial:
    """Reduced monodromy ``[[A, B], [C, Aᵀ]]`` of a symmetric orbit."""
    if M is None:
        M = monodromy_matrix(orbit, cfg)
    basis = reduced_basis(orbit.initial.as_array(), orbit.seed.start, planar=False)
    R = _reduce(M, basis)
    return ReducedMonodromySpatial(R[:2, :2], R[:2, 2:], R[2:, :2], R[2:, 2:])


# ------------------------------------------------------------------ spectra

def _sort(lams):
    return sorted(lams, key=lambda z: (round(abs(z), 12), cmath.phase(z)))


def floquet_multipliers(R) -> list:
    """Floquet multipliers from the characteristic polynomial of the reduced blocks."""
    if isinstance(R, ReducedMonodromyPlanar):
        out = []
        for blk in (R.Ap, R.As):
            out += list(np.roots([1.0, -np.trace(blk), 1.0]))
        return _sort([complex(z) for z in out])
    if isinstance(R, ReducedMonodromySpatial):
        tr = np.trace(R.A)
        dt = np.linalg.det(R.A)
        coeffs = [1.0, -2 * tr, 2 + 4 * dt, -2 * tr, 1.0]
        return _sort([complex(z) for z in np.roots(coeffs)])
    M = np.asarray(R)
    if M.shape == (2, 2):
        return _sort([complex(z) for z in np.roots([1.0, -np.trace(M), 1.0])])
    raise TypeError("unsupported monodromy type")


def characteristic_polynomial(R) -> np.ndarray:
    if isinstance(R, ReducedMonodromySpatial):
        tr = np.trace(R.A)
        dt = np.linalg.det(R.A)
        return np.array([1.0, -2 * tr, 2 + 4 * dt, -2 * tr, 1.0])
    p = np.array([1.0, -np.trace(R.Ap), 1.0])
    s = np.array([1.0, -np.trace(R.As), 1.0])
    return np.convolve(p, s)


@dataclass
class BlockClass:
    """Classification of a 2x2 block (or of one multiplier pair)."""

    kind: str
    trace: float
    angle: float | None = None
    multiplier: float | None = None
    sign_c: int = 0
    sign_b: int = 0

    @property
    def elliptic(self) -> bool:
        return self.kind == "elliptic"

    @property
    def hyperbolic(self) -> bool:
        return self.kind.startswith(("pos", "neg"))

    @property
    def value(self) -> float | None:
        return self.angle if self.elliptic else self.multiplier

    @property
    def signs(self) -> str:
        f = {1: "+", -1: "-", 0: "0"}
        return f"({f[self.sign_c]}/{f[self.sign_b]})"


def _classify(a, b, c, tol_trace=TOL_TRACE) -> BlockClass:
    tr = 2.0 * a
    sb = int(np.sign(b))
    sc = int(np.sign(c))
    if abs(tr - 2.0) <= tol_trace or abs(tr + 2.0) <= tol_trace:
        return BlockClass("degenerate", tr, sign_c=sc, sign_b=sb)
    if abs(tr) < 2.0:
        if sb * sc > 0:
            raise StructureError("elliptic trace with b·c > 0")
        th = math.acos(max(-1.0, min(1.0, a)))
        ang = th if b < 0 else 2 * math.pi - th
        return BlockClass("elliptic", tr, angle=ang, sign_c=sc, sign_b=sb)
    if sb * sc < 0:
        raise StructureError("hyperbolic trace with b·c < 0")
    lam = a + math.copysign(math.sqrt(a * a - 1.0), a)
    if tr > 0:
        kind = "pos-hyperbolic-I" if sb < 0 else "pos-hyperbolic-II"
    else:
        kind = "neg-hyperbolic-I" if sb > 0 else "neg-hyperbolic-II"
    return BlockClass(kind, tr, multiplier=lam, sign_c=sc, sign_b=sb)


def classify_block(M, tol_det: float = TOL_DET, tol_trace: float = TOL_TRACE) -> BlockClass:
    """Class, mean rotation angle or real multiplier of a 2x2 block in Sp^rho0(1).

    Parameters
    ----------
    M : (2, 2) array_like
        Block ``[[a, b], [c, a]]``; the mean of the diagonal is used.
    """
    M = np.asarray(M, dtype=float)
    if abs(np.linalg.det(M) - 1.0) > tol_det:
        raise StructureError(f"det = {np.linalg.det(M):.6f} differs from 1 by more than {tol_det}")
    if abs(M[0, 0] - M[1, 1]) > tol_det * max(1.0, abs(M[0, 0])):
        raise StructureError("unequal diagonal entries")
    a = 0.5 * (M[0, 0] + M[1, 1])
    return _classify(a, M[0, 1], M[1, 0], tol_trace)


def _eigvec2(A, mu):
    a11, a12, a21, a22 = A[0, 0], A[0, 1], A[1, 0], A[1, 1]
    v1 = np.array([a12, mu - a11])
    v2 = np.array([mu - a22, a21])
    v = v1 if np.linalg.norm(v1) >= np.linalg.norm(v2) else v2
    n = np.linalg.norm(v)
    if n == 0:
        return None
    return v / n


@dataclass
class SignatureEntry:
    eigenvalue: float
    sign_c: int
    sign_b: int
    available: bool = True


def signatures(R: ReducedMonodromySpatial, tol: float = 1e-9) -> list:
    """``sign(vᵀCv)`` and ``sign(ṽᵀBṽ)`` per real simple eigenvalue of ``A``.

    Eigenvectors come from explicit 2x2 formulas. Complex or repeated
    eigenvalues are reported with ``available=False``.
    """
    A = np.asarray(R.A, float)
    tr = np.trace(A)
    dt = np.linalg.det(A)
    disc = tr * tr / 4 - dt
    out = []
    if disc < -tol:
        return [SignatureEntry(float("nan"), 0, 0, False)]
    if abs(disc) <= tol:
        return [SignatureEntry(tr / 2, 0, 0, False)]
    s = math.sqrt(disc)
    for mu in (tr / 2 + s, tr / 2 - s):
        v = _eigvec2(A, mu)
        vt = _eigvec2(A.T, mu)
        if v is None or vt is None:
            out.append(SignatureEntry(mu, 0, 0, False))
            continue
        out.append(SignatureEntry(mu, int(np.sign(v @ R.C @ v)), int(np.sign(vt @ R.B @ vt))))
    return out


def classify_spatial(R: ReducedMonodromySpatial, tol_trace: float = TOL_TRACE) -> list:
    """One ``BlockClass`` per multiplier pair of a spatial reduced monodromy.

    Each real eigenvalue ``a`` of ``A`` carries the pair ``λ + 1/λ = 2a``;
    the signature pair plays the role of ``(c, b)`` of a 2x2 block. A
    complex eigenvalue of ``A`` yields an off-circle quadruple that is
    reported without a class.
    """
    sig = signatures(R)
    if not sig[0].available and math.isnan(sig[0].eigenvalue):
        lams = floquet_multipliers(R)
        return [BlockClass("complex-quadruple", float(np.trace(R.A)),
                           multiplier=abs(lams[-1]))]
    out = []
    for e in sig:
        if not e.available:
            out.append(BlockClass("degenerate", 2 * e.eigenvalue))
            continue
        out.append(_classify(e.eigenvalue, e.sign_b if e.sign_b else 1e-300,
                             e.sign_c if e.sign_c else 1e-300, tol_trace))
    return out


@dataclass
class StabilityReport:
    """Reduced monodromy, multipliers and block classes of an orbit."""

    planar: bool
    reduced: object
    multipliers: list
    blocks: list
    full_monodromy: np.ndarray = field(repr=False, default=None)

    @property
    def block_p(self) -> BlockClass:
        return self.blocks[0]

    @property
    def block_s(self) -> BlockClass:
        return self.blocks[1]

    @property
    def traces(self) -> list:
        return [b.trace for b in self.blocks]


def stability(orbit: PeriodicOrbit, cfg: IntegrationConfig = DEFAULT_CONFIG) -> StabilityReport:
    M = monodromy_matrix(orbit, cfg)
    if orbit.seed.planar:
        R = planar_reduced_monodromy(orbit, cfg, M)
        blocks = [classify_block(R.Ap), classify_block(R.As)]
        return StabilityReport(True, R, floquet_multipliers(R), blocks, M)
    R = spatial_reduced_monodromy(orbit, cfg, M)
    return StabilityReport(False, R, floquet_multipliers(R), classify_spatial(R), M)
