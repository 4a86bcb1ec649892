"""Spatial Hill lunar problem: Hamiltonian, vector field and linearization.

Phase-space coordinates are ordered ``(q1, q2, q3, p1, p2, p3)`` throughout.
The numba kernels prefixed with an underscore are shared with the integrator.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

COLLISION_FLOOR = 1e-6

#: critical Jacobi value 3^(4/3)
GAMMA_CRIT = 3.0 ** (4.0 / 3.0)


class CollisionError(ValueError):
    """Raised when |q| drops below the collision floor."""


@dataclass(frozen=True)
class PhaseState:
    """A point (q, p) of phase space in Hill units."""

    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float).reshape(3)
        p = np.asarray(self.p, dtype=float).reshape(3)
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
            raise ValueError("non-finite phase state")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)

    @classmethod
    def from_array(cls, x) -> "PhaseState":
        x = np.asarray(x, dtype=float)
        return cls(x[:3], x[3:6])

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.q, self.p])


@dataclass(frozen=True)
class VelocityState:
    """Positions with velocities instead of momenta."""

    q: np.ndarray
    qdot: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float).reshape(3))
        object.__setattr__(self, "qdot", np.asarray(self.qdot, dtype=float).reshape(3))


@dataclass(frozen=True)
class EnergyLevel:
    """Jacobi value ``gamma`` and Hamiltonian value ``c = -gamma/2``."""

    gamma: float

    @property
    def c(self) -> float:
        return -0.5 * self.gamma

    @classmethod
    def from_c(cls, c: float) -> "EnergyLevel":
        return cls(-2.0 * c)


def to_phase(v: VelocityState) -> PhaseState:
    q, qd = v.q, v.qdot
    return PhaseState(q, np.array([qd[0] - q[1], qd[1] + q[0], qd[2]]))


def to_velocity(s: PhaseState) -> VelocityState:
    q, p = s.q, s.p
    return VelocityState(q, np.array([p[0] + q[1], p[1] - q[0], p[2]]))


def _check_floor(q, floor=COLLISION_FLOOR):
    r = float(np.linalg.norm(q))
    if r < floor:
        raise CollisionError(f"|q| = {r:.3e} below collision floor {floor:.1e}")
    return r


def hamiltonian(s: PhaseState, floor: float = COLLISION_FLOOR) -> float:
    """Hill Hamiltonian ``H(q, p)``.

    Parameters
    ----------
    s : PhaseState
    floor : float
        Collision floor on ``|q|``.

    Returns
    -------
    float
    """
    q, p = s.q, s.p
    r = _check_floor(q, floor)
    return (0.5 * p @ p - 1.0 / r + p[0] * q[1] - p[1] * q[0]
            - q[0] ** 2 + 0.5 * q[1] ** 2 + 0.5 * q[2] ** 2)


def jacobi_gamma(v: VelocityState, floor: float = COLLISION_FLOOR) -> float:
    """Traditional Jacobi integral ``Γ = 2/|q| + 3 q1² − q3² − |q̇|²``."""
    q, qd = v.q, v.qdot
    r = _check_floor(q, floor)
    return 2.0 / r + 3.0 * q[0] ** 2 - q[2] ** 2 - qd @ qd


def effective_potential(q, floor: float = COLLISION_FLOOR) -> float:
    q = np.asarray(q, dtype=float)
    r = _check_floor(q, floor)
    return -1.0 / r - 1.5 * q[0] ** 2 + 0.5 * q[2] ** 2


@njit(cache=True)
def _field(x, out):
    q1, q2, q3, p1, p2, p3 = x[0], x[1], x[2], x[3], x[4], x[5]
    r2 = q1 * q1 + q2 * q2 + q3 * q3
    ir3 = 1.0 / (r2 * np.sqrt(r2))
    out[0] = p1 + q2
    out[1] = p2 - q1
    out[2] = p3
    out[3] = p2 - q1 + 3.0 * q1 - q1 * ir3
    out[4] = -p1 - q2 - q2 * ir3
    out[5] = -q3 - q3 * ir3


@njit(cache=True)
def _hess_v(x, hv):
    q1, q2, q3 = x[0], x[1], x[2]
    r2 = q1 * q1 + q2 * q2 + q3 * q3
    ir3 = 1.0 / (r2 * np.sqrt(r2))
    ir5 = ir3 / r2
    hv[0, 0] = ir3 - 3.0 * q1 * q1 * ir5 - 3.0
    hv[1, 1] = ir3 - 3.0 * q2 * q2 * ir5
    hv[2, 2] = ir3 - 3.0 * q3 * q3 * ir5 + 1.0
    hv[0, 1] = hv[1, 0] = -3.0 * q1 * q2 * ir5
    hv[0, 2] = hv[2, 0] = -3.0 * q1 * q3 * ir5
    hv[1, 2] = hv[2, 1] = -3.0 * q2 * q3 * ir5


@njit(cache=True)
def _jacobian(x, jac):
    # linearization: d(dq)/dt = dp + K dq, d(dp)/dt = K dp - (HessV + K^2) dq
    # with K the rotation (q2, -q1) coupling; K^2 = -diag(1,1,0)
    hv = np.empty((3, 3))
    _hess_v(x, hv)
    for i in range(6):
        for j in range(6):
            jac[i, j] = 0.0
    jac[0, 1] = 1.0
    jac[1, 0] = -1.0
    jac[0, 3] = 1.0
    jac[1, 4] = 1.0
    jac[2, 5] = 1.0
    jac[3, 4] = 1.0
    jac[4, 3] = -1.0
    for i in range(3):
        for j in range(3):
            jac[3 + i, j] = -hv[i, j]
    jac[3, 0] -= 1.0
    jac[4, 1] -= 1.0


@njit(cache=True)
def _field_with_frame(y, out):
    _field(y[:6], out[:6])
    jac = np.empty((6, 6))
    _jacobian(y[:6], jac)
    m = y[6:].reshape((6, 6))
    out[6:] = (jac @ m).reshape(36)


def vector_field(s: PhaseState, floor: float = COLLISION_FLOOR) -> np.ndarray:
    """Hamiltonian vector field ``X_H`` at ``s`` as a 6-vector."""
    _check_floor(s.q, floor)
    out = np.empty(6)
    _field(s.as_array(), out)
    return out


def hessian_potential(q, floor: float = COLLISION_FLOOR) -> np.ndarray:
    """Closed-form Hessian of the effective potential."""
    q = np.asarray(q, dtype=float)
    _check_floor(q, floor)
    hv = np.empty((3, 3))
    _hess_v(np.concatenate([q, np.zeros(3)]), hv)
    return hv


def field_jacobian(s: PhaseState, floor: float = COLLISION_FLOOR) -> np.ndarray:
    _check_floor(s.q, floor)
    jac = np.empty((6, 6))
    _jacobian(s.as_array(), jac)
    return jac


def variational_rhs(s: PhaseState, xi, floor: float = COLLISION_FLOOR) -> np.ndarray:
    """Linearized vector field at ``s`` applied to the tangent vector ``xi``."""
    return field_jacobian(s, floor) @ np.asarray(xi, dtype=float)


def critical_points() -> list[PhaseState]:
    """The two saddle points ``q = (±3^(-1/3), 0, 0)``, ``p = (0, ±3^(-1/3), 0)``."""
    a = 3.0 ** (-1.0 / 3.0)
    return [PhaseState([s * a, 0.0, 0.0], [0.0, s * a, 0.0]) for s in (1.0, -1.0)]


J6 = np.block([[np.zeros((3, 3)), np.eye(3)], [-np.eye(3), np.zeros((3, 3))]])


def omega(u, v) -> float:
    """Standard symplectic form ``ω(u, v) = uᵀ J v`` with ``J`` as in ``J6``."""
    return float(np.asarray(u) @ J6 @ np.asarray(v))
