"""Euler-Lagrange model of a 2-DoF (pitch/yaw) helicopter.

    M(q) qddot + V_m(q, qdot) qdot + G_r(q) + F_d(qdot) = tau + d

with q = (pitch, yaw) in rad and

    M   = diag(Jp + m l^2, Jy + m l^2 cos^2(pitch))
    V_m = c * [[0, yaw_dot], [-yaw_dot, -pitch_dot]],  c = 0.5 m l^2 sin(2 pitch)
    G_r = (m g l cos(pitch), 0)
    F_d = (Bp pitch_dot, By yaw_dot)

The Coriolis factorisation is the one that makes ``Mdot - 2 V_m`` skew.
The dynamics are linear in

    theta = (Jp + m l^2, Jy, m l^2, m g l, Bp, By).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from .exceptions import ConfigError, SingularMap

N_PARAMS = 6


@dataclass(frozen=True)
class HelicopterParams:
    """Physical constants; defaults are the Quanser 2-DoF rig values."""

    Jp: float = 0.0384
    Jy: float = 0.0432
    m: float = 1.38
    l: float = 0.1857
    Bp: float = 0.8
    By: float = 0.318
    Kpp: float = 0.2041
    Kyy: float = 0.0720
    Kpy: float = 0.0068
    Kyp: float = 0.0219
    g: float = 9.81

    def __post_init__(self):
        for name in ("Jp", "Jy", "l", "Bp", "By", "Kpp", "Kyy", "g"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"plant parameter {name} must be positive")
        if self.m < 0 or self.Kpy < 0 or self.Kyp < 0:
            raise ConfigError("m, Kpy and Kyp must be non-negative")

    @property
    def T(self):
        return np.array([[self.Kpp, self.Kpy], [self.Kyp, self.Kyy]])

    @property
    def ml2(self):
        return self.m * self.l * self.l

    @property
    def mgl(self):
        return self.m * self.g * self.l

    @classmethod
    def from_dict(cls, d):
        known = {k: float(v) for k, v in d.items() if k in cls.__dataclass_fields__}
        unknown = set(d) - set(known)
        if unknown:
            raise ConfigError(f"unknown plant fields: {sorted(unknown)}")
        return cls(**known)

    def to_dict(self):
        return asdict(self)


class ElState(NamedTuple):
    q: np.ndarray
    qdot: np.ndarray


@dataclass(frozen=True)
class BoundConstants:
    """Known model bounds used by the controller and the certificate.

    ``theta_bar`` bounds the parameter-vector norm and ``d_bar`` the
    disturbance norm.
    """

    km1: float
    km2: float
    kv: float
    kg: float
    kf1: float
    kf2: float
    theta_bar: float
    d_bar: float = 0.0

    def __post_init__(self):
        if not (self.km2 >= self.km1 > 0):
            raise ConfigError("bounds require km2 >= km1 > 0")
        if min(self.kv, self.kg, self.kf1, self.kf2, self.d_bar) < 0:
            raise ConfigError("kv, kg, kf1, kf2 and dBar must be non-negative")
        if not self.theta_bar > 0:
            raise ConfigError("thetaBar must be positive")

    @classmethod
    def from_dict(cls, d):
        names = {"km1": "km1", "km2": "km2", "kv": "kv", "kg": "kg", "kf1": "kf1",
                 "kf2": "kf2", "thetaBar": "theta_bar", "dBar": "d_bar"}
        unknown = set(d) - set(names)
        if unknown:
            raise ConfigError(f"unknown bounds fields: {sorted(unknown)}")
        return cls(**{names[k]: float(v) for k, v in d.items()})

    def to_dict(self):
        return {"km1": self.km1, "km2": self.km2, "kv": self.kv, "kg": self.kg,
                "kf1": self.kf1, "kf2": self.kf2, "thetaBar": self.theta_bar,
                "dBar": self.d_bar}


def mass_matrix(p, q):
    c = math.cos(q[0])
    return np.array([[p.Jp + p.ml2, 0.0], [0.0, p.Jy + p.ml2 * c * c]])


def mass_matrix_dot(p, q, qdot):
    """Time derivative of M along (q, qdot)."""
    return np.array([[0.0, 0.0], [0.0, -p.ml2 * math.sin(2.0 * q[0]) * qdot[0]]])


def coriolis_matrix(p, q, qdot):
    c = 0.5 * p.ml2 * math.sin(2.0 * q[0])
    return np.array([[0.0, c * qdot[1]], [-c * qdot[1], -c * qdot[0]]])


def gravity(p, q):
    return np.array([p.mgl * math.cos(q[0]), 0.0])


def friction(p, qdot):
    return np.array([p.Bp * qdot[0], p.By * qdot[1]])


def forward_dynamics(p, s, tau, d=(0.0, 0.0)):
    """Joint accelerations for applied torque ``tau`` and disturbance ``d``."""
    q, qdot = np.asarray(s.q, dtype=float), np.asarray(s.qdot, dtype=float)
    rhs = (np.asarray(tau, dtype=float) + np.asarray(d, dtype=float)
           - coriolis_matrix(p, q, qdot) @ qdot - gravity(p, q) - friction(p, qdot))
    return np.linalg.solve(mass_matrix(p, q), rhs)


def theta_true(p):
    return np.array([p.Jp + p.ml2, p.Jy, p.ml2, p.mgl, p.Bp, p.By])


def regressor(s, r, edot, qddot_d, alpha):
    """Regressor Y with

        Y theta = M (alpha edot - qddot_d) + V_m (r - qdot) - F_d - G_r

    for ``theta = theta_true(p)``.  Y depends on the state only, not on the
    plant parameters.
    """
    q, qdot = s.q, s.qdot
    a1 = alpha * edot[0] - qddot_d[0]
    a2 = alpha * edot[1] - qddot_d[1]
    v1 = r[0] - qdot[0]
    v2 = r[1] - qdot[1]
    cth = math.cos(q[0])
    hs = 0.5 * math.sin(2.0 * q[0])
    return np.array([
        [a1, 0.0, hs * qdot[1] * v2, -cth, -qdot[0], 0.0],
        [0.0, a2, cth * cth * a2 - hs * (qdot[1] * v1 + qdot[0] * v2), 0.0, 0.0, -qdot[1]],
    ])


def torque_from_voltage(p, V):
    return p.T @ np.asarray(V, dtype=float)


def voltage_from_torque(p, tau):
    T = p.T
    if np.linalg.det(T) == 0:
        raise SingularMap("thrust-torque matrix is singular")
    return np.linalg.solve(T, np.asarray(tau, dtype=float))


# bounds ---------------------------------------------------------------------

def default_bounds(p, theta_bar=0.91, d_bar=0.5):
    """Nominal bound constants for the Quanser rig.

    ``km1`` is not given with the others; it is the infimum of the eigenvalues of M,
    which is ``Jy`` (reached at pitch = +-pi/2).
    """
    return BoundConstants(km1=min(p.Jy, p.Jp + p.ml2), km2=0.0908, kv=0.03365, kg=2.514,
                          kf1=0.0, kf2=0.8, theta_bar=theta_bar, d_bar=d_bar)


@dataclass
class BoundCheckReport:
    samples: int
    violations: list = field(default_factory=list)
    worst_ratio: dict = field(default_factory=dict)

    @property
    def ok(self):
        return not self.violations


def check_bounds(p, b, samples=1000, seed=0, qdot_scale=10.0):
    """Sample random states and test the inertia, Coriolis and gravity bounds of ``b``.

    Violations are collected in the report rather than raised.  Each
    ``worst_ratio`` entry is the largest observed value of
    ``actual / allowed`` (<= 1 means the bound held on every sample).
    """
    rng = np.random.default_rng(seed)
    report = BoundCheckReport(samples=samples)
    worst = {"km1": 0.0, "km2": 0.0, "kv": 0.0, "kg": 0.0, "kf": 0.0}
    tol = 1e-12
    for _ in range(samples):
        q = rng.uniform(-np.pi, np.pi, 2)
        qdot = rng.normal(0.0, qdot_scale, 2)
        eig = np.linalg.eigvalsh(mass_matrix(p, q))
        nq = float(np.linalg.norm(qdot))
        ratios = {
            "km1": b.km1 / eig[0],
            "km2": eig[1] / b.km2,
            "kv": np.linalg.norm(coriolis_matrix(p, q, qdot), 2) / (b.kv * nq) if nq else 0.0,
            "kg": np.linalg.norm(gravity(p, q)) / b.kg if b.kg else np.inf,
            "kf": np.linalg.norm(friction(p, qdot)) / (b.kf1 + b.kf2 * nq) if nq else 0.0,
        }
        for name, ratio in ratios.items():
            worst[name] = max(worst[name], float(ratio))
            if ratio > 1 + tol:
                report.violations.append({"bound": name, "q": q.tolist(),
                                          "qdot": qdot.tolist(), "ratio": float(ratio)})
    report.worst_ratio = worst
    return report


# scalar fast path -----------------------------------------------------------

class HelicopterModel:
    """Precomputed constants and float-only kernels for the simulation loop.

    Numerically identical in structure to the array functions above; the
    test-suite checks the two routes against each other.
    """

    def __init__(self, p):
        self.p = p
        self.m11 = p.Jp + p.ml2
        self.Jy = p.Jy
        self.ml2 = p.ml2
        self.mgl = p.mgl
        self.Bp = p.Bp
        self.By = p.By

    def accel(self, q1, qd1, qd2, tau1, tau2):
        """qddot for disturbed torque ``tau``; yaw angle does not enter."""
        c = math.cos(q1)
        s2 = math.sin(2.0 * q1)
        hc = 0.5 * self.ml2 * s2
        # V_m qdot = (hc*qd2*qd2, -hc*qd2*qd1 - hc*qd1*qd2)
        f1 = tau1 - hc * qd2 * qd2 - self.mgl * c - self.Bp * qd1
        f2 = tau2 + 2.0 * hc * qd1 * qd2 - self.By * qd2
        return f1 / self.m11, f2 / (self.Jy + self.ml2 * c * c)
