"""Saturated barrier-Lyapunov adaptive control law.

Per time instant the controller computes

    r     = edot + alpha e
    tau_a = -Y thetaHat - K r + (phi_r' / phi_r) km2 r
    tau   = tau_a                          if |tau_a| <= phi_tau
            (phi_tau / |tau_a|) tau_a      otherwise

and the estimate evolves as

    thetaHat' = proj( Gamma Y^T r / (km2 (phi_r^2 - |r|^2)) ).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import BarrierViolation, ConfigError
from .plant import N_PARAMS


def _check_spd(name, A):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ConfigError(f"{name} must be a square matrix")
    if not np.allclose(A, A.T):
        raise ConfigError(f"{name} must be symmetric")
    if np.linalg.eigvalsh(A)[0] <= 0:
        raise ConfigError(f"{name} must be positive definite")
    return A


@dataclass(frozen=True)
class ControllerGains:
    """Design gains.

    ``theta_bar`` is the projection radius and ``eps_proj`` the width of the
    boundary layer in which the projection starts acting (default
    ``0.05 * theta_bar``).
    """

    alpha: float
    K: np.ndarray
    Gamma: np.ndarray
    theta_bar: float
    eps_proj: float | None = None

    def __post_init__(self):
        if not self.alpha > 0:
            raise ConfigError("alpha must be positive")
        object.__setattr__(self, "K", _check_spd("K", self.K))
        object.__setattr__(self, "Gamma", _check_spd("Gamma", self.Gamma))
        if not self.theta_bar > 0:
            raise ConfigError("thetaBar must be positive")
        if self.eps_proj is None:
            object.__setattr__(self, "eps_proj", 0.05 * self.theta_bar)
        if not 0 < self.eps_proj < self.theta_bar:
            raise ConfigError("epsProj must lie in (0, thetaBar)")


@dataclass
class ControllerState:
    theta_hat: np.ndarray = field(default_factory=lambda: np.zeros(N_PARAMS))


def filtered_error(e, edot, alpha):
    return np.asarray(edot, dtype=float) + alpha * np.asarray(e, dtype=float)


def auxiliary_control(Y, theta_hat, K, r, phi_r, phi_r_dot, km2):
    r = np.asarray(r, dtype=float)
    return -np.asarray(Y) @ theta_hat - np.asarray(K) @ r + (phi_r_dot / phi_r) * km2 * r


def saturate(tau_a, phi_tau):
    """Radial clamp of ``tau_a`` onto the ball of radius ``phi_tau``."""
    tau_a = np.asarray(tau_a, dtype=float)
    n = float(np.linalg.norm(tau_a))
    if n <= phi_tau:
        return tau_a.copy()
    return (phi_tau / n) * tau_a


def saturation_error(tau, tau_a):
    return np.asarray(tau, dtype=float) - np.asarray(tau_a, dtype=float)


def projection(theta_hat, y, theta_bar, eps_proj):
    """Smooth ball projection.

    With the convex ramp

        f = (|th|^2 - (tb - eps)^2) / (tb^2 - (tb - eps)^2)

    the update ``y`` is returned unchanged when ``f <= 0`` or when it points
    inwards (``th . y <= 0``); otherwise the fraction ``f`` of its radial
    component is removed.  On the outer sphere (f = 1) no outward flow
    remains, so |th| <= tb is forward invariant.
    """
    theta_hat = np.asarray(theta_hat, dtype=float)
    y = np.asarray(y, dtype=float)
    n2 = float(theta_hat @ theta_hat)
    inner = theta_bar - eps_proj
    f = (n2 - inner * inner) / (theta_bar * theta_bar - inner * inner)
    ty = float(theta_hat @ y)
    if f <= 0 or ty <= 0:
        return y.copy()
    return y - f * (ty / n2) * theta_hat


def clip_to_ball(theta_hat, theta_bar):
    """Radially pull ``theta_hat`` back onto the ball; returns ``(theta, clipped)``.

    The continuous projection keeps the ball invariant, but a fixed-step
    integrator can leave it by a truncation-sized amount when the estimate
    moves fast along the boundary.  Applied after each step.
    """
    theta_hat = np.asarray(theta_hat, dtype=float)
    n = float(np.linalg.norm(theta_hat))
    if n <= theta_bar:
        return theta_hat, False
    return theta_hat * (theta_bar / n), True


def integrate_projected(theta0, y, theta_bar, eps_proj, dt, steps, t0=0.0):
    """RK4 on ``theta' = proj(theta, y(t))`` with the post-step clip.

    Returns the trajectory (``steps + 1`` rows) and the number of clips.
    """
    def f(t, th):
        return projection(th, y(t), theta_bar, eps_proj)

    out = np.empty((steps + 1, len(theta0)))
    th = np.asarray(theta0, dtype=float)
    out[0] = th
    clips = 0
    for k in range(steps):
        t = t0 + k * dt
        k1 = f(t, th)
        k2 = f(t + 0.5 * dt, th + 0.5 * dt * k1)
        k3 = f(t + 0.5 * dt, th + 0.5 * dt * k2)
        k4 = f(t + dt, th + dt * k3)
        th, clipped = clip_to_ball(th + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4), theta_bar)
        clips += clipped
        out[k + 1] = th
    return out, clips


def adaptation_denominator(r, phi_r, km2, eps_den):
    """Return ``(max(km2 (phi_r^2 - |r|^2), eps_den), clamped)``.

    Raises BarrierViolation when |r| >= phi_r.
    """
    r2 = float(np.dot(r, r))
    if r2 >= phi_r * phi_r:
        raise BarrierViolation(f"|r| = {math.sqrt(r2):.6g} >= phi_r = {phi_r:.6g}")
    den = km2 * (phi_r * phi_r - r2)
    if den < eps_den:
        return eps_den, True
    return den, False


def adaptation_rhs(Y, r, Gamma, phi_r, km2, theta_hat, theta_bar, eps_proj, eps_den):
    den, _ = adaptation_denominator(r, phi_r, km2, eps_den)
    raw = np.asarray(Gamma) @ (np.asarray(Y).T @ np.asarray(r, dtype=float)) / den
    return projection(theta_hat, raw, theta_bar, eps_proj)


def blf_value(r, M, phi_r, km2):
    """Log barrier ``0.5 log(P / (P - r^T M r))`` with ``P = km2 phi_r^2``."""
    r = np.asarray(r, dtype=float)
    P = km2 * phi_r * phi_r
    rMr = float(r @ np.asarray(M) @ r)
    if rMr >= P:
        raise BarrierViolation(f"r^T M r = {rMr:.6g} >= km2 phi_r^2 = {P:.6g}")
    return 0.5 * math.log(P / (P - rMr))


def lyapunov_value(r, M, phi_r, km2, theta_tilde, Gamma):
    theta_tilde = np.asarray(theta_tilde, dtype=float)
    quad = float(theta_tilde @ np.linalg.solve(np.asarray(Gamma), theta_tilde))
    return blf_value(r, M, phi_r, km2) + 0.5 * quad
