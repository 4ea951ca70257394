"""Offline feasibility certificate for a set of time-varying constraints.

The certificate compares the input envelope with a worst-case bound on
the auxiliary control over a time grid:

    phi_tau(t) > (Psi1 phi_r + Psi2'(t) + |phi_r'(t)| km2) phi_r + Psi3(t)

with ``Psi2' = Psi2 - lambda_min(K)`` and, for a disturbed plant,
``Psi3`` replaced by ``Psi3 + d_bar``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .envelopes import Envelope, phi_r_envelope, select_alpha
from .exceptions import DegenerateEnvelope, DegenerateGain
from .plant import BoundConstants


class FailureReason(str, enum.Enum):
    GAIN_DEGENERATE = "GainDegenerate"
    ENVELOPE_DEGENERATE = "EnvelopeDegenerate"
    C1_VIOLATED = "C1Violated"


def psi1(b):
    return 6.0 * b.theta_bar * b.kv


def _vel_term(alpha, phi_e0, phi_qdotd, t):
    return alpha * phi_e0 + np.asarray(phi_qdotd.value(t))


def psi2(t, b, alpha, K, phi_e0, phi_qdotd):
    lam_max = float(np.linalg.eigvalsh(np.asarray(K, dtype=float))[-1])
    vel = _vel_term(alpha, phi_e0, phi_qdotd, t)
    return b.theta_bar * (2.0 * alpha * b.km2 + 5.0 * b.kv * vel + 2.0 * b.kf2) + lam_max


def psi3(t, b, alpha, phi_e0, phi_qdotd, phi_qddotd):
    vel = _vel_term(alpha, phi_e0, phi_qdotd, t)
    acc = alpha * alpha * phi_e0 + np.asarray(phi_qddotd.value(t))
    return b.theta_bar * (b.km2 * acc + b.kv * vel * vel + b.kg + b.kf1 + b.kf2 * vel)


def c1_margin(t, phi_tau, phi_r, b, psi1_val, psi2_t, psi3_t, K, disturbed=False):
    """``phi_tau - RHS`` of the certificate inequality (positive = satisfied)."""
    lam_min = float(np.linalg.eigvalsh(np.asarray(K, dtype=float))[0])
    r = np.asarray(phi_r.value(t))
    r_dot = np.abs(np.asarray(phi_r.derivative(t)))
    psi2p = np.asarray(psi2_t) - lam_min
    psi3p = np.asarray(psi3_t) + (b.d_bar if disturbed else 0.0)
    return np.asarray(phi_tau.value(t)) - ((psi1_val * r + psi2p + r_dot * b.km2) * r + psi3p)


@dataclass
class FeasibilityInputs:
    bounds: BoundConstants
    phi_e: Envelope
    phi_edot: Envelope
    phi_tau: Envelope
    phi_qdotd: Envelope
    phi_qddotd: Envelope
    K: np.ndarray
    grid: np.ndarray
    eps1: float = 0.05
    eps2: float | None = None
    disturbed: bool = False
    alpha: float | None = None


@dataclass
class FeasibilityReport:
    feasible: bool
    alpha: float = float("nan")
    phi_r: Envelope | None = None
    grid: np.ndarray = field(default_factory=lambda: np.empty(0))
    margins: np.ndarray = field(default_factory=lambda: np.empty(0))
    worst_margin: float = float("nan")
    worst_time: float = float("nan")
    failure_reason: FailureReason | None = None
    message: str = ""
    disturbed: bool = False

    @property
    def grid_step(self):
        return float(self.grid[1] - self.grid[0]) if self.grid.size > 1 else float("nan")

    def to_dict(self):
        return {
            "feasible": self.feasible,
            "alpha": self.alpha,
            "worstMargin": self.worst_margin,
            "worstTime": self.worst_time,
            "failureReason": self.failure_reason.value if self.failure_reason else None,
            "message": self.message,
            "gridStep": self.grid_step,
            "disturbed": self.disturbed,
            "phiR": self.phi_r.to_dict() if self.phi_r is not None else None,
        }


def check_feasibility(inp):
    """Run the feasibility check on the grid of ``inp``.

    Steps: alpha = inf(phi_edot / phi_e) - eps1; phi_r from the two-branch
    bound minus eps2; certificate margin at every grid point.  Degenerate
    gains or envelopes are reported, not raised.
    """
    grid = np.asarray(inp.grid, dtype=float)
    report = FeasibilityReport(feasible=False, grid=grid, disturbed=inp.disturbed)
    try:
        alpha = inp.alpha if inp.alpha is not None else select_alpha(
            inp.phi_e, inp.phi_edot, grid, inp.eps1)
        if inp.alpha is not None and np.any(
                alpha >= np.asarray(inp.phi_edot.value(grid)) / np.asarray(inp.phi_e.value(grid))):
            raise DegenerateGain(f"alpha = {alpha:g} violates the gain condition")
    except DegenerateGain as exc:
        report.failure_reason = FailureReason.GAIN_DEGENERATE
        report.message = str(exc)
        return report
    report.alpha = float(alpha)
    try:
        phi_r = phi_r_envelope(inp.phi_e, inp.phi_edot, alpha, grid, inp.eps2)
    except DegenerateEnvelope as exc:
        report.failure_reason = FailureReason.ENVELOPE_DEGENERATE
        report.message = str(exc)
        return report
    report.phi_r = phi_r

    b = inp.bounds
    phi_e0 = float(inp.phi_e.value(0.0))
    p2 = psi2(grid, b, alpha, inp.K, phi_e0, inp.phi_qdotd)
    p3 = psi3(grid, b, alpha, phi_e0, inp.phi_qdotd, inp.phi_qddotd)
    margins = c1_margin(grid, inp.phi_tau, phi_r, b, psi1(b), p2, p3, inp.K, inp.disturbed)
    i = int(np.argmin(margins))
    report.margins = margins
    report.worst_margin = float(margins[i])
    report.worst_time = float(grid[i])
    report.feasible = bool(report.worst_margin > 0)
    if not report.feasible:
        report.failure_reason = FailureReason.C1_VIOLATED
        report.message = (f"certificate inequality violated: margin {report.worst_margin:.6g} "
                          f"at t = {report.worst_time:g}")
    return report
