"""Fixed-step closed-loop simulation with envelope monitoring.

The augmented state is ``x = (q[2], qdot[2], thetaHat[6])``.  The control
law is evaluated inside every Runge-Kutta stage (continuous-time
idealisation) unless ``zoh`` is set, in which case torque and adaptation
rate are held over each step.

Two routes compute the same vector field:

* :func:`closed_loop_rhs` composes the public plant/controller operations
  and is meant for inspection and testing;
* :func:`run` uses a float-only kernel with envelopes and reference
  pre-sampled on the half-step grid, which is what makes 60 s at
  dt = 1e-3 affordable.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import controller as ctl
from .envelopes import ConstantEnvelope, EnvelopeSet
from .exceptions import BarrierViolation, ConfigError
from .plant import BoundConstants, ElState, HelicopterModel, HelicopterParams, forward_dynamics
from .plant import mass_matrix, regressor, theta_true

log = logging.getLogger(__name__)

CSV_COLUMNS = (
    "t", "q1", "q2", "qd1", "qd2", "qdot1", "qdot2", "e_norm", "edot_norm", "r_norm",
    "phi_e", "phi_edot", "phi_r", "tau1", "tau2", "tau_norm", "phi_tau", "dtau_norm",
    "thetaHat_norm", "V_r", "margin_e", "margin_edot", "margin_r", "margin_tau",
)
TAU_TOL = 1e-12


# reference and disturbance ---------------------------------------------------

@dataclass(frozen=True)
class SinusoidReference:
    """``q_d(t) = offset + amplitude * sin(omega t)`` (componentwise, rad)."""

    offset: tuple
    amplitude: tuple
    omega: float

    def evaluate(self, t):
        off = np.asarray(self.offset, dtype=float)
        amp = np.asarray(self.amplitude, dtype=float)
        t = np.asarray(t, dtype=float)
        s = np.sin(self.omega * t)[..., None]
        c = np.cos(self.omega * t)[..., None]
        return off + amp * s, amp * self.omega * c, -amp * self.omega**2 * s

    def bound_envelopes(self):
        off = np.asarray(self.offset, dtype=float)
        amp = np.asarray(self.amplitude, dtype=float)
        na = float(np.linalg.norm(amp))
        return (ConstantEnvelope(float(np.linalg.norm(off)) + na),
                ConstantEnvelope(na * abs(self.omega)),
                ConstantEnvelope(na * self.omega**2))


class TableReference:
    """Cubic-spline reference through tabulated samples (rad)."""

    def __init__(self, times, values):
        from scipy.interpolate import CubicSpline

        self.times = np.asarray(times, dtype=float)
        self.values = np.asarray(values, dtype=float)
        if self.values.shape != (self.times.size, 2):
            raise ConfigError("table reference needs an (n, 2) array of samples")
        self._spline = CubicSpline(self.times, self.values, axis=0)

    def evaluate(self, t):
        t = np.clip(np.asarray(t, dtype=float), self.times[0], self.times[-1])
        return self._spline(t), self._spline(t, 1), self._spline(t, 2)

    def bound_envelopes(self, samples=20001):
        ts = np.linspace(self.times[0], self.times[-1], samples)
        return tuple(ConstantEnvelope(float(np.max(np.linalg.norm(a, axis=-1))) * 1.001)
                     for a in self.evaluate(ts))


@dataclass(frozen=True)
class Disturbance:
    """``none``, ``constant`` (value) or ``sinusoid`` (amplitude sin(omega t + phase))."""

    kind: str = "none"
    amplitude: tuple = (0.0, 0.0)
    omega: float = 0.0
    phase: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "constant", "sinusoid"):
            raise ConfigError(f"unknown disturbance kind {self.kind!r}")

    def evaluate(self, t):
        t = np.asarray(t, dtype=float)
        amp = np.asarray(self.amplitude, dtype=float)
        if self.kind == "none":
            return np.zeros(t.shape + (2,))
        if self.kind == "constant":
            return np.broadcast_to(amp, t.shape + (2,)).copy()
        return amp * np.sin(self.omega * t + self.phase)[..., None]

    @property
    def sup_norm(self):
        return 0.0 if self.kind == "none" else float(np.linalg.norm(self.amplitude))


def reference_eval(ref, t):
    return tuple(np.asarray(a) for a in ref.evaluate(float(t)))


# configuration ----------------------------------------------------------------

@dataclass
class SimConfig:
    plant: HelicopterParams
    bounds: BoundConstants
    gains: ctl.ControllerGains
    envelopes: EnvelopeSet
    reference: object
    disturbance: Disturbance = field(default_factory=Disturbance)
    dt: float = 1e-3
    T: float = 60.0
    theta_hat0: np.ndarray = field(default_factory=lambda: np.zeros(6))
    q0: np.ndarray | None = None
    qdot0: np.ndarray | None = None
    log_every: int = 10
    zoh: bool = False
    velocity_noise_std: float = 0.0
    seed: int = 0
    eps_den: float | None = None
    units: str = "rad"
    t0: float = 0.0  # start time; the run covers [t0, t0 + T]

    @property
    def steps(self):
        return int(round(self.T / self.dt))

    def validate(self):
        if not 0 < self.dt <= 1e-2:
            raise ConfigError(f"dt = {self.dt} must lie in (0, 1e-2]")
        if abs(self.steps * self.dt - self.T) > 1e-9 * max(1.0, self.T):
            raise ConfigError(f"horizon T = {self.T} is not a multiple of dt = {self.dt}")
        if self.log_every < 1:
            raise ConfigError("log_every must be >= 1")
        if self.disturbance.sup_norm > self.bounds.d_bar + 1e-12:
            raise ConfigError(f"disturbance sup-norm {self.disturbance.sup_norm:g} exceeds "
                              f"dBar = {self.bounds.d_bar:g}")
        th0 = np.asarray(self.theta_hat0, dtype=float)
        if th0.shape != (6,) or np.linalg.norm(th0) > self.gains.theta_bar:
            raise ConfigError("thetaHat0 must be a 6-vector with norm <= thetaBar")

    def initial_state(self):
        qd0, qdotd0, _ = reference_eval(self.reference, self.t0)
        q0 = qd0 if self.q0 is None else np.asarray(self.q0, dtype=float)
        qdot0 = qdotd0 if self.qdot0 is None else np.asarray(self.qdot0, dtype=float)
        return np.concatenate([q0, qdot0, np.asarray(self.theta_hat0, dtype=float)])

    def check_initial_conditions(self):
        """Reject initial states outside the error and filtered-error sets."""
        x0 = self.initial_state()
        qd0, qdotd0, _ = reference_eval(self.reference, self.t0)
        e0 = x0[:2] - qd0
        r0 = x0[2:4] - qdotd0 + self.gains.alpha * e0
        ne, nr = float(np.linalg.norm(e0)), float(np.linalg.norm(r0))
        pe0 = float(self.envelopes.phi_e.value(self.t0))
        pr0 = float(self.envelopes.phi_r.value(self.t0))
        if ne > pe0:
            raise ConfigError(f"initial error outside its envelope: |e(0)| = {ne:.6g} > "
                              f"phi_e(0) = {pe0:.6g}")
        if nr >= pr0:
            raise ConfigError(f"initial filtered error outside its envelope: |r(0)| = "
                              f"{nr:.6g} >= phi_r(0) = {pr0:.6g}")

    def resolved_eps_den(self):
        if self.eps_den is not None:
            return self.eps_den
        return 1e-9 * self.bounds.km2 * float(self.envelopes.phi_r.value(0.0)) ** 2


# reference route -----------------------------------------------------------

def closed_loop_rhs(x, t, cfg, tau_hold=None):
    """Closed-loop vector field at ``(x, t)`` and the controller signals.

    Returns ``(xdot, info)`` where ``info`` holds e, edot, r, tau_a, tau,
    phi_r, phi_tau and whether the adaptation denominator was clamped.
    Raises BarrierViolation if |r| >= phi_r(t).
    """
    x = np.asarray(x, dtype=float)
    q, qdot, th = x[:2], x[2:4], x[4:]
    env, g, b = cfg.envelopes, cfg.gains, cfg.bounds
    qd, qdotd, qddotd = reference_eval(cfg.reference, t)
    e = q - qd
    edot = qdot - qdotd
    r = ctl.filtered_error(e, edot, g.alpha)
    pr = float(env.phi_r.value(t))
    pr_dot = float(env.phi_r.derivative(t))
    pt = float(env.phi_tau.value(t))
    s = ElState(q, qdot)
    Y = regressor(s, r, edot, qddotd, g.alpha)
    try:
        den, clamped = ctl.adaptation_denominator(r, pr, b.km2, cfg.resolved_eps_den())
    except BarrierViolation as exc:
        raise BarrierViolation(f"{exc} at t = {t:.6g}", t=t) from None
    tau_a = ctl.auxiliary_control(Y, th, g.K, r, pr, pr_dot, b.km2)
    tau = ctl.saturate(tau_a, pt)
    th_dot = ctl.projection(th, g.Gamma @ (Y.T @ r) / den, g.theta_bar, g.eps_proj)
    d = cfg.disturbance.evaluate(float(t))
    qddot = forward_dynamics(cfg.plant, s, tau if tau_hold is None else tau_hold, d)
    info = {"e": e, "edot": edot, "r": r, "tau_a": tau_a, "tau": tau, "phi_r": pr,
            "phi_tau": pt, "clamped": clamped, "qd": qd}
    return np.concatenate([qdot, qddot, th_dot]), info


def rk4_step(f, t, x, dt):
    """Classical fourth-order Runge-Kutta step for ``x' = f(t, x)``."""
    k1 = f(t, x)
    k2 = f(t + 0.5 * dt, x + 0.5 * dt * k1)
    k3 = f(t + 0.5 * dt, x + 0.5 * dt * k2)
    k4 = f(t + dt, x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate_step(x, t, dt, cfg):
    """One RK4 step of the closed loop followed by the estimate clip."""
    x = rk4_step(lambda tt, xx: closed_loop_rhs(xx, tt, cfg)[0], t, np.asarray(x, float), dt)
    x[4:], _ = ctl.clip_to_ball(x[4:], cfg.gains.theta_bar)
    return x


# results ----------------------------------------------------------------------

@dataclass
class Trajectory:
    columns: dict
    theta_hat: np.ndarray
    V: np.ndarray

    def __len__(self):
        return len(self.columns["t"])

    def __getitem__(self, key):
        return self.columns[key]

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            data = np.column_stack([self.columns[c] for c in CSV_COLUMNS])
            for row in data:
                w.writerow([f"{v:.17g}" for v in row])


@dataclass
class SummaryReport:
    steps: int
    dt: float
    T: float
    violations: dict
    min_margins: dict
    terminal_error_norm: float
    max_theta_hat_norm: float
    saturation_duty_cycle: float
    anomaly_count: int
    projection_clips: int = 0
    aborted: bool = False
    abort_time: float | None = None
    abort_reason: str = ""
    certificate: dict | None = None

    @property
    def total_violations(self):
        return int(sum(self.violations.values()))

    def to_dict(self):
        return {
            "steps": self.steps, "dt": self.dt, "T": self.T,
            "violations": dict(self.violations),
            "minMargins": {k: {"value": v[0], "t": v[1]} for k, v in self.min_margins.items()},
            "terminalErrorNorm": self.terminal_error_norm,
            "maxThetaHatNorm": self.max_theta_hat_norm,
            "saturationDutyCycle": self.saturation_duty_cycle,
            "anomalyCount": self.anomaly_count,
            "projectionClips": self.projection_clips,
            "aborted": self.aborted, "abortTime": self.abort_time,
            "abortReason": self.abort_reason, "certificate": self.certificate,
        }


def monitor(e, edot, r, tau, phi_e, phi_edot, phi_r, phi_tau):
    """Margins ``(e, edot, r, tau)`` and their violation flags.

    Error margins are strict (violation when <= 0); the input margin is
    non-strict up to a 1e-12 round-off allowance.
    """
    margins = (phi_e - float(np.linalg.norm(e)), phi_edot - float(np.linalg.norm(edot)),
               phi_r - float(np.linalg.norm(r)), phi_tau - float(np.linalg.norm(tau)))
    flags = (margins[0] <= 0, margins[1] <= 0, margins[2] <= 0, margins[3] < -TAU_TOL)
    return margins, flags


# fast route -------------------------------------------------------------------

class _Kernel:
    """Float-only closed-loop vector field on the half-step grid."""

    def __init__(self, cfg):
        g, b = cfg.gains, cfg.bounds
        self.model = HelicopterModel(cfg.plant)
        self.alpha = g.alpha
        self.km2 = b.km2
        (self.k11, self.k12), (self.k21, self.k22) = g.K.tolist()
        gam = g.Gamma
        self.gamma_diag = gam.diagonal().tolist() if np.count_nonzero(
            gam - np.diag(gam.diagonal())) == 0 else None
        self.gamma = gam.tolist()
        self.tb = g.theta_bar
        inner = g.theta_bar - g.eps_proj
        self.inner2 = inner * inner
        self.layer = g.theta_bar**2 - inner * inner
        self.eps_den = cfg.resolved_eps_den()

        n = cfg.steps
        ts = cfg.t0 + np.arange(2 * n + 1) * (0.5 * cfg.dt)
        self.ts = ts
        env = cfg.envelopes
        qd, qdotd, qddotd = cfg.reference.evaluate(ts)
        pr = np.asarray(env.phi_r.value(ts), dtype=float)
        self.pr = pr.tolist()
        self.gain = (np.asarray(env.phi_r.derivative(ts), dtype=float) / pr * b.km2).tolist()
        self.pt = np.asarray(env.phi_tau.value(ts), dtype=float).tolist()
        self.pe = np.asarray(env.phi_e.value(ts), dtype=float).tolist()
        self.ped = np.asarray(env.phi_edot.value(ts), dtype=float).tolist()
        self.ref = np.hstack([qd, qdotd, qddotd]).tolist()
        self.dist = cfg.disturbance.evaluate(ts).tolist()

    def __call__(self, j, x, noise=(0.0, 0.0), tau_hold=None):
        q1, q2, w1, w2, t0, t1, t2, t3, t4, t5 = x
        qd1, qd2, dqd1, dqd2, ddqd1, ddqd2 = self.ref[j]
        a = self.alpha
        e1 = q1 - qd1
        e2 = q2 - qd2
        m1 = w1 + noise[0]
        m2 = w2 + noise[1]
        ed1 = m1 - dqd1
        ed2 = m2 - dqd2
        r1 = ed1 + a * e1
        r2 = ed2 + a * e2
        pr = self.pr[j]
        rn2 = r1 * r1 + r2 * r2
        if rn2 >= pr * pr:
            raise BarrierViolation(
                f"|r| = {math.sqrt(rn2):.6g} >= phi_r = {pr:.6g} at t = {self.ts[j]:.6g}",
                t=float(self.ts[j]))

        # regressor rows (measured velocities)
        a1 = a * ed1 - ddqd1
        a2 = a * ed2 - ddqd2
        v1 = r1 - m1
        v2 = r2 - m2
        c = math.cos(q1)
        hs = 0.5 * math.sin(2.0 * q1)
        y02 = hs * m2 * v2
        y12 = c * c * a2 - hs * (m2 * v1 + m1 * v2)
        yth1 = a1 * t0 + y02 * t2 - c * t3 - m1 * t4
        yth2 = a2 * t1 + y12 * t2 - m2 * t5

        gain = self.gain[j]
        ta1 = -yth1 - (self.k11 * r1 + self.k12 * r2) + gain * r1
        ta2 = -yth2 - (self.k21 * r1 + self.k22 * r2) + gain * r2
        nta = math.hypot(ta1, ta2)
        pt = self.pt[j]
        if nta > pt:
            s = pt / nta
            tau1, tau2 = s * ta1, s * ta2
        else:
            tau1, tau2 = ta1, ta2

        den = self.km2 * (pr * pr - rn2)
        clamped = den < self.eps_den
        if clamped:
            den = self.eps_den
        z = (a1 * r1, a2 * r2, y02 * r1 + y12 * r2, -c * r1, -m1 * r1, -m2 * r2)
        if self.gamma_diag is not None:
            y = [gd * zi / den for gd, zi in zip(self.gamma_diag, z)]
        else:
            y = [sum(gij * zj for gij, zj in zip(row, z)) / den for row in self.gamma]
        th = (t0, t1, t2, t3, t4, t5)
        n2 = t0 * t0 + t1 * t1 + t2 * t2 + t3 * t3 + t4 * t4 + t5 * t5
        f = (n2 - self.inner2) / self.layer
        if f > 0:
            ty = sum(ti * yi for ti, yi in zip(th, y))
            if ty > 0:
                k = f * ty / n2
                y = [yi - k * ti for yi, ti in zip(y, th)]

        d1, d2 = self.dist[j]
        if tau_hold is not None:
            u1, u2 = tau_hold
        else:
            u1, u2 = tau1, tau2
        qdd1, qdd2 = self.model.accel(q1, w1, w2, u1 + d1, u2 + d2)
        info = (e1, e2, ed1, ed2, r1, r2, ta1, ta2, tau1, tau2, clamped)
        return [w1, w2, qdd1, qdd2] + y, info


def _axpy(x, h, k):
    return [xi + h * ki for xi, ki in zip(x, k)]


def run(cfg, certificate=None):
    """Simulate ``cfg`` over its horizon.

    Returns ``(Trajectory, SummaryReport)``.  A barrier crossing inside the
    integrator aborts the run; the trajectory up to the last completed step
    is kept and the abort is counted as a filtered-error violation.
    """
    cfg.validate()
    cfg.check_initial_conditions()
    kern = _Kernel(cfg)
    n, dt, h2 = cfg.steps, cfg.dt, 0.5 * cfg.dt
    p = cfg.plant
    th_true = theta_true(p)
    gamma_inv = np.linalg.inv(cfg.gains.Gamma)
    rng = np.random.default_rng(cfg.seed) if cfg.velocity_noise_std > 0 else None

    names = ("e", "edot", "r", "tau")
    violations = dict.fromkeys(names, 0)
    min_margins = {k: (math.inf, 0.0) for k in names}
    rows = []
    thetas = []
    Vs = []
    sat_steps = 0
    anomalies = 0
    clips = 0
    tb2 = cfg.gains.theta_bar ** 2
    max_th = 0.0
    aborted, abort_time, abort_reason = False, None, ""

    x = cfg.initial_state().tolist()
    k = 0
    noise = (0.0, 0.0)
    while True:
        j = 2 * k
        t = kern.ts[j]
        if rng is not None:
            noise = tuple(rng.normal(0.0, cfg.velocity_noise_std, 2))
        try:
            k1, info = kern(j, x, noise)
        except BarrierViolation as exc:
            aborted, abort_time, abort_reason = True, exc.t, str(exc)
            violations["r"] += 1
            break
        e1, e2, ed1, ed2, r1, r2, ta1, ta2, tau1, tau2, clamped = info
        margins, flags = monitor((e1, e2), (ed1, ed2), (r1, r2), (tau1, tau2),
                                 kern.pe[j], kern.ped[j], kern.pr[j], kern.pt[j])
        for name, m, bad in zip(names, margins, flags):
            violations[name] += bad
            if m < min_margins[name][0]:
                min_margins[name] = (m, t)
        dtau = math.hypot(tau1 - ta1, tau2 - ta2)
        sat_steps += dtau > 0
        anomalies += clamped
        thn = math.sqrt(sum(v * v for v in x[4:]))
        max_th = max(max_th, thn)

        if k % cfg.log_every == 0 or k == n:
            th = np.array(x[4:])
            M = mass_matrix(p, x[:2])
            r = np.array([r1, r2])
            try:
                Vr = ctl.blf_value(r, M, kern.pr[j], cfg.bounds.km2)
            except BarrierViolation:
                Vr = math.inf
            tt = th_true - th
            Vs.append(Vr + 0.5 * float(tt @ gamma_inv @ tt))
            thetas.append(th)
            qd1, qd2 = kern.ref[j][0], kern.ref[j][1]
            rows.append((t, x[0], x[1], qd1, qd2, x[2], x[3], math.hypot(e1, e2),
                         math.hypot(ed1, ed2), math.hypot(r1, r2), kern.pe[j], kern.ped[j],
                         kern.pr[j], tau1, tau2, math.hypot(tau1, tau2), kern.pt[j], dtau, thn,
                         Vr) + margins)
        if k == n:
            break

        try:
            if cfg.zoh:
                hold = (tau1, tau2)
                th_rate = k1[4:]

                def f(jj, xx):
                    xd, _ = kern(jj, xx, noise, tau_hold=hold)
                    return xd[:4] + th_rate
                kk1 = k1[:4] + th_rate
            else:
                def f(jj, xx):
                    return kern(jj, xx, noise)[0]
                kk1 = k1
            kk2 = f(j + 1, _axpy(x, h2, kk1))
            kk3 = f(j + 1, _axpy(x, h2, kk2))
            kk4 = f(j + 2, _axpy(x, dt, kk3))
        except BarrierViolation as exc:
            aborted, abort_time, abort_reason = True, exc.t, str(exc)
            violations["r"] += 1
            break
        c = dt / 6.0
        x = [xi + c * (a + 2.0 * b + 2.0 * cc + d)
             for xi, a, b, cc, d in zip(x, kk1, kk2, kk3, kk4)]
        n2 = sum(v * v for v in x[4:])
        if n2 > tb2:
            s = cfg.gains.theta_bar / math.sqrt(n2)
            x[4:] = [v * s for v in x[4:]]
            clips += 1
        k += 1

    if aborted:
        log.warning("run aborted: %s", abort_reason)
    cols = {name: np.array([row[i] for row in rows]) for i, name in enumerate(CSV_COLUMNS)}
    traj = Trajectory(columns=cols, theta_hat=np.array(thetas).reshape(-1, 6), V=np.array(Vs))
    terminal = float(cols["e_norm"][-1]) if len(rows) else math.nan
    summary = SummaryReport(
        steps=k, dt=dt, T=cfg.T, violations=violations,
        min_margins={kk: (float(v), float(tm)) for kk, (v, tm) in min_margins.items()},
        terminal_error_norm=terminal, max_theta_hat_norm=max_th,
        saturation_duty_cycle=sat_steps / max(k + 1, 1), anomaly_count=int(anomalies),
        projection_clips=clips,
        aborted=aborted, abort_time=abort_time, abort_reason=abort_reason,
        certificate=certificate)
    return traj, summary
