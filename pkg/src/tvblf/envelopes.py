"""Time-varying constraint envelopes.

An envelope is a positive scalar function of time with a derivative
evaluator.  Both evaluators accept a float or a numpy array of times, so
the same object serves the simulation loop (scalar calls) and the
feasibility grid (vectorised calls).

The module also carries the envelope steps of the offline design
procedure: error envelopes from state/reference bounds, selection of the
filter gain ``alpha`` and construction of the filtered-error envelope
``phi_r``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import DegenerateEnvelope, DegenerateGain, DomainError, InfeasibleReference

FD_STEP = 1e-6


def _fd_derivative(fn, t, h=FD_STEP):
    """Central difference of ``fn`` at ``t``; second-order one-sided near 0."""
    t_arr = np.asarray(t, dtype=float)
    if t_arr.ndim == 0:
        t = float(t)
        if t >= h:
            return (fn(t + h) - fn(t - h)) / (2.0 * h)
        return (-3.0 * fn(t) + 4.0 * fn(t + h) - fn(t + 2.0 * h)) / (2.0 * h)
    central = (fn(t_arr + h) - fn(np.maximum(t_arr - h, 0.0))) / (2.0 * h)
    forward = (-3.0 * fn(t_arr) + 4.0 * fn(t_arr + h) - fn(t_arr + 2.0 * h)) / (2.0 * h)
    return np.where(t_arr >= h, central, forward)


class Envelope:
    """Base class: subclasses implement ``value`` and ``derivative``."""

    smooth = True

    def value(self, t):
        raise NotImplementedError

    def derivative(self, t):
        raise NotImplementedError

    def __call__(self, t):
        return self.value(t)

    def to_dict(self):
        raise NotImplementedError


@dataclass(frozen=True)
class PpfEnvelope(Envelope):
    """Prescribed-performance function

        phi(t) = (phi0 - phi_inf) / (1 + kappa * t**nu) + phi_inf

    decaying from ``phi0`` at t = 0 towards ``phi_inf``.
    """

    phi0: float
    phi_inf: float
    kappa: float
    nu: float = 1.0

    def __post_init__(self):
        if not self.phi_inf > 0:
            raise DomainError(f"phi_inf must be positive, got {self.phi_inf}")
        if self.phi0 < self.phi_inf:
            raise DomainError(f"phi0 ({self.phi0}) must not be below phi_inf ({self.phi_inf})")
        if not (self.kappa > 0 and self.nu > 0):
            raise DomainError("kappa and nu must be positive")

    def value(self, t):
        return (self.phi0 - self.phi_inf) / (1.0 + self.kappa * t**self.nu) + self.phi_inf

    def derivative(self, t):
        if self.nu < 1.0 and np.any(np.asarray(t) == 0):
            raise DomainError("PPF derivative is unbounded at t = 0 for nu < 1")
        t_pow = t ** (self.nu - 1.0)
        den = 1.0 + self.kappa * t**self.nu
        return -(self.phi0 - self.phi_inf) * self.kappa * self.nu * t_pow / (den * den)

    def convergence_time(self, eps):
        return convergence_time(self, eps)

    def to_dict(self):
        return {"kind": "ppf", "phi0": self.phi0, "phiInf": self.phi_inf,
                "kappa": self.kappa, "nu": self.nu}


@dataclass(frozen=True)
class ConstantEnvelope(Envelope):
    c: float

    def __post_init__(self):
        # zero is allowed for reference bounds of static references
        if not self.c >= 0:
            raise DomainError(f"constant envelope must be non-negative, got {self.c}")

    def value(self, t):
        if np.ndim(t):
            return np.full(np.shape(t), float(self.c))
        return float(self.c)

    def derivative(self, t):
        if np.ndim(t):
            return np.zeros(np.shape(t))
        return 0.0

    def to_dict(self):
        return {"kind": "const", "value": self.c}


@dataclass(frozen=True)
class ShiftedEnvelope(Envelope):
    """``base(t) + offset``."""

    base: Envelope
    offset: float

    @property
    def smooth(self):
        return self.base.smooth

    def value(self, t):
        return self.base.value(t) + self.offset

    def derivative(self, t):
        return self.base.derivative(t)

    def to_dict(self):
        return {"kind": "shifted", "base": self.base.to_dict(), "offset": self.offset}


@dataclass(frozen=True)
class CombinationEnvelope(Envelope):
    """Linear combination ``sum(c_i * env_i(t))`` with analytic derivative.

    Used for differences such as ``phi_q - phi_qd`` and for the second
    branch ``phi_edot - alpha * phi_e`` of the filtered-error bound.
    """

    terms: tuple

    @property
    def smooth(self):
        return all(env.smooth for _, env in self.terms)

    def value(self, t):
        return sum(c * env.value(t) for c, env in self.terms)

    def derivative(self, t):
        return sum(c * env.derivative(t) for c, env in self.terms)

    def to_dict(self):
        return {"kind": "combination",
                "terms": [{"coef": c, "env": env.to_dict()} for c, env in self.terms]}


def difference(a, b):
    return CombinationEnvelope(((1.0, a), (-1.0, b)))


@dataclass(frozen=True)
class RateEnvelope(Envelope):
    """``d/dt base(t) + alpha * base(t)``; derivative by finite differences."""

    base: Envelope
    alpha: float

    def value(self, t):
        return self.base.derivative(t) + self.alpha * self.base.value(t)

    def derivative(self, t):
        return _fd_derivative(self.value, t)

    def to_dict(self):
        return {"kind": "rate", "base": self.base.to_dict(), "alpha": self.alpha}


@dataclass(frozen=True)
class PointwiseMinEnvelope(Envelope):
    """Pointwise minimum of several envelopes.

    Only piecewise C1: the derivative is a central finite difference
    (h = 1e-6) and is therefore smeared over +-h around a crossing.
    """

    envelopes: tuple
    smooth = False

    def __post_init__(self):
        if not self.envelopes:
            raise DomainError("PointwiseMinEnvelope needs at least one envelope")
        object.__setattr__(self, "envelopes", tuple(self.envelopes))

    def value(self, t):
        if np.ndim(t) == 0:
            return min(float(env.value(t)) for env in self.envelopes)
        return np.minimum.reduce([np.asarray(env.value(t), dtype=float) for env in self.envelopes])

    def derivative(self, t):
        return _fd_derivative(self.value, t)

    def to_dict(self):
        return {"kind": "min", "envelopes": [env.to_dict() for env in self.envelopes]}


def envelope_from_dict(spec, scale=1.0):
    """Build an envelope from its JSON form, scaling magnitudes by ``scale``.

    Only ``ppf`` and ``const`` are accepted as user input.
    """
    kind = spec.get("kind")
    if kind == "ppf":
        return PpfEnvelope(scale * float(spec["phi0"]), scale * float(spec["phiInf"]),
                           float(spec["kappa"]), float(spec.get("nu", 1.0)))
    if kind == "const":
        return ConstantEnvelope(scale * float(spec["value"]))
    raise DomainError(f"unknown envelope kind {kind!r}")


# closed forms -------------------------------------------------------------

def ppf_value(env, t):
    if np.any(np.asarray(t) < 0):
        raise DomainError("time must be non-negative")
    return env.value(t)


def ppf_derivative(env, t):
    if np.any(np.asarray(t) < 0):
        raise DomainError("time must be non-negative")
    return env.derivative(t)


def convergence_time(env, eps):
    """Time at which a PPF reaches the accuracy level ``eps``.

    Requires ``phi_inf < eps < phi0``.  Written as
    ``((phi0 - eps) / (eps - phi_inf) / kappa) ** (1 / nu)``, which is the
    textbook inverse with the ``- 1`` folded into the numerator.
    """
    if not env.phi_inf < eps < env.phi0:
        raise DomainError(f"eps must lie in ({env.phi_inf}, {env.phi0}), got {eps}")
    base = (env.phi0 - eps) / (eps - env.phi_inf) / env.kappa
    return base ** (1.0 / env.nu)


# design steps ---------------------------------------------------------------

def time_grid(horizon, step=0.01):
    n = int(round(horizon / step))
    return np.linspace(0.0, n * step, n + 1)


def error_envelopes(phi_q, phi_qdot, phi_qd, phi_qdotd, grid):
    """Error bounds ``phi_e = phi_q - phi_qd`` and ``phi_edot = phi_qdot - phi_qdotd``.

    Raises
    ------
    InfeasibleReference
        If either difference is not strictly positive somewhere on ``grid``;
        the first offending time is attached as ``.t``.
    """
    grid = np.asarray(grid, dtype=float)
    phi_e = difference(phi_q, phi_qd)
    phi_edot = difference(phi_qdot, phi_qdotd)
    for name, env in (("phi_q - phi_qd", phi_e), ("phi_qdot - phi_qdotd", phi_edot)):
        bad = np.nonzero(np.asarray(env.value(grid)) <= 0)[0]
        if bad.size:
            t = float(grid[bad[0]])
            raise InfeasibleReference(f"{name} is not positive at t = {t:g}", t=t)
    return phi_e, phi_edot


def alpha_max_series(phi_e, phi_edot, grid):
    grid = np.asarray(grid, dtype=float)
    return np.asarray(phi_edot.value(grid)) / np.asarray(phi_e.value(grid))


def select_alpha(phi_e, phi_edot, grid, eps1=0.05):
    """Filter gain ``inf_t phi_edot / phi_e - eps1`` over the grid."""
    alpha = float(np.min(alpha_max_series(phi_e, phi_edot, grid))) - eps1
    if alpha <= 0:
        raise DegenerateGain(f"selected alpha = {alpha:g} is not positive (eps1 = {eps1:g})")
    return alpha


def phi_r_branches(phi_e, phi_edot, alpha):
    """The two upper bounds on the filtered-error envelope."""
    return (RateEnvelope(phi_e, alpha),
            CombinationEnvelope(((1.0, phi_edot), (-alpha, phi_e))))


def phi_r_envelope(phi_e, phi_edot, alpha, grid, eps2=None):
    """Filtered-error envelope ``min{phi_e' + a phi_e, phi_edot - a phi_e} - eps2``.

    ``eps2`` defaults to 5 % of the grid infimum of the unshifted minimum.

    Raises
    ------
    DegenerateEnvelope
        If the result is not strictly positive on the grid.
    """
    grid = np.asarray(grid, dtype=float)
    r_max = PointwiseMinEnvelope(phi_r_branches(phi_e, phi_edot, alpha))
    try:
        r_max_vals = np.asarray(r_max.value(grid))
    except DomainError as exc:
        # nu < 1: phi_e' is -inf at t = 0, so the rate branch is too
        raise DegenerateEnvelope(f"phi_r is unbounded below at t = 0 ({exc})", t=0.0) from None
    if eps2 is None:
        eps2 = 0.05 * float(np.min(r_max_vals))
    vals = r_max_vals - eps2
    bad = np.nonzero(vals <= 0)[0]
    if bad.size:
        t = float(grid[bad[0]])
        raise DegenerateEnvelope(f"phi_r = {vals[bad[0]]:g} is not positive at t = {t:g}", t=t)
    return ShiftedEnvelope(r_max, -eps2)


# validation -----------------------------------------------------------------

@dataclass
class ValidationReport:
    positivity_violations: list = field(default_factory=list)
    max_derivative_error: float = 0.0
    max_derivative_error_time: float = float("nan")
    warnings: list = field(default_factory=list)

    @property
    def clean(self):
        return not self.positivity_violations and not self.warnings


def _ppf_leaves(env):
    if isinstance(env, PpfEnvelope):
        yield env
    for attr in ("base",):
        if hasattr(env, attr):
            yield from _ppf_leaves(getattr(env, attr))
    for sub in getattr(env, "envelopes", ()):
        yield from _ppf_leaves(sub)
    for _, sub in getattr(env, "terms", ()):
        yield from _ppf_leaves(sub)


def validate(env, grid, h=FD_STEP):
    """Check positivity and derivative consistency of ``env`` on ``grid``.

    The derivative check compares ``env.derivative`` with a central
    difference of ``env.value`` at interior grid points.  For non-smooth
    envelopes the largest discrepancy sits at the kink.
    """
    grid = np.asarray(grid, dtype=float)
    report = ValidationReport()
    values = np.asarray(env.value(grid), dtype=float)
    report.positivity_violations = [float(t) for t in grid[values <= 0]]

    for leaf in _ppf_leaves(env):
        if leaf.nu < 1:
            report.warnings.append(
                f"PPF with nu = {leaf.nu:g} < 1 has an unbounded derivative at t = 0; "
                "envelope is not continuously differentiable there")

    interior = grid[grid > 2 * h]
    if interior.size:
        fd = (np.asarray(env.value(interior + h)) - np.asarray(env.value(interior - h))) / (2 * h)
        err = np.abs(np.asarray(env.derivative(interior)) - fd)
        i = int(np.argmax(err))
        report.max_derivative_error = float(err[i])
        report.max_derivative_error_time = float(interior[i])
    return report


# grouped envelopes ---------------------------------------------------------------

@dataclass(frozen=True)
class EnvelopeSet:
    """All envelopes of one constrained tracking problem (angles in rad)."""

    phi_q: Envelope
    phi_qdot: Envelope
    phi_qd: Envelope
    phi_qdotd: Envelope
    phi_qddotd: Envelope
    phi_e: Envelope
    phi_edot: Envelope
    phi_r: Envelope
    phi_tau: Envelope
    alpha: float

    def check(self, grid):
        """Return a list of violated invariants on ``grid`` (empty if none)."""
        grid = np.asarray(grid, dtype=float)
        problems = []
        e = np.asarray(self.phi_e.value(grid))
        ed = np.asarray(self.phi_edot.value(grid))
        if np.any(e <= 0) or np.any(ed <= 0):
            problems.append("error envelopes not positive")
        if np.any(self.alpha >= ed / e):
            problems.append("gain condition alpha < phi_edot / phi_e violated")
        b1, b2 = phi_r_branches(self.phi_e, self.phi_edot, self.alpha)
        bound = np.minimum(np.asarray(b1.value(grid)), np.asarray(b2.value(grid)))
        r = np.asarray(self.phi_r.value(grid))
        if np.any(r <= 0):
            problems.append("phi_r not positive")
        if np.any(r >= bound):
            problems.append("phi_r does not satisfy the branch bound")
        if np.any(np.asarray(self.phi_tau.value(grid)) <= 0):
            problems.append("phi_tau not positive")
        return problems


def design_envelopes(phi_e, phi_edot, phi_tau, phi_qd, phi_qdotd, phi_qddotd, grid,
                     eps1=0.05, eps2=None, alpha=None):
    """Complete an EnvelopeSet from error, input and reference bounds.

    ``alpha`` is selected from the envelopes unless given; ``phi_r`` is
    built from ``alpha``.  State envelopes are recovered as sums of the
    error and reference bounds.
    """
    if alpha is None:
        alpha = select_alpha(phi_e, phi_edot, grid, eps1)
    elif np.any(alpha >= alpha_max_series(phi_e, phi_edot, grid)) or alpha <= 0:
        raise DegenerateGain(f"alpha = {alpha:g} violates 0 < alpha < phi_edot / phi_e")
    phi_r = phi_r_envelope(phi_e, phi_edot, alpha, grid, eps2)
    return EnvelopeSet(
        phi_q=CombinationEnvelope(((1.0, phi_e), (1.0, phi_qd))),
        phi_qdot=CombinationEnvelope(((1.0, phi_edot), (1.0, phi_qdotd))),
        phi_qd=phi_qd, phi_qdotd=phi_qdotd, phi_qddotd=phi_qddotd,
        phi_e=phi_e, phi_edot=phi_edot, phi_r=phi_r, phi_tau=phi_tau, alpha=float(alpha))
