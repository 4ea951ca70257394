"""JSON configuration documents.

A document has the sections ``plant``, ``bounds``, ``controller``,
``envelopes``, ``reference``, ``disturbance`` and ``sim`` plus a top-level
``units`` ("deg" or "rad").  Angle-valued quantities (reference, initial
state, the error envelopes) are given in ``units`` and converted to rad on
load; torques and model bounds are always SI.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .controller import ControllerGains
from .envelopes import design_envelopes, envelope_from_dict, time_grid
from .exceptions import ConfigError, TvblfError
from .feasibility import FeasibilityInputs
from .plant import BoundConstants, HelicopterParams, theta_true
from .sim import Disturbance, SimConfig, SinusoidReference, TableReference

BUNDLED = "helicopter_quanser.json"
SECTIONS = ("plant", "bounds", "controller", "envelopes", "reference", "disturbance", "sim")


def bundled_path():
    return resources.files("tvblf") / "data" / BUNDLED


def load_document(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a JSON object")
    return doc


def load_bundled():
    return json.loads(bundled_path().read_text())


def file_sha256(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _angle_scale(doc):
    units = doc.get("units", "deg")
    if units not in ("deg", "rad"):
        raise ConfigError(f"units must be 'deg' or 'rad', got {units!r}")
    return (math.pi / 180.0 if units == "deg" else 1.0), units


def _section(doc, name, required=True):
    sec = doc.get(name)
    if sec is None:
        if required:
            raise ConfigError(f"missing section {name!r}")
        return {}
    if not isinstance(sec, dict):
        raise ConfigError(f"section {name!r} must be an object")
    return sec


def _build_reference(sec, scale):
    kind = sec.get("kind", "sinusoid")
    if kind == "sinusoid":
        return SinusoidReference(
            offset=tuple(scale * float(v) for v in sec["offset"]),
            amplitude=tuple(scale * float(v) for v in sec["amplitude"]),
            omega=float(sec["omega"]))
    if kind == "table":
        return TableReference(sec["times"], scale * np.asarray(sec["values"], dtype=float))
    raise ConfigError(f"unknown reference kind {kind!r}")


def _build_disturbance(sec):
    if not sec:
        return Disturbance()
    kind = sec.get("kind", "none")
    if kind == "none":
        return Disturbance()
    if kind == "constant":
        return Disturbance("constant", amplitude=tuple(float(v) for v in sec["value"]))
    return Disturbance(kind, amplitude=tuple(float(v) for v in sec["amplitude"]),
                       omega=float(sec["omega"]), phase=float(sec.get("phase", 0.0)))


@dataclass
class Problem:
    """Everything derived from one configuration document."""

    doc: dict
    units: str
    plant: HelicopterParams
    bounds: BoundConstants
    reference: object
    disturbance: Disturbance
    grid: np.ndarray
    feasibility: FeasibilityInputs
    sim: SimConfig | None
    error: str = ""


def build(doc, dt=None, horizon=None, grid_step=None):
    """Parse a configuration document.

    Envelope degeneracy is tolerated (the certificate reports it); in that
    case ``Problem.sim`` is None and ``Problem.error`` carries the reason.
    """
    try:
        return _build(doc, dt, horizon, grid_step)
    except TvblfError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid configuration: {exc!r}") from None


def _build(doc, dt, horizon, grid_step):
    scale, units = _angle_scale(doc)
    plant = HelicopterParams.from_dict(_section(doc, "plant", required=False))
    bounds = BoundConstants.from_dict(_section(doc, "bounds"))
    csec = _section(doc, "controller")
    esec = _section(doc, "envelopes")
    ssec = _section(doc, "sim", required=False)
    reference = _build_reference(_section(doc, "reference"), scale)
    disturbance = _build_disturbance(_section(doc, "disturbance", required=False))

    for key in ("phi_e", "phi_edot", "phi_tau"):
        if key not in esec:
            raise ConfigError(f"envelopes section lacks {key!r}")
    phi_e = envelope_from_dict(esec["phi_e"], scale)
    phi_edot = envelope_from_dict(esec["phi_edot"], scale)
    phi_tau = envelope_from_dict(esec["phi_tau"])
    phi_qd, phi_qdotd, phi_qddotd = reference.bound_envelopes()

    dt = float(ssec.get("dt", 1e-3)) if dt is None else float(dt)
    T = float(ssec.get("T", 60.0)) if horizon is None else float(horizon)
    step = float(esec.get("grid_step", 0.01)) if grid_step is None else float(grid_step)
    grid = time_grid(T, step)
    eps1 = float(esec.get("eps1", 0.05))
    eps2 = esec.get("eps2")
    eps2 = None if eps2 is None else float(eps2)
    alpha = csec.get("alpha")
    alpha = None if alpha is None else float(alpha)

    K = np.asarray(csec.get("K", [[1.0, 0.0], [0.0, 1.0]]), dtype=float)
    feas = FeasibilityInputs(bounds=bounds, phi_e=phi_e, phi_edot=phi_edot, phi_tau=phi_tau,
                             phi_qdotd=phi_qdotd, phi_qddotd=phi_qddotd, K=K, grid=grid,
                             eps1=eps1, eps2=eps2, disturbed=disturbance.kind != "none",
                             alpha=alpha)

    problem = Problem(doc=doc, units=units, plant=plant, bounds=bounds, reference=reference,
                      disturbance=disturbance, grid=grid, feasibility=feas, sim=None)
    try:
        env_set = design_envelopes(phi_e, phi_edot, phi_tau, phi_qd, phi_qdotd, phi_qddotd,
                                   grid, eps1=eps1, eps2=eps2, alpha=alpha)
    except TvblfError as exc:
        problem.error = str(exc)
        return problem

    theta_bar = float(csec.get("thetaBar", bounds.theta_bar))
    gamma = csec.get("Gamma")
    Gamma = (np.asarray(gamma, dtype=float) if gamma is not None
             else float(csec.get("Gamma_scale", 1.0)) * np.eye(6))
    gains = ControllerGains(alpha=env_set.alpha, K=K, Gamma=Gamma, theta_bar=theta_bar,
                            eps_proj=csec.get("epsProj"))
    th0 = csec.get("thetaHat0")
    if th0 is None:
        th0 = np.zeros(6)
    elif isinstance(th0, dict):
        # {"nominalFraction": f} scales the model's own parameter vector
        th0 = float(th0["nominalFraction"]) * theta_true(plant)
    else:
        th0 = np.asarray(th0, dtype=float)

    q0 = ssec.get("q0")
    qdot0 = ssec.get("qdot0")
    problem.sim = SimConfig(
        plant=plant, bounds=bounds, gains=gains, envelopes=env_set, reference=reference,
        disturbance=disturbance, dt=dt, T=T, theta_hat0=th0,
        q0=None if q0 is None else scale * np.asarray(q0, dtype=float),
        qdot0=None if qdot0 is None else scale * np.asarray(qdot0, dtype=float),
        log_every=int(ssec.get("log_every", 10)), zoh=bool(ssec.get("zoh", False)),
        velocity_noise_std=scale * float(ssec.get("velocity_noise_std", 0.0)),
        seed=int(ssec.get("seed", 0)), eps_den=ssec.get("eps_den"), units=units)
    return problem


def load(path, **overrides):
    return build(load_document(path), **overrides)


def variant(doc, **patches):
    """Deep-copied document with ``section.key`` patches applied.

    >>> d = variant(load_bundled(), **{"sim.T": 5.0})
    >>> d["sim"]["T"]
    5.0
    """
    out = copy.deepcopy(doc)
    for dotted, value in patches.items():
        node = out
        *parents, leaf = dotted.split(".")
        for p in parents:
            node = node.setdefault(p, {})
        node[leaf] = value
    return out
