import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tvblf import config
from tvblf.envelopes import ConstantEnvelope, PpfEnvelope, time_grid
from tvblf.feasibility import (
    FailureReason,
    FeasibilityInputs,
    c1_margin,
    check_feasibility,
    psi1,
    psi2,
    psi3,
)
from tvblf.plant import BoundConstants, HelicopterParams, default_bounds

DEG = math.pi / 180
B = default_bounds(HelicopterParams())
K = np.diag([1.5, 0.2])
ALPHA = 4.5 / 11 - 0.05
PHI_E0 = 11 * DEG
QDOT = ConstantEnvelope(2 * 0.5 * DEG)
QDDOT = ConstantEnvelope(2 * 0.25 * DEG)
GRID = time_grid(60.0, 0.01)


def zero_bounds(**kw):
    base = dict(km1=1e-300, km2=1e-300, kv=0, kg=0, kf1=0, kf2=0, theta_bar=1.0)
    base.update(kw)
    return BoundConstants(**base)


def test_psi1_examples():
    assert psi1(B) == pytest.approx(0.1837, abs=5e-5)
    assert psi1(dataclasses.replace(B, kv=0.0)) == 0.0
    assert psi1(dataclasses.replace(B, theta_bar=1.82)) == pytest.approx(2 * psi1(B))


def test_psi2_examples():
    assert psi2(0.0, zero_bounds(), 0.4, K, 1.0, QDOT) == pytest.approx(1.5)
    # term-by-term with the rig constants
    vel = ALPHA * PHI_E0 + 1.0 * DEG
    oracle = 0.91 * (2 * ALPHA * 0.0908 + 5 * 0.03365 * vel + 2 * 0.8) + 1.5
    assert psi2(3.0, B, ALPHA, K, PHI_E0, QDOT) == pytest.approx(oracle, rel=1e-14)
    assert oracle == pytest.approx(3.02857, abs=1e-5)
    assert psi2(0.0, B, ALPHA, K, PHI_E0, ConstantEnvelope(2 * DEG)) > oracle


def test_psi3_examples():
    assert psi3(0.0, B, 0.0, PHI_E0, ConstantEnvelope(0), ConstantEnvelope(0)) == pytest.approx(
        0.91 * (2.514 + 0.0))
    vel = ALPHA * PHI_E0 + 1.0 * DEG
    acc = ALPHA**2 * PHI_E0 + 0.5 * DEG
    oracle = 0.91 * (0.0908 * acc + 0.03365 * vel**2 + 2.514 + 0.0 + 0.8 * vel)
    got = psi3(1.0, B, ALPHA, PHI_E0, QDOT, QDDOT)
    assert got == pytest.approx(oracle, rel=1e-14)
    assert 0.91 * 2.514 == pytest.approx(2.288, abs=1e-3)
    assert got - 0.91 * 2.514 < 0.1


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1), st.floats(0, 10), st.floats(0, 1), st.floats(0, 2), st.floats(0.01, 5),
       st.floats(0, 3), st.floats(0, 1), st.floats(0, 1))
def test_psi_nonnegative(kv, kg, kf1, kf2, tb, alpha, qd, qdd):
    b = BoundConstants(km1=0.01, km2=0.1, kv=kv, kg=kg, kf1=kf1, kf2=kf2, theta_bar=tb)
    p2 = psi2(GRID[:50], b, alpha, K, 0.2, ConstantEnvelope(qd))
    p3 = psi3(GRID[:50], b, alpha, 0.2, ConstantEnvelope(qd), ConstantEnvelope(qdd))
    assert np.all(p2 >= 0) and np.all(p3 >= tb * kg - 1e-12)


def test_c1_margin_examples(bundled):
    rep = check_feasibility(bundled.feasibility)
    p2 = psi2(GRID, B, rep.alpha, K, PHI_E0, QDOT)
    p3 = psi3(GRID, B, rep.alpha, PHI_E0, QDOT, QDDOT)
    huge = c1_margin(GRID, ConstantEnvelope(1e6), rep.phi_r, B, psi1(B), p2, p3, K)
    assert np.all(huge > 0)
    tiny = c1_margin(GRID, ConstantEnvelope(0.01), rep.phi_r, B, psi1(B), p2, p3, K)
    assert np.all(tiny < 0)
    assert np.all(tiny < 0.01 - 0.91 * 2.514)
    env = PpfEnvelope(6, 5, 0.2)
    clean = c1_margin(GRID, env, rep.phi_r, B, psi1(B), p2, p3, K)
    dist = c1_margin(GRID, env, rep.phi_r, B, psi1(B), p2, p3, K, disturbed=True)
    assert dist == pytest.approx(clean - B.d_bar, abs=1e-12)


def test_c1_margin_formula_point():
    phi_r = ConstantEnvelope(0.01)
    m = c1_margin(2.0, ConstantEnvelope(5.0), phi_r, B, 0.2, 3.0, 2.3, K)
    assert float(m) == pytest.approx(5.0 - ((0.2 * 0.01 + 3.0 - 0.2 + 0.0) * 0.01 + 2.3))


def test_bundled_certificate(bundled):
    rep = check_feasibility(bundled.feasibility)
    assert rep.feasible and rep.failure_reason is None
    assert rep.alpha == pytest.approx(ALPHA, rel=1e-12)
    assert rep.worst_margin == pytest.approx(rep.margins.min())
    assert rep.grid_step == pytest.approx(0.01)
    d = rep.to_dict()
    assert set(d) >= {"feasible", "alpha", "worstMargin", "worstTime", "failureReason", "phiR"}


def test_scaled_input_envelope_is_infeasible(bundled_doc):
    env = bundled_doc["envelopes"]["phi_tau"]
    doc = config.variant(bundled_doc, **{"envelopes.phi_tau": {
        **env, "phi0": env["phi0"] * 1e-3, "phiInf": env["phiInf"] * 1e-3}})
    rep = check_feasibility(config.build(doc).feasibility)
    assert not rep.feasible
    assert rep.failure_reason is FailureReason.C1_VIOLATED
    assert "certificate inequality violated" in rep.message


def test_degenerate_envelope_reported(bundled):
    base = bundled.feasibility
    inp = dataclasses.replace(base, phi_e=ConstantEnvelope(1.0),
                              phi_edot=ConstantEnvelope(0.3 + 1e-6), alpha=0.3, eps2=1e-3)
    rep = check_feasibility(inp)
    assert not rep.feasible
    assert rep.failure_reason is FailureReason.ENVELOPE_DEGENERATE


def test_degenerate_gain_reported(bundled):
    rep = check_feasibility(dataclasses.replace(bundled.feasibility, eps1=0.5))
    assert rep.failure_reason is FailureReason.GAIN_DEGENERATE
    rep = check_feasibility(dataclasses.replace(bundled.feasibility, alpha=0.41))
    assert rep.failure_reason is FailureReason.GAIN_DEGENERATE


def test_disturbed_certificate_shift(bundled):
    clean = check_feasibility(bundled.feasibility)
    dist = check_feasibility(dataclasses.replace(bundled.feasibility, disturbed=True))
    assert dist.margins == pytest.approx(clean.margins - B.d_bar, abs=1e-12)
    assert dist.feasible


@settings(max_examples=30, deadline=None)
@given(st.floats(1.0, 100.0), st.floats(0.0, 0.9))
def test_monotonicity(scale, shrink):
    p = config.build(config.load_bundled())
    inp = p.feasibility
    base = check_feasibility(inp)
    bigger = check_feasibility(dataclasses.replace(
        inp, phi_tau=PpfEnvelope(6 * scale, 5 * scale, 0.2)))
    assert np.all(bigger.margins >= base.margins - 1e-12)
    assert bigger.feasible or not base.feasible
    # larger eps2 shrinks phi_r by a constant; |phi_r'| is unchanged
    eps2 = -base.phi_r.offset
    r_min = float(np.min(base.phi_r.value(inp.grid))) + eps2
    tighter = check_feasibility(dataclasses.replace(inp, eps2=eps2 + shrink * (r_min - eps2)))
    assert np.all(tighter.margins >= base.margins - 1e-12)


def test_certificate_is_deterministic(bundled):
    a = check_feasibility(bundled.feasibility)
    b = check_feasibility(bundled.feasibility)
    assert np.array_equal(a.margins, b.margins)


def test_inputs_record_grid(bundled):
    assert isinstance(bundled.feasibility, FeasibilityInputs)
    assert bundled.feasibility.grid[-1] == pytest.approx(60.0)


def test_fractional_power_error_envelope_is_degenerate(bundled_doc):
    # nu < 1 gives phi_e'(0) = -inf, so the rate branch of phi_r has no lower bound
    p = config.build(config.variant(bundled_doc, **{"envelopes.phi_e.nu": 0.5}))
    assert p.sim is None and "t = 0" in p.error
    rep = check_feasibility(p.feasibility)
    assert rep.failure_reason is FailureReason.ENVELOPE_DEGENERATE
