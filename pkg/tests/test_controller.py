import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tvblf.controller import (
    ControllerGains,
    adaptation_denominator,
    adaptation_rhs,
    auxiliary_control,
    blf_value,
    clip_to_ball,
    filtered_error,
    integrate_projected,
    lyapunov_value,
    projection,
    saturate,
    saturation_error,
)
from tvblf.exceptions import BarrierViolation, ConfigError

K_BUNDLED = np.diag([1.5, 0.2])
vec2 = arrays(np.float64, 2, elements=st.floats(-1e3, 1e3))


def test_filtered_error_examples():
    assert filtered_error((0, 0), (0, 0), 0.3) == pytest.approx([0, 0])
    assert filtered_error((1, 0), (0, 1), 0.5) == pytest.approx([0.5, 1.0])
    e, ed = np.array([0.3, -1.2]), np.array([2.0, 0.7])
    assert filtered_error(e, ed, 0.7) - 0.7 * e == pytest.approx(ed, abs=1e-15)


def test_auxiliary_control_examples(rng):
    Y = rng.normal(size=(2, 6))
    th = rng.normal(size=6)
    assert auxiliary_control(Y, th, K_BUNDLED, (0, 0), 0.5, -0.3, 0.09) == pytest.approx(-Y @ th)
    r = np.array([0.2, -0.1])
    assert auxiliary_control(np.zeros((2, 6)), th, K_BUNDLED, r, 0.5, 0.0, 0.09) == pytest.approx(-K_BUNDLED @ r)
    tau = auxiliary_control(np.zeros((2, 6)), th, K_BUNDLED, (1, 1), 1.0, -0.1, 0.0908)
    assert tau == pytest.approx([-1.50908, -0.20908], abs=1e-15)


def test_saturate_examples():
    assert saturate((3, 4), 5) == pytest.approx([3, 4])
    assert saturate((6, 8), 5) == pytest.approx([3, 4])
    assert saturate((0, 0), 0.01) == pytest.approx([0, 0])


def test_saturation_error_examples():
    assert saturation_error(saturate((1, 1), 5), (1, 1)) == pytest.approx([0, 0])
    d = saturation_error(saturate((6, 8), 5), (6, 8))
    assert d == pytest.approx([-3, -4])
    assert np.linalg.norm(d) == pytest.approx(5.0)


@settings(max_examples=500, deadline=None)
@given(vec2, st.floats(1e-6, 1e3))
def test_saturation_properties(tau_a, phi):
    tau = saturate(tau_a, phi)
    n_a = float(np.linalg.norm(tau_a))
    n = float(np.linalg.norm(tau))
    assert n <= phi * (1 + 1e-15)
    if n_a >= phi:
        assert n == pytest.approx(phi, rel=1e-14)
    else:
        assert np.array_equal(tau, tau_a)
    # direction preserved: tau is a non-negative multiple of tau_a
    assert abs(tau[0] * tau_a[1] - tau[1] * tau_a[0]) <= 1e-12 * max(1.0, n_a) ** 2
    assert tau @ tau_a >= 0
    dtau = saturation_error(tau, tau_a)
    assert np.linalg.norm(dtau) == pytest.approx(max(0.0, n_a - phi), abs=1e-12 * max(1.0, n_a))


# projection


def test_projection_examples():
    tb, ep = 3.0, 0.15
    inner = np.array([1.0, 0, 0, 0, 0, 0])
    y = np.arange(6.0)
    assert np.array_equal(projection(inner, y, tb, ep), y)
    on_boundary = np.array([0, tb, 0, 0, 0, 0])
    assert projection(on_boundary, on_boundary, tb, ep) == pytest.approx(np.zeros(6), abs=1e-15)
    orth = np.array([1.0, 0, 0, 0, 0, 0])
    assert np.array_equal(projection(on_boundary, orth, tb, ep), orth)
    inward = -on_boundary
    assert np.array_equal(projection(on_boundary, inward, tb, ep), inward)


def test_projection_removes_radial_outflow_at_boundary(rng):
    tb = 2.0
    for _ in range(100):
        th = rng.normal(size=6)
        th *= tb / np.linalg.norm(th)
        y = rng.normal(size=6) * 10
        out = projection(th, y, tb, 0.1)
        assert th @ out <= 1e-12


def test_projection_convexity_inequality(rng):
    tb, ep = 3.0, 0.15
    worst = math.inf
    for _ in range(1000):
        th_hat = rng.normal(size=6)
        th_hat *= rng.uniform(0, tb) / np.linalg.norm(th_hat)
        th = rng.normal(size=6)
        th *= rng.uniform(0, tb - ep) / np.linalg.norm(th)
        y = rng.normal(size=6) * rng.uniform(0.1, 100)
        worst = min(worst, (th - th_hat) @ (projection(th_hat, y, tb, ep) - y))
    assert worst >= -1e-12


def random_rate(rng, scale):
    amp = rng.uniform(0.02, 1.0, 6) * scale
    freq = rng.uniform(0.1, 20, 6)
    phase = rng.uniform(0, 2 * np.pi, 6)
    bias = rng.normal(size=6) * 0.4 * scale
    return lambda t: bias + amp * np.sin(freq * t + phase)


def random_start(rng, tb):
    th0 = rng.normal(size=6)
    return th0 * rng.uniform(0, tb) / np.linalg.norm(th0)


def test_continuous_projection_bounded_without_clip(rng):
    # moderate rates: plain RK4 on the projected flow already stays inside
    tb, ep = 3.0, 0.15
    for _ in range(50):
        traj, clips = integrate_projected(random_start(rng, tb), random_rate(rng, 10.0), tb, ep,
                                          1e-3, 1000)
        assert clips == 0
        assert np.linalg.norm(traj, axis=1).max() <= tb


def test_projected_integration_bounded_at_closed_loop_rates(rng):
    # adaptation rates in the bundled run reach several hundred per second
    tb, ep = 3.0, 0.15
    for _ in range(20):
        traj, _ = integrate_projected(random_start(rng, tb), random_rate(rng, 500.0), tb, ep,
                                      1e-3, 500)
        assert np.linalg.norm(traj, axis=1).max() <= tb + 1e-12


def test_clip_to_ball():
    th = np.array([3.0, 4.0, 0, 0, 0, 0])
    out, clipped = clip_to_ball(th, 2.5)
    assert clipped and np.linalg.norm(out) == pytest.approx(2.5)
    assert out[1] / out[0] == pytest.approx(4 / 3)
    same, clipped = clip_to_ball(th, 5.0)
    assert not clipped and np.array_equal(same, th)


# adaptation


def test_adaptation_denominator_clamp_and_barrier():
    den, clamped = adaptation_denominator(np.array([0.3, 0.4]), 1.0, 0.09, 1e-9)
    assert den == pytest.approx(0.09 * 0.75) and not clamped
    den, clamped = adaptation_denominator(np.array([0.0, 1 - 1e-12]), 1.0, 0.09, 1e-9)
    assert den == 1e-9 and clamped
    with pytest.raises(BarrierViolation):
        adaptation_denominator(np.array([0.6, 0.8]), 1.0, 0.09, 1e-9)


def test_adaptation_rhs_examples(rng):
    Y = rng.normal(size=(2, 6))
    G = 2 * np.eye(6)
    th = rng.normal(size=6) * 0.1
    z = adaptation_rhs(Y, np.zeros(2), G, 0.5, 0.09, th, 3.0, 0.15, 1e-12)
    assert z == pytest.approx(np.zeros(6))
    r = np.array([0.1, -0.2])
    raw = G @ Y.T @ r / (0.09 * (0.25 - r @ r))
    assert adaptation_rhs(Y, r, G, 0.5, 0.09, th, 3.0, 0.15, 1e-12) == pytest.approx(raw, rel=1e-14)


def test_adaptation_rhs_boundary_outward():
    tb = 3.0
    th = np.zeros(6)
    th[2] = tb
    Y = np.zeros((2, 6))
    Y[0, 2] = 1.0
    out = adaptation_rhs(Y, np.array([0.1, 0.0]), np.eye(6), 1.0, 0.09, th, tb, 0.15, 1e-12)
    assert out[2] == pytest.approx(0.0, abs=1e-15)


# barrier and Lyapunov values


def test_blf_value_examples():
    M = np.diag([0.086, 0.09])
    assert blf_value(np.zeros(2), M, 0.2, 0.0908) == 0.0
    P = 0.0908 * 0.2**2
    r = np.array([math.sqrt(0.5 * P / 0.086), 0.0])
    assert blf_value(r, M, 0.2, 0.0908) == pytest.approx(0.5 * math.log(2), rel=1e-12)
    with pytest.raises(BarrierViolation):
        blf_value(np.array([1.0, 0.0]), M, 0.2, 0.0908)


def test_blf_grows_towards_barrier():
    M = np.eye(2) * 0.09
    P = 0.09 * 1.0
    vals = [blf_value(np.array([math.sqrt(s * P / 0.09), 0]), M, 1.0, 0.09)
            for s in (0.1, 0.5, 0.9, 0.99, 0.9999, 1 - 1e-12)]
    assert np.all(np.diff(vals) > 0)
    assert vals[-1] > 13


def test_lyapunov_value_examples(rng):
    M = np.diag([0.086, 0.09])
    G = 2 * np.eye(6)
    assert lyapunov_value(np.zeros(2), M, 0.2, 0.09, np.zeros(6), G) == 0.0
    e1 = np.eye(6)[0]
    assert lyapunov_value(np.zeros(2), M, 0.2, 0.09, e1, G) == pytest.approx(0.25)
    r = np.array([0.01, 0.02])
    tt = rng.normal(size=6)
    vr = blf_value(r, M, 0.2, 0.09)
    v1 = lyapunov_value(r, M, 0.2, 0.09, tt, G) - vr
    v2 = lyapunov_value(r, M, 0.2, 0.09, 2 * tt, G) - vr
    assert v2 == pytest.approx(4 * v1)


# gains


def test_gains_validation():
    g = ControllerGains(alpha=0.3, K=K_BUNDLED, Gamma=2 * np.eye(6), theta_bar=3.0)
    assert g.eps_proj == pytest.approx(0.15)
    with pytest.raises(ConfigError):
        ControllerGains(alpha=0.3, K=np.diag([1.0, -1.0]), Gamma=np.eye(6), theta_bar=3.0)
    with pytest.raises(ConfigError):
        ControllerGains(alpha=0.3, K=np.array([[1.0, 2.0], [0.0, 1.0]]), Gamma=np.eye(6), theta_bar=3.0)
    with pytest.raises(ConfigError):
        ControllerGains(alpha=0.3, K=K_BUNDLED, Gamma=np.eye(6), theta_bar=3.0, eps_proj=3.0)
    with pytest.raises(ConfigError):
        ControllerGains(alpha=-0.3, K=K_BUNDLED, Gamma=np.eye(6), theta_bar=3.0)
