import math

import numpy as np
import pytest

from gflcoi.sg import (GovernorParams, SgParams, aggregate_coi, governor_derivative,
                       governor_power, swing_derivatives)


def test_swing_equilibrium_has_zero_derivatives():
    d_angle, d_speed = swing_derivatives(0.3, 1.0, 0.7, 0.7, 3.0, 2.0)
    assert d_angle == 0.0
    assert d_speed == 0.0


def test_swing_load_step_rate():
    # COI inertia of the study system, -0.1 pu step
    _, d_speed = swing_derivatives(0.0, 1.0, 0.0, 0.1, 1.79)
    assert d_speed == pytest.approx(-0.1 / (2 * 1.79), rel=1e-14)
    assert d_speed == pytest.approx(-0.02793, abs=5e-6)


def test_swing_angle_rate_and_rated_power_scaling():
    omega0 = 2 * math.pi * 50
    d_angle, d_speed = swing_derivatives(0.0, 1.01, 1.0, 0.0, 2.0, 4.0, omega0=omega0)
    assert d_angle == pytest.approx(0.01 * omega0)
    assert d_speed == pytest.approx(1.0 / 16.0)


def test_swing_is_elementwise():
    d_angle, d_speed = swing_derivatives(np.zeros(3), np.array([1.0, 1.0, 0.99]),
                                         np.ones(3), np.array([1.0, 0.5, 1.0]),
                                         np.array([2.0, 2.0, 4.0]))
    np.testing.assert_allclose(d_speed, [0.0, 0.125, 0.0])
    assert d_angle[2] < 0


def test_constant_imbalance_gives_linear_speed_ramp():
    h, dp, dt = 2.5, 0.05, 1e-3
    w = 1.0
    for _ in range(1000):
        w += dt * swing_derivatives(0.0, w, dp, 0.0, h)[1]
    assert w - 1.0 == pytest.approx(dp / (2 * h) * 1.0, rel=1e-12)


def test_governor_zero_deviation():
    gov = GovernorParams(20.0, 5.0, True)
    assert governor_derivative(0.0, 0.0, gov) == 0.0
    assert governor_power(0.0, gov) == 0.0


def test_governor_step_response_reaches_63_percent_at_t():
    gov = GovernorParams(20.0, 5.0, True)
    assert governor_power(-0.01, gov) == pytest.approx(0.2)
    assert governor_power(-0.01, gov, t=5.0) == pytest.approx(0.2 * (1 - math.exp(-1)))
    assert governor_power(-0.01, gov, t=5.0) / 0.2 == pytest.approx(0.632, abs=1e-3)
    # integrating the lag reproduces the closed form
    pg, dt = 0.0, 1e-3
    for _ in range(5000):
        k1 = governor_derivative(pg, -0.01, gov)
        k2 = governor_derivative(pg + 0.5 * dt * k1, -0.01, gov)
        k3 = governor_derivative(pg + 0.5 * dt * k2, -0.01, gov)
        k4 = governor_derivative(pg + dt * k3, -0.01, gov)
        pg += dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    assert pg == pytest.approx(governor_power(-0.01, gov, t=5.0), rel=1e-10)


@pytest.mark.parametrize("dw", [-0.3, 0.0, 0.02])
def test_disabled_governor_is_silent(dw):
    gov = GovernorParams(20.0, 5.0, False)
    assert governor_power(dw, gov) == 0.0
    assert governor_power(dw, gov, t=3.0) == 0.0
    assert governor_derivative(0.0, dw, gov) == 0.0


def test_governor_rejects_nonpositive_time_constant():
    with pytest.raises(ValueError):
        GovernorParams(10.0, 0.0, True)


@pytest.mark.parametrize("kw", [dict(inertia_h=0.0), dict(rated_power_s=-1.0),
                                dict(emf_magnitude=0.0)])
def test_sg_params_validate(kw):
    base = dict(inertia_h=3.0, rated_power_s=1.0, emf_magnitude=1.0)
    base.update(kw)
    with pytest.raises(ValueError):
        SgParams(**base)


def test_coi_of_one_machine_is_itself():
    sg = SgParams(4.0, 2.0, 1.05, GovernorParams(10.0, 3.0, True), initial_angle=0.2)
    cp, w = aggregate_coi([sg], speeds=[1.003])
    assert w == 1.003
    assert cp.coi_inertia_h == 4.0
    assert cp.coi_rated_power_s == 2.0
    assert cp.coi_emf.magnitude == pytest.approx(1.05)
    assert cp.coi_emf.angle == pytest.approx(0.2)
    assert cp.governor == GovernorParams(10.0, 3.0, True)


def test_coi_speed_hand_example():
    sgs = [SgParams(2.0, 1.0, 1.0), SgParams(4.0, 1.0, 1.0)]
    cp, w = aggregate_coi(sgs, speeds=[1.0, 0.99])
    assert w == pytest.approx((2 * 1.0 + 4 * 0.99) / 6, rel=1e-15)
    assert w == pytest.approx(0.99333, abs=5e-6)
    assert cp.coi_inertia_h == pytest.approx(3.0)


def test_coi_inertia_of_study_system(wecc_system):
    cp, _ = aggregate_coi(wecc_system.sgs)
    assert cp.coi_inertia_h == pytest.approx(1.79, abs=0.005)


def test_coi_is_invariant_to_member_order(rng):
    sgs = [SgParams(rng.uniform(1, 8), rng.uniform(0.5, 3), rng.uniform(0.95, 1.1),
                    GovernorParams(rng.uniform(5, 30), rng.uniform(1, 5), True))
           for _ in range(7)]
    w = rng.uniform(0.98, 1.02, 7)
    d = rng.uniform(-0.5, 0.5, 7)
    ref = aggregate_coi(sgs, w, d)
    for _ in range(5):
        perm = rng.permutation(7)
        got = aggregate_coi([sgs[k] for k in perm], w[perm], d[perm])
        assert got == ref


def test_coi_governor_sums_gains():
    sgs = [SgParams(2.0, 1.0, 1.0, GovernorParams(10.0, 2.0, True)),
           SgParams(3.0, 1.0, 1.0, GovernorParams(30.0, 4.0, True)),
           SgParams(3.0, 1.0, 1.0)]
    cp, _ = aggregate_coi(sgs)
    assert cp.governor.droop_gain == pytest.approx(40.0)
    assert cp.governor.time_constant_s == pytest.approx((10 * 2 + 30 * 4) / 40)


def test_coi_emf_modes():
    sgs = [SgParams(2.0, 1.0, 1.0, initial_angle=0.0), SgParams(2.0, 1.0, 1.2, initial_angle=0.4)]
    polar, _ = aggregate_coi(sgs, emf_mode="polar")
    assert polar.coi_emf.magnitude == pytest.approx(1.1)
    assert polar.coi_emf.angle == pytest.approx(0.2)
    cplx, _ = aggregate_coi(sgs, emf_mode="complex")
    assert cplx.coi_emf.to_complex() == pytest.approx((1.0 + 1.2 * np.exp(0.4j)) / 2)
    with pytest.raises(ValueError):
        aggregate_coi(sgs, emf_mode="other")


def test_coi_requires_members():
    with pytest.raises(ValueError):
        aggregate_coi([])
