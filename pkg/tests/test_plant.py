import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dtmpc.plant import (
    BANDED_REGIONS,
    DisturbanceSampler,
    DisturbanceSpec,
    PendulumParams,
    PlantState,
    dynamics_accel,
    integrate_step,
    mechanical_energy,
    preset,
    rk4,
    sample_region_disturbance,
)

PLATE = preset("plate")


def test_equilibrium_has_zero_acceleration():
    assert dynamics_accel(PlantState(0.0, 0.0), 0.0, 0.0, PLATE) == 0.0


def test_gravity_acceleration_at_horizontal():
    # L_cm m g / I with the flat-plate numbers
    expected = -0.0217 * 0.309 * 9.81 / 0.0069
    got = dynamics_accel(PlantState(math.pi / 2, 0.0), 0.0, 0.0, PLATE)
    assert got == pytest.approx(expected, rel=1e-12)
    assert got == pytest.approx(-9.533, abs=5e-4)


def test_drag_acceleration():
    p = PLATE.with_drag(4.6e-4)
    got = dynamics_accel(PlantState(0.0, 10.0), 0.0, 0.0, p)
    assert got == pytest.approx(-4.6e-4 * 100 / 0.0069, rel=1e-12)
    assert got == pytest.approx(-6.667, abs=1e-3)


def test_rejects_non_finite_inputs():
    with pytest.raises(ValueError):
        dynamics_accel(PlantState(0.0, 0.0), float("nan"), 0.0, PLATE)
    with pytest.raises(ValueError):
        PlantState(float("inf"), 0.0)
    with pytest.raises(ValueError):
        PendulumParams(inertia=-1.0, lever_arm=0.2, com_distance=0.1, mass=0.2)
    with pytest.raises(ValueError):
        PendulumParams(inertia=1e-3, lever_arm=0.1, com_distance=0.2, mass=0.2)


def test_preset_lookup():
    assert preset("flat-plate") is PLATE
    with pytest.raises(ValueError):
        preset("wing")


def test_equilibrium_is_fixed_point():
    s = PlantState(0.0, 0.0)
    for dt in (1e-4, 2e-3, 0.05):
        nxt = integrate_step(s, 0.0, 0.0, dt, PLATE)
        assert (nxt.theta, nxt.theta_dot, nxt.t) == (0.0, 0.0, dt)


@pytest.mark.parametrize("name", ["none", "plate", "scoop"])
def test_small_angle_frequency(name):
    p = preset(name).with_drag(0.0)
    wn = math.sqrt(p.gravity_torque / p.inertia)
    dt = 0.002
    s = PlantState(1e-3, 0.0)
    crossings = []
    prev = s
    steps = int(6 * 2 * math.pi / wn / dt) + 10
    for _ in range(steps):
        s = integrate_step(prev, 0.0, 0.0, dt, p)
        if prev.theta > 0 >= s.theta:  # downward zero crossing, interpolated
            frac = prev.theta / (prev.theta - s.theta)
            crossings.append(prev.t + frac * dt)
        prev = s
    assert len(crossings) >= 6
    period = (crossings[5] - crossings[0]) / 5
    assert period == pytest.approx(2 * math.pi / wn, rel=5e-3)


def test_energy_drift():
    p = PLATE.with_drag(0.0)
    s = PlantState(2.0, 3.0)
    e0 = mechanical_energy(s, p)
    for _ in range(500):
        s = integrate_step(s, 0.0, 0.0, 0.002, p)
    assert abs(mechanical_energy(s, p) - e0) / abs(e0) < 1e-6


def test_rk4_local_error_order():
    # halving the step should cut the one-step-vs-two-half-steps gap by ~32
    p = PLATE.with_drag(4.6e-4)
    gaps = []
    for dt in (0.04, 0.02, 0.01):
        one = np.array(rk4(1.0, 2.0, 0.3, 0.5, dt, p))
        half = rk4(1.0, 2.0, 0.3, 0.5, dt / 2, p)
        two = np.array(rk4(*half, 0.3, 0.5, dt / 2, p))
        gaps.append(np.linalg.norm(one - two))
    for a, b in zip(gaps, gaps[1:]):
        assert 20 < a / b < 45


def test_region_disturbance_examples():
    spec = DisturbanceSpec(regions=BANDED_REGIONS, region_bound=20.0)
    rng = np.random.default_rng(0)
    assert all(sample_region_disturbance(0.5 * math.pi, spec, rng) == 0.0 for _ in range(50))
    full = [sample_region_disturbance(2.5 * math.pi, spec, rng) for _ in range(500)]
    half = [sample_region_disturbance(1.75 * math.pi, spec, rng) for _ in range(500)]
    assert max(map(abs, full)) <= 20.0 and max(map(abs, full)) > 15.0
    assert max(map(abs, half)) <= 10.0 and max(map(abs, half)) > 7.5


@given(theta=st.floats(-20.0, 40.0), seed=st.integers(0, 2**31),
       bound=st.floats(0.0, 50.0), base=st.floats(0.0, 10.0))
def test_disturbance_bounded(theta, seed, bound, base):
    spec = DisturbanceSpec(regions=BANDED_REGIONS, region_bound=bound, base_bound=base)
    sampler = DisturbanceSampler(spec, np.random.default_rng(seed), 0.002)
    for _ in range(20):
        assert abs(sampler(theta)) <= spec.region_level(theta) + base + 1e-12


def test_sampler_holds_between_resamples():
    spec = DisturbanceSpec(base_bound=5.0, resample_rate=50.0)
    sampler = DisturbanceSampler(spec, np.random.default_rng(3), 0.002)
    draws = [sampler(0.0) for _ in range(30)]
    assert len(set(draws[:10])) == 1 and len(set(draws[10:20])) == 1
    assert draws[0] != draws[10]


def test_deterministic_trajectory():
    spec = DisturbanceSpec(regions=BANDED_REGIONS, region_bound=20.0, base_bound=5.0)

    def run(seed):
        sampler = DisturbanceSampler(spec, np.random.default_rng(seed), 0.002)
        s = PlantState(6.0, 1.0)
        out = []
        for _ in range(200):
            s = integrate_step(s, 0.1, lambda st_: sampler(st_.theta), 0.002, PLATE)
            out.append((s.theta, s.theta_dot))
        return out

    assert run(7) == run(7)
    assert run(7) != run(8)
