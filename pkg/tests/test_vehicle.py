"""Rigid-body integrator, thruster, tank, and mass-composition checks."""

import numpy as np
import pytest

from jetpacksim.rotations import quat_from_rotvec
from jetpacksim.vehicle import (
    G0,
    MassProperties,
    RigidBodyState,
    TankState,
    Thruster,
    burn_fuel,
    composite_mass,
    default_heli_mass,
    default_jetpack_mass,
    default_thruster_bank,
    pwm_quantize,
    step_dynamics,
    thruster_force,
)

MARS_G = 3.71


def level_state(velocity=(0.0, 0.0, 0.0), altitude=650.0, rates=(0.0, 0.0, 0.0)):
    return RigidBodyState(
        position=np.array([0.0, 0.0, altitude]),
        velocity=np.array(velocity, dtype=float),
        quaternion=np.array([1.0, 0.0, 0.0, 0.0]),
        angular_rate=np.array(rates, dtype=float),
    )


@pytest.fixture
def props():
    return default_jetpack_mass()


def test_freefall_matches_ballistic_closed_form(props):
    # closed form: dv = -g t, dh = -(v0 t + g t^2 / 2)
    state = level_state(velocity=(0.0, 0.0, -41.72))
    dt = 1.0 / 64.0
    gravity_force = np.array([0.0, 0.0, -MARS_G * props.mass])
    for _ in range(192):  # 3 s
        state = step_dynamics(state, props, gravity_force, np.zeros(3), dt)
    assert state.velocity[2] == pytest.approx(-41.72 - MARS_G * 3.0, abs=1e-9)
    expected_drop = 41.72 * 3.0 + 0.5 * MARS_G * 9.0
    assert state.position[2] == pytest.approx(650.0 - expected_drop, abs=1e-8)
    assert expected_drop == pytest.approx(141.855, abs=1e-3)


def test_zero_force_advances_position_only(props):
    state = level_state(velocity=(1.0, -2.0, 0.5))
    new = step_dynamics(state, props, np.zeros(3), np.zeros(3), 0.05)
    assert np.allclose(new.position, state.position + 0.05 * state.velocity)
    assert np.allclose(new.velocity, state.velocity)
    assert np.allclose(new.quaternion, state.quaternion)
    assert np.allclose(new.angular_rate, state.angular_rate)


def test_momentum_conservation_long_run(props):
    state = level_state(velocity=(3.0, 2.0, -1.0), rates=(0.02, -0.01, 0.03))
    p0 = props.mass * state.velocity.copy()
    for _ in range(10_000):
        state = step_dynamics(state, props, np.zeros(3), np.zeros(3), 1.0 / 64.0)
    assert np.linalg.norm(props.mass * state.velocity - p0) / np.linalg.norm(p0) < 1e-9


def test_angular_momentum_conserved_torque_free(props):
    # |I w| in the body frame is invariant under the Euler equations
    state = level_state(rates=(0.02, 0.05, 0.1))
    h0 = np.linalg.norm(props.inertia @ state.angular_rate)
    for _ in range(10_000):
        state = step_dynamics(state, props, np.zeros(3), np.zeros(3), 1.0 / 64.0)
    h = np.linalg.norm(props.inertia @ state.angular_rate)
    assert abs(h - h0) / h0 < 1e-9


def test_quaternion_norm_preserved(props):
    state = level_state(rates=(0.3, -0.2, 0.4))
    state.quaternion = quat_from_rotvec(np.array([0.1, 0.2, -0.05]))
    for _ in range(1000):
        state = step_dynamics(state, props, np.zeros(3), np.zeros(3), 1.0 / 64.0)
        assert abs(np.linalg.norm(state.quaternion) - 1.0) < 1e-9


def test_non_finite_force_rejected(props):
    with pytest.raises(ValueError):
        step_dynamics(level_state(), props, np.array([np.nan, 0, 0]), np.zeros(3), 0.01)


def test_thruster_force_full_duty():
    bank = default_thruster_bank()
    tank = TankState()
    out = thruster_force(bank[0], tank, 1.0)
    assert np.linalg.norm(out.force) == pytest.approx(267.0, abs=1e-9)
    # canted 15 deg off vertical
    assert out.force[2] == pytest.approx(267.0 * np.cos(np.radians(15.0)), abs=1e-9)
    assert out.mass_flow == pytest.approx(267.0 / (220.0 * G0), abs=1e-6)
    assert out.mass_flow == pytest.approx(0.1237, abs=2e-4)
    assert not out.exhausted


def test_thruster_force_zero_duty():
    out = thruster_force(default_thruster_bank()[0], TankState(), 0.0)
    assert np.allclose(out.force, 0.0)
    assert out.mass_flow == 0.0


def test_thruster_blowdown_half_pressure():
    tank = TankState()
    tank.pressure = tank.initial_pressure / 2.0
    out = thruster_force(default_thruster_bank()[0], tank, 1.0)
    assert np.linalg.norm(out.force) == pytest.approx(133.5, abs=1e-9)


def test_thruster_empty_tank_flag():
    tank = TankState(fuel_mass=0.0)
    out = thruster_force(default_thruster_bank()[0], tank, 1.0)
    assert out.exhausted
    assert np.allclose(out.force, 0.0)


def test_thruster_moment_is_cross_product():
    th = default_thruster_bank()[1]
    out = thruster_force(th, TankState(), 0.7)
    assert np.allclose(out.moment, np.cross(th.mount_position, out.force), atol=1e-12)


@pytest.mark.parametrize(
    "fraction,expected_ms",
    [(0.5, 50.0), (0.05, 0.0), (0.15, 20.0), (0.0, 0.0), (1.0, 100.0), (0.199, 20.0), (0.2, 20.0)],
)
def test_pwm_quantize_rules(fraction, expected_ms):
    sched = pwm_quantize(np.array([fraction, 0, 0, 0]), cycle=0.1)
    assert sched.on_time[0] == pytest.approx(expected_ms / 1000.0, abs=1e-12)


def test_pwm_impulse_error_bound():
    # over 1 s (10 cycles) the rounding error is at most 5 min-on-time impulses
    rng = np.random.default_rng(10)
    mot = 0.020
    for _ in range(50):
        fracs = rng.uniform(0.0, 1.0, size=4)
        err = 0.0
        for _ in range(10):
            sched = pwm_quantize(fracs, cycle=0.1, min_on_time=mot)
            err += np.sum(np.abs(sched.on_time - fracs * 0.1))
        assert err <= 5 * mot * 4 + 1e-12


def test_burn_fuel_zero_flow_unchanged(props):
    tank = TankState()
    tank2, props2, clipped = burn_fuel(tank, props, 0.0, 1.0)
    assert tank2.fuel_mass == tank.fuel_mass
    assert tank2.pressure == tank.pressure
    assert props2.mass == props.mass
    assert not clipped


def test_burn_fuel_uniform_inertia_scaling():
    props = default_jetpack_mass(wet_mass=49.52)
    tank = TankState()
    tank2, props2, _ = burn_fuel(tank, props, 1.0, 1.0)  # burn 1 kg
    scale = (49.52 - 1.0) / 49.52
    assert props2.mass == pytest.approx(48.52)
    assert np.allclose(props2.inertia, props.inertia * scale)


def test_burn_fuel_isothermal_blowdown_full_burn():
    props = default_jetpack_mass()
    tank = TankState()
    fuel0 = tank.fuel_mass
    tank2, _, clipped = burn_fuel(tank, props, fuel0 / 10.0, 10.0)
    assert tank2.fuel_mass == pytest.approx(0.0, abs=1e-12)
    # P V_ullage = const with ullage = tank volume when empty
    expected = tank.initial_pressure * tank.initial_ullage_volume / 10.8
    assert tank2.pressure == pytest.approx(expected, rel=1e-9)
    assert not clipped


def test_burn_fuel_exhaustion_clipped():
    props = default_jetpack_mass()
    tank = TankState()
    tank.fuel_mass = 0.01
    tank2, _, clipped = burn_fuel(tank, props, 1.0, 1.0)
    assert clipped
    assert tank2.fuel_mass == 0.0


def test_blowdown_monotonic_under_burn_sequence():
    props = default_jetpack_mass()
    tank = TankState()
    last_p, last_m = tank.pressure, tank.fuel_mass
    rng = np.random.default_rng(11)
    for _ in range(200):
        tank, props, _ = burn_fuel(tank, props, rng.uniform(0, 0.2), 1.0 / 64.0)
        assert tank.pressure <= last_p + 1e-12
        assert tank.fuel_mass <= last_m + 1e-12
        last_p, last_m = tank.pressure, tank.fuel_mass


def test_propellant_accounting_continuous_thrust():
    # total impulse = g0 * Isp * fuel burned (continuous mode)
    bank = default_thruster_bank()
    tank = TankState()
    props = default_jetpack_mass()
    dt = 1.0 / 64.0
    impulse = 0.0
    for _ in range(int(30.0 / dt)):
        total_flow = 0.0
        for th in bank:
            out = thruster_force(th, tank, 0.6)
            impulse += np.linalg.norm(out.force) * dt
            total_flow += out.mass_flow
        tank, props, _ = burn_fuel(tank, props, total_flow, dt)
    burned = TankState().fuel_mass - tank.fuel_mass
    assert impulse == pytest.approx(G0 * 220.0 * burned, rel=1e-3)


def test_composite_mass_zero_heli():
    jp = default_jetpack_mass()
    heli = MassProperties(mass=1e-12, com_offset=np.zeros(3), inertia=np.eye(3) * 1e-15)
    comp = composite_mass(jp, heli, np.array([0.0, 0.0, 0.3]))
    assert comp.mass == pytest.approx(jp.mass)
    assert np.allclose(comp.inertia, jp.inertia, rtol=1e-9, atol=1e-9)


def test_composite_mass_symmetric_bodies():
    a = MassProperties(mass=5.0, com_offset=np.array([0.0, 0.0, 1.0]), inertia=np.eye(3) * 0.1)
    b = MassProperties(mass=5.0, com_offset=np.array([0.0, 0.0, -1.0]), inertia=np.eye(3) * 0.1)
    comp = composite_mass(a, b, np.zeros(3))
    assert np.allclose(comp.com_offset, 0.0)
    assert comp.mass == 10.0


def test_composite_stack_total_mass():
    comp = composite_mass(default_jetpack_mass(), default_heli_mass(), np.array([0.0, 0.0, 0.3]))
    assert comp.mass == pytest.approx(49.52 + 31.2)
    assert comp.mass == pytest.approx(80.72)


def test_composite_parallel_axis_oracle():
    # two point masses on the x axis: I_zz about COM = sum m d^2
    tiny = np.eye(3) * 1e-9
    a = MassProperties(mass=2.0, com_offset=np.array([1.0, 0.0, 0.0]), inertia=tiny)
    b = MassProperties(mass=1.0, com_offset=np.array([-2.0, 0.0, 0.0]), inertia=tiny)
    comp = composite_mass(a, b, np.zeros(3))
    com_x = (2.0 * 1.0 + 1.0 * -2.0) / 3.0
    expected_izz = 2.0 * (1.0 - com_x) ** 2 + 1.0 * (-2.0 - com_x) ** 2
    assert comp.com_offset[0] == pytest.approx(com_x)
    assert comp.inertia[2, 2] == pytest.approx(expected_izz, rel=1e-6)


def test_mass_properties_validation():
    with pytest.raises(ValueError):
        MassProperties(mass=-1.0, com_offset=np.zeros(3), inertia=np.eye(3))
    with pytest.raises(ValueError):
        MassProperties(mass=1.0, com_offset=np.zeros(3), inertia=-np.eye(3))
    with pytest.raises(ValueError):
        # violates triangle inequality on principal moments
        MassProperties(mass=1.0, com_offset=np.zeros(3), inertia=np.diag([1.0, 1.0, 3.0]))


def test_thruster_validation():
    with pytest.raises(ValueError):
        Thruster(mount_position=np.zeros(3), thrust_axis=np.array([0.0, 0.0, 2.0]))
