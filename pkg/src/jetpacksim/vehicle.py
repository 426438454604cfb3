"""Rigid-body dynamics of the jetpack+helicopter stack and the blowdown
propulsion system.

Frames: terrain frame is z-up with altitude AGL on z; body frame carries
the thruster geometry with +z along nominal thrust.  Quaternions map body
to terrain (scalar first).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .rotations import quat_derivative, quat_normalize

G0 = 9.80665  # m/s^2, standard gravity defining Isp

# Table-6-era defaults for the four-thruster blowdown system
MAX_THRUST_N = 267.0
THRUSTER_CANT_DEG = 15.0
MIN_ON_TIME_S = 0.020
ISP_S = 220.0
INITIAL_TANK_PRESSURE_PA = 2.861e6
TANK_VOLUME_L = 10.8
FUEL_VOLUME_L = 6.74
FUEL_DENSITY_KG_PER_L = 1.004
PLATFORM_RADIUS_M = 0.475  # 95-cm platform
JETPACK_WET_MASS_KG = 49.52
HELI_MASS_KG = 31.2


class FuelExhaustedError(RuntimeError):
    pass


@dataclass
class RigidBodyState:
    position: np.ndarray  # m, terrain frame
    velocity: np.ndarray  # m/s, terrain frame
    quaternion: np.ndarray  # body -> terrain, scalar first
    angular_rate: np.ndarray  # rad/s, body frame

    def copy(self) -> "RigidBodyState":
        return RigidBodyState(
            self.position.copy(),
            self.velocity.copy(),
            self.quaternion.copy(),
            self.angular_rate.copy(),
        )


@dataclass
class MassProperties:
    mass: float  # kg
    com_offset: np.ndarray  # m, from the body geometric reference
    inertia: np.ndarray  # kg m^2, 3x3 about the COM

    def __post_init__(self):
        if self.mass <= 0.0:
            raise ValueError("mass must be > 0")
        if not np.allclose(self.inertia, self.inertia.T, atol=1e-9):
            raise ValueError("inertia must be symmetric")
        eig = np.linalg.eigvalsh(self.inertia)
        if np.any(eig <= 0.0):
            raise ValueError("inertia must be positive definite")
        a, b, c = np.sort(eig)
        if a + b < c - 1e-9:
            raise ValueError("principal moments violate the triangle inequality")


@dataclass(frozen=True)
class Thruster:
    mount_position: np.ndarray  # m, body frame
    thrust_axis: np.ndarray  # unit vector, body frame
    max_thrust: float = MAX_THRUST_N  # N at initial tank pressure
    min_on_time: float = MIN_ON_TIME_S  # s
    isp: float = ISP_S  # s

    def __post_init__(self):
        if abs(np.linalg.norm(self.thrust_axis) - 1.0) > 1e-9:
            raise ValueError("thrust_axis must be a unit vector")
        if self.max_thrust <= 0.0:
            raise ValueError("max_thrust must be > 0")


def default_thruster_bank(
    cant_deg: float = THRUSTER_CANT_DEG,
    radius: float = PLATFORM_RADIUS_M,
    max_thrust: float = MAX_THRUST_N,
    isp: float = ISP_S,
    min_on_time: float = MIN_ON_TIME_S,
) -> list[Thruster]:
    """Four thrusters equally spaced on the platform, canted from body +z.

    The cant alternates tangential sense around the ring so that
    differential throttling produces yaw torque while full throttle
    produces none.
    """
    cant = np.radians(cant_deg)
    bank = []
    for k in range(4):
        az = np.radians(45.0 + 90.0 * k)
        radial = np.array([np.cos(az), np.sin(az), 0.0])
        tangent = np.array([-np.sin(az), np.cos(az), 0.0])
        sense = 1.0 if k % 2 == 0 else -1.0
        axis = np.cos(cant) * np.array([0.0, 0.0, 1.0]) + np.sin(cant) * sense * tangent
        bank.append(
            Thruster(
                mount_position=radius * radial,
                thrust_axis=axis / np.linalg.norm(axis),
                max_thrust=max_thrust,
                min_on_time=min_on_time,
                isp=isp,
            )
        )
    return bank


@dataclass
class TankState:
    """Single lumped blowdown tank (isothermal ullage expansion)."""

    pressure: float = INITIAL_TANK_PRESSURE_PA  # Pa
    fuel_mass: float = FUEL_VOLUME_L * FUEL_DENSITY_KG_PER_L  # kg
    fuel_density: float = FUEL_DENSITY_KG_PER_L  # kg/L
    initial_pressure: float = INITIAL_TANK_PRESSURE_PA  # Pa
    initial_ullage_volume: float = TANK_VOLUME_L - FUEL_VOLUME_L  # L
    initial_fuel_mass: float = FUEL_VOLUME_L * FUEL_DENSITY_KG_PER_L  # kg

    @property
    def pressure_ratio(self) -> float:
        return self.pressure / self.initial_pressure

    @property
    def empty(self) -> bool:
        return self.fuel_mass <= 0.0


@dataclass(frozen=True)
class ThrusterOutput:
    force: np.ndarray  # N, body frame
    moment: np.ndarray  # N m, body frame about the geometric reference
    mass_flow: float  # kg/s
    exhausted: bool


def thruster_force(thruster: Thruster, tank: TankState, duty: float) -> ThrusterOutput:
    """Instantaneous thrust at a duty fraction under the blowdown law."""
    if not 0.0 <= duty <= 1.0:
        raise ValueError("duty must be within [0, 1]")
    if tank.empty:
        return ThrusterOutput(np.zeros(3), np.zeros(3), 0.0, True)
    thrust = duty * thruster.max_thrust * tank.pressure_ratio
    force = thrust * thruster.thrust_axis
    moment = np.cross(thruster.mount_position, force)
    return ThrusterOutput(force, moment, thrust / (thruster.isp * G0), False)


@dataclass
class PwmSchedule:
    """Per-thruster ON durations within one duty cycle, all starting at 0."""

    cycle: float  # s
    on_time: np.ndarray  # s per thruster

    def is_on(self, thruster_index: int, t_in_cycle: float) -> bool:
        return t_in_cycle < self.on_time[thruster_index]


def pwm_quantize(continuous_cmds: np.ndarray, cycle: float, min_on_time: float = MIN_ON_TIME_S) -> PwmSchedule:
    """Map duty fractions to ON intervals, rounding sub-minimum pulses to
    the nearest impulse (0 or the minimum ON time)."""
    cmds = np.asarray(continuous_cmds, dtype=float)
    if np.any(cmds < 0.0) or np.any(cmds > 1.0):
        raise ValueError("duty fractions must be within [0, 1]")
    on = cmds * cycle
    short = on < min_on_time
    on = np.where(short & (on < 0.5 * min_on_time), 0.0, on)
    on = np.where(short & (on >= 0.5 * min_on_time), min_on_time, on)
    return PwmSchedule(cycle=cycle, on_time=np.minimum(on, cycle))


def burn_fuel(
    tank: TankState, mass_props: MassProperties, mass_flow: float, dt: float
) -> tuple[TankState, MassProperties, bool]:
    """Deplete fuel and scale the jetpack mass/inertia uniformly.

    Pressure follows isothermal blowdown: P * V_ullage = const, with the
    ullage growing by the volume of burned fuel.  Returns (tank', props',
    clipped) where clipped marks fuel exhaustion mid-step.
    """
    if mass_flow < 0.0:
        raise ValueError("mass_flow must be >= 0")
    burn = mass_flow * dt
    clipped = burn > tank.fuel_mass
    burn = min(burn, tank.fuel_mass)
    fuel = tank.fuel_mass - burn
    ullage = tank.initial_ullage_volume + (tank.initial_fuel_mass - fuel) / tank.fuel_density
    pressure = tank.initial_pressure * tank.initial_ullage_volume / ullage
    scale = (mass_props.mass - burn) / mass_props.mass
    props = MassProperties(
        mass=mass_props.mass - burn,
        com_offset=mass_props.com_offset.copy(),
        inertia=mass_props.inertia * scale,
    )
    return replace(tank, pressure=pressure, fuel_mass=fuel), props, clipped


def composite_mass(
    jetpack: MassProperties, heli: MassProperties, heli_mount_offset: np.ndarray
) -> MassProperties:
    """Combine the two bodies about their composite COM (parallel axis).

    heli_mount_offset locates the helicopter's geometric reference in the
    jetpack (composite) reference frame.
    """
    m_j, m_h = jetpack.mass, heli.mass
    c_j = jetpack.com_offset
    c_h = heli_mount_offset + heli.com_offset
    m = m_j + m_h
    com = (m_j * c_j + m_h * c_h) / m

    def shifted(inertia: np.ndarray, mass: float, d: np.ndarray) -> np.ndarray:
        return inertia + mass * (float(d @ d) * np.eye(3) - np.outer(d, d))

    inertia = shifted(jetpack.inertia, m_j, c_j - com) + shifted(heli.inertia, m_h, c_h - com)
    return MassProperties(mass=m, com_offset=com, inertia=inertia)


def _deriv(
    state: RigidBodyState,
    accel: np.ndarray,
    moment_body: np.ndarray,
    inertia: np.ndarray,
    inv_inertia: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    w = state.angular_rate
    wdot = inv_inertia @ (moment_body - np.cross(w, inertia @ w))
    return state.velocity, accel, quat_derivative(state.quaternion, w), wdot


def step_dynamics(
    state: RigidBodyState,
    mass_props: MassProperties,
    total_force: np.ndarray,
    total_moment: np.ndarray,
    dt: float,
) -> RigidBodyState:
    """Fixed-step RK4 update with zero-order-hold force and moment.

    total_force is in the terrain frame; total_moment is in the body frame
    about the COM.  The quaternion is renormalized after the step.
    """
    if not 0.0 < dt <= 0.1:
        raise ValueError("dt must be in (0, 0.1]")
    if not (np.all(np.isfinite(total_force)) and np.all(np.isfinite(total_moment))):
        raise ValueError("non-finite force or moment")
    accel = total_force / mass_props.mass
    inertia = mass_props.inertia
    inv_inertia = np.linalg.inv(inertia)

    def f(s: RigidBodyState):
        return _deriv(s, accel, total_moment, inertia, inv_inertia)

    def advance(s: RigidBodyState, k, h: float) -> RigidBodyState:
        return RigidBodyState(
            s.position + h * k[0],
            s.velocity + h * k[1],
            s.quaternion + h * k[2],
            s.angular_rate + h * k[3],
        )

    k1 = f(state)
    k2 = f(advance(state, k1, 0.5 * dt))
    k3 = f(advance(state, k2, 0.5 * dt))
    k4 = f(advance(state, k3, dt))
    new = RigidBodyState(
        state.position + dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        state.velocity + dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        state.quaternion + dt / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]),
        state.angular_rate + dt / 6.0 * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3]),
    )
    new.quaternion = quat_normalize(new.quaternion)
    return new


def default_jetpack_mass(wet_mass: float = JETPACK_WET_MASS_KG, radius: float = PLATFORM_RADIUS_M) -> MassProperties:
    """Uniform-disk approximation of the platform (assumption, not a given)."""
    izz = 0.5 * wet_mass * radius**2
    ixx = 0.25 * wet_mass * radius**2 + wet_mass * 0.05**2  # slight thickness
    return MassProperties(
        mass=wet_mass,
        com_offset=np.zeros(3),
        inertia=np.diag([ixx, ixx, izz]),
    )


def default_heli_mass(
    mass: float = HELI_MASS_KG,
    arm_radius: float = 1.345,
    arm_unit_mass: float = 1.0,
    fuselage_half_extent: float = 0.35,
) -> MassProperties:
    """Fuselage box plus six arm-mounted rotor units (assumed layout)."""
    m_arms = 6.0 * arm_unit_mass
    m_fus = mass - m_arms
    s = fuselage_half_extent
    i_fus = m_fus * (2.0 * s**2) / 12.0
    izz = i_fus * 2.0 + m_arms * arm_radius**2
    ixx = i_fus + 0.5 * m_arms * arm_radius**2
    return MassProperties(
        mass=mass,
        com_offset=np.zeros(3),
        inertia=np.diag([ixx, ixx, izz]),
    )
