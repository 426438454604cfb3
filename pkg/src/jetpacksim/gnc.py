"""Polynomial guidance, nested-loop control, thruster allocation, and the
navigation error model for the jetpack powered phase.

Loop shaping uses the double-integrator closed form: a PD controller
C(s) = kp + kd*s on P(s) = 1/(K s^2) crosses unity gain at wc with phase
margin pm when

    kp = K * wc^2 * cos(phi),   kd = K * wc * sin(phi)

where phi = pm + wc*Ts/2 compensates the zero-order-hold delay of a loop
sampled every Ts seconds.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq

from .rotations import (
    attitude_error_vector,
    quat_from_euler,
    quat_from_rotvec,
    quat_multiply,
    quat_rotate,
)
from .vehicle import MassProperties, RigidBodyState, Thruster


class GainDesignError(ValueError):
    """Requested margins are unachievable with this loop structure."""


class NoCrossoverError(RuntimeError):
    pass


class GuidanceTarget(NamedTuple):
    position: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray


# --- polynomial guidance --------------------------------------------------


@dataclass
class GuidanceProfile:
    """Per-axis quintic position polynomials (ascending coefficients)."""

    coeffs: np.ndarray  # (3, 6)
    duration: float  # s
    divert_distance: float  # m
    start: tuple[np.ndarray, np.ndarray, np.ndarray]  # pos, vel, acc
    end: tuple[np.ndarray, np.ndarray, np.ndarray]
    feasible: bool = True
    _d1: np.ndarray = field(init=False, repr=False)
    _d2: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        n = np.arange(6)
        self._d1 = self.coeffs[:, 1:] * n[1:]
        self._d2 = self._d1[:, 1:] * n[1:5]


def _quintic(p0: float, v0: float, a0: float, pf: float, vf: float, af: float, T: float) -> np.ndarray:
    """Quintic coefficients matching position/velocity/acceleration at both ends."""
    c = np.zeros(6)
    c[0], c[1], c[2] = p0, v0, 0.5 * a0
    b = np.array(
        [
            pf - (p0 + v0 * T + 0.5 * a0 * T * T),
            vf - (v0 + a0 * T),
            af - a0,
        ]
    )
    m = np.array(
        [
            [T**3, T**4, T**5],
            [3 * T**2, 4 * T**3, 5 * T**4],
            [6 * T, 12 * T**2, 20 * T**3],
        ]
    )
    c[3:] = np.linalg.solve(m, b)
    return c


def generate_guidance(
    ic: RigidBodyState,
    target_alt: float,
    divert: float,
    duration: float,
    ic_accel: np.ndarray | None = None,
    divert_azimuth_rad: float = 0.0,
    accel_limit: float | None = None,
    gravity: float = 3.71,
) -> GuidanceProfile:
    """Quintic reference from the current state to a hover point.

    The divert axis (terrain x rotated by divert_azimuth) runs 0 -> divert;
    the other lateral axis arrests its initial velocity at the natural
    stopping point v0*T/2; vertical runs to target_alt.  End velocity and
    acceleration are zero on all axes.  If accel_limit (m/s^2 of thrust
    authority) is given the profile is checked against it and flagged.
    """
    if duration <= 0.0:
        raise ValueError("duration must be > 0")
    if not all(np.all(np.isfinite(x)) for x in (ic.position, ic.velocity)):
        raise ValueError("non-finite initial condition")
    a0 = np.array([0.0, 0.0, -gravity]) if ic_accel is None else np.asarray(ic_accel, float)

    ca, sa = np.cos(divert_azimuth_rad), np.sin(divert_azimuth_rad)
    div_dir = np.array([ca, sa, 0.0])
    crs_dir = np.array([-sa, ca, 0.0])

    p0 = ic.position
    v0 = ic.velocity
    p0_div, v0_div, a0_div = float(p0 @ div_dir), float(v0 @ div_dir), float(a0 @ div_dir)
    p0_crs, v0_crs, a0_crs = float(p0 @ crs_dir), float(v0 @ crs_dir), float(a0 @ crs_dir)

    c_div = _quintic(p0_div, v0_div, a0_div, p0_div + divert, 0.0, 0.0, duration)
    c_crs = _quintic(p0_crs, v0_crs, a0_crs, p0_crs + 0.5 * v0_crs * duration, 0.0, 0.0, duration)
    c_z = _quintic(p0[2], v0[2], a0[2], target_alt, 0.0, 0.0, duration)

    # rotate the planar axes back to terrain x/y
    cx = ca * c_div - sa * c_crs
    cy = sa * c_div + ca * c_crs
    coeffs = np.vstack([cx, cy, c_z])

    profile = GuidanceProfile(
        coeffs=coeffs,
        duration=duration,
        divert_distance=divert,
        start=(p0.copy(), v0.copy(), a0.copy()),
        end=(
            np.array([p0[0] + ca * divert - sa * 0.5 * v0_crs * duration,
                      p0[1] + sa * divert + ca * 0.5 * v0_crs * duration,
                      target_alt]),
            np.zeros(3),
            np.zeros(3),
        ),
    )
    if accel_limit is not None:
        ts = np.linspace(0.0, duration, 201)
        acc = np.vstack([np.polynomial.polynomial.polyval(ts, profile._d2[i]) for i in range(3)]).T
        acc[:, 2] += gravity  # thrust must also carry weight
        if np.max(np.linalg.norm(acc, axis=1)) > accel_limit:
            profile.feasible = False
    return profile


def eval_guidance(profile: GuidanceProfile, t: float) -> GuidanceTarget:
    """Reference position/velocity/acceleration; holds the final state past
    the end and the initial state before zero."""
    tc = min(max(t, 0.0), profile.duration)
    pv = np.polynomial.polynomial
    pos = np.array([pv.polyval(tc, profile.coeffs[i]) for i in range(3)])
    vel = np.array([pv.polyval(tc, profile._d1[i]) for i in range(3)])
    acc = np.array([pv.polyval(tc, profile._d2[i]) for i in range(3)])
    return GuidanceTarget(pos, vel, acc)


# --- loop shaping ---------------------------------------------------------


@dataclass(frozen=True)
class LoopMargins:
    crossover_hz: float
    phase_margin_deg: float
    gain_margin_db: float  # np.inf when the phase never reaches -180 deg

    def __post_init__(self):
        if self.crossover_hz <= 0.0:
            raise ValueError("crossover must be > 0")


def design_pd(
    plant_gain: float,
    crossover_hz: float,
    phase_margin_deg: float,
    sample_rate_hz: float | None = None,
) -> tuple[float, float]:
    """PD gains for P(s)=1/(plant_gain s^2) hitting (crossover, PM).

    The half-sample delay of a sample_rate_hz zero-order hold is
    compensated by extra lead.
    """
    if not 0.0 < phase_margin_deg < 90.0:
        raise GainDesignError("phase margin must be within (0, 90) deg")
    wc = 2.0 * np.pi * crossover_hz
    phi = np.radians(phase_margin_deg)
    if sample_rate_hz is not None:
        phi += 0.5 * wc / sample_rate_hz
    if phi >= 0.5 * np.pi:
        raise GainDesignError(
            f"required lead {np.degrees(phi):.1f} deg exceeds 90 deg (delay too large)"
        )
    kp = plant_gain * wc * wc * np.cos(phi)
    kd = plant_gain * wc * np.sin(phi)
    return float(kp), float(kd)


def _open_loop(w: np.ndarray, kp: float, kd: float, plant_gain: float, sample_rate_hz: float | None):
    mag = np.hypot(kp, kd * w) / (plant_gain * w * w)
    phase = np.arctan2(kd * w, kp) - np.pi
    if sample_rate_hz is not None:
        phase = phase - 0.5 * w / sample_rate_hz
    return mag, phase


def compute_margins(
    kp: float,
    kd: float,
    plant_gain: float,
    sample_rate_hz: float | None = None,
    f_min: float = 1e-3,
    f_max: float | None = None,
) -> LoopMargins:
    """Crossover, phase margin, and gain margin of the PD double-integrator
    loop by frequency sweep with root refinement."""
    if f_max is None:
        f_max = 10.0 * sample_rate_hz if sample_rate_hz else 1e4

    def log_mag(w: float) -> float:
        m, _ = _open_loop(np.array([w]), kp, kd, plant_gain, sample_rate_hz)
        return float(np.log10(m[0]))

    w_lo, w_hi = 2.0 * np.pi * f_min, 2.0 * np.pi * f_max
    if log_mag(w_lo) < 0.0 or log_mag(w_hi) > 0.0:
        raise NoCrossoverError("no unity-gain crossover in the sweep range")
    wc = brentq(log_mag, w_lo, w_hi, xtol=1e-12, rtol=1e-14)
    _, ph = _open_loop(np.array([wc]), kp, kd, plant_gain, sample_rate_hz)
    pm = np.degrees(ph[0] + np.pi)

    gm_db = np.inf
    if sample_rate_hz is not None:
        # phase hits -180 deg where the PD lead equals the hold delay
        def phase180(w: float) -> float:
            return float(np.arctan2(kd * w, kp) - 0.5 * w / sample_rate_hz)

        w_probe = np.geomspace(wc, w_hi, 2048)
        vals = np.arctan2(kd * w_probe, kp) - 0.5 * w_probe / sample_rate_hz
        idx = np.nonzero(np.diff(np.sign(vals)) < 0)[0]
        if idx.size:
            w180 = brentq(phase180, w_probe[idx[0]], w_probe[idx[0] + 1], xtol=1e-12)
            m, _ = _open_loop(np.array([w180]), kp, kd, plant_gain, sample_rate_hz)
            gm_db = float(-20.0 * np.log10(m[0]))
    return LoopMargins(
        crossover_hz=float(wc / (2.0 * np.pi)),
        phase_margin_deg=float(pm),
        gain_margin_db=gm_db,
    )


def frequency_response(
    kp: float,
    kd: float,
    plant_gain: float,
    sample_rate_hz: float | None,
    freqs_hz: np.ndarray,
) -> np.ndarray:
    """(freq Hz, gain dB, phase deg) table of the open loop."""
    w = 2.0 * np.pi * np.asarray(freqs_hz, float)
    mag, ph = _open_loop(w, kp, kd, plant_gain, sample_rate_hz)
    return np.column_stack([freqs_hz, 20.0 * np.log10(mag), np.degrees(ph)])


def solve_sample_rate_for_gm(
    crossover_hz: float,
    phase_margin_deg: float,
    gain_margin_db: float,
) -> float:
    """Sample rate whose hold delay yields the target gain margin.

    The PD double-integrator loop has unbounded gain margin without delay;
    a slower loop rate pulls the -180 deg crossing toward the crossover and
    reduces the margin.  Gains are (re)designed at every candidate rate so
    crossover and PM stay pinned.
    """
    wc = 2.0 * np.pi * crossover_hz
    ts_max = 0.98 * 2.0 * np.radians(90.0 - phase_margin_deg) / wc

    def gm_err(ts: float) -> float:
        kp, kd = design_pd(1.0, crossover_hz, phase_margin_deg, 1.0 / ts)
        m = compute_margins(kp, kd, 1.0, 1.0 / ts)
        return m.gain_margin_db - gain_margin_db

    grid = np.geomspace(1e-3 * ts_max, ts_max, 64)
    vals = [gm_err(t) for t in grid]
    for i in range(len(grid) - 1):
        if vals[i] == 0.0 or vals[i] * vals[i + 1] < 0.0:
            ts = brentq(gm_err, grid[i], grid[i + 1], xtol=1e-10)
            return 1.0 / ts
    raise GainDesignError(
        f"no sample rate achieves {gain_margin_db} dB gain margin at "
        f"{crossover_hz} Hz / {phase_margin_deg} deg"
    )


# --- controller -----------------------------------------------------------


@dataclass
class ControllerGains:
    """Dimensional nested-loop gains."""

    heave_kp: float  # N/m
    heave_kd: float  # N s/m
    att_kp: np.ndarray  # N m/rad, per body axis
    att_kd: np.ndarray  # N m s/rad
    lat_kp: float  # N/m
    lat_kd: float  # N s/m
    inner_rate_hz: float = 64.0
    outer_rate_hz: float = 1.5
    max_tilt_deg: float = 20.0

    def __post_init__(self):
        vals = [self.heave_kp, self.heave_kd, self.lat_kp, self.lat_kd, *self.att_kp, *self.att_kd]
        if not np.all(np.isfinite(vals)):
            raise ValueError("gains must be finite")


def design_controller(
    mass_props: MassProperties,
    inner_crossover_hz: float = 3.7,
    inner_pm_deg: float = 54.0,
    outer_crossover_hz: float = 0.27,
    outer_pm_deg: float = 45.0,
    inner_rate_hz: float = 64.0,
    outer_rate_hz: float | None = None,
    outer_gm_db: float = 8.0,
    max_tilt_deg: float = 20.0,
) -> ControllerGains:
    """Design the nested loops from the plant mass/inertia.

    When outer_rate_hz is omitted it is solved so the outer loop's gain
    margin lands on outer_gm_db.
    """
    if outer_rate_hz is None:
        outer_rate_hz = solve_sample_rate_for_gm(outer_crossover_hz, outer_pm_deg, outer_gm_db)
    h_kp, h_kd = design_pd(mass_props.mass, inner_crossover_hz, inner_pm_deg, inner_rate_hz)
    axes = np.diag(mass_props.inertia)
    att = np.array([design_pd(i, inner_crossover_hz, inner_pm_deg, inner_rate_hz) for i in axes])
    l_kp, l_kd = design_pd(mass_props.mass, outer_crossover_hz, outer_pm_deg, outer_rate_hz)
    return ControllerGains(
        heave_kp=h_kp,
        heave_kd=h_kd,
        att_kp=att[:, 0],
        att_kd=att[:, 1],
        lat_kp=l_kp,
        lat_kd=l_kd,
        inner_rate_hz=inner_rate_hz,
        outer_rate_hz=outer_rate_hz,
        max_tilt_deg=max_tilt_deg,
    )


def outer_loop(
    est: RigidBodyState,
    ref: GuidanceTarget,
    gains: ControllerGains,
    mass: float,
    gravity: float,
) -> np.ndarray:
    """Lateral PD to a (roll, pitch) tilt command in degrees.

    Small-angle thrust-vector mapping: tilt = lateral force / (m g),
    saturated at max_tilt.
    """
    f_lat = (
        gains.lat_kp * (ref.position[:2] - est.position[:2])
        + gains.lat_kd * (ref.velocity[:2] - est.velocity[:2])
        + mass * ref.acceleration[:2]
    )
    ax, ay = f_lat / (mass * gravity)
    tilt = np.array([-ay, ax])  # roll about x, pitch about y
    mag = float(np.linalg.norm(tilt))
    limit = np.radians(gains.max_tilt_deg)
    if mag > limit:
        tilt *= limit / mag
    return np.degrees(tilt)


def inner_loop(
    est: RigidBodyState,
    ref: GuidanceTarget,
    gains: ControllerGains,
    mass: float,
    gravity: float,
    tilt_cmd_deg: np.ndarray | None = None,
    yaw_cmd_rad: float = 0.0,
) -> tuple[float, np.ndarray]:
    """Heave and attitude PD; returns (body-z force cmd N, body moment cmd)."""
    f_up = (
        mass * (gravity + ref.acceleration[2])
        + gains.heave_kp * (ref.position[2] - est.position[2])
        + gains.heave_kd * (ref.velocity[2] - est.velocity[2])
    )
    body_up = quat_rotate(est.quaternion, np.array([0.0, 0.0, 1.0]))
    cos_tilt = max(float(body_up[2]), 0.5)
    heave_cmd = max(f_up, 0.0) / cos_tilt

    roll, pitch = (0.0, 0.0) if tilt_cmd_deg is None else np.radians(tilt_cmd_deg)
    q_cmd = quat_from_euler(roll, pitch, yaw_cmd_rad)
    err = attitude_error_vector(q_cmd, est.quaternion)
    moment = gains.att_kp * err - gains.att_kd * est.angular_rate
    return float(heave_cmd), moment


# --- thruster allocation --------------------------------------------------


@dataclass(frozen=True)
class AllocationResult:
    duties: np.ndarray  # clipped to [0, 1]
    duties_raw: np.ndarray  # exact mixing solution
    clipped: bool


class ThrusterMixer:
    """Least-squares mixer from [F_z, M_x, M_y, M_z] to duty fractions.

    The mixing matrix columns are each thruster's wrench per unit duty at
    full tank pressure; blowdown scales all columns equally, so the inverse
    is computed once and rescaled.
    """

    def __init__(self, bank: list[Thruster], com_offset: np.ndarray | None = None):
        com = np.zeros(3) if com_offset is None else np.asarray(com_offset, float)
        cols = []
        for th in bank:
            force = th.max_thrust * th.thrust_axis
            moment = np.cross(th.mount_position - com, force)
            cols.append([force[2], moment[0], moment[1], moment[2]])
        self.matrix = np.array(cols).T  # (4, 4)
        if np.linalg.matrix_rank(self.matrix) < 4:
            raise ValueError("singular thruster geometry")
        self._inv = np.linalg.inv(self.matrix)

    def allocate(self, heave_cmd: float, moment_cmd: np.ndarray, pressure_ratio: float = 1.0) -> AllocationResult:
        cmd = np.array([heave_cmd, moment_cmd[0], moment_cmd[1], moment_cmd[2]])
        if not np.all(np.isfinite(cmd)):
            raise ValueError("non-finite allocation command")
        raw = (self._inv @ cmd) / pressure_ratio
        duties = np.clip(raw, 0.0, 1.0)
        return AllocationResult(duties=duties, duties_raw=raw, clipped=bool(np.any(duties != raw)))

    def reconstruct(self, duties: np.ndarray, pressure_ratio: float = 1.0) -> np.ndarray:
        return self.matrix @ (np.asarray(duties, float) * pressure_ratio)


def allocate_thrusters(
    heave_cmd: float,
    moment_cmd: np.ndarray,
    bank: list[Thruster],
    pressure_ratio: float = 1.0,
    com_offset: np.ndarray | None = None,
) -> AllocationResult:
    return ThrusterMixer(bank, com_offset).allocate(heave_cmd, moment_cmd, pressure_ratio)


# --- navigation error model -----------------------------------------------


@dataclass(frozen=True)
class NavErrorParams:
    """Total 1-sigma error per channel; errors are a Gauss-Markov bias plus
    white noise, with white_fraction of the variance in the white part."""

    position_sigma: np.ndarray = field(default_factory=lambda: np.array([0.5, 0.5, 0.3]))  # m
    velocity_sigma: np.ndarray = field(default_factory=lambda: np.array([0.1, 0.1, 0.05]))  # m/s
    attitude_sigma_deg: float = 0.1
    rate_sigma_dps: float = 0.02
    bias_tau: float = 30.0  # s
    white_fraction: float = 0.02

    def __post_init__(self):
        if np.any(self.position_sigma < 0) or np.any(self.velocity_sigma < 0):
            raise ValueError("sigmas must be >= 0")
        if self.attitude_sigma_deg < 0 or self.rate_sigma_dps < 0:
            raise ValueError("sigmas must be >= 0")
        if not 0.0 <= self.white_fraction <= 1.0:
            raise ValueError("white_fraction must be within [0, 1]")


@dataclass
class NavErrorState:
    """Gauss-Markov bias per channel (12 = pos 3, vel 3, att 3, rate 3)."""

    bias: np.ndarray = field(default_factory=lambda: np.zeros(12))


def _nav_sigmas(params: NavErrorParams) -> np.ndarray:
    att = np.radians(params.attitude_sigma_deg)
    rate = np.radians(params.rate_sigma_dps)
    return np.concatenate(
        [params.position_sigma, params.velocity_sigma, [att] * 3, [rate] * 3]
    )


def init_nav_error(params: NavErrorParams, rng: np.random.Generator) -> NavErrorState:
    sig = _nav_sigmas(params) * np.sqrt(1.0 - params.white_fraction)
    return NavErrorState(bias=rng.normal(0.0, 1.0, size=12) * sig)


def corrupt_nav(
    truth: RigidBodyState,
    params: NavErrorParams,
    err_state: NavErrorState,
    rng: np.random.Generator,
    dt: float,
) -> tuple[RigidBodyState, NavErrorState]:
    """Truth plus correlated bias plus white noise on every channel."""
    sig = _nav_sigmas(params)
    sig_b = sig * np.sqrt(1.0 - params.white_fraction)
    sig_w = sig * np.sqrt(params.white_fraction)
    a = np.exp(-dt / params.bias_tau)
    bias = err_state.bias * a + rng.normal(0.0, 1.0, size=12) * sig_b * np.sqrt(max(0.0, 1.0 - a * a))
    err = bias + rng.normal(0.0, 1.0, size=12) * sig_w
    q_est = quat_multiply(truth.quaternion, quat_from_rotvec(err[6:9]))
    est = RigidBodyState(
        position=truth.position + err[0:3],
        velocity=truth.velocity + err[3:6],
        quaternion=q_est / np.linalg.norm(q_est),
        angular_rate=truth.angular_rate + err[9:12],
    )
    return est, NavErrorState(bias=bias)
