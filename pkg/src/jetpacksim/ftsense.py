"""Force-torque sensing chain and rotor trim.

Wrench algebra, the interface-sensor model (tones, noise, quantization),
disturbance filtering, the helicopter free-body inversion that recovers
the aerodynamic wrench, apparent-wind inversion through a linear rotor
aero model, and the iterative collective trim.

All wrenches in this module live in the stack body frame unless noted.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import butter, lfilter, lfilter_zi

DEFAULT_MOMENT_TOL_NM = 0.2  # sensor moment resolution
DEFAULT_LIFT_TOL_N = 2.0  # sensor vertical-force resolution
COLLECTIVE_LIMIT_DEG = 11.0

ROTOR_RADIUS_M = 0.64
ROTOR_COUNT = 6
ROTOR_SOLIDITY = 0.25
ROTOR_OMEGA0 = 2.0 * np.pi * 46.0  # rad/s, nominal rotor rate


class SettlingError(ValueError):
    """Sample series shorter than the filter settling time."""


class RotorsStoppedError(RuntimeError):
    """The aero model is rank-deficient (no wind estimate possible)."""


@dataclass
class Wrench:
    force: np.ndarray  # N
    moment: np.ndarray  # N m
    reference_point: np.ndarray = field(default_factory=lambda: np.zeros(3))  # m

    def __post_init__(self):
        self.force = np.asarray(self.force, dtype=float)
        self.moment = np.asarray(self.moment, dtype=float)
        self.reference_point = np.asarray(self.reference_point, dtype=float)
        if not (
            np.all(np.isfinite(self.force))
            and np.all(np.isfinite(self.moment))
            and np.all(np.isfinite(self.reference_point))
        ):
            raise ValueError("wrench components must be finite")

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.force, self.moment])


def transform_wrench(w: Wrench, new_point: np.ndarray) -> Wrench:
    """Move the reference point; the moment picks up r x F with r the
    offset from the new point to the old reference."""
    new_point = np.asarray(new_point, dtype=float)
    r = w.reference_point - new_point
    return Wrench(
        force=w.force.copy(),
        moment=w.moment + np.cross(r, w.force),
        reference_point=new_point,
    )


# --- sensing --------------------------------------------------------------


@dataclass(frozen=True)
class FtNoiseModel:
    resolution_vertical_force: float = 2.0  # N
    resolution_lateral_force: float = 0.3  # N
    resolution_moment: float = 0.2  # N m
    sample_rate_hz: float = 1000.0
    white_sigma: tuple[float, ...] = (0.3, 0.3, 0.8, 0.05, 0.05, 0.05)

    def __post_init__(self):
        if min(self.resolution_vertical_force, self.resolution_lateral_force, self.resolution_moment) <= 0:
            raise ValueError("resolutions must be > 0")
        if self.sample_rate_hz < 1000.0:
            raise ValueError("sample_rate must be >= 1 kHz")

    @property
    def resolutions(self) -> np.ndarray:
        return np.array(
            [
                self.resolution_lateral_force,
                self.resolution_lateral_force,
                self.resolution_vertical_force,
                self.resolution_moment,
                self.resolution_moment,
                self.resolution_moment,
            ]
        )


@dataclass(frozen=True)
class DisturbanceTones:
    """Sinusoidal interference: thruster PWM duty tone plus harmonics, and
    the rotor-rate tone."""

    pwm_hz: float = 10.0
    pwm_harmonics: int = 3
    pwm_force_amp: float = 4.0  # N, fundamental; harmonics fall off as 1/k
    pwm_moment_amp: float = 0.8  # N m
    rotor_hz: float = 46.0
    rotor_force_amp: float = 1.0  # N
    rotor_moment_amp: float = 0.3  # N m


def _tone_matrix(t: np.ndarray, tones: DisturbanceTones) -> np.ndarray:
    """(N, 6) disturbance time series; per-channel phases are fixed so the
    output is reproducible."""
    out = np.zeros((t.size, 6))
    for ch in range(6):
        amp_f = tones.pwm_force_amp if ch < 3 else tones.pwm_moment_amp
        for k in range(1, tones.pwm_harmonics + 1):
            phase = 0.7 * ch + 1.3 * k
            out[:, ch] += (amp_f / k) * np.sin(2.0 * np.pi * tones.pwm_hz * k * t + phase)
        amp_r = tones.rotor_force_amp if ch < 3 else tones.rotor_moment_amp
        out[:, ch] += amp_r * np.sin(2.0 * np.pi * tones.rotor_hz * t + 0.9 * ch)
    return out


def measure_ft_series(
    truth: Wrench,
    noise: FtNoiseModel,
    t: np.ndarray,
    disturbances: DisturbanceTones | None = None,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """(N, 6) quantized sensor samples of a constant truth wrench."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    raw = np.tile(truth.as_array(), (t.size, 1))
    if disturbances is not None:
        raw = raw + _tone_matrix(t, disturbances)
    if rng is not None:
        raw = raw + rng.normal(0.0, 1.0, size=raw.shape) * np.asarray(noise.white_sigma)
    res = noise.resolutions
    return np.round(raw / res) * res


def measure_ft(
    true_interface_wrench: Wrench,
    noise: FtNoiseModel,
    t: float,
    disturbances: DisturbanceTones | None = None,
    rng: np.random.Generator | None = None,
) -> Wrench:
    """Single quantized sensor sample at time t."""
    sample = measure_ft_series(true_interface_wrench, noise, np.array([t]), disturbances, rng)[0]
    return Wrench(
        force=sample[:3],
        moment=sample[3:],
        reference_point=true_interface_wrench.reference_point.copy(),
    )


@dataclass
class FilteredFt:
    times: np.ndarray  # decimated output instants [s]
    values: np.ndarray  # (M, 6) filtered, decimated channels
    estimate: np.ndarray  # (6,) settled average


def filter_ft(
    samples: np.ndarray,
    sample_rate_hz: float,
    cutoff_hz: float = 2.0,
    order: int = 4,
    output_rate_hz: float = 4.0,
) -> FilteredFt:
    """Causal low-pass (Butterworth) of the kHz sensor stream, decimated.

    The cutoff sits between the 1-Hz wind-sensing requirement and the
    10-Hz disturbance floor.  A 4th-order 2-Hz Butterworth gives ~28 dB at
    10 Hz and < 0.1 dB at 1 Hz.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if samples.shape[0] == 6 and samples.shape[1] != 6:
        samples = samples.T
    n = samples.shape[0]
    settle_s = 1.5 / cutoff_hz
    if n / sample_rate_hz < 2.0 * settle_s:
        raise SettlingError(
            f"need >= {2.0 * settle_s:.2f} s of samples at {cutoff_hz} Hz cutoff"
        )
    b, a = butter(order, cutoff_hz / (0.5 * sample_rate_hz))
    zi = lfilter_zi(b, a)
    filtered = np.empty_like(samples)
    for ch in range(samples.shape[1]):
        filtered[:, ch], _ = lfilter(b, a, samples[:, ch], zi=zi * samples[0, ch])
    step = max(1, int(round(sample_rate_hz / output_rate_hz)))
    idx = np.arange(0, n, step)
    n_settle = int(settle_s * sample_rate_hz)
    return FilteredFt(
        times=idx / sample_rate_hz,
        values=filtered[idx],
        estimate=filtered[n_settle:].mean(axis=0),
    )


def filter_attenuation_db(frequency_hz: float, sample_rate_hz: float = 1000.0, cutoff_hz: float = 2.0, order: int = 4) -> float:
    """Magnitude response of the sensing filter at one frequency (dB < 0
    means attenuation)."""
    b, a = butter(order, cutoff_hz / (0.5 * sample_rate_hz))
    w = 2.0 * np.pi * frequency_hz / sample_rate_hz
    z = np.exp(1j * w)
    h = np.polyval(b[::-1], 1 / z) / np.polyval(a[::-1], 1 / z)
    return float(20.0 * np.log10(abs(h)))


# --- free-body inversion ----------------------------------------------------


def estimate_aero_wrench(
    ft_at_heli_com: Wrench,
    heli_weight: float,
    accel_knowledge: np.ndarray,
    weight_direction: np.ndarray | None = None,
    mass: float | None = None,
    gravity: float = 3.71,
    inertia: np.ndarray | None = None,
    alpha_knowledge: np.ndarray | None = None,
    omega: np.ndarray | None = None,
) -> Wrench:
    """Invert the helicopter free body for the aerodynamic wrench.

    F_aero = m a - F_ft - F_weight and M_aero = I alpha + w x I w - M_ft,
    with the interface wrench already transformed to the helicopter COM.
    weight_direction defaults to body -z (level flight).
    """
    m = heli_weight / gravity if mass is None else mass
    w_dir = np.array([0.0, 0.0, -1.0]) if weight_direction is None else np.asarray(weight_direction, float)
    f_weight = heli_weight * w_dir
    f_aero = m * np.asarray(accel_knowledge, float) - ft_at_heli_com.force - f_weight
    m_inertial = np.zeros(3)
    if inertia is not None and alpha_knowledge is not None:
        m_inertial = inertia @ np.asarray(alpha_knowledge, float)
        if omega is not None:
            m_inertial = m_inertial + np.cross(omega, inertia @ omega)
    m_aero = m_inertial - ft_at_heli_com.moment
    return Wrench(force=f_aero, moment=m_aero, reference_point=ft_at_heli_com.reference_point.copy())


def interface_wrench_truth(
    heli_mass: float,
    heli_inertia: np.ndarray,
    accel_heli_com: np.ndarray,
    alpha_body: np.ndarray,
    omega_body: np.ndarray,
    aero_wrench_at_heli_com: Wrench,
    weight_force: np.ndarray,
) -> Wrench:
    """True interface wrench at the helicopter COM from its free body:
    the mount supplies whatever Newton-Euler requires beyond aero+weight."""
    f_ft = heli_mass * accel_heli_com - aero_wrench_at_heli_com.force - weight_force
    m_ft = (
        heli_inertia @ alpha_body
        + np.cross(omega_body, heli_inertia @ omega_body)
        - aero_wrench_at_heli_com.moment
    )
    return Wrench(force=f_ft, moment=m_ft, reference_point=aero_wrench_at_heli_com.reference_point.copy())


# --- rotor aero model -------------------------------------------------------


def default_rotor_positions(arm_radius: float = 1.345, z_offset: float = 0.10) -> np.ndarray:
    az = np.radians(30.0 + 60.0 * np.arange(6))
    return np.column_stack([arm_radius * np.cos(az), arm_radius * np.sin(az), np.full(6, z_offset)])


@dataclass
class RotorAeroModel:
    """Linear hover derivatives of the six-rotor system.

    thrust_per_collective comes from blade-element momentum theory at the
    configured density; the airspeed derivatives are fits chosen to
    reproduce the reported closed-loop behavior and are configurable.
    """

    thrust_per_collective: float  # N/deg per rotor
    thrust_per_omega: float  # N/(rad/s) per rotor
    thrust_per_axial_wind: float  # N/(m/s) per rotor
    hub_force_per_wind: float  # N/(m/s) per rotor, in-plane
    hub_moment_per_wind: float  # N m/(m/s) per rotor, about z x wind
    torque_per_collective: float  # N m/deg per rotor, sign alternates
    density: float  # kg/m^3
    rotor_positions: np.ndarray = field(default_factory=default_rotor_positions)  # (6, 3) about heli COM
    spin_sign: np.ndarray = field(default_factory=lambda: np.array([1.0, -1.0, 1.0, -1.0, 1.0, -1.0]))
    omega0: float = ROTOR_OMEGA0  # rad/s

    def __post_init__(self):
        if self.thrust_per_collective <= 0.0:
            raise ValueError("thrust_per_collective must be > 0")

    def thrust_scale(self, omega: float) -> float:
        return (omega / self.omega0) ** 2

    def wrench_at(self, collectives: np.ndarray, omega: float, wind_rel: np.ndarray) -> Wrench:
        """Linear aero wrench about the helicopter COM (body frame).

        wind_rel is the apparent wind (wind minus vehicle velocity) at the
        rotor plane.
        """
        collectives = np.asarray(collectives, dtype=float)
        wind_rel = np.asarray(wind_rel, dtype=float)
        s = self.thrust_scale(omega)
        thrust = s * (self.thrust_per_collective * collectives + self.thrust_per_axial_wind * wind_rel[2])
        hub = s * self.hub_force_per_wind * np.array([wind_rel[0], wind_rel[1], 0.0])
        force = np.array([0.0, 0.0, thrust.sum()]) + 6.0 * hub
        moment = np.zeros(3)
        z = np.array([0.0, 0.0, 1.0])
        for i in range(6):
            f_i = np.array([hub[0], hub[1], thrust[i]])
            moment += np.cross(self.rotor_positions[i], f_i)
            moment += self.spin_sign[i] * s * self.torque_per_collective * collectives[i] * z
        moment += 6.0 * s * self.hub_moment_per_wind * np.cross(z, np.array([wind_rel[0], wind_rel[1], 0.0]))
        return Wrench(force=force, moment=moment, reference_point=np.zeros(3))

    def collective_jacobian(self, omega: float) -> np.ndarray:
        """(4, 6) map from collectives to [lift, Mx, My, Mz] (model is
        linear, so unit-input differencing is exact)."""
        base = self.wrench_at(np.zeros(6), omega, np.zeros(3))
        cols = []
        for i in range(6):
            d = np.zeros(6)
            d[i] = 1.0
            w = self.wrench_at(d, omega, np.zeros(3))
            cols.append(
                [
                    w.force[2] - base.force[2],
                    *(w.moment - base.moment),
                ]
            )
        return np.array(cols).T

    def wind_jacobian(self, omega: float) -> np.ndarray:
        """(6, 3) map from apparent wind to the full wrench."""
        base = self.wrench_at(np.zeros(6), omega, np.zeros(3)).as_array()
        cols = []
        for j in range(3):
            w = np.zeros(3)
            w[j] = 1.0
            cols.append(self.wrench_at(np.zeros(6), omega, w).as_array() - base)
        return np.array(cols).T


def default_rotor_model(
    density: float = 0.015,
    heli_weight: float = 31.2 * 3.71,
    lift_slope: float = 5.7,
    thrust_per_axial_wind: float = 0.15,
    hub_force_per_wind: float = 0.0673,
    hub_moment_per_wind: float = 0.05,
) -> RotorAeroModel:
    """Momentum/blade-element defaults for the 0.64-m, solidity-0.25 rotors."""
    area = np.pi * ROTOR_RADIUS_M**2
    v_tip = ROTOR_OMEGA0 * ROTOR_RADIUS_M
    t_c_rad = 0.5 * density * ROTOR_SOLIDITY * lift_slope * area * v_tip**2 / 3.0
    t_c = t_c_rad * np.pi / 180.0
    t_hover = heli_weight / ROTOR_COUNT
    v_h = np.sqrt(t_hover / (2.0 * density * area))
    q_c = t_c * v_h * 1.3 / ROTOR_OMEGA0
    return RotorAeroModel(
        thrust_per_collective=float(t_c),
        thrust_per_omega=float(2.0 * t_hover / ROTOR_OMEGA0),
        thrust_per_axial_wind=thrust_per_axial_wind,
        hub_force_per_wind=hub_force_per_wind,
        hub_moment_per_wind=hub_moment_per_wind,
        torque_per_collective=float(q_c),
        density=density,
    )


# --- wind inversion and trim -------------------------------------------------


def wind_from_wrench(
    aero: Wrench,
    model: RotorAeroModel,
    omega: float,
    collectives: np.ndarray | None = None,
) -> tuple[np.ndarray, float]:
    """Least-squares apparent wind from an aero wrench.

    Subtracts the collective-commanded part first when collectives are
    given.  Returns (wind, residual norm).  Raises RotorsStoppedError when
    the model loses rank (rotors stopped).
    """
    jac = model.wind_jacobian(omega)
    if np.linalg.matrix_rank(jac, tol=1e-9) < 3:
        raise RotorsStoppedError("wind is unobservable with the rotors stopped")
    rhs = aero.as_array()
    if collectives is not None:
        rhs = rhs - model.wrench_at(collectives, omega, np.zeros(3)).as_array()
    wind, res, *_ = np.linalg.lstsq(jac, rhs, rcond=None)
    residual = float(np.sqrt(res[0])) if res.size else float(np.linalg.norm(jac @ wind - rhs))
    return wind, residual


@dataclass
class TrimSolution:
    collectives: np.ndarray  # deg, per rotor
    rotor_speed: float  # rad/s
    residual: Wrench  # lift error on force z, moment error
    converged: bool
    iterations: int
    infeasible: bool = False

    def __post_init__(self):
        if np.any(np.abs(self.collectives) > COLLECTIVE_LIMIT_DEG + 1e-9) and not self.infeasible:
            raise ValueError("collectives beyond limits must be flagged infeasible")


@dataclass
class TrimIterationLog:
    iteration: int
    measured_lift: float
    measured_moment: np.ndarray
    collectives: np.ndarray


def trim_rotors(
    measure_aero,
    model: RotorAeroModel,
    weight: float,
    margin: float,
    initial_collectives: np.ndarray,
    omega: float,
    max_iterations: int = 5,
    moment_tol: float = DEFAULT_MOMENT_TOL_NM,
    lift_tol: float = DEFAULT_LIFT_TOL_N,
    collective_limit: float = COLLECTIVE_LIMIT_DEG,
) -> tuple[TrimSolution, list[TrimIterationLog]]:
    """Iterate measure -> adjust until lift = weight + margin and M = 0.

    measure_aero(collectives) returns the (noisy, filtered) aero wrench
    estimate at the helicopter COM for the current collective settings.
    The update solves the linear collective map by pseudo-inverse
    (minimum-norm over the six rotors).
    """
    collectives = np.asarray(initial_collectives, dtype=float).copy()
    jac_pinv = np.linalg.pinv(model.collective_jacobian(omega))
    log: list[TrimIterationLog] = []
    converged = False
    infeasible = False
    aero = measure_aero(collectives)
    for it in range(1, max_iterations + 1):
        lift_err = (weight + margin) - aero.force[2]
        moment_err = -aero.moment
        log.append(TrimIterationLog(it, float(aero.force[2]), -moment_err.copy(), collectives.copy()))
        if abs(lift_err) < lift_tol and np.linalg.norm(moment_err) < moment_tol:
            converged = True
            break
        delta = jac_pinv @ np.array([lift_err, *moment_err])
        collectives = collectives + delta
        if np.any(np.abs(collectives) > collective_limit):
            infeasible = True
            collectives = np.clip(collectives, -collective_limit, collective_limit)
            aero = measure_aero(collectives)
            break
        aero = measure_aero(collectives)
    residual = Wrench(
        force=np.array([0.0, 0.0, aero.force[2] - (weight + margin)]),
        moment=aero.moment.copy(),
    )
    return (
        TrimSolution(
            collectives=collectives,
            rotor_speed=omega,
            residual=residual,
            converged=converged,
            iterations=len(log),
            infeasible=infeasible,
        ),
        log,
    )


def downwind_maneuver_needed(
    wind_estimate: np.ndarray,
    bound_mps: float,
) -> tuple[bool, np.ndarray]:
    """Whether the apparent horizontal wind exceeds the trimmable bound,
    and the downwind delta-V that brings it back to the bound."""
    w_h = np.array([wind_estimate[0], wind_estimate[1], 0.0])
    speed = float(np.linalg.norm(w_h))
    if speed <= bound_mps or speed == 0.0:
        return False, np.zeros(3)
    return True, (speed - bound_mps) * (w_h / speed)


def max_trimmable_wind(
    model: RotorAeroModel,
    weight: float,
    margin: float,
    omega: float,
    collective_limit: float = COLLECTIVE_LIMIT_DEG,
) -> float:
    """Horizontal wind speed at which the minimum-norm trim first hits the
    collective limit (scanned along a representative azimuth)."""
    jac_pinv = np.linalg.pinv(model.collective_jacobian(omega))
    base = jac_pinv @ np.array([weight + margin, 0.0, 0.0, 0.0])
    wind_jac = model.wind_jacobian(omega)
    for speed in np.linspace(1.0, 100.0, 991):
        wrench = wind_jac @ np.array([speed, 0.0, 0.0])
        delta = jac_pinv @ np.array([-wrench[2], -wrench[3], -wrench[4], -wrench[5]])
        if np.max(np.abs(base + delta)) > collective_limit:
            return float(speed)
    return 100.0
