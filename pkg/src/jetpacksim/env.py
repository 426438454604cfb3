"""Mars atmosphere, gravity, and a stochastic wind/gust model.

The wind field seen by one run is composed of
  * a per-run constant mean wind drawn from the site statistics table,
  * a per-run linear vertical shear profile,
  * a first-order Gauss-Markov (Ornstein-Uhlenbeck) gust per axis,
  * an optional downward jet-entrainment bias inside a cylinder around
    the vehicle.

All "3-sigma" statistics here are defined as 3 * sqrt(mean(x^2)) of the
quantity named (a magnitude for vector quantities).  With that convention
the gust process admits a closed-form calibration:

  per-axis OU increments over lag L have variance 2*sigma^2*(1 - exp(-L/tau)),
  so a horizontal-vector increment target I (3-sigma) gives
      sigma_h = I / (6 * sqrt(1 - exp(-L/tau)))

and a horizontal mean-wind target T gives per-axis sigma T / (3*sqrt(2)).
The gust contribution to the instantaneous statistic is < 0.1% of the
mean-wind draw and is neglected.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

MARS_GRAVITY = 3.71  # m/s^2
DEFAULT_DENSITY = 0.015  # kg/m^3, high-elevation site

# (height AGL m, 3-sigma horizontal m/s, 3-sigma vertical m/s)
DEFAULT_WIND_TABLE = ((200.0, 34.1, 1.4), (400.0, 33.2, 1.2), (600.0, 32.6, 1.2))

GUST_INCREMENT_LAG_S = 5.0
MAX_DOWNWASH_MPS = 10.0


class SeriesTooShortError(ValueError):
    """Raised when a wind series has too few samples for statistics."""


@dataclass(frozen=True)
class Atmosphere:
    """Constant-gravity atmosphere with optional exponential density."""

    density: float = DEFAULT_DENSITY  # kg/m^3 at reference altitude
    gravity: float = MARS_GRAVITY  # m/s^2
    density_scale_height: float | None = None  # m

    def __post_init__(self):
        if self.density <= 0.0:
            raise ValueError("density must be > 0")
        if self.gravity <= 0.0:
            raise ValueError("gravity must be > 0")

    def density_at(self, height_agl: float) -> float:
        if self.density_scale_height is None:
            return self.density
        return self.density * np.exp(-height_agl / self.density_scale_height)


@dataclass(frozen=True)
class WindModelParams:
    """Site wind statistics and gust-process parameters."""

    sigma_h: float  # 1-sigma horizontal gust per axis [m/s]
    sigma_v: float  # 1-sigma vertical gust [m/s]
    tau_gust: float  # gust correlation time [s]
    mean_3sigma_by_alt: tuple[tuple[float, float, float], ...] = DEFAULT_WIND_TABLE
    shear_3sigma_600_200: float = 15.1  # m/s
    increment_3sigma_5s: float = 2.1  # m/s
    ref_height: float = 200.0  # m AGL, height the mean-wind draw refers to
    downwash_radius: float = 2.0  # m, jet-influence cylinder radius
    downwash_height: float = 10.0  # m, cylinder extent above the platform

    def __post_init__(self):
        if self.sigma_h < 0.0 or self.sigma_v < 0.0:
            raise ValueError("gust sigmas must be >= 0")
        if self.tau_gust <= 0.0:
            raise ValueError("tau_gust must be > 0")
        heights = [row[0] for row in self.mean_3sigma_by_alt]
        if sorted(heights) != heights or len(set(heights)) != len(heights):
            raise ValueError("table heights must be strictly increasing")

    @classmethod
    def calibrated(
        cls,
        tau_gust: float = 2.0,
        table: tuple[tuple[float, float, float], ...] = DEFAULT_WIND_TABLE,
        shear_3sigma_600_200: float = 15.1,
        increment_3sigma_5s: float = 2.1,
        **kwargs,
    ) -> "WindModelParams":
        """Solve (sigma_h, sigma_v) so the 5-s increment statistic is met.

        tau_gust must keep the 1-s-lag autocorrelation exp(-1/tau) >= 0.5,
        i.e. tau_gust >= 1/ln(2) ~= 1.44 s.
        """
        decay = 1.0 - np.exp(-GUST_INCREMENT_LAG_S / tau_gust)
        sigma_h = increment_3sigma_5s / (6.0 * np.sqrt(decay))
        # vertical gust scaled by the vertical/horizontal instantaneous ratio
        h3, v3 = table[0][1], table[0][2]
        sigma_v = sigma_h * v3 / h3
        return cls(
            sigma_h=float(sigma_h),
            sigma_v=float(sigma_v),
            tau_gust=tau_gust,
            mean_3sigma_by_alt=table,
            shear_3sigma_600_200=shear_3sigma_600_200,
            increment_3sigma_5s=increment_3sigma_5s,
            **kwargs,
        )

    def table_3sigma(self, height_agl: float) -> tuple[float, float]:
        """(horizontal, vertical) 3-sigma interpolated at a height, clamped."""
        rows = self.mean_3sigma_by_alt
        heights = np.array([r[0] for r in rows])
        horiz = np.array([r[1] for r in rows])
        vert = np.array([r[2] for r in rows])
        return (
            float(np.interp(height_agl, heights, horiz)),
            float(np.interp(height_agl, heights, vert)),
        )


@dataclass
class WindState:
    """Per-run wind state.

    mean_wind and shear_delta are drawn once per run; gust evolves.
    shear_delta is the vector wind difference between 600 and 200 m AGL
    realized by this run's linear shear profile.
    """

    mean_wind: np.ndarray = field(default_factory=lambda: np.zeros(3))
    gust: np.ndarray = field(default_factory=lambda: np.zeros(3))
    downwash_bias: float = 0.0  # m/s, downward flow inside the jet cylinder
    shear_delta: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if not 0.0 <= self.downwash_bias <= MAX_DOWNWASH_MPS:
            raise ValueError(f"downwash_bias must be within [0, {MAX_DOWNWASH_MPS}] m/s")


def sample_mean_wind(rng: np.random.Generator, height_agl: float, params: WindModelParams) -> np.ndarray:
    """Draw a constant mean wind whose magnitude statistics match the table.

    Horizontal components are iid normal, which makes the direction uniform
    in azimuth and gives the horizontal magnitude a 3*RMS equal to the table
    value at the given height.
    """
    h3, v3 = params.table_3sigma(height_agl)
    s_axis = h3 / (3.0 * np.sqrt(2.0))
    s_vert = v3 / 3.0
    w = rng.normal(0.0, 1.0, size=3)
    return np.array([w[0] * s_axis, w[1] * s_axis, w[2] * s_vert])


def sample_shear_delta(rng: np.random.Generator, params: WindModelParams) -> np.ndarray:
    """Draw the per-run 600-minus-200 m horizontal wind difference."""
    s_axis = params.shear_3sigma_600_200 / (3.0 * np.sqrt(2.0))
    return np.array([rng.normal(0.0, s_axis), rng.normal(0.0, s_axis), 0.0])


def init_wind_state(
    rng: np.random.Generator,
    params: WindModelParams,
    downwash_bias: float = 0.0,
    stationary_gust: bool = True,
) -> WindState:
    """Draw the per-run wind state at the reference height."""
    mean = sample_mean_wind(rng, params.ref_height, params)
    shear = sample_shear_delta(rng, params)
    sig = np.array([params.sigma_h, params.sigma_h, params.sigma_v])
    gust = rng.normal(0.0, 1.0, size=3) * sig if stationary_gust else np.zeros(3)
    return WindState(mean_wind=mean, gust=gust, downwash_bias=downwash_bias, shear_delta=shear)


def gust_step(state: WindState, dt: float, rng: np.random.Generator, params: WindModelParams) -> WindState:
    """Advance the gust one step with the exact OU transition.

    g' = g*exp(-dt/tau) + N(0, sigma^2*(1 - exp(-2 dt/tau)))
    """
    if dt <= 0.0:
        raise ValueError("dt must be > 0")
    a = np.exp(-dt / params.tau_gust)
    sig = np.array([params.sigma_h, params.sigma_h, params.sigma_v])
    noise_std = sig * np.sqrt(max(0.0, 1.0 - a * a))
    gust = state.gust * a + rng.normal(0.0, 1.0, size=3) * noise_std
    return replace(state, gust=gust)


def wind_at(
    t: float,
    height_agl: float,
    state: WindState,
    params: WindModelParams,
    rel_offset: np.ndarray | None = None,
) -> np.ndarray:
    """Total wind vector at a height, composed of mean + shear + gust.

    rel_offset is the query point minus the jetpack platform position; the
    downwash bias applies only inside the configured cylinder above the
    platform.  With rel_offset None the query is taken at the platform.
    """
    frac = (height_agl - params.ref_height) / 400.0  # 600 - 200 m baseline
    wind = state.mean_wind + state.shear_delta * frac + state.gust
    if state.downwash_bias > 0.0:
        inside = True
        if rel_offset is not None:
            r_xy = float(np.hypot(rel_offset[0], rel_offset[1]))
            inside = r_xy <= params.downwash_radius and 0.0 <= rel_offset[2] <= params.downwash_height
        if inside:
            wind = wind - np.array([0.0, 0.0, state.downwash_bias])
    return wind


# --- series generation & validation -------------------------------------


@dataclass
class WindSeries:
    """Ensemble of per-run wind histories at the reference height.

    at_ref has shape (runs, samples, 3); shear_delta has shape (runs, 3).
    """

    dt: float
    at_ref: np.ndarray
    shear_delta: np.ndarray

    @property
    def n_samples(self) -> int:
        return int(self.at_ref.shape[0] * self.at_ref.shape[1])


def generate_wind_series(
    params: WindModelParams,
    rng: np.random.Generator,
    n_runs: int,
    run_duration: float,
    dt: float = 0.1,
) -> WindSeries:
    """Simulate an ensemble of runs of the total wind at the reference height.

    The OU recursion is vectorized across runs.
    """
    n = int(round(run_duration / dt))
    sig = np.array([params.sigma_h, params.sigma_h, params.sigma_v])
    a = np.exp(-dt / params.tau_gust)
    q = np.sqrt(max(0.0, 1.0 - a * a)) * sig

    means = np.empty((n_runs, 3))
    shears = np.empty((n_runs, 3))
    for i in range(n_runs):
        means[i] = sample_mean_wind(rng, params.ref_height, params)
        shears[i] = sample_shear_delta(rng, params)

    gust = rng.normal(0.0, 1.0, size=(n_runs, 3)) * sig  # stationary start
    out = np.empty((n_runs, n, 3))
    noise = rng.normal(0.0, 1.0, size=(n, n_runs, 3))
    for k in range(n):
        out[:, k, :] = means + gust
        gust = gust * a + noise[k] * q
    return WindSeries(dt=dt, at_ref=out, shear_delta=shears)


@dataclass(frozen=True)
class StatCheck:
    name: str
    target: float
    empirical: float
    tolerance: float

    @property
    def passed(self) -> bool:
        if self.target == 0.0:
            return abs(self.empirical) <= self.tolerance
        return abs(self.empirical - self.target) <= self.tolerance * abs(self.target)


@dataclass
class WindStatsReport:
    checks: list[StatCheck]

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)


def _rms3(x: np.ndarray) -> float:
    """3 * RMS of the rows' Euclidean norm."""
    return 3.0 * float(np.sqrt(np.mean(np.sum(x * x, axis=-1))))


def validate_stats(series: WindSeries, params: WindModelParams, tolerance: float = 0.10) -> WindStatsReport:
    """Empirical site statistics of a generated ensemble vs. the targets."""
    if series.n_samples < 10_000:
        raise SeriesTooShortError(f"need >= 10000 samples, got {series.n_samples}")
    h3, v3 = params.table_3sigma(params.ref_height)
    w = series.at_ref
    lag = int(round(GUST_INCREMENT_LAG_S / series.dt))
    if lag <= 0 or lag >= w.shape[1]:
        raise SeriesTooShortError("runs too short for the 5-s increment lag")
    inc = w[:, lag:, :2] - w[:, :-lag, :2]
    checks = [
        StatCheck("instantaneous_horizontal_3sigma_mps", h3, _rms3(w[:, :, :2]), tolerance),
        StatCheck("instantaneous_vertical_3sigma_mps", v3, 3.0 * float(np.sqrt(np.mean(w[:, :, 2] ** 2))), tolerance),
        StatCheck("increment_5s_3sigma_mps", params.increment_3sigma_5s, _rms3(inc), tolerance),
        StatCheck("shear_600_200_3sigma_mps", params.shear_3sigma_600_200, _rms3(series.shear_delta), tolerance),
    ]
    return WindStatsReport(checks=checks)
