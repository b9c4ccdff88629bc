"""Nighttime cooling physics: flux terms, explicit-Euler and RK4 integrators,
and closed-form solutions for the two single-mechanism limits.

All fluxes are per unit area (W/m^2) and the heat capacity is areal
(J/(m^2 K)), so the temperature rate is flux / capacity with no surface
geometry involved.  At night the surface only loses heat, so the rate
carries a minus sign: T' = -(radiative + convective) / capacity.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.typing import NDArray

from .errors import NumericError, ValidationError

#: Stefan-Boltzmann constant, W m^-2 K^-4 (CODATA 2018).  Not configurable.
STEFAN_BOLTZMANN = 5.670374419e-8


@dataclass
class ThermoParams:
    """Per-surface radiative/convective coefficients, scalar or batched."""

    emissivity: NDArray[np.float64]  # dimensionless, in (0, 1)
    convective_coeff: NDArray[np.float64]  # W m^-2 K^-1, in (0, c_max]
    heat_capacity: NDArray[np.float64]  # J m^-2 K^-1, >= h_min

    def validate(self, c_max: float = 50.0, h_min: float = 1000.0) -> None:
        e = np.asarray(self.emissivity)
        c = np.asarray(self.convective_coeff)
        h = np.asarray(self.heat_capacity)
        for name, arr in (("emissivity", e), ("convective_coeff", c), ("heat_capacity", h)):
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"thermo params: non-finite {name}")
        if np.any(e <= 0.0) or np.any(e >= 1.0):
            raise ValidationError("thermo params: emissivity must lie in (0, 1)")
        if np.any(c <= 0.0) or np.any(c > c_max):
            raise ValidationError(f"thermo params: convective_coeff must lie in (0, {c_max}]")
        if np.any(h < h_min):
            raise ValidationError(f"thermo params: heat_capacity must be >= {h_min}")


def convective_flux(c, temp_k, ambient_k):
    """Heat leaving the surface by convection; positive when warmer than air."""
    return np.asarray(c, dtype=np.float64) * (np.asarray(temp_k, dtype=np.float64) - ambient_k)


def radiative_flux(e, temp_k):
    """Gray-body emission E * sigma * T^4; requires absolute temperature."""
    t = np.asarray(temp_k, dtype=np.float64)
    if np.any(t <= 0.0):
        raise ValidationError("radiative_flux: temperature must be > 0 K")
    return np.asarray(e, dtype=np.float64) * STEFAN_BOLTZMANN * t**4


def cooling_rate(params: ThermoParams, temp_k, ambient_k):
    """Temperature rate in K/s under nighttime release, strictly negative
    whenever the surface is warmer than the air."""
    q = radiative_flux(params.emissivity, temp_k) + convective_flux(
        params.convective_coeff, temp_k, ambient_k
    )
    return -q / np.asarray(params.heat_capacity, dtype=np.float64)


@dataclass
class TempCurve:
    """Temperature trajectory on a uniform time grid.

    ``temps[k]`` equals ``temps[0]`` plus the sequential prefix sum of
    ``deltas[:k]`` with the same accumulation order, by construction.
    Batched curves store state with shape (n_steps + 1, ...).
    """

    times: NDArray[np.float64]  # (N+1,)
    temps: NDArray[np.float64]  # (N+1, ...) kelvin
    deltas: NDArray[np.float64]  # (N, ...) kelvin per step

    def validate(self) -> None:
        n = len(self.deltas)
        if len(self.times) != n + 1 or len(self.temps) != n + 1:
            raise ValidationError("temp curve: times/temps must have one more entry than deltas")
        dt = np.diff(self.times)
        if n >= 1 and np.max(np.abs(dt - dt[0])) > 1e-9:
            raise ValidationError("temp curve: time grid not uniform within 1e-9")
        acc = np.array(self.temps[0], dtype=np.float64)
        for k in range(n):
            acc = acc + self.deltas[k]
            if np.max(np.abs(acc - self.temps[k + 1])) > 1e-9:
                raise ValidationError(f"temp curve: bookkeeping identity violated at step {k + 1}")

    @property
    def final_temp(self):
        return self.temps[-1]

    @property
    def n_steps(self) -> int:
        return len(self.deltas)


RateFn = Callable[[float, NDArray[np.float64]], NDArray[np.float64]]


def _integration_grid(t0: float, t: float, n_steps: int) -> tuple[NDArray[np.float64], float]:
    if n_steps < 1:
        raise ValidationError(f"substeps must be >= 1, got {n_steps}")
    if not t > t0:
        raise ValidationError(f"end time {t} must exceed start time {t0}")
    dt = (t - t0) / n_steps
    times = t0 + dt * np.arange(n_steps + 1)
    return times, dt


def euler_integrate(temp0, t0: float, t: float, n_steps: int, rate_fn: RateFn) -> TempCurve:
    """Explicit Euler: each step adds rate(t_prev, T_prev) * dt.

    ``temp0`` may be a scalar or an array; the rate function must accept and
    return the same shape.
    """
    times, dt = _integration_grid(t0, t, n_steps)
    temp0 = np.asarray(temp0, dtype=np.float64)
    temps = np.empty((n_steps + 1,) + temp0.shape, dtype=np.float64)
    deltas = np.empty((n_steps,) + temp0.shape, dtype=np.float64)
    temps[0] = temp0
    for n in range(1, n_steps + 1):
        rate = np.asarray(rate_fn(float(times[n - 1]), temps[n - 1]), dtype=np.float64)
        if not np.all(np.isfinite(rate)):
            raise NumericError(f"non-finite cooling rate at substep {n} (t={times[n - 1]})")
        deltas[n - 1] = rate * dt
        temps[n] = temps[n - 1] + deltas[n - 1]
    return TempCurve(times=times, temps=temps, deltas=deltas)


def rk4_integrate(temp0, t0: float, t: float, n_steps: int, rate_fn: RateFn) -> TempCurve:
    """Classical fourth-order Runge-Kutta on a uniform grid; reference only,
    never part of the training path."""
    times, dt = _integration_grid(t0, t, n_steps)
    temp0 = np.asarray(temp0, dtype=np.float64)
    temps = np.empty((n_steps + 1,) + temp0.shape, dtype=np.float64)
    deltas = np.empty((n_steps,) + temp0.shape, dtype=np.float64)
    temps[0] = temp0
    for n in range(1, n_steps + 1):
        ta = float(times[n - 1])
        y = temps[n - 1]
        k1 = np.asarray(rate_fn(ta, y), dtype=np.float64)
        k2 = np.asarray(rate_fn(ta + 0.5 * dt, y + 0.5 * dt * k1), dtype=np.float64)
        k3 = np.asarray(rate_fn(ta + 0.5 * dt, y + 0.5 * dt * k2), dtype=np.float64)
        k4 = np.asarray(rate_fn(ta + dt, y + dt * k3), dtype=np.float64)
        inc = (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(inc)):
            raise NumericError(f"non-finite cooling rate at substep {n} (t={ta})")
        deltas[n - 1] = inc
        temps[n] = temps[n - 1] + inc
    return TempCurve(times=times, temps=temps, deltas=deltas)


def analytic_newton_cooling(temp0, ambient_k, c, h, t):
    """Closed form for pure convection: exponential relaxation to ambient."""
    if np.any(np.asarray(c) <= 0.0) or np.any(np.asarray(h) <= 0.0):
        raise ValidationError("newton cooling closed form needs c > 0 and h > 0")
    return ambient_k + (np.asarray(temp0, dtype=np.float64) - ambient_k) * np.exp(-c * np.asarray(t) / h)


def analytic_radiative_cooling(temp0, e, h, t):
    """Closed form for pure radiation: (T0^-3 + 3 E sigma t / H)^(-1/3)."""
    temp0 = np.asarray(temp0, dtype=np.float64)
    if np.any(temp0 <= 0.0):
        raise ValidationError("radiative cooling closed form needs T0 > 0")
    if np.any(np.asarray(e) <= 0.0) or np.any(np.asarray(h) <= 0.0):
        raise ValidationError("radiative cooling closed form needs e > 0 and h > 0")
    return (temp0**-3 + 3.0 * e * STEFAN_BOLTZMANN * np.asarray(t) / h) ** (-1.0 / 3.0)
