"""Multirotor power model: thrust, drag, pitch, induced speed, hover and flight power.

Units: masses kg, speeds m/s, forces N, powers W.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

from scipy.optimize import brentq


class InducedSpeedError(ArithmeticError):
    """Root finding for the induced speed did not converge."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class DroneSpec:
    n: int
    D: float
    m_db: float
    m_b: float
    c_db: float
    c_b: float
    c_p: float
    A_db: float
    A_b: float
    A_p: float
    g: float = 9.81
    rho: float = 1.225
    eta: float = 0.7
    sigma: float = 0.2

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("rotor count n must be >= 1")
        if not self.D > 0:
            raise ValueError("rotor diameter D must be > 0")
        for name in ("m_db", "m_b", "c_db", "c_b", "c_p", "A_db", "A_b", "A_p"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not 0 < self.eta <= 1:
            raise ValueError("eta must lie in (0, 1]")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if not self.rho > 0 or not self.g > 0:
            raise ValueError("rho and g must be > 0")

    @property
    def disk_term(self) -> float:
        """pi * n * D^2 * rho, shared by the hover and induced-speed formulas."""
        return math.pi * self.n * self.D ** 2 * self.rho

    @property
    def overhead(self) -> float:
        return (1.0 + self.sigma) / self.eta


def octocopter() -> DroneSpec:
    """Octocopter used throughout the experiments (10 kg body, 6 kg battery)."""
    return DroneSpec(
        n=8, D=0.432, m_db=10.0, m_b=6.0,
        c_db=1.49, c_b=1.0, c_p=2.2,
        A_db=0.224, A_b=0.015, A_p=0.0929,
    )


@dataclass(frozen=True)
class FlightCondition:
    m_p: float = 0.0
    v: float = 0.0

    def __post_init__(self):
        if self.m_p < 0:
            raise ValueError("package mass m_p must be >= 0")
        if self.v < 0:
            raise ValueError("speed v must be >= 0")


class Forces(NamedTuple):
    F_g: float
    F_d: float
    T: float
    alpha: float


def forces(spec: DroneSpec, cond: FlightCondition) -> Forces:
    F_g = spec.g * (spec.m_db + spec.m_b + cond.m_p)
    drag_area = spec.c_db * spec.A_db + spec.c_b * spec.A_b
    if cond.m_p > 0:
        drag_area += spec.c_p * spec.A_p
    F_d = 0.5 * spec.rho * cond.v ** 2 * drag_area
    return Forces(F_g, F_d, F_g + F_d, math.atan2(F_d, F_g))


def induced_residual(spec: DroneSpec, cond: FlightCondition, v_i: float) -> float:
    f = forces(spec, cond)
    v = cond.v
    root = math.hypot(v * math.cos(f.alpha), v * math.sin(f.alpha) + v_i)
    return v_i - 2.0 * f.T / (spec.disk_term * root)


def induced_speed(spec: DroneSpec, cond: FlightCondition, tol: float = 1e-12) -> float:
    """Positive root of the momentum-theory equation for the rotor inflow speed."""
    f = forces(spec, cond)
    v_hover = math.sqrt(2.0 * f.T / spec.disk_term)
    if cond.v == 0:
        return v_hover
    # residual < 0 near 0 and >= 0 at the hover value, and increasing in between
    if induced_residual(spec, cond, v_hover) <= 0.0:
        return v_hover  # only reachable through rounding at tiny v
    try:
        return brentq(lambda x: induced_residual(spec, cond, x), 0.0, v_hover,
                      xtol=tol, rtol=4 * 2.0 ** -52, maxiter=200)
    except (RuntimeError, ValueError) as exc:
        res = induced_residual(spec, cond, v_hover)
        raise InducedSpeedError(f"induced speed did not converge: {exc}", res) from exc


def hover_power(spec: DroneSpec, m_p: float) -> float:
    if m_p < 0:
        raise ValueError("package mass m_p must be >= 0")
    T = forces(spec, FlightCondition(m_p, 0.0)).T
    p_min = T ** 1.5 / math.sqrt(0.5 * spec.disk_term)
    return p_min * spec.overhead


def flight_power(spec: DroneSpec, cond: FlightCondition) -> float:
    f = forces(spec, cond)
    v_i = induced_speed(spec, cond)
    return f.T * (cond.v * math.sin(f.alpha) + v_i) * spec.overhead


def energy_per_km(spec: DroneSpec, m_p: float, v: float) -> float:
    """Flight energy per kilometre in kJ (W / (m/s) = J/m = kJ/km)."""
    if v <= 0:
        raise ValueError("speed must be > 0")
    return flight_power(spec, FlightCondition(m_p, v)) / v


def flight_and_wait_energy(spec: DroneSpec, m_p: float, v: float,
                           distance_m: float = 1000.0, wait_until_s: float = 180.0) -> float:
    """kJ to fly ``distance_m`` then hover with the package until ``wait_until_s`` after take-off."""
    t_fly = distance_m / v
    e_fly = flight_power(spec, FlightCondition(m_p, v)) * t_fly
    e_hover = hover_power(spec, m_p) * max(wait_until_s - t_fly, 0.0)
    return (e_fly + e_hover) / 1000.0


def power_curves(spec: DroneSpec, masses, speeds) -> list[dict]:
    """Rows of (m_p, v, P^F, P^H, kJ/km, 1000 m + wait energy) for the requested grid."""
    rows = []
    for m in masses:
        p_h = hover_power(spec, m)
        for v in speeds:
            p_f = flight_power(spec, FlightCondition(m, v))
            rows.append({
                "m_p_kg": m,
                "v_mps": v,
                "flight_power_W": p_f,
                "hover_power_W": p_h,
                "energy_per_km_kJ": p_f / v if v > 0 else math.inf,
                "energy_1000m_wait180_kJ": flight_and_wait_energy(spec, m, v) if v > 0 else math.inf,
            })
    return rows
