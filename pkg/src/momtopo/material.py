"""RAMP-like resistivity interpolation and the material impedance matrix."""

from __future__ import annotations

import dataclasses

import numpy as np

from .operators import MaterialElements


@dataclasses.dataclass(frozen=True)
class InterpolationSpec:
    """Surface resistivity bounds (ohm/sq) and the RAMP penalty.

    ``Omega_lo`` is the metal side (rho = 1), ``Omega_hi`` the vacuum side.
    """

    Omega_lo: float = 1.0
    Omega_hi: float = 1e5
    p: float = 1.0

    def __post_init__(self):
        if not (self.Omega_hi > self.Omega_lo > 0):
            raise ValueError("need Omega_hi > Omega_lo > 0")
        if not self.p >= 0:
            raise ValueError("RAMP penalty p must be non-negative")

    @property
    def log_ratio(self) -> float:
        return float(np.log(self.Omega_lo / self.Omega_hi))


def _check_density(rho) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    if np.any(~np.isfinite(rho)) or np.any(rho < 0) or np.any(rho > 1):
        raise ValueError("densities must lie in [0, 1]")
    return rho


def ramp(rho, p: float = 1.0):
    """f(rho) = rho / (1 + p (1 - rho))."""
    rho = _check_density(rho)
    return rho / (1.0 + p * (1.0 - rho))


def d_ramp(rho, p: float = 1.0):
    rho = _check_density(rho)
    return (1.0 + p) / (1.0 + p * (1.0 - rho)) ** 2


def surface_resistivity(rho_bar, spec: InterpolationSpec = InterpolationSpec()):
    """Rs = Omega_hi * (Omega_lo / Omega_hi) ** f(rho_bar)."""
    return spec.Omega_hi * np.exp(spec.log_ratio * ramp(rho_bar, spec.p))


def d_surface_resistivity(rho_bar, spec: InterpolationSpec = InterpolationSpec()):
    """Derivative of :func:`surface_resistivity` with respect to rho_bar."""
    return spec.log_ratio * d_ramp(rho_bar, spec.p) * surface_resistivity(rho_bar, spec)


def assemble_Zrho(rho_bar, Psi: MaterialElements, spec: InterpolationSpec = InterpolationSpec()) -> np.ndarray:
    """Dense material impedance matrix sum_t Rs(rho_bar_t) Psi_t."""
    rho_bar = np.asarray(rho_bar, dtype=float)
    if rho_bar.shape != (len(Psi),):
        raise ValueError(f"expected {len(Psi)} densities, got shape {rho_bar.shape}")
    return Psi.weighted_sum(surface_resistivity(rho_bar, spec))
