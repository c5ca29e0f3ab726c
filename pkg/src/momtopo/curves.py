"""Spherical helix and loxodrome curves used for design comparisons."""

from __future__ import annotations

import dataclasses

import numpy as np

KINDS = ("helix", "loxodrome")


def helix_point(M: float, R: float, t):
    """R [f cos 2 pi M t, f sin 2 pi M t, 2t - 1] with f = sqrt(1 - 4 (t - 1/2)^2).

    ``t`` runs from the south pole (0) to the north pole (1).
    """
    t = np.asarray(t, dtype=float)
    if np.any(~np.isfinite(t)) or np.any(t < 0) or np.any(t > 1):
        raise ValueError("helix parameter t must lie in [0, 1]")
    f = np.sqrt(np.clip(1.0 - 4.0 * (t - 0.5) ** 2, 0.0, None))
    ang = 2 * np.pi * M * t
    return R * np.stack([f * np.cos(ang), f * np.sin(ang), 2 * t - 1], axis=-1)


def loxodrome_point(gamma: float, R: float, t):
    """R [cos t / cosh(gamma t), sin t / cosh(gamma t), tanh(gamma t)]."""
    t = np.asarray(t, dtype=float)
    if np.any(~np.isfinite(t)):
        raise ValueError("loxodrome parameter must be finite")
    ch = np.cosh(gamma * t)
    return R * np.stack([np.cos(t) / ch, np.sin(t) / ch, np.tanh(gamma * t)], axis=-1)


def loxodrome_tangent(gamma: float, t, R: float = 1.0):
    """Speed |dr/dt| and unit tangent in the (r, theta, phi) basis.

    The speed is R sqrt(1 + gamma^2) / cosh(gamma t); the unit components
    (0, -gamma, 1) / sqrt(1 + gamma^2) do not depend on t, which is the
    constant meridian-crossing angle.
    """
    t = np.asarray(t, dtype=float)
    s = np.sqrt(1.0 + gamma * gamma)
    speed = R * s / np.cosh(gamma * t)
    comps = np.broadcast_to(np.array([0.0, -gamma / s, 1.0 / s]), t.shape + (3,))
    return speed, comps


def spherical_basis(points):
    """Unit vectors (r_hat, theta_hat, phi_hat) at Cartesian points, each (..., 3)."""
    p = np.asarray(points, dtype=float)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    r = np.linalg.norm(p, axis=-1)
    theta = np.arccos(np.clip(z / r, -1, 1))
    phi = np.arctan2(y, x)
    st, ct, sp, cp = np.sin(theta), np.cos(theta), np.sin(phi), np.cos(phi)
    rh = np.stack([st * cp, st * sp, ct], axis=-1)
    th = np.stack([ct * cp, ct * sp, -st], axis=-1)
    ph = np.stack([-sp, cp, np.zeros_like(sp)], axis=-1)
    return rh, th, ph


def meridian_angle(points, tangents):
    """Angle (rad) between a tangent and the local meridian direction theta_hat."""
    _, th, ph = spherical_basis(points)
    tang = np.asarray(tangents, dtype=float)
    return np.arctan2(np.abs(np.einsum("...i,...i", tang, ph)), np.abs(np.einsum("...i,...i", tang, th)))


def stereographic(points, R: float = 1.0):
    """Projection from the north pole onto the equatorial plane, (..., 2)."""
    p = np.asarray(points, dtype=float)
    return R * p[..., :2] / (R - p[..., 2:3])


@dataclasses.dataclass(frozen=True)
class SphericalCurve:
    """Sampled helix (param = M) or loxodrome (param = gamma).

    Helix samples cover t in [0, 1]; loxodrome samples cover
    t in [-t_max, t_max]. ``arms=2`` appends the copy rotated by pi about z.
    """

    kind: str
    param: float
    R: float = 1.0
    samples: int = 201
    t_max: float = 3 * np.pi
    arms: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if not self.R > 0:
            raise ValueError("R must be positive")
        if int(self.samples) != self.samples or self.samples < 2:
            raise ValueError("samples must be an integer >= 2")
        if self.arms not in (1, 2):
            raise ValueError("arms must be 1 or 2")
        if not np.isfinite(self.param) or (self.kind == "loxodrome" and self.param == 0):
            raise ValueError("invalid curve parameter")

    def parameter(self) -> np.ndarray:
        if self.kind == "helix":
            return np.linspace(0.0, 1.0, self.samples)
        return np.linspace(-self.t_max, self.t_max, self.samples)

    def points(self) -> np.ndarray:
        t = self.parameter()
        if self.kind == "helix":
            return helix_point(self.param, self.R, t)
        return loxodrome_point(self.param, self.R, t)

    def arm_polylines(self) -> list[tuple[np.ndarray, np.ndarray]]:
        t, p = self.parameter(), self.points()
        out = [(t, p)]
        if self.arms == 2:
            out.append((t, p * np.array([-1.0, -1.0, 1.0])))
        return out
