"""Quadrature rules on triangles and analytic static potential integrals."""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre


@lru_cache(maxsize=None)
def triangle_rule(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Barycentric points (n, 3) and weights (n,) summing to one.

    Degrees 1, 2 and 5 use the classic 1-, 3- and 7-point symmetric rules;
    anything else falls back to a collapsed Gauss-Jacobi product rule exact
    for polynomials of the requested degree.
    """
    if degree <= 1:
        return np.array([[1 / 3, 1 / 3, 1 / 3]]), np.array([1.0])
    if degree == 2:
        b = np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]])
        return b, np.full(3, 1 / 3)
    if degree == 5:
        a1, b1 = 0.059715871789770, 0.470142064105115
        a2, b2 = 0.797426985353087, 0.101286507323456
        w1, w2 = 0.132394152788506, 0.125939180544827
        pts = [[1 / 3, 1 / 3, 1 / 3]]
        pts += [[a1, b1, b1], [b1, a1, b1], [b1, b1, a1]]
        pts += [[a2, b2, b2], [b2, a2, b2], [b2, b2, a2]]
        return np.array(pts), np.array([0.225] + [w1] * 3 + [w2] * 3)
    n = (degree + 2) // 2
    # u in [0,1] along the collapsed direction carries the (1-u) Jacobian
    xu, wu = roots_jacobi(n, 1.0, 0.0)
    xv, wv = roots_legendre(n)
    u = 0.5 * (xu + 1.0)
    wu = wu / 4.0
    v = 0.5 * (xv + 1.0)
    wv = wv / 2.0
    U, V = np.meshgrid(u, v, indexing="ij")
    s = U.ravel()
    t = ((1.0 - U) * V).ravel()
    w = np.outer(wu, wv).ravel() * 2.0
    return np.column_stack([1.0 - s - t, s, t]), w


def map_points(corners: np.ndarray, bary: np.ndarray) -> np.ndarray:
    """Physical points (..., n, 3) from corners (..., 3, 3)."""
    return np.einsum("pi,...ij->...pj", bary, corners)


def static_potentials(obs: np.ndarray, corners: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form integrals of 1/R and r'/R over flat triangles.

    Args:
      obs: (P, 3) observation points.
      corners: (P, 3, 3) source triangle corners, counter-clockwise.

    Returns:
      (P,) values of the integral of 1/|r - r'| over the triangle and
      (P, 3) values of the integral of r'/|r - r'|.
    """
    obs = np.asarray(obs, dtype=float)
    v0, v1, v2 = corners[:, 0], corners[:, 1], corners[:, 2]
    nrm = np.cross(v1 - v0, v2 - v0)
    nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
    d = np.einsum("pj,pj->p", obs - v0, nrm)
    rho = obs - d[:, None] * nrm
    ad = np.abs(d)
    d2 = d * d

    i0 = np.zeros(len(obs))
    irho = np.zeros((len(obs), 3))
    scale2 = np.einsum("pj,pj->p", v1 - v0, v1 - v0)
    for start, end in ((v1, v2), (v2, v0), (v0, v1)):
        edge = end - start
        elen = np.linalg.norm(edge, axis=1, keepdims=True)
        lhat = edge / elen
        uhat = np.cross(lhat, nrm)
        lp = np.einsum("pj,pj->p", end - rho, lhat)
        lm = np.einsum("pj,pj->p", start - rho, lhat)
        t = np.einsum("pj,pj->p", start - rho, uhat)
        r02 = t * t + d2
        rp = np.sqrt(lp * lp + r02)
        rm = np.sqrt(lm * lm + r02)
        # (R + l)(R - l) = R0^2 avoids cancellation for l < 0
        with np.errstate(divide="ignore", invalid="ignore"):
            num = np.where(lp >= 0, rp + lp, r02 / (rp - lp))
            den = np.where(lm >= 0, rm + lm, r02 / (rm - lm))
            on_line = r02 <= 1e-28 * scale2
            f = np.where(on_line, 0.0, np.log(np.where(on_line, 1.0, num / np.where(on_line, 1.0, den))))
            atan = np.arctan2(t * lp, r02 + ad * rp) - np.arctan2(t * lm, r02 + ad * rm)
        i0 += t * f - ad * np.where(on_line, 0.0, atan)
        irho += 0.5 * uhat * (r02 * f + lp * rp - lm * rm)[:, None]
    return i0, irho + rho * i0[:, None]
