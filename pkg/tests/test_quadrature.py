import numpy as np
import pytest
from math import factorial
from scipy.integrate import dblquad

from momtopo.quadrature import map_points, static_potentials, triangle_rule


def monomial_exact(i, j):
    """Integral of s^i t^j over the unit reference triangle."""
    return factorial(i) * factorial(j) / factorial(i + j + 2)


@pytest.mark.parametrize("degree", [1, 2, 3, 4, 5, 6, 8, 12])
def test_rules_integrate_monomials(degree):
    bary, w = triangle_rule(degree)
    assert np.isclose(w.sum(), 1.0, atol=1e-14)
    assert np.allclose(bary.sum(axis=1), 1.0)
    s, t = bary[:, 1], bary[:, 2]
    for i in range(degree + 1):
        for j in range(degree + 1 - i):
            approx = 0.5 * np.sum(w * s**i * t**j)
            assert np.isclose(approx, monomial_exact(i, j), rtol=1e-12, atol=1e-15), (i, j)


def test_map_points_centroid():
    corners = np.array([[[0, 0, 0], [1, 0, 0], [0, 2, 0]]], dtype=float)
    p = map_points(corners, np.array([[1 / 3, 1 / 3, 1 / 3]]))
    assert np.allclose(p[0, 0], [1 / 3, 2 / 3, 0])


TRI = np.array([[0.0, 0.0, 0.0], [1.0, 0.1, 0.0], [0.3, 0.8, 0.0]])


def _dblquad(f, corners):
    """Integral over a triangle with adaptive quadrature in (s, t)."""
    v0, v1, v2 = corners
    jac = np.linalg.norm(np.cross(v1 - v0, v2 - v0))

    def g(t, s):
        return f(v0 + s * (v1 - v0) + t * (v2 - v0))

    return dblquad(g, 0, 1, 0, lambda s: 1 - s, epsabs=1e-13, epsrel=1e-12)[0] * jac


@pytest.mark.parametrize("obs", [[0.4, 0.3, 0.5], [2.0, -1.0, 0.2], [0.4, 0.3, -0.05], [1.5, 1.5, 0.0]])
def test_static_potentials_off_triangle(obs):
    obs = np.array(obs)
    i0, i1 = static_potentials(obs[None], TRI[None])
    ref0 = _dblquad(lambda r: 1 / np.linalg.norm(obs - r), TRI)
    assert np.isclose(i0[0], ref0, rtol=1e-9)
    for k in range(3):
        refk = _dblquad(lambda r: r[k] / np.linalg.norm(obs - r), TRI)
        assert np.isclose(i1[0, k], refk, rtol=1e-8, atol=1e-12)


def _polar_oracle(obs, corners, n=400):
    """In-plane interior point: integrate 1/R in polar coordinates about obs.

    The radial integral of (1/R) R dR is the distance to the boundary, so
    the potential is the angular integral of the boundary distance.
    """
    ang = np.linspace(0, 2 * np.pi, n, endpoint=False)
    ang_nodes, ang_w = np.polynomial.legendre.leggauss(64)
    total = 0.0
    total1 = np.zeros(3)
    # split the angle range at the corner directions so the integrand is smooth
    dirs = np.sort(np.mod([np.arctan2(*(c - obs)[[1, 0]]) for c in corners], 2 * np.pi))
    bounds = np.concatenate([dirs, [dirs[0] + 2 * np.pi]])
    for a, b in zip(bounds[:-1], bounds[1:]):
        th = 0.5 * (b - a) * ang_nodes + 0.5 * (a + b)
        w = 0.5 * (b - a) * ang_w
        for thk, wk in zip(th, w):
            u = np.array([np.cos(thk), np.sin(thk), 0.0])
            dist = np.inf
            for i in range(3):
                p, q = corners[i], corners[(i + 1) % 3]
                M = np.array([[u[0], p[0] - q[0]], [u[1], p[1] - q[1]]])
                try:
                    rr, ss = np.linalg.solve(M, (p - obs)[:2])
                except np.linalg.LinAlgError:
                    continue
                if rr > 1e-14 and -1e-12 <= ss <= 1 + 1e-12:
                    dist = min(dist, rr)
            total += wk * dist
            total1 += wk * (obs * dist + u * dist**2 / 2)
    return total, total1


def test_static_potentials_in_plane_interior_point():
    obs = np.array([0.45, 0.3, 0.0])
    i0, i1 = static_potentials(obs[None], TRI[None])
    ref0, ref1 = _polar_oracle(obs, TRI)
    assert np.isclose(i0[0], ref0, rtol=1e-10)
    assert np.allclose(i1[0], ref1, rtol=1e-10, atol=1e-13)


def test_static_potentials_at_vertex_and_edge_are_finite():
    pts = np.array([TRI[0], 0.5 * (TRI[0] + TRI[1]), TRI.mean(axis=0)])
    i0, i1 = static_potentials(pts, np.repeat(TRI[None], 3, axis=0))
    assert np.all(np.isfinite(i0)) and np.all(np.isfinite(i1))
    ref, _ = _polar_oracle(pts[2], TRI)
    assert np.isclose(i0[2], ref, rtol=1e-10)
