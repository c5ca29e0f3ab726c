import mpmath
import numpy as np
import pytest

from momtopo.material import (InterpolationSpec, assemble_Zrho, d_ramp, d_surface_resistivity, ramp,
                              surface_resistivity)
from momtopo.mesh import build_rwg, generate_plate
from momtopo.operators import assemble_material_elements


@pytest.fixture(scope="module")
def psi():
    mesh = generate_plate(1.0, 0.6, 3, 2)
    return assemble_material_elements(mesh, build_rwg(mesh))


def test_ramp_values():
    assert ramp(0.0) == 0.0 and ramp(1.0) == 1.0
    assert np.isclose(ramp(0.5, 1.0), 1 / 3, rtol=1e-15)
    x = np.linspace(0, 1, 11)
    assert np.array_equal(ramp(x, 0.0), x)


def test_ramp_derivative_fd():
    for p in (0.0, 1.0, 3.0):
        for x in (0.1, 0.5, 0.9):
            fd = (ramp(x + 1e-6, p) - ramp(x - 1e-6, p)) / 2e-6
            assert np.isclose(d_ramp(x, p), fd, rtol=1e-8)


def test_resistivity_endpoints():
    assert np.isclose(surface_resistivity(0.0), 1e5, rtol=1e-15)
    assert np.isclose(surface_resistivity(1.0), 1.0, rtol=1e-15)


def test_resistivity_midpoint_high_precision():
    mpmath.mp.dps = 40
    ref = mpmath.mpf(10) ** 5 * (mpmath.mpf(10) ** -5) ** (mpmath.mpf(1) / 3)
    assert abs(surface_resistivity(0.5) - float(ref)) <= 1e-12 * float(ref)
    assert abs(float(ref) - 2154.43) < 5e-3


def test_resistivity_monotone():
    rs = surface_resistivity(np.linspace(0, 1, 1000))
    assert np.all(np.diff(rs) < 0)
    assert rs.min() >= 1.0 - 1e-12 and rs.max() <= 1e5 * (1 + 1e-12)


@pytest.mark.parametrize("x", [0.1, 0.5, 0.9])
def test_resistivity_derivative_fd(x):
    h = 1e-6
    fd = (surface_resistivity(x + h) - surface_resistivity(x - h)) / (2 * h)
    assert np.isclose(d_surface_resistivity(x), fd, rtol=1e-6)


def test_resistivity_derivative_sign_and_linear_case():
    x = np.linspace(0.01, 0.99, 99)
    assert np.all(d_surface_resistivity(x) < 0)
    spec = InterpolationSpec(p=0.0)
    assert np.array_equal(d_surface_resistivity(x, spec), np.log(1e-5) * surface_resistivity(x, spec))


def test_domain_errors():
    with pytest.raises(ValueError):
        surface_resistivity(1.2)
    with pytest.raises(ValueError):
        ramp(-0.1)
    with pytest.raises(ValueError):
        surface_resistivity(np.nan)
    with pytest.raises(ValueError):
        InterpolationSpec(Omega_lo=10, Omega_hi=1)
    with pytest.raises(ValueError):
        InterpolationSpec(p=-1)


def test_zrho_all_metal_is_gram(psi):
    Z = assemble_Zrho(np.ones(len(psi)), psi)
    assert np.allclose(Z, psi.gram(), rtol=1e-14, atol=0)


def test_zrho_locality(psi):
    ones = np.ones(len(psi))
    base = assemble_Zrho(ones, psi)
    for t in range(len(psi)):
        rho = ones.copy()
        rho[t] = 0.0
        diff = assemble_Zrho(rho, psi) - base
        rows, cols = np.nonzero(diff)
        allowed = set(psi.index[t][psi.index[t] >= 0].tolist())
        assert set(rows.tolist()) <= allowed and set(cols.tolist()) <= allowed


def test_zrho_linear_in_resistivity(psi, rng):
    a, b = rng.uniform(size=(2, len(psi)))
    lhs = psi.weighted_sum(2 * surface_resistivity(a) + 3 * surface_resistivity(b))
    rhs = 2 * assemble_Zrho(a, psi) + 3 * assemble_Zrho(b, psi)
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-12 * np.abs(rhs).max())


def test_zrho_psd_random(psi, rng):
    for _ in range(10):
        Z = assemble_Zrho(rng.uniform(size=len(psi)), psi)
        assert np.linalg.eigvalsh(Z).min() >= -1e-10 * np.linalg.norm(Z, 2)


def test_zrho_shape_check(psi):
    with pytest.raises(ValueError):
        assemble_Zrho(np.ones(3), psi)
