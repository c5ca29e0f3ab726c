import numpy as np
import pytest

from momtopo.mma import MmaSettings, MmaState, mma_update


def run_1var(x0, iters=30, settings=MmaSettings()):
    st = MmaState(1, [1.0], settings)
    x = np.array([x0])
    for _ in range(iters):
        r = mma_update(x, [(x[0] - 0.3) ** 2], [[2 * (x[0] - 0.3)]], 0.0, 1.0, st)
        assert np.max(np.abs(r.x_new - x)) <= 0.25 + 1e-14
        x = r.x_new
    return x[0], r


@pytest.mark.parametrize("x0", [0.0, 0.1, 0.5, 0.9, 1.0])
def test_one_variable_minimax(x0):
    x, r = run_1var(x0)
    assert abs(x - 0.3) <= 1e-4
    assert abs(r.z - (x - 0.3) ** 2) < 1e-6


def five_var_problem():
    c = np.array([0.8, 0.6, 0.5, 0.3, 0.9])
    S = 2.0
    # the sum constraint is active: x* = c - (sum c - S)/5, all inside [0, 1]
    return c, S, c - (c.sum() - S) / 5


def test_five_variable_kkt():
    c, S, xstar = five_var_problem()
    st = MmaState(5, [1.0, 0.0])
    x = np.full(5, 0.2)
    for _ in range(60):
        r = mma_update(x, [((x - c) ** 2).sum(), x.sum() - S], [2 * (x - c), np.ones(5)], 0.0, 1.0, st)
        assert np.max(np.abs(r.x_new - x)) <= 0.25 + 1e-14
        x = r.x_new
    assert np.max(np.abs(x - xstar)) <= 1e-3
    # multiplier of the sum constraint from stationarity: 2 (x - c) * lam0 + lam1 = 0 with lam0 = 1
    assert np.isclose(r.lam[1], 2 * (c.sum() - S) / 5, rtol=1e-2)
    assert r.active[1]


def test_move_limit_random_problems(rng):
    for trial in range(20):
        n, m = 12, 3
        st = MmaState(n, [1.0, 1.0, 0.0], MmaSettings(move=0.25))
        x = rng.uniform(size=n)
        for _ in range(8):
            f = rng.normal(size=m)
            g = rng.normal(scale=10, size=(m, n))
            r = mma_update(x, f, g, 0.0, 1.0, st)
            assert np.max(np.abs(r.x_new - x)) <= 0.25 + 1e-14
            assert np.all(r.low < x) and np.all(x < r.upp)
            assert np.all((r.x_new >= 0) & (r.x_new <= 1))
            assert r.kkt_residual < 1e-6
            assert np.all(r.y >= 0)
            x = r.x_new


def test_move_limit_scales_with_box():
    st = MmaState(2, [1.0])
    x = np.array([0.0, 5.0])
    r = mma_update(x, [1.0], [[-100.0, 100.0]], np.array([-10.0, 0.0]), np.array([10.0, 10.0]), st)
    assert abs(r.x_new[0] - x[0]) <= 0.25 * 20 + 1e-12
    assert abs(r.x_new[1] - x[1]) <= 0.25 * 10 + 1e-12


def test_reset_and_determinism():
    st = MmaState(1, [1.0])
    first = []
    x = np.array([0.9])
    for _ in range(6):
        r = mma_update(x, [(x[0] - 0.3) ** 2], [[2 * (x[0] - 0.3)]], 0.0, 1.0, st)
        first.append(r.x_new.copy())
        x = r.x_new
    st.reset()
    st.reset()
    assert st.iteration == 0 and st.low is None
    x = np.array([0.9])
    for ref in first:
        r = mma_update(x, [(x[0] - 0.3) ** 2], [[2 * (x[0] - 0.3)]], 0.0, 1.0, st)
        assert np.array_equal(r.x_new, ref)
        x = r.x_new


def test_initial_asymptote_spread():
    st = MmaState(3, [1.0])
    x = np.array([0.2, 0.5, 0.7])
    r = mma_update(x, [0.1], [[1.0, -1.0, 0.5]], 0.0, 1.0, st)
    assert np.allclose(r.low, x - 0.5) and np.allclose(r.upp, x + 0.5)


def test_rejects_nonfinite():
    st = MmaState(2, [1.0])
    with pytest.raises(ValueError):
        mma_update(np.zeros(2), [np.nan], [[1.0, 1.0]], 0.0, 1.0, st)


def test_settings_validation():
    with pytest.raises(ValueError):
        MmaSettings(move=0.0)
    with pytest.raises(ValueError):
        MmaSettings(asydecr=1.2)
