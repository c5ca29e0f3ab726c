"""Method of Moving Asymptotes for the bound formulation.

The problem handled is Svanberg's standard form

    minimize    f0(x) + a0 z + sum_i (c_i y_i + d_i y_i^2 / 2)
    subject to  f_i(x) - a_i z - y_i <= 0,   xmin <= x <= xmax,  y, z >= 0.

With ``f0 = 0``, ``a0 = 1`` and ``a_i = 1`` for the objective-like
constraints this is exactly "minimize the bound z over max_i f_i"; the
remaining constraints use ``a_i = 0``. The elastic variables ``y`` keep
every subproblem feasible and are reported back.
"""

from __future__ import annotations

import dataclasses

import numpy as np


@dataclasses.dataclass(frozen=True)
class MmaSettings:
    move: float = 0.25
    asyinit: float = 0.5
    asyincr: float = 1.2
    asydecr: float = 0.7
    albefa: float = 0.1
    asymin: float = 1e-4
    asymax: float = 10.0
    raa0: float = 1e-5
    a0: float = 1.0
    c: float = 1000.0
    d: float = 1.0
    epsimin: float = 1e-9

    def __post_init__(self):
        if not 0 < self.move <= 1:
            raise ValueError("move limit must lie in (0, 1]")
        if not (0 < self.asydecr < 1 < self.asyincr):
            raise ValueError("need 0 < asydecr < 1 < asyincr")
        if not self.asyinit > 0:
            raise ValueError("asyinit must be positive")


class MmaState:
    """Iteration history and asymptotes of one MMA run.

    Args:
      n: number of design variables.
      a: z-coefficient per constraint (1 for objective bounds, 0 otherwise).
      settings: algorithm constants.
    """

    def __init__(self, n: int, a, settings: MmaSettings = MmaSettings()):
        self.n = int(n)
        self.a = np.asarray(a, dtype=float).copy()
        self.m = len(self.a)
        self.settings = settings
        self.reset()

    def reset(self) -> "MmaState":
        """Forget the history; the next update starts from the initial spread."""
        self.iteration = 0
        self.xold1 = None
        self.xold2 = None
        self.low = None
        self.upp = None
        return self


@dataclasses.dataclass
class SubproblemResult:
    x_new: np.ndarray
    z: float
    y: np.ndarray            # elastic slack per constraint
    lam: np.ndarray          # constraint multipliers
    active: np.ndarray       # lam > 0 at the solution
    kkt_residual: float
    low: np.ndarray
    upp: np.ndarray


def _asymptotes(x, xmin, xmax, state: MmaState):
    s = state.settings
    rng = xmax - xmin
    if state.iteration <= 2 or state.low is None:
        return x - s.asyinit * rng, x + s.asyinit * rng
    osc = (x - state.xold1) * (state.xold1 - state.xold2)
    factor = np.ones_like(x)
    factor[osc > 0] = s.asyincr
    factor[osc < 0] = s.asydecr
    low = x - factor * (state.xold1 - state.low)
    upp = x + factor * (state.upp - state.xold1)
    low = np.clip(low, x - s.asymax * rng, x - s.asymin * rng)
    upp = np.clip(upp, x + s.asymin * rng, x + s.asymax * rng)
    return low, upp


def mma_update(x, fval, dfdx, xmin, xmax, state: MmaState, f0val: float = 0.0, df0dx=None) -> SubproblemResult:
    """One MMA step.

    Args:
      x: current design (n,).
      fval: constraint values f_i(x) (m,).
      dfdx: constraint gradients (m, n).
      xmin, xmax: box bounds (scalars or (n,)).
      state: mutable history; updated in place.
      f0val, df0dx: optional objective term; zero for the bound formulation.
    """
    s = state.settings
    x = np.asarray(x, dtype=float)
    n, m = state.n, state.m
    fval = np.asarray(fval, dtype=float).reshape(m)
    dfdx = np.asarray(dfdx, dtype=float).reshape(m, n)
    df0dx = np.zeros(n) if df0dx is None else np.asarray(df0dx, dtype=float).reshape(n)
    if not (np.all(np.isfinite(fval)) and np.all(np.isfinite(dfdx)) and np.all(np.isfinite(df0dx))):
        raise ValueError("non-finite constraint value or gradient passed to MMA")
    xmin = np.broadcast_to(np.asarray(xmin, dtype=float), (n,))
    xmax = np.broadcast_to(np.asarray(xmax, dtype=float), (n,))
    x = np.clip(x, xmin, xmax)
    state.iteration += 1
    low, upp = _asymptotes(x, xmin, xmax, state)
    rng = xmax - xmin

    alfa = np.maximum(np.maximum(low + s.albefa * (x - low), x - s.move * rng), xmin)
    beta = np.minimum(np.minimum(upp - s.albefa * (upp - x), x + s.move * rng), xmax)

    xmami_inv = 1.0 / np.maximum(rng, 1e-5)
    ux2 = (upp - x) ** 2
    xl2 = (x - low) ** 2
    p0 = np.maximum(df0dx, 0.0)
    q0 = np.maximum(-df0dx, 0.0)
    pq0 = 0.001 * (p0 + q0) + s.raa0 * xmami_inv
    p0 = (p0 + pq0) * ux2
    q0 = (q0 + pq0) * xl2
    P = np.maximum(dfdx, 0.0)
    Q = np.maximum(-dfdx, 0.0)
    PQ = 0.001 * (P + Q) + s.raa0 * xmami_inv[None, :]
    P = (P + PQ) * ux2[None, :]
    Q = (Q + PQ) * xl2[None, :]
    # z >= 0 in the standard form; shifting z by K (constraints f_i + a_i K)
    # keeps the bound variable strictly positive so that a zero optimum of
    # max f_i does not make the subproblem degenerate. Each approximation is
    # convex and tangent at x, so it cannot drop below its linearization on
    # [alfa, beta]; K lifts that lower bound to at least 1.
    reach = np.abs(dfdx) @ np.maximum(x - alfa, beta - x)
    shift = max(0.0, -np.min(fval - reach, initial=0.0, where=state.a > 0)) + 1.0
    b = P @ (1.0 / (upp - x)) + Q @ (1.0 / (x - low)) - (fval + state.a * shift)

    c = np.full(m, s.c)
    d = np.full(m, s.d)
    xn, y, z, lam, resid = subsolv(s.epsimin, low, upp, alfa, beta, p0, q0, P, Q, s.a0, state.a, b, c, d)

    state.xold2 = state.xold1
    state.xold1 = x.copy()
    state.low, state.upp = low, upp
    return SubproblemResult(xn, float(z) - shift, y, lam, lam > 1e-8, resid, low, upp)


def subsolv(epsimin, low, upp, alfa, beta, p0, q0, P, Q, a0, a, b, c, d):
    """Primal-dual interior point solver for the MMA subproblem.

    Returns (x, y, z, lam, max-norm KKT residual at the final epsilon).
    """
    n = len(low)
    m = len(a)
    een = np.ones(n)
    eem = np.ones(m)
    epsi = 1.0
    x = 0.5 * (alfa + beta)
    y = eem.copy()
    z = 1.0
    lam = eem.copy()
    xsi = np.maximum(een / (x - alfa), een)
    eta = np.maximum(een / (beta - x), een)
    mu = np.maximum(eem, 0.5 * c)
    zet = 1.0
    s = eem.copy()

    def residual(x, y, z, lam, xsi, eta, mu, zet, s, epsi):
        ux1 = upp - x
        xl1 = x - low
        plam = p0 + P.T @ lam
        qlam = q0 + Q.T @ lam
        gvec = P @ (1.0 / ux1) + Q @ (1.0 / xl1)
        rex = plam / ux1**2 - qlam / xl1**2 - xsi + eta
        rey = c + d * y - mu - lam
        rez = a0 - zet - a @ lam
        relam = gvec - a * z - y + s - b
        rexsi = xsi * (x - alfa) - epsi
        reeta = eta * (beta - x) - epsi
        remu = mu * y - epsi
        rezet = zet * z - epsi
        res = lam * s - epsi
        return np.concatenate([rex, rey, [rez], relam, rexsi, reeta, remu, [rezet], res])

    while True:
        r = residual(x, y, z, lam, xsi, eta, mu, zet, s, epsi)
        rnorm = np.linalg.norm(r)
        rmax = np.max(np.abs(r))
        it = 0
        while rmax > 0.9 * epsi and it < 200:
            it += 1
            ux1 = upp - x
            xl1 = x - low
            ux2, xl2 = ux1 * ux1, xl1 * xl1
            ux3, xl3 = ux1 * ux2, xl1 * xl2
            plam = p0 + P.T @ lam
            qlam = q0 + Q.T @ lam
            gvec = P @ (1.0 / ux1) + Q @ (1.0 / xl1)
            GG = P / ux2[None, :] - Q / xl2[None, :]
            dpsidx = plam / ux2 - qlam / xl2
            delx = dpsidx - epsi / (x - alfa) + epsi / (beta - x)
            dely = c + d * y - lam - epsi / y
            delz = a0 - a @ lam - epsi / z
            dellam = gvec - a * z - y - b + epsi / lam
            diagx = 2 * (plam / ux3 + qlam / xl3) + xsi / (x - alfa) + eta / (beta - x)
            diagy = d + mu / y
            diaglamyi = s / lam + 1.0 / diagy
            if m < n:
                blam = dellam + dely / diagy - GG @ (delx / diagx)
                Alam = np.diag(diaglamyi) + (GG / diagx[None, :]) @ GG.T
                AA = np.block([[Alam, a[:, None]], [a[None, :], np.array([[-zet / z]])]])
                sol = np.linalg.solve(AA, np.concatenate([blam, [delz]]))
                dlam, dz = sol[:m], sol[m]
                dx = -delx / diagx - (GG.T @ dlam) / diagx
            else:
                dellamyi = dellam + dely / diagy
                Axx = np.diag(diagx) + (GG.T / diaglamyi[None, :]) @ GG
                azz = zet / z + a @ (a / diaglamyi)
                axz = -GG.T @ (a / diaglamyi)
                bx = delx + GG.T @ (dellamyi / diaglamyi)
                bz = delz - a @ (dellamyi / diaglamyi)
                AA = np.block([[Axx, axz[:, None]], [axz[None, :], np.array([[azz]])]])
                sol = np.linalg.solve(AA, -np.concatenate([bx, [bz]]))
                dx, dz = sol[:n], sol[n]
                dlam = (GG @ dx) / diaglamyi - dz * (a / diaglamyi) + dellamyi / diaglamyi
            dy = -dely / diagy + dlam / diagy
            dxsi = -xsi + epsi / (x - alfa) - (xsi * dx) / (x - alfa)
            deta = -eta + epsi / (beta - x) + (eta * dx) / (beta - x)
            dmu = -mu + epsi / y - (mu * dy) / y
            dzet = -zet + epsi / z - zet * dz / z
            ds = -s + epsi / lam - (s * dlam) / lam

            xx = np.concatenate([y, [z], lam, xsi, eta, mu, [zet], s])
            dxx = np.concatenate([dy, [dz], dlam, dxsi, deta, dmu, [dzet], ds])
            stm = max(np.max(-1.01 * dxx / xx), np.max(-1.01 * dx / (x - alfa)),
                      np.max(1.01 * dx / (beta - x)), 1.0)
            steg = 1.0 / stm
            old = (x, y, z, lam, xsi, eta, mu, zet, s)
            step = (dx, dy, dz, dlam, dxsi, deta, dmu, dzet, ds)
            resinew = 2 * rnorm
            itto = 0
            while resinew > rnorm and itto < 50:
                itto += 1
                x, y, z, lam, xsi, eta, mu, zet, s = (o + steg * dd for o, dd in zip(old, step))
                r = residual(x, y, z, lam, xsi, eta, mu, zet, s, epsi)
                resinew = np.linalg.norm(r)
                steg /= 2
            rnorm = resinew
            rmax = np.max(np.abs(r))
        if epsi <= epsimin * (1 + 1e-12):
            break
        epsi *= 0.1
    return x, y, float(z), lam, float(rmax)
