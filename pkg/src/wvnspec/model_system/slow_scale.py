"""Slow-scale limit y = n |eps| of the model system.

The limit problem for h_s (s = sign of eps) is the Volterra equation

    h1(y) = h01 + s beta int_0^y sinc(t) h2(t) dt
    h2(y) = h02 + s beta int_0^y exp(-2 beta int_t^y cos(r)/r dr) sinc(t) h1(t) dt

equivalently h' = (beta/y) [[0, s sin y], [s sin y, -2 cos y]] (h - (0, h02)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.special import roots_legendre, sici

from ..errors import ConfigError, ConvergenceError
from .recursion import ModelParams, cos_integral_step, run_recursion, theta_map

EULER_GAMMA = 0.57721566490153286


def _sign(sign) -> int:
    if sign in (1, "+", "plus"):
        return 1
    if sign in (-1, "-", "minus"):
        return -1
    raise ConfigError(f"sign must be + or -; got {sign!r}")


def slow_limit(beta: float, sign, Y: float, h, h02: complex = 0.0) -> np.ndarray:
    """Estimate h(inf) from h(Y) by the tail propagator to O(1/Y^2).

    First order: the integrals of sin/t and cos/t beyond Y.  Second order: the
    non-oscillating average of the iterated integral, -(s beta^2 / Y) [[0, 1], [-1, 0]]
    acting on (h1, h2 - h02).
    """
    s = _sign(sign)
    si, ci = sici(Y)
    tail = s * beta * (math.pi / 2 - si)
    sec = s * beta * beta / Y
    h = np.asarray(h)
    d = h[..., 1] - h02
    out = np.empty(h.shape, dtype=np.result_type(h, complex))
    out[..., 0] = h[..., 0] + tail * h[..., 1] - sec * d
    out[..., 1] = h02 + d * (1 + 2 * beta * ci) + tail * h[..., 0] + sec * h[..., 0]
    return out


# --- Volterra channel ------------------------------------------------------------

def _volterra_basis(beta: float, s: int, y_max: float, step: float):
    """Basis solution H[j] (h = H[j] @ h0) on the uniform grid by product trapezoid.

    The h2 kernel is split as E(y) t^p G(t) with p = 2 beta, E = exp(-p Ci(y))
    and G = exp(p (Ci(t) - log t)) smooth; t^p is integrated exactly against the
    linear interpolant (Gauss-Legendre weights on each cell, closed form on the first).
    """
    n = int(round(y_max / step))
    if n < 2:
        raise ConfigError("y_max must exceed two steps")
    t = np.linspace(0.0, y_max, n + 1)
    h = t[1] - t[0]
    p = 2.0 * beta
    ci = np.concatenate([[0.0], sici(t[1:])[1]])
    lnt = np.log(np.where(t > 0, t, 1.0))
    G = np.where(t > 0, np.exp(p * (ci - lnt)), math.exp(p * EULER_GAMMA))
    E = np.where(t > 0, np.exp(-p * ci), 0.0)
    sinc = np.sinc(t / np.pi)
    x, w = roots_legendre(10)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    tj = t[:-1]
    tp = (tj[:, None] + h * x) ** p
    m0 = h * (tp @ w)
    m1 = h * (tp @ (w * x))
    m0[0] = h ** (p + 1) / (p + 1)
    m1[0] = h ** (p + 1) / (p + 2)
    W0 = (m0 - m1).tolist()
    W1 = m1.tolist()
    phi1 = (beta * sinc).tolist()
    phi2 = (beta * G * sinc).tolist()
    El = E.tolist()
    H = np.empty((n + 1, 2, 2))
    H[0] = np.eye(2)
    # I1 = int phi1 h2, I2 = int t^p phi2 h1 (for the two basis columns a, b)
    I1a = I1b = I2a = I2b = 0.0
    h1a, h1b, h2a, h2b = 1.0, 0.0, 0.0, 1.0
    hh = 0.5 * h
    out1a = [1.0] * (n + 1)
    out1b = [0.0] * (n + 1)
    out2a = [0.0] * (n + 1)
    out2b = [1.0] * (n + 1)
    for j in range(n):
        f1 = hh * phi1[j]
        f2 = W0[j] * phi2[j]
        I1a += f1 * h2a
        I1b += f1 * h2b
        I2a += f2 * h1a
        I2b += f2 * h1b
        e = El[j + 1]
        a1 = s * hh * phi1[j + 1]
        a2 = s * e * W1[j] * phi2[j + 1]
        den = 1.0 - a1 * a2
        c1a = 1.0 + s * I1a
        c1b = s * I1b
        c2a = s * e * I2a
        c2b = 1.0 + s * e * I2b
        h1a = (c1a + a1 * c2a) / den
        h1b = (c1b + a1 * c2b) / den
        h2a = c2a + a2 * h1a
        h2b = c2b + a2 * h1b
        I1a += hh * phi1[j + 1] * h2a
        I1b += hh * phi1[j + 1] * h2b
        I2a += W1[j] * phi2[j + 1] * h1a
        I2b += W1[j] * phi2[j + 1] * h1b
        out1a[j + 1] = h1a
        out1b[j + 1] = h1b
        out2a[j + 1] = h2a
        out2b[j + 1] = h2b
    H[:, 0, 0] = out1a
    H[:, 0, 1] = out1b
    H[:, 1, 0] = out2a
    H[:, 1, 1] = out2b
    return t, H


@dataclass
class SlowTrajectory:
    beta: float
    sign: int
    h0: np.ndarray
    y: np.ndarray
    h: np.ndarray
    limit: np.ndarray
    limit_error: float
    step: float
    richardson_defect: float = 0.0
    basis: np.ndarray | None = field(default=None, repr=False)

    def at(self, y: float) -> np.ndarray:
        i = int(np.searchsorted(self.y, y))
        i = min(max(i, 0), len(self.y) - 1)
        if abs(self.y[i] - y) > 1e-9 * max(1.0, y):
            raise ConfigError(f"y={y} is not a grid point")
        return self.h[i]


def volterra_solve(beta: float, sign, h0, y_max: float, step: float = 1e-3,
                   richardson: bool = True, tol: float = 1e-4) -> SlowTrajectory:
    """Solve the slow-scale Volterra equation on [0, y_max].

    With ``richardson`` the grid is also solved at step/2 and the O(step^2)
    term is eliminated; the defect between the two grids must stay below ``tol``.
    """
    s = _sign(sign)
    if beta < 0:
        raise ConfigError("beta must be nonnegative")
    h0 = np.asarray(h0, dtype=complex)
    if beta == 0.0:
        t = np.linspace(0.0, y_max, int(round(y_max / step)) + 1)
        hs = np.broadcast_to(h0, (len(t), 2)).copy()
        return SlowTrajectory(beta, s, h0, t, hs, h0.copy(), 0.0, step)
    t, H = _volterra_basis(beta, s, y_max, step)
    defect = 0.0
    if richardson:
        _, H2 = _volterra_basis(beta, s, y_max, step / 2)
        H2 = H2[::2]
        defect = float(np.max(np.abs(H2 - H)))
        if defect > tol:
            raise ConvergenceError(f"Volterra step {step} too coarse: Richardson defect {defect:.3g} > {tol:.3g}",
                                   details={"defect": defect})
        H = (4.0 * H2 - H) / 3.0
    hs = H @ h0
    lim = slow_limit(beta, s, t[-1], hs[-1], h0[1])
    half = len(t) // 2
    lim_half = slow_limit(beta, s, t[half], hs[half], h0[1])
    err = float(np.max(np.abs(lim - lim_half)))
    return SlowTrajectory(beta, s, h0, t, hs, lim, err, step, defect, H)


def volterra_residual(traj: SlowTrajectory) -> float:
    """Max residual of the integral equation evaluated by the plain trapezoid rule.

    The plain rule loses accuracy near t = 0 where t^(2 beta) is not smooth, so
    this is a consistency diagnostic, O(step^min(2, 1 + 2 beta)).
    """
    b, s, y, h = traj.beta, traj.sign, traj.y, traj.h
    dy = y[1] - y[0]
    sinc = np.sinc(y / np.pi)
    ci = np.concatenate([[0.0], sici(y[1:])[1]])
    f1 = b * sinc * h[:, 1]
    int1 = np.concatenate([[0.0], np.cumsum(0.5 * dy * (f1[1:] + f1[:-1]))])
    r1 = h[:, 0] - traj.h0[0] - s * int1
    # exp(-2b (Ci(y) - Ci(t))) = exp(-2b Ci(y)) exp(2b Ci(t)); the latter vanishes at t = 0
    ep = np.where(y > 0, np.exp(2 * b * ci), 0.0)
    f2 = b * ep * sinc * h[:, 0]
    int2 = np.concatenate([[0.0], np.cumsum(0.5 * dy * (f2[1:] + f2[:-1]))])
    em = np.where(y > 0, np.exp(-2 * b * ci), 0.0)
    r2 = h[:, 1] - traj.h0[1] - s * em * int2
    return float(max(np.max(np.abs(r1)), np.max(np.abs(r2))))


# --- limit ODE channel -----------------------------------------------------------

@dataclass
class OdeTrajectory:
    beta: float
    sign: int
    y: np.ndarray
    h: np.ndarray
    limit: np.ndarray
    convergence: float
    tail_value: np.ndarray


def limit_ode_solve(beta: float, h_at_y0, y0: float, y_max: float, sign=1, h02: complex = 0.0,
                    rtol: float = 1e-12, samples: int = 2001) -> OdeTrajectory:
    """Integrate h' = (beta/y) [[0, s sin y], [s sin y, -2 cos y]] (h - (0, h02)) from y0 to y_max.

    ``convergence`` is the spread of the tail-corrected limit over the last decade.
    """
    s = _sign(sign)
    if not y0 > 0:
        raise ConfigError("y0 must be positive (the equation is singular at 0)")
    if not y_max > y0:
        raise ConfigError("y_max must exceed y0")
    hy0 = np.asarray(h_at_y0, dtype=complex)

    def rhs(y, v):
        sy, cy = math.sin(y), math.cos(y)
        d = v[1] - h02
        return (beta / y) * np.array([s * sy * v[1], s * sy * v[0] - 2 * cy * d])

    y_eval = np.linspace(y0, y_max, samples)
    dec = np.linspace(max(y0, y_max / 10), y_max, 2001)
    ts = np.unique(np.concatenate([y_eval, dec]))
    sol = solve_ivp(rhs, (y0, y_max), hy0, method="DOP853", rtol=rtol, atol=1e-14, t_eval=ts,
                    max_step=0.5)
    if not sol.success:
        raise ConvergenceError(f"limit ODE integration failed: {sol.message}")
    H = sol.y.T
    lim_all = slow_limit(beta, s, sol.t[:, None].ravel()[-1], H[-1], h02)
    sel = sol.t >= max(y0, y_max / 10)
    ests = np.array([slow_limit(beta, s, yy, hh, h02) for yy, hh in zip(sol.t[sel], H[sel])])
    conv = float(np.max(np.abs(ests - lim_all))) if len(ests) else math.inf
    keep = np.isin(sol.t, y_eval)
    return OdeTrajectory(beta, s, sol.t[keep], H[keep], lim_all, conv, H[-1])


# --- two-scale interchange ---------------------------------------------------------

@dataclass
class InterchangeReport:
    sign: int
    eps: np.ndarray
    limits: np.ndarray
    limit_errors: np.ndarray
    cauchy: np.ndarray
    extrapolated: np.ndarray
    h_limit: np.ndarray
    h0: np.ndarray
    deviation: float
    extrapolation_error: float
    max_product_norms: np.ndarray

    def to_dict(self) -> dict:
        def c(v):
            v = np.asarray(v)
            return [[float(x.real), float(x.imag)] for x in v.ravel()] if np.iscomplexobj(v) else v.tolist()
        return {
            "sign": self.sign, "eps": self.eps.tolist(), "limits": c(self.limits),
            "limit_errors": self.limit_errors.tolist(), "cauchy": self.cauchy.tolist(),
            "extrapolated": c(self.extrapolated), "h_limit": c(self.h_limit), "h0": c(self.h0),
            "deviation": self.deviation, "extrapolation_error": self.extrapolation_error,
            "max_product_norms": self.max_product_norms.tolist(),
        }


def interchange_check(family, eps_grid, f, y_max: float = 500.0, step: float = 1e-3,
                      theta_N: int = 10 ** 6, run_N=None, mapper=None) -> InterchangeReport:
    """Compare lim_{eps -> +-0} lim_n u_n(eps, f) with lim_y h_+-(y, f).

    ``family`` is a ModelParams (its with_epsilon is used) or a callable eps ->
    ModelParams; ``f`` a 2-vector or a callable eps -> 2-vector.  The grid must
    be one-sided; extrapolation to eps = 0 is a Richardson step assuming an
    O(eps) error between the two smallest grid points.
    """
    eps = np.asarray(eps_grid, dtype=float)
    if len(eps) < 2 or np.any(eps == 0) or not (np.all(eps > 0) or np.all(eps < 0)):
        raise ConfigError("eps grid must be one-sided, nonzero and have at least two points")
    order = np.argsort(-np.abs(eps))
    eps = eps[order]
    fam = family.with_epsilon if isinstance(family, ModelParams) else family
    fv = f if callable(f) else (lambda e, _f=np.asarray(f): _f)
    s = 1 if eps[0] > 0 else -1
    runs = [run_recursion(fam(e), fv(e), run_N) for e in eps]
    if not all(r.converged for r in runs):
        bad = [float(e) for e, r in zip(eps, runs) if not r.converged]
        raise ConvergenceError(f"model recursion unconverged at eps={bad}")
    lims = np.array([r.limit_u for r in runs])
    errs = np.array([r.limit_error for r in runs])
    norms = np.array([r.max_product_norm for r in runs])
    cauchy = np.linalg.norm(np.diff(lims, axis=0), axis=1)
    e1, e2 = abs(eps[-2]), abs(eps[-1])
    w = e1 / (e1 - e2)
    extrap = w * lims[-1] + (1 - w) * lims[-2]
    extrap_err = float(np.linalg.norm(extrap - lims[-1]))
    p0 = fam(0.0)
    h0 = theta_map(p0, theta_N).theta @ np.asarray(fv(0.0), dtype=complex)
    traj = volterra_solve(p0.beta, s, h0, y_max, step)
    dev = float(np.linalg.norm(extrap - traj.limit))
    return InterchangeReport(s, eps, lims, errs, cauchy, extrap, traj.limit, h0, dev, extrap_err, norms)


# --- the discrete slow-scale equation ------------------------------------------------

def z_equation_residual(params: ModelParams, f, n_max: int) -> float:
    """Residual of z = g + int K z for the discrete z(y) = u_{floor(y/|eps|)}.

    With D_n = diag(1, exp(-2 beta int_n^{n+1} cos(eps r)/r dr)), V3 the
    oscillating part and R7 = B_n - D_n - V3_n, the recursion is rewritten by
    variation of constants; g collects f and the R7 sum, the kernel integral is
    the V3 sum scaled by the cell length |eps|.  Exact up to rounding.
    """
    from .recursion import b_matrices, prefix_products

    beta, eps = params.beta, params.epsilon
    if eps == 0.0:
        raise ConfigError("the slow-scale equation needs eps != 0")
    ns = params.n_start
    n = np.arange(ns, n_max)
    B = b_matrices(params, n)
    P = prefix_products(B)
    f = np.asarray(f, dtype=complex)
    u = np.concatenate([[f], P @ f])  # u[i] = u_{ns + i}
    steps = cos_integral_step(eps, n.astype(float))
    dd = np.exp(-2 * beta * steps)
    nf = n.astype(float)
    e = abs(eps)
    # int_n^{n+1} cos(eps r) dr
    ic = (np.sin(eps * (nf + 1)) - np.sin(eps * nf)) / eps
    V3 = np.zeros((len(n), 2, 2))
    V3[:, 0, 0] = -beta / nf * ic
    V3[:, 1, 1] = beta / nf * ic
    V3[:, 0, 0] += beta / nf * np.cos(eps * nf)
    V3[:, 0, 1] = beta / nf * np.sin(eps * nf)
    V3[:, 1, 0] = beta / nf * np.sin(eps * nf)
    V3[:, 1, 1] -= beta / nf * np.cos(eps * nf)
    D = np.zeros((len(n), 2, 2))
    D[:, 0, 0] = 1.0
    D[:, 1, 1] = dd
    R7 = B - D - V3
    # cumulative log of the second diagonal entry: L[i] = -2 beta int_ns^{ns+i}
    L = np.concatenate([[0.0], np.cumsum(-2 * beta * steps)])
    uk = u[:-1]
    # second components: sum_k exp(L[m] - L[k+1]) (X_k u_k)_2, computed with a running scale
    Ru = np.einsum("kij,kj->ki", R7, uk)
    Vu = np.einsum("kij,kj->ki", V3, uk) / e  # kernel value on a cell of length |eps|
    g1 = f[0] + np.concatenate([[0.0], np.cumsum(Ru[:, 0])])
    Kz1 = np.concatenate([[0.0], np.cumsum(Vu[:, 0] * e)])
    w2 = np.exp(-L[1:])
    g2 = np.exp(L) * (f[1] + np.concatenate([[0.0], np.cumsum(w2 * Ru[:, 1])]))
    Kz2 = np.exp(L) * np.concatenate([[0.0], np.cumsum(w2 * Vu[:, 1] * e)])
    z = u
    r1 = z[:, 0] - g1 - Kz1
    r2 = z[:, 1] - g2 - Kz2
    scale = max(1.0, float(np.max(np.abs(z))))
    return float(max(np.max(np.abs(r1)), np.max(np.abs(r2))) / scale)
