"""Spectral density from the asymptotics of the boundary-condition solution.

phi_alpha solves -phi'' + V phi = lambda phi with phi(0) = sin alpha,
phi'(0) = cos alpha.  In the Bloch basis phi = eta_1 psi_- + eta_2 psi_+,
eta_1 tends to A and the density is rho' = 1 / (2 pi |W| |A|^2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from ._pool import pool_map
from .errors import ConfigError, ConvergenceError, DomainError
from .floquet import BlochData, bloch_data
from .model_system.monodromy import EtaPropagator
from .model_system.recursion import prefix_products
from .potentials import ProblemConfig, evaluate_total

CAUCHY_RTOL = 1e-10
CAUCHY_ATOL = 1e-12
COND_MAX = 1e12
REL_TOL = 1e-2
WINDOWS_MIN = 100.0
N_CAP = 1 << 22
GRID_RATIO = 2.0 ** 0.25


# --- Cauchy problem ------------------------------------------------------------------

@dataclass
class CauchyTrajectory:
    x: np.ndarray
    phi: np.ndarray
    dphi: np.ndarray
    lam: float
    alpha: float


def _breakpoints(cfg: ProblemConfig, X: float) -> np.ndarray:
    pts = list(cfg.q1.breakpoints())
    q = cfg.periodic
    if q.kind == "step":
        a = q.period
        nodes = np.asarray(q.step_nodes)
        for n in range(int(math.ceil(X / a)) + 1):
            pts.extend((n * a + nodes).tolist())
    pts = np.asarray(pts, dtype=float)
    return np.unique(pts[(pts > 0) & (pts < X)])


def solve_cauchy(cfg: ProblemConfig, lam: float, X: float, x_eval=None, alpha: float | None = None,
                 rtol: float = CAUCHY_RTOL, atol: float = CAUCHY_ATOL) -> CauchyTrajectory:
    """Integrate the boundary-condition solution on [0, X], restarting at potential jumps."""
    if not X > 0:
        raise ConfigError("X must be positive")
    alpha = cfg.alpha if alpha is None else float(alpha)
    xs = np.linspace(0.0, X, 1001) if x_eval is None else np.asarray(x_eval, dtype=float)
    if np.any(xs < 0) or np.any(xs > X) or np.any(np.diff(xs) < 0):
        raise ConfigError("x_eval must be sorted inside [0, X]")

    def rhs(x, y):
        return np.array([y[1], (evaluate_total(cfg, x) - lam) * y[0]])

    edges = np.concatenate([[0.0], _breakpoints(cfg, X), [X]])
    y = np.array([math.sin(alpha), math.cos(alpha)])
    out = np.empty((len(xs), 2))
    filled = np.zeros(len(xs), dtype=bool)
    for x0, x1 in zip(edges[:-1], edges[1:]):
        sel = (xs >= x0) & (xs <= x1) & ~filled
        sol = solve_ivp(rhs, (x0, x1), y, method="DOP853", rtol=rtol, atol=atol,
                        t_eval=xs[sel] if np.any(sel) else None)
        if not sol.success:
            raise ConvergenceError(f"Cauchy integration failed near x={sol.t[-1]:.6g}: {sol.message}")
        if np.any(sel):
            out[sel] = sol.y.T
            filled |= sel
        y = sol.y[:, -1] if sol.t[-1] == x1 else solve_ivp(rhs, (sol.t[-1], x1), sol.y[:, -1], method="DOP853",
                                                           rtol=rtol, atol=atol).y[:, -1]
    return CauchyTrajectory(xs, out[:, 0], out[:, 1], float(lam), alpha)


def eta_projection(bloch: BlochData, x, phi, phi_prime) -> np.ndarray:
    """eta(x) = [[psi_-, psi_+], [psi_-', psi_+']]^{-1} (phi, phi'); shape (len(x), 2)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    B = bloch.bloch_matrix(x)
    cond = np.linalg.cond(B)
    if np.any(cond > COND_MAX):
        raise DomainError(f"Bloch matrix condition number {float(np.max(cond)):.3g} exceeds {COND_MAX:g}")
    rhs = np.stack([np.atleast_1d(phi), np.atleast_1d(phi_prime)], axis=-1).astype(complex)
    return np.linalg.solve(B, rhs[..., None])[..., 0]


# --- asymptotic coefficient ------------------------------------------------------------

def _min_angle(xi: float) -> float:
    r = math.fmod(abs(xi), 2 * math.pi)
    return min(r, 2 * math.pi - r)


def oscillation_angles(cfg: ProblemConfig, bloch: BlochData) -> dict:
    """Per-period phase increments of the oscillating terms of eta, reduced to [0, pi]."""
    aw = bloch.period * cfg.wvn.omega
    k = bloch.k
    return {"2aw": _min_angle(2 * aw), "2(k+aw)": _min_angle(2 * (k + aw)), "2(k-aw)": _min_angle(2 * (k - aw))}


@dataclass
class AsymptoticResult:
    A: complex
    est_error: float
    X_used: float
    converged: bool
    window: int
    theta_min: float
    history: list = field(default_factory=list)


class _EtaStream:
    """eta(a n), n = 0, 1, ..., extended on demand by monodromy products."""

    def __init__(self, cfg: ProblemConfig, bloch: BlochData, alpha: float, substeps=None):
        self.prop = EtaPropagator(cfg, bloch, substeps)
        B0 = bloch.bloch_matrix([0.0])[0]
        eta0 = np.linalg.solve(B0, np.array([math.sin(alpha), math.cos(alpha)], dtype=complex))
        self.eta1 = [np.array([eta0[0]])]
        self.state = eta0
        self.n = 0

    def extend(self, N: int, chunk: int = 1 << 14):
        while self.n < N:
            m = min(N, self.n + chunk)
            P = prefix_products(self.prop.monodromies(self.n + 1, m + 1))
            e = P @ self.state
            self.eta1.append(e[:, 0])
            self.state = e[-1]
            self.n = m

    def values(self) -> np.ndarray:
        return np.concatenate(self.eta1)


class _OdeStream:
    def __init__(self, cfg: ProblemConfig, bloch: BlochData, alpha: float):
        self.cfg, self.bloch, self.alpha = cfg, bloch, alpha
        self.vals = None
        self.n = 0

    def extend(self, N: int):
        a = self.bloch.period
        xs = a * np.arange(N + 1)
        tr = solve_cauchy(self.cfg, self.bloch.lam, xs[-1], xs, self.alpha)
        self.vals = eta_projection(self.bloch, xs, tr.phi, tr.dphi)[:, 0]
        self.n = N

    def values(self) -> np.ndarray:
        return self.vals


def asymptotic_coefficient(cfg: ProblemConfig, bloch: BlochData, X_max: float | None = None,
                           rel_tol: float = REL_TOL, method: str = "monodromy", alpha: float | None = None,
                           X_cap: float | None = None, substeps: int | None = None) -> AsymptoticResult:
    """A = lim eta_1(x), estimated by the mean of eta_1(a n) over the last full window.

    The window covers one period of the slowest oscillating term; the initial
    horizon is 100 windows' worth of phase and is doubled until the in-window
    standard deviation drops below rel_tol |A|.
    """
    a = bloch.period
    alpha = cfg.alpha if alpha is None else float(alpha)
    # without the WvN term eta is constant beyond the support of q1
    th = min(oscillation_angles(cfg, bloch).values()) if cfg.wvn.c != 0.0 else math.pi
    if th < 1e-12:
        raise DomainError(f"lambda={bloch.lam!r} is a resonance point; A is not defined there")
    window = max(2, int(math.ceil(2 * math.pi / th)))
    N = int(math.ceil(WINDOWS_MIN / th))
    N = max(N, 4 * window)
    if math.isfinite(cfg.q1.support_end):
        N = max(N, int(math.ceil(cfg.q1.support_end / a)) + 2 * window)
    if X_max is not None:
        N = max(window + 1, int(math.ceil(X_max / a)))
    cap = N_CAP if X_cap is None else max(N, int(X_cap / a))
    if method == "monodromy":
        stream = _EtaStream(cfg, bloch, alpha, substeps)
    elif method == "ode":
        stream = _OdeStream(cfg, bloch, alpha)
    else:
        raise ConfigError(f"method must be monodromy or ode; got {method!r}")
    hist = []
    while True:
        stream.extend(N)
        v = stream.values()[N - window + 1:N + 1]
        A = complex(np.mean(v))
        err = float(np.std(v))
        hist.append((N * a, A, err))
        if err <= rel_tol * abs(A) or N * 2 > cap:
            break
        N *= 2
    return AsymptoticResult(A, err, N * a, err <= rel_tol * abs(A), window, th, hist)


# --- density ----------------------------------------------------------------------

@dataclass
class DensitySample:
    lam: float
    A: complex
    rho_prime: float
    X_used: float
    est_error: float
    converged: bool = True
    wronskian_abs: float = 0.0
    channel: str = "spectral"

    @property
    def rho_error(self) -> float:
        """Propagated error of rho' from est_error on |A| (first order)."""
        return 2.0 * self.rho_prime * self.est_error / abs(self.A) if self.A else math.inf

    def to_dict(self) -> dict:
        return {"lambda": self.lam, "A_re": self.A.real, "A_im": self.A.imag, "rho_prime": self.rho_prime,
                "X_used": self.X_used, "est_error": self.est_error, "rho_error": self.rho_error,
                "converged": self.converged, "channel": self.channel}


def density_from_A(A: complex, W: complex) -> float:
    return 1.0 / (2.0 * math.pi * abs(W) * abs(A) ** 2)


def spectral_density(cfg: ProblemConfig, lam: float, band_index: int | None = None, alpha: float | None = None,
                     bloch: BlochData | None = None, **kw) -> DensitySample:
    b = bloch or bloch_data(cfg.periodic, lam, band_index)
    r = asymptotic_coefficient(cfg, b, alpha=alpha, **kw)
    return DensitySample(float(lam), r.A, density_from_A(r.A, b.wronskian), r.X_used, r.est_error, r.converged,
                         abs(b.wronskian))


def _density_task(args):
    cfg, lam, j, kw = args
    return spectral_density(cfg, lam, j, **kw)


def density_sweep(cfg: ProblemConfig, lams, band_index=None, workers=None, **kw) -> list[DensitySample]:
    return pool_map(_density_task, [(cfg, float(l), band_index, kw) for l in lams], workers)


# --- exponent fit ------------------------------------------------------------------

@dataclass
class ExponentFit:
    nu: float
    side: str
    fitted_exponent: float
    fitted_C: float
    predicted_exponent: float
    r_squared: float
    lambda_grid: list
    samples: list = field(default_factory=list, repr=False)
    exponent_stderr: float = 0.0

    def to_dict(self) -> dict:
        return {"nu": self.nu, "side": self.side, "fitted_exponent": self.fitted_exponent,
                "exponent_stderr": self.exponent_stderr, "fitted_C": self.fitted_C,
                "predicted_exponent": self.predicted_exponent, "r_squared": self.r_squared,
                "lambda_grid": list(self.lambda_grid),
                "rho_prime": [s.rho_prime for s in self.samples],
                "est_error": [s.est_error for s in self.samples]}


def _side(side) -> int:
    if side in ("right", "+", 1):
        return 1
    if side in ("left", "-", -1):
        return -1
    raise ConfigError(f"side must be left or right; got {side!r}")


def default_d_max(rp) -> float:
    lo, hi = rp.band
    d = min(0.1 * (hi - lo), 0.5 * (rp.nu - lo), 0.5 * (hi - rp.nu))
    if getattr(rp, "sibling_nu", None) is not None:
        d = min(d, 0.5 * abs(rp.sibling_nu - rp.nu))
    return d


def geometric_grid(d_min: float, d_max: float, n_points: int | None = None) -> np.ndarray:
    if not 0 < d_min < d_max:
        raise ConfigError("need 0 < d_min < d_max")
    if n_points is None:
        n_points = int(round(math.log(d_max / d_min) / math.log(GRID_RATIO))) + 1
    if n_points < 3:
        raise ConfigError("exponent fit needs at least 3 grid points")
    return np.geomspace(d_min, d_max, n_points)


def check_alpha(alpha: float, rp, tol: float = 1e-3):
    acr = getattr(rp, "alpha_cr", None)
    if acr is None:
        return
    d = abs(alpha - acr) % math.pi
    if min(d, math.pi - d) <= tol:
        raise DomainError(f"alpha={alpha!r} is within {tol:g} of the critical value {acr!r}")


def exponent_fit(cfg: ProblemConfig, rp, side="right", n_points: int | None = None, decades: float = 2.0,
                 d_min: float | None = None, d_max: float | None = None, workers=None, **kw) -> ExponentFit:
    """Least-squares fit of log rho' against log |lambda - nu| on a one-sided geometric grid."""
    s = _side(side)
    check_alpha(cfg.alpha, rp)
    d_max = default_d_max(rp) if d_max is None else float(d_max)
    d_min = d_max * 10.0 ** (-decades) if d_min is None else float(d_min)
    ds = geometric_grid(d_min, d_max, n_points)
    lams = rp.nu + s * ds
    lo, hi = rp.band
    if np.any(lams <= lo) or np.any(lams >= hi):
        raise DomainError("exponent grid leaves the band")
    samples = density_sweep(cfg, lams, rp.band_index, workers, **kw)
    bad = [smp.lam for smp in samples if not smp.converged]
    if bad:
        raise ConvergenceError(f"unconverged density samples at lambda={bad}", details={"lambdas": bad})
    x = np.log(ds)
    y = np.log([smp.rho_prime for smp in samples])
    (p, c), cov = np.polyfit(x, y, 1, cov=True)
    resid = y - (p * x + c)
    ss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss if ss > 0 else 1.0
    return ExponentFit(rp.nu, "right" if s > 0 else "left", float(p), float(math.exp(c)), 2.0 * rp.beta,
                       float(min(max(r2, 0.0), 1.0)), lams.tolist(), samples, float(math.sqrt(max(cov[0, 0], 0.0))))


# --- Aronszajn-Donoghue sum -------------------------------------------------------------

@dataclass
class DonoghueReport:
    d_mins: list
    sums: list
    rel_changes: list


def donoghue_sum(samples, nu: float) -> float:
    """sum rho'(l_i) dl_i / (l_i - nu)^2 over each side's grid with trapezoid weights."""
    total = 0.0
    for side in (-1, 1):
        pts = sorted((abs(s.lam - nu), s.rho_prime) for s in samples if (s.lam - nu) * side > 0)
        if len(pts) < 2:
            continue
        d = np.array([p[0] for p in pts])
        f = np.array([p[1] for p in pts]) / d ** 2
        total += float(np.sum(0.5 * (f[1:] + f[:-1]) * np.diff(d)))
    return total


def donoghue_check(cfg: ProblemConfig, rp, d_min: float, d_max: float, halvings: int = 2,
                   workers=None, **kw) -> DonoghueReport:
    """Grid sums as d_min is halved; the sum must settle when 2 beta > 1."""
    check_alpha(cfg.alpha, rp)
    base = geometric_grid(d_min, d_max)
    extra = d_min * GRID_RATIO ** -np.arange(1, 4 * halvings + 1)
    ds = np.concatenate([extra[::-1], base])
    lams = np.concatenate([rp.nu - ds, rp.nu + ds])
    samples = density_sweep(cfg, lams, rp.band_index, workers, **kw)
    bad = [smp.lam for smp in samples if not smp.converged]
    if bad:
        raise ConvergenceError(f"unconverged density samples at lambda={bad}")
    mins, sums = [], []
    for h in range(halvings + 1):
        dm = d_min / 2 ** h
        sel = [smp for smp in samples if abs(smp.lam - rp.nu) >= dm * (1 - 1e-12)]
        mins.append(dm)
        sums.append(donoghue_sum(sel, rp.nu))
    rel = [abs(s - sums[0]) / abs(sums[0]) for s in sums[1:]]
    return DonoghueReport(mins, sums, rel)
