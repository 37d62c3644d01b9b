"""Resonance points inside spectral bands and their exponent coefficients.

On band j the points are fixed by the quasi-momentum:

    k(nu_{j,+}) = pi (j + 1 - {a omega / pi}),   k(nu_{j,-}) = pi (j + {a omega / pi})

and beta = |c int_0^a psi^2 e^{2 i omega t} dt| / (2 a |W|), with psi_+ for the
plus point and psi_- = conj(psi_+) for the minus point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import trapezoid
from scipy.optimize import brentq

from .errors import ConvergenceError, DomainError
from .floquet import BandStructure, BlochData, bands_covering, bloch_data, quasimomentum
from .potentials import PeriodicPotential, ProblemConfig, WvnTerm, check_non_resonant

ROOT_TOL = 1e-10
BETA_TOL = 1e-10  # below this beta is numerically zero


@dataclass(frozen=True)
class ResonancePoint:
    band_index: int
    sign: int
    nu: float
    k_target: float
    beta: float = 0.0
    alpha_cr: float | None = None
    band: tuple[float, float] = (0.0, 0.0)
    sibling_nu: float | None = None

    @property
    def sign_label(self) -> str:
        return "+" if self.sign > 0 else "-"

    @property
    def pseudogap(self) -> bool:
        return self.beta > BETA_TOL


def k_targets(a: float, omega: float, j: int) -> tuple[float, float]:
    frac = a * omega / math.pi - math.floor(a * omega / math.pi)
    return math.pi * (j + 1 - frac), math.pi * (j + frac)


def _solve_k(q: PeriodicPotential, j: int, lo: float, hi: float, target: float) -> float:
    # k is monotone on the band; shrink the bracket slightly to stay off the edges
    span = hi - lo
    a_, b_ = lo + 1e-12 * span, hi - 1e-12 * span

    def f(lam):
        return quasimomentum(q, lam, j, check=False) - target

    fa, fb = f(a_), f(b_)
    if fa * fb > 0:
        raise ConvergenceError(f"k target {target:.12g} not bracketed in band {j}")
    x = brentq(f, a_, b_, xtol=1e-14 * max(1.0, abs(lo), abs(hi)), rtol=1e-15, maxiter=200)
    if abs(f(x)) > ROOT_TOL:
        raise ConvergenceError(f"resonance root in band {j} missed the k tolerance ({abs(f(x)):.3g})")
    return float(x)


def _psi_square_integral(bloch: BlochData, omega: float, sign: int, panels: int | None = None) -> complex:
    """int_0^a psi^2 e^{2 i omega t} dt by Gauss-Legendre panels (aligned with potential jumps)."""
    q = bloch.potential
    a = q.period
    if panels is None:
        panels = max(8, int(math.ceil((2 * omega * a + 2 * bloch.k) / math.pi)) * 4)
    x, w = np.polynomial.legendre.leggauss(16)
    edges = np.linspace(0.0, a, panels + 1)
    if q.kind == "step":
        edges = np.unique(np.concatenate([edges, np.asarray(q.step_nodes), [a]]))

    def integral(E):
        mid = 0.5 * (E[1:] + E[:-1])
        half = 0.5 * (E[1:] - E[:-1])
        s = (mid[:, None] + half[:, None] * x).ravel()
        ws = (half[:, None] * w).ravel()
        order = np.argsort(s)
        psi = np.empty(len(s), dtype=complex)
        psi[order] = bloch.psi_plus_period(s[order])[:, 0]
        if sign < 0:
            psi = np.conj(psi)
        return complex(np.sum(ws * psi * psi * np.exp(2j * omega * s)))

    I1 = integral(edges)
    for _ in range(6):
        fine = np.unique(np.concatenate([edges, 0.5 * (edges[1:] + edges[:-1])]))
        I2 = integral(fine)
        if abs(I2 - I1) <= 1e-13 * max(1.0, abs(I2)):
            return I2
        edges, I1 = fine, I2
    raise ConvergenceError(f"quadrature of psi^2 e^(2 i omega t) did not settle ({abs(I2 - I1):.3g})")


def beta_from_bloch(bloch: BlochData, wvn: WvnTerm, sign: int) -> float:
    if wvn.c == 0.0:
        return 0.0
    I = _psi_square_integral(bloch, wvn.omega, sign)
    return abs(wvn.c * I) / (2.0 * bloch.period * abs(bloch.wronskian))


def beta_coefficient(q: PeriodicPotential, wvn: WvnTerm, rp: ResonancePoint, l_max: int = 64) -> float:
    """beta for the resonance point by direct quadrature of the Bloch solution."""
    b = bloch_data(q, rp.nu, rp.band_index, l_max=l_max)
    return beta_from_bloch(b, wvn, rp.sign)


def resonance_points(q: PeriodicPotential, wvn: WvnTerm, j: int, bands: BandStructure | None = None,
                     with_beta: bool = True) -> tuple[ResonancePoint, ResonancePoint]:
    """(nu_{j,+}, nu_{j,-}) with their beta coefficients."""
    a = q.period
    check_non_resonant(a, wvn.omega)
    bs = bands or bands_covering(q, j)
    lo, hi = bs.band(j)
    kp, km = k_targets(a, wvn.omega, j)
    for kt in (kp, km):
        if not math.pi * j < kt < math.pi * (j + 1):
            raise AssertionError("k target outside the band although the frequency is non-resonant")
    nu_p = _solve_k(q, j, lo, hi, kp)
    nu_m = _solve_k(q, j, lo, hi, km)
    rp = ResonancePoint(j, 1, nu_p, kp, band=(lo, hi), sibling_nu=nu_m)
    rm = ResonancePoint(j, -1, nu_m, km, band=(lo, hi), sibling_nu=nu_p)
    if with_beta:
        rp = replace(rp, beta=beta_coefficient(q, wvn, rp))
        rm = replace(rm, beta=beta_coefficient(q, wvn, rm))
    return rp, rm


def all_resonance_points(q: PeriodicPotential, wvn: WvnTerm, j_max: int) -> list[ResonancePoint]:
    bs = bands_covering(q, j_max)
    out = []
    for j in range(j_max + 1):
        out.extend(resonance_points(q, wvn, j, bs))
    return out


# --- critical boundary parameter ----------------------------------------------------

@dataclass
class CriticalAlpha:
    alpha_cr: float
    singular_values: np.ndarray
    row: np.ndarray
    imag_defect: float


def critical_alpha(cfg: ProblemConfig, rp: ResonancePoint, n_remainder: int = 4096, theta_N: int = 10 ** 6,
                   details: bool = False):
    """The boundary parameter whose model image lies in the kernel of the rank-one map Theta.

    The model reduction is built at lambda = nu (eps = 0) with the operator
    remainder assembled over ``n_remainder`` periods; Theta is the eps = 0 product.
    """
    from .model_system.harris_lutz import reduce_to_model
    from .model_system.recursion import ModelParams, RemainderSeq, theta_map

    if not rp.pseudogap:
        raise DomainError("critical_alpha needs beta > 0")
    red = reduce_to_model(cfg, rp, rp.nu, n_remainder)
    tail = float(np.linalg.norm(red.remainder[-1], 2)) * n_remainder
    params = ModelParams(red.beta, 0.0, RemainderSeq.operator(red.remainder, tail), 1)
    th = theta_map(params, theta_N)
    V = red.v1_matrix()
    U, S, Vh = np.linalg.svd(th.theta)
    z = np.conj(U[:, 0]) @ th.theta @ V  # row functional on (sin a, cos a)
    # phase-align so that z is real up to rounding
    ph = 0.5 * np.angle(np.sum(z * z))
    zr = z * np.exp(-1j * ph)
    imag = float(np.max(np.abs(zr.imag)) / max(np.max(np.abs(zr)), 1e-300))
    zr = zr.real

    def g(al):
        return zr[0] * math.sin(al) + zr[1] * math.cos(al)

    if zr[1] == 0.0:
        acr = 0.0
    else:
        if g(0.0) * g(math.pi) > 0:
            raise ConvergenceError("no sign change for the critical boundary parameter",
                                   details={"singular_values": th.singular_values.tolist()})
        acr = brentq(g, 0.0, math.pi, xtol=1e-15, rtol=1e-15)
        acr = acr % math.pi
    if details:
        return CriticalAlpha(acr, th.singular_values, zr, imag)
    return acr


def subordinacy_alpha(cfg: ProblemConfig, nu: float, X: float, samples_per_unit: int = 32) -> float:
    """Independent estimate of the critical boundary parameter at nu.

    phi_alpha = sin(alpha) phi_{pi/2} + cos(alpha) phi_0 by linearity; the
    alpha minimizing the L2 norm over [X/4, X] picks the slowest-growing
    (subordinate) direction.  Accuracy improves like X^(-2 beta).
    """
    from .spectral import solve_cauchy

    xs = np.linspace(X / 4, X, int(samples_per_unit * X * 0.75) + 1)
    xe = np.concatenate([[0.0], xs])
    p1 = solve_cauchy(cfg, nu, X, xe, alpha=math.pi / 2).phi[1:]
    p0 = solve_cauchy(cfg, nu, X, xe, alpha=0.0).phi[1:]
    G = np.array([[trapezoid(p1 * p1, xs), trapezoid(p1 * p0, xs)],
                  [trapezoid(p0 * p1, xs), trapezoid(p0 * p0, xs)]])
    w, v = np.linalg.eigh(G)
    s, c = v[:, 0]
    return float(math.atan2(s, c) % math.pi)
