"""Fourier series coefficients, the Harris-Lutz transform and the model reduction.

Sign conventions: ``w = det [[psi_-, psi_+], [psi_-', psi_+']]`` (the eta-system
normalization, ``BlochData.w_eta``).  With x = k + a omega,

    beta_0  = -c e^{i(delta - a omega)} / (2 i w) * sum_l b_l  sin(a omega)/(pi l + a omega)
    beta_+  = -c e^{i(delta - x)}       / (2 i w) * sum_l b+_l sin(x)/(pi l + x)
    beta_-  = +c e^{-i(delta + k - a omega)} / (2 i w) * sum_l b+_l sin(k - a omega)/(pi l + k - a omega)

and the monodromy over period n is I + (1/n) [[bd_n, bad_n], [conj(bad_n), -bd_n]] + O(n^-2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import DomainError
from ..floquet import BlochData, bloch_data, quasimomentum
from ..potentials import ProblemConfig, WvnTerm


# --- oscillatory sums ------------------------------------------------------------

def _wrap(xi: float) -> float:
    """Reduce xi to (0, 2 pi)."""
    r = math.fmod(xi, 2 * math.pi)
    if r <= 0:
        r += 2 * math.pi
    return r


def oscillatory_tail(xi: float, n) -> np.ndarray:
    """S(xi, n) = sum_{m >= n} e^{i m xi} / m for integer n >= 1 (xi not in 2 pi Z).

    Uses -log(1 - e^{i xi}) = -log(2 sin(xi/2)) - i (xi - pi)/2 on (0, 2 pi) minus
    the partial sum below n.
    """
    n = np.atleast_1d(np.asarray(n, dtype=np.int64))
    x = _wrap(xi)
    if x == 2 * math.pi or math.sin(x / 2) == 0.0:
        raise DomainError("oscillatory_tail: xi is a multiple of 2 pi")
    full = complex(-math.log(2 * math.sin(x / 2)), -(x - math.pi) / 2)
    top = int(n.max())
    m = np.arange(1, top)
    partial = np.concatenate([[0.0], np.cumsum(np.exp(1j * x * m) / m)])
    return full - partial[n - 1]


def harris_lutz_tail_bound(xi: float, n) -> np.ndarray:
    """Bound 1 / (n |sin(xi/2)|) on |S(xi, n)|."""
    return 1.0 / (np.asarray(n, dtype=float) * abs(math.sin(xi / 2)))


# --- beta coefficients -----------------------------------------------------------

def _sin_ratio(x: float, ls: np.ndarray) -> np.ndarray:
    """sin(x) / (pi l + x) written as (-1)^l sinc((pi l + x)/pi), finite at resonance."""
    return np.where(ls % 2 == 0, 1.0, -1.0) * np.sinc((np.pi * ls + x) / np.pi)


@dataclass(frozen=True)
class BetaSeries:
    lam: float
    k: float
    beta0: complex
    beta_plus: complex
    beta_minus: complex
    a_omega: float
    tail_bound: float = 0.0

    def matrix(self, n) -> np.ndarray:
        """(1/n)-coefficient matrix [[bd_n, bad_n], [conj bad_n, -bd_n]] for an index array."""
        n = np.atleast_1d(np.asarray(n, dtype=float))
        bd = self.beta0 * np.exp(2j * self.a_omega * n) - np.conj(self.beta0) * np.exp(-2j * self.a_omega * n)
        bad = (self.beta_plus * np.exp(2j * (self.k + self.a_omega) * n)
               + self.beta_minus * np.exp(2j * (self.k - self.a_omega) * n))
        out = np.empty((len(n), 2, 2), dtype=complex)
        out[:, 0, 0] = bd
        out[:, 0, 1] = bad
        out[:, 1, 0] = np.conj(bad)
        out[:, 1, 1] = -bd
        return out

    def resonant(self, sign: int) -> complex:
        return self.beta_plus if sign > 0 else self.beta_minus


def _decay_constant(coef: np.ndarray, l_max: int) -> float:
    ls = np.arange(-l_max, l_max + 1)
    sel = np.abs(ls) > l_max // 2
    return float(np.max(np.abs(coef[sel]) * ls[sel].astype(float) ** 2)) if np.any(sel) else 0.0


def beta_series(bloch: BlochData, wvn: WvnTerm) -> BetaSeries:
    a = bloch.period
    aw = a * wvn.omega
    k = bloch.k
    c, d = wvn.c, wvn.delta
    w = bloch.w_eta
    L = bloch.l_max
    ls = np.arange(-L, L + 1)
    pref = c / (2j * w)
    s0 = np.sum(bloch.fourier_b * _sin_ratio(aw, ls))
    sp = np.sum(bloch.fourier_b_plus * _sin_ratio(k + aw, ls))
    sm = np.sum(bloch.fourier_b_plus * _sin_ratio(k - aw, ls))
    b0 = -pref * np.exp(1j * (d - aw)) * s0
    bp = -pref * np.exp(1j * (d - (k + aw))) * sp
    bm = pref * np.exp(-1j * (d + k - aw)) * sm
    # tail: |b_l| <= C / l^2 beyond l_max and |sin x / (pi l + x)| <= 1 / (pi |l| - |x|)
    C = max(_decay_constant(bloch.fourier_b, L), _decay_constant(bloch.fourier_b_plus, L))
    xmax = abs(k) + abs(aw)
    tail = abs(pref) * 2 * C / (L * max(math.pi * L - xmax, 1.0))
    return BetaSeries(bloch.lam, k, complex(b0), complex(bp), complex(bm), aw, tail)


# --- Harris-Lutz ------------------------------------------------------------------

def harris_lutz_Q1(series: BetaSeries, resonant_nu: complex, sign: int, n) -> np.ndarray:
    """Q1_n = -sum_{m >= n} X_m / m where X_m is the non-resonant part of the series matrix.

    ``resonant_nu`` is beta_{sign}(nu_cr); the resonant exponential is kept with
    this frozen coefficient and removed from the sum.
    """
    n = np.atleast_1d(np.asarray(n, dtype=np.int64))
    k, aw = series.k, series.a_omega
    D = series.beta0 * oscillatory_tail(2 * aw, n) - np.conj(series.beta0) * oscillatory_tail(-2 * aw, n)
    res_xi = 2 * (k + aw) if sign > 0 else 2 * (k - aw)
    other_xi = 2 * (k - aw) if sign > 0 else 2 * (k + aw)
    res_coef = series.resonant(sign) - resonant_nu
    other_coef = series.resonant(-sign)
    A = other_coef * oscillatory_tail(other_xi, n)
    if res_coef != 0:
        A = A + res_coef * oscillatory_tail(res_xi, n)
    Q = np.empty((len(n), 2, 2), dtype=complex)
    Q[:, 0, 0] = -D
    Q[:, 0, 1] = -A
    Q[:, 1, 0] = -np.conj(A)
    Q[:, 1, 1] = D
    return Q


def harris_lutz_bound(series: BetaSeries, resonant_nu: complex, sign: int, n) -> np.ndarray:
    """Entry-wise bound on Q1_n from 1/(n |sin(xi/2)|) applied per exponential."""
    k, aw = series.k, series.a_omega
    res_xi = 2 * (k + aw) if sign > 0 else 2 * (k - aw)
    other_xi = 2 * (k - aw) if sign > 0 else 2 * (k + aw)
    b = 2 * abs(series.beta0) * harris_lutz_tail_bound(2 * aw, n)
    b = b + abs(series.resonant(-sign)) * harris_lutz_tail_bound(other_xi, n)
    rc = abs(series.resonant(sign) - resonant_nu)
    if rc:
        b = b + rc * harris_lutz_tail_bound(res_xi, n)
    return b


def diagonalizer(theta: float) -> tuple[np.ndarray, np.ndarray]:
    e = np.exp(0.5j * theta)
    C = np.array([[e, 1j * e], [np.conj(e), -1j * np.conj(e)]])
    Cinv = 0.5 * np.array([[np.conj(e), e], [-1j * np.conj(e), 1j * e]])
    return C, Cinv


def j_matrix(eps: float, n) -> np.ndarray:
    n = np.atleast_1d(np.asarray(n, dtype=float))
    c, s = np.cos(eps * n), np.sin(eps * n)
    return np.stack([np.stack([c, s], -1), np.stack([s, -c], -1)], -2)


@dataclass
class ModelReduction:
    """The model image of the operator near one resonance point."""

    lam: float
    nu: float
    sign: int
    epsilon: float
    beta: float
    theta: float
    bloch: BlochData = field(repr=False)
    bloch_nu: BlochData = field(repr=False)
    series: BetaSeries = field(repr=False)
    resonant_nu: complex = 0.0
    remainder: np.ndarray | None = field(default=None, repr=False)
    q1_first: np.ndarray | None = field(default=None, repr=False)

    @property
    def C(self):
        return diagonalizer(self.theta)[0]

    @property
    def Cinv(self):
        return diagonalizer(self.theta)[1]

    def eta_initial(self, alpha: float) -> np.ndarray:
        """eta(0) = B(0)^{-1} (sin alpha, cos alpha)."""
        B0 = self.bloch.bloch_matrix([0.0])[0]
        return np.linalg.solve(B0, np.array([math.sin(alpha), math.cos(alpha)], dtype=complex))

    def v1_matrix(self) -> np.ndarray:
        """Linear map (sin alpha, cos alpha) -> v_{alpha,1}."""
        B0 = self.bloch.bloch_matrix([0.0])[0]
        Q1 = self.q1_first if self.q1_first is not None else harris_lutz_Q1(self.series, self.resonant_nu, self.sign, [1])[0]
        from .monodromy import expm_traceless
        return self.Cinv @ expm_traceless(-Q1) @ np.linalg.inv(B0)

    def v1(self, alpha: float) -> np.ndarray:
        return self.v1_matrix() @ np.array([math.sin(alpha), math.cos(alpha)])

    def a_from_v(self, v: np.ndarray) -> complex:
        """A from the limit vector v = (Re(e^{-i theta/2} A), Im(e^{-i theta/2} A))."""
        return complex(np.exp(0.5j * self.theta) * (v[0] + 1j * v[1]))


def u_cr_check(bloch_lam_k: float, k_nu: float, k_sibling: float, j: int, fraction: float = 0.6) -> bool:
    """Whether k(lambda) lies in the neighborhood U_cr of k(nu) (in quasi-momentum)."""
    edge = min(k_nu - math.pi * j, math.pi * (j + 1) - k_nu)
    radius = fraction * min(edge, 0.5 * abs(k_sibling - k_nu))
    return abs(bloch_lam_k - k_nu) < radius


def reduce_to_model(cfg: ProblemConfig, rp, lam: float, N: int = 0, substeps: int | None = None,
                    l_max: int = 64, enforce_ucr: bool = True) -> ModelReduction:
    """Reduce the operator at ``lam`` to the model system around resonance point ``rp``.

    With N > 0 the operator remainder R_1..R_N is assembled from the computed
    monodromies: R_n = C^-1 e^{-Q_{n+1}} M_n e^{Q_n} C - I - (beta/n) J_n(eps).
    """
    from .monodromy import EtaPropagator, expm_traceless

    q = cfg.periodic
    j, sign = rp.band_index, rp.sign
    bnu = bloch_data(q, rp.nu, j, l_max=l_max)
    blam = bnu if lam == rp.nu else bloch_data(q, lam, j, l_max=l_max)
    if enforce_ucr and lam != rp.nu:
        a = q.period
        frac = a * cfg.wvn.omega / math.pi - math.floor(a * cfg.wvn.omega / math.pi)
        k_sib = math.pi * (j + frac) if sign > 0 else math.pi * (j + 1 - frac)
        if not u_cr_check(blam.k, bnu.k, k_sib, j):
            raise DomainError(f"lambda={lam!r} lies outside the resonance neighborhood of nu={rp.nu!r}")
    s_nu = beta_series(bnu, cfg.wvn)
    s_lam = s_nu if blam is bnu else beta_series(blam, cfg.wvn)
    res_nu = s_nu.resonant(sign)
    beta = abs(res_nu)
    theta = float(np.angle(res_nu)) if beta > 0 else 0.0
    eps = 2.0 * (blam.k - bnu.k)
    red = ModelReduction(lam, rp.nu, sign, eps, beta, theta, blam, bnu, s_lam, res_nu)
    red.q1_first = harris_lutz_Q1(s_lam, res_nu, sign, [1])[0]
    if N > 0:
        prop = EtaPropagator(cfg, blam, substeps)
        M = prop.monodromies(1, N + 1)
        n = np.arange(1, N + 2)
        EQ = expm_traceless(harris_lutz_Q1(s_lam, res_nu, sign, n))
        EQm = expm_traceless(-harris_lutz_Q1(s_lam, res_nu, sign, n))
        C, Cinv = diagonalizer(theta)
        core = Cinv @ EQm[1:] @ M @ EQ[:-1] @ C
        nn = np.arange(1, N + 1)
        R = core - np.eye(2) - (beta / nn)[:, None, None] * j_matrix(eps, nn)
        red.remainder = R
    return red
