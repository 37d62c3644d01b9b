"""Monodromy matrices of the eta-system over one period.

With B(x) = [[psi_-, psi_+], [psi_-', psi_+']] and phi = B eta, the equation
-phi'' + (q + g) phi = lambda phi with g = WvN + q1 becomes eta' = L eta,

    L(x) = g(x) / w * [[-psi_+ psi_-, -psi_+^2], [psi_-^2, psi_+ psi_-]],

where w = det B.  M_n maps eta(a(n-1)) to eta(a n).
"""

from __future__ import annotations

import math

import numpy as np
from scipy.integrate import solve_ivp

from ..errors import ConvergenceError
from ..floquet import BlochData
from ..potentials import ProblemConfig

_G2 = np.array([0.5 - math.sqrt(3) / 6, 0.5 + math.sqrt(3) / 6])


def default_substeps(bloch: BlochData, cfg: ProblemConfig) -> int:
    """Substeps per period for the Magnus scheme, scaled with the oscillation count."""
    a = bloch.period
    turns = (2.0 * abs(cfg.wvn.omega) * a + 2.0 * bloch.k) / math.pi
    return int(max(16, 8 * math.ceil(turns)))


def perturbation(cfg: ProblemConfig, x):
    return cfg.wvn(x) + cfg.q1(x)


def _p0(psi: np.ndarray, w: complex) -> np.ndarray:
    """Periodic-cell matrix P(s)/w for Bloch values psi (shape (m,))."""
    pp = psi
    pm = np.conj(psi)
    P = np.empty(psi.shape + (2, 2), dtype=complex)
    P[..., 0, 0] = -pp * pm
    P[..., 0, 1] = -pp * pp
    P[..., 1, 0] = pm * pm
    P[..., 1, 1] = pp * pm
    return P / w


def expm_traceless(X: np.ndarray) -> np.ndarray:
    """exp of a stack of traceless 2x2 matrices."""
    mu = np.sqrt(X[..., 0, 0] ** 2 + X[..., 0, 1] * X[..., 1, 0] + 0j)
    small = np.abs(mu) < 1e-4
    safe = np.where(small, 1.0, mu)
    mu2 = mu * mu
    shc = np.where(small, 1.0 + mu2 / 6.0 + mu2 * mu2 / 120.0, np.sinh(safe) / safe)
    ch = np.cosh(mu)
    out = shc[..., None, None] * X
    out[..., 0, 0] += ch
    out[..., 1, 1] += ch
    return out


class EtaPropagator:
    """Vectorized fourth-order Magnus monodromies of the eta-system.

    The substep count per period is raised on early periods where the
    coefficient is large, so that h * |L| stays below ``step_tol``.
    """

    def __init__(self, cfg: ProblemConfig, bloch: BlochData, substeps: int | None = None, step_tol: float = 0.02):
        self.cfg = cfg
        self.bloch = bloch
        self.m = int(substeps or default_substeps(bloch, cfg))
        self.step_tol = step_tol
        self._cells: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        s, P = self._cell(self.m)
        self.p_norm = float(np.max(np.linalg.norm(P, axis=(-2, -1))))
        q1 = cfg.q1
        self.q1_sup = float(np.max(np.abs(q1.values))) if q1.kind == "compactly_supported_table" else abs(q1.amplitude)

    def _cell(self, m: int):
        if m not in self._cells:
            h = self.bloch.period / m
            s = (np.arange(m)[:, None] + _G2[None, :]) * h  # (m, 2)
            psi = self.bloch.psi_plus_period(s.ravel())[:, 0].reshape(s.shape)
            self._cells[m] = (s, _p0(psi, self.bloch.w_eta))
        return self._cells[m]

    def _level(self, n: int) -> int:
        a = self.bloch.period
        x0 = a * (n - 1)
        g = abs(self.cfg.wvn.c) / (x0 + 1.0)
        if x0 < self.cfg.q1.support_end:
            g += self.q1_sup
        need = g * self.p_norm * a / self.step_tol
        m = self.m
        while m < need:
            m *= 2
        return m

    def monodromies(self, n_start: int, n_stop: int, chunk: int = 1 << 12) -> np.ndarray:
        """M_n for n in [n_start, n_stop); shape (n_stop - n_start, 2, 2)."""
        out = np.empty((n_stop - n_start, 2, 2), dtype=complex)
        c0 = n_start
        while c0 < n_stop:
            m = self._level(c0)
            c1 = min(n_stop, c0 + max(1, chunk * self.m // m))
            if m > self.m:
                # stay on this level only while it is required
                lo, hi = c0 + 1, c1
                while lo < hi:
                    mid = (lo + hi) // 2
                    if self._level(mid) < m:
                        hi = mid
                    else:
                        lo = mid + 1
                c1 = lo
            out[c0 - n_start:c1 - n_start] = self._chunk(np.arange(c0, c1), m)
            c0 = c1
        return out

    def _chunk(self, n: np.ndarray, m: int) -> np.ndarray:
        a = self.bloch.period
        s, P = self._cell(m)
        h = a / m
        x0 = a * (n - 1).astype(float)
        g1 = perturbation(self.cfg, x0[:, None] + s[None, :, 0])  # (N, m)
        g2 = perturbation(self.cfg, x0[:, None] + s[None, :, 1])
        A1 = g1[..., None, None] * P[None, :, 0]
        A2 = g2[..., None, None] * P[None, :, 1]
        Om = 0.5 * h * (A1 + A2) + (math.sqrt(3.0) * h * h / 12.0) * (A2 @ A1 - A1 @ A2)
        M = ordered_product(expm_traceless(Om))
        ph = np.exp(2j * self.bloch.k * (n - 1))
        M[:, 0, 1] *= ph
        M[:, 1, 0] /= ph
        return M


def ordered_product(E: np.ndarray) -> np.ndarray:
    """E[..., m-1, :, :] @ ... @ E[..., 0, :, :] by pairwise reduction along axis -3."""
    while E.shape[-3] > 1:
        m = E.shape[-3]
        paired = E[..., 1:m - m % 2:2, :, :] @ E[..., 0:m - m % 2:2, :, :]
        if m % 2:
            paired = np.concatenate([paired, E[..., m - 1:, :, :]], axis=-3)
        E = paired
    return E[..., 0, :, :].copy()


def monodromy_sequence(cfg: ProblemConfig, bloch: BlochData, n_max: int, substeps: int | None = None) -> np.ndarray:
    """M_1 .. M_{n_max} (index 0 holds M_1)."""
    return EtaPropagator(cfg, bloch, substeps).monodromies(1, n_max + 1)


def discrete_monodromy(cfg: ProblemConfig, bloch: BlochData, n: int, rtol: float = 1e-12) -> np.ndarray:
    """M_n by adaptive integration of the Bloch solution together with the eta-system."""
    if n < 1:
        raise ValueError("n must be >= 1")
    a = bloch.period
    lam = bloch.lam
    q = bloch.potential
    x0 = a * (n - 1)
    w = bloch.w_eta
    start = bloch.psi_plus_init * np.exp(1j * bloch.k * (n - 1))

    def rhs(s, y):
        psi, dpsi = y[0], y[1]
        Phi = y[2:].reshape(2, 2)
        g = perturbation(cfg, x0 + s)
        pm = np.conj(psi)
        L = (g / w) * np.array([[-psi * pm, -psi * psi], [pm * pm, psi * pm]])
        out = np.empty(6, dtype=complex)
        out[0] = dpsi
        out[1] = (q(s) - lam) * psi
        out[2:] = (L @ Phi).ravel()
        return out

    y0 = np.concatenate([start, np.eye(2, dtype=complex).ravel()])
    sol = solve_ivp(rhs, (0.0, a), y0, method="DOP853", rtol=rtol, atol=1e-14)
    if not sol.success:
        raise ConvergenceError(f"eta-system integration failed at x={x0 + sol.t[-1]:.6g}: {sol.message}")
    return sol.y[2:, -1].reshape(2, 2)


def leading_term(cfg: ProblemConfig, bloch: BlochData, n: int, nodes: int = 64) -> np.ndarray:
    """(1/(a n)) int_{a(n-1)}^{a n} c sin(2 omega t + delta) P(t) / w dt by Gauss quadrature."""
    a = bloch.period
    x, wts = np.polynomial.legendre.leggauss(nodes)
    panels = max(4, int(math.ceil((2 * cfg.wvn.omega * a + 2 * bloch.k) / math.pi)) * 2)
    edges = np.linspace(0.0, a, panels + 1)
    s = ((edges[:-1, None] + edges[1:, None]) / 2 + (edges[1:, None] - edges[:-1, None]) / 2 * x).ravel()
    ws = (((edges[1:] - edges[:-1]) / 2)[:, None] * wts).ravel()
    psi = bloch.psi_plus_period(s)[:, 0] * np.exp(1j * bloch.k * (n - 1))
    P = _p0(psi, bloch.w_eta)
    t = a * (n - 1) + s
    g = cfg.wvn.c * np.sin(2 * cfg.wvn.omega * t + cfg.wvn.delta)
    return np.einsum("i,ijk->jk", ws * g, P) / (a * n)


def leading_defect(cfg: ProblemConfig, bloch: BlochData, n: int) -> float:
    """Norm of M_n - I - leading_term; summable in n."""
    M = discrete_monodromy(cfg, bloch, n)
    return float(np.linalg.norm(M - np.eye(2) - leading_term(cfg, bloch, n), 2))
