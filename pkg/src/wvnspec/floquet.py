"""Floquet theory of the periodic equation -psi'' + q psi = lambda psi.

Fundamental solutions are ``Y(s) = [[u1, u2], [u1', u2']]`` with ``Y(0) = I``.
Constant and piecewise-constant potentials use exact propagators; smooth
Fourier potentials are integrated with DOP853.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .errors import ConvergenceError, DomainError
from .potentials import STEP, PeriodicPotential

RTOL = 1e-12
ATOL = 1e-12
EDGE_MARGIN = 1e-6
TOUCH_TOL = 1e-10
ROOT_XTOL = 1e-13
N_SAMPLES = 2048
L_MAX = 64


# --- exact propagators for constant pieces -----------------------------------

def _cs(z, L):
    """cos(L sqrt z) and sin(L sqrt z)/sqrt z for real z of any sign."""
    z = np.asarray(z, dtype=float)
    kap = np.sqrt(z.astype(complex))
    C = np.cos(kap * L).real
    S = (L * np.sinc(kap * L / np.pi)).real
    return C, S


def _dcs(z, L):
    """Derivatives dC/dz and dS/dz of :func:`_cs`."""
    z = np.asarray(z, dtype=float)
    C, S = _cs(z, L)
    dC = -0.5 * L * S
    small = np.abs(z) * L * L < 1e-2
    zz = np.where(small, 1.0, z)
    dS = (L * C - S) / (2.0 * zz)
    if np.any(small):
        # S = L sum_m (-z L^2)^m / (2m+1)!
        x = -z * L * L
        ser = np.zeros_like(z)
        for m in range(1, 10):
            ser = ser + m * x ** (m - 1) / math.factorial(2 * m + 1)
        dS = np.where(small, -L ** 3 * ser, dS)
    return dC, dS


def _piece_matrix(lam, value, L):
    z, L = np.broadcast_arrays(np.asarray(lam, dtype=float) - value, np.asarray(L, dtype=float))
    C, S = _cs(z, L)
    M = np.empty(z.shape + (2, 2))
    M[..., 0, 0] = C
    M[..., 0, 1] = S
    M[..., 1, 0] = -z * S
    M[..., 1, 1] = C
    return M


def _piece_dmatrix(lam, value, L):
    z = np.asarray(lam, dtype=float) - value
    C, S = _cs(z, L)
    dC, dS = _dcs(z, L)
    M = np.empty(z.shape + (2, 2))
    M[..., 0, 0] = dC
    M[..., 0, 1] = dS
    M[..., 1, 0] = -S - z * dS
    M[..., 1, 1] = dC
    return M


def _uses_pieces(q: PeriodicPotential) -> bool:
    return q.kind == STEP or q.is_constant


# --- smooth potentials: ODE integration ----------------------------------------

def _ode_fundamental(q: PeriodicPotential, lam: float, s_eval=None, with_integrals=False):
    a = q.period

    def rhs(x, y):
        qx = q(x) - lam
        out = np.empty_like(y)
        out[0] = y[2]
        out[1] = y[3]
        out[2] = qx * y[0]
        out[3] = qx * y[1]
        if with_integrals:
            out[4] = y[0] * y[0]
            out[5] = y[1] * y[1]
            out[6] = y[0] * y[1]
        return out

    y0 = np.zeros(7 if with_integrals else 4)
    y0[0] = 1.0
    y0[3] = 1.0
    sol = solve_ivp(rhs, (0.0, a), y0, method="DOP853", rtol=RTOL, atol=ATOL,
                    t_eval=None if s_eval is None else np.asarray(s_eval, dtype=float))
    if not sol.success:
        raise ConvergenceError(f"periodic ODE integration failed at x={sol.t[-1]:.6g}: {sol.message}")
    return sol


def fundamental_matrix(q: PeriodicPotential, lam: float, s) -> np.ndarray:
    """Y(s) for sorted points s in [0, a]; returns shape (len(s), 2, 2)."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    if np.any(s < 0) or np.any(s > q.period * (1 + 1e-14)):
        raise DomainError("fundamental_matrix: points must lie in [0, a]")
    if _uses_pieces(q):
        out = np.empty((len(s), 2, 2))
        prefix = np.eye(2)
        pieces = q.pieces()
        ends = np.array([e for _, e, _ in pieces])
        idx = np.minimum(np.searchsorted(ends, s, side="left"), len(pieces) - 1)
        for i, (x0, x1, v) in enumerate(pieces):
            sel = idx == i
            if np.any(sel):
                out[sel] = _piece_matrix(lam, v, s[sel] - x0) @ prefix
            prefix = _piece_matrix(lam, v, x1 - x0) @ prefix
        return out
    order = np.argsort(s)
    sol = _ode_fundamental(q, lam, s[order])
    Y = np.empty((len(s), 2, 2))
    Y[order, 0, 0] = sol.y[0]
    Y[order, 0, 1] = sol.y[1]
    Y[order, 1, 0] = sol.y[2]
    Y[order, 1, 1] = sol.y[3]
    return Y


@dataclass(frozen=True)
class TransferMatrix:
    entries: np.ndarray = field(repr=False)
    lam: float

    @property
    def trace(self) -> float:
        return float(self.entries[0, 0] + self.entries[1, 1])

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.entries))


def transfer_matrix(q: PeriodicPotential, lam: float) -> TransferMatrix:
    if not math.isfinite(lam):
        raise DomainError("lambda must be finite")
    if _uses_pieces(q):
        T = np.eye(2)
        for x0, x1, v in q.pieces():
            T = _piece_matrix(lam, v, x1 - x0) @ T
    else:
        sol = _ode_fundamental(q, lam)
        T = sol.y[:4, -1].reshape(2, 2)
    return TransferMatrix(T, float(lam))


def discriminant(q: PeriodicPotential, lam: float) -> float:
    return transfer_matrix(q, lam).trace


def discriminant_derivative(q: PeriodicPotential, lam: float) -> float:
    """d Delta / d lambda, using dT = T * int_0^a Y^{-1} E Y ds with E = dA/dlambda."""
    if _uses_pieces(q):
        mats = [(_piece_matrix(lam, v, x1 - x0), _piece_dmatrix(lam, v, x1 - x0)) for x0, x1, v in q.pieces()]
        total = 0.0
        for i in range(len(mats)):
            P = np.eye(2)
            for j, (M, dM) in enumerate(mats):
                P = (dM if j == i else M) @ P
            total += P[0, 0] + P[1, 1]
        return float(total)
    sol = _ode_fundamental(q, lam, with_integrals=True)
    y = sol.y[:, -1]
    T = y[:4].reshape(2, 2)
    I11, I22, I12 = y[4], y[5], y[6]
    K = np.array([[I12, I22], [-I11, -I12]])
    return float(np.trace(T @ K))


def discriminants(q: PeriodicPotential, lams) -> np.ndarray:
    """Vectorized discriminant over an array of lambda values."""
    lams = np.asarray(lams, dtype=float)
    if _uses_pieces(q):
        T = np.broadcast_to(np.eye(2), lams.shape + (2, 2)).copy()
        for x0, x1, v in q.pieces():
            T = _piece_matrix(lams, v, x1 - x0) @ T
        return T[..., 0, 0] + T[..., 1, 1]
    n = lams.size
    flat = lams.ravel()

    def rhs(x, y):
        Y = y.reshape(4, n)
        qx = q(x) - flat
        return np.concatenate([Y[2], Y[3], qx * Y[0], qx * Y[1]])

    y0 = np.concatenate([np.ones(n), np.zeros(n), np.zeros(n), np.ones(n)])
    sol = solve_ivp(rhs, (0.0, q.period), y0, method="DOP853", rtol=1e-10, atol=1e-12)
    if not sol.success:
        raise ConvergenceError(f"periodic ODE integration failed at x={sol.t[-1]:.6g}: {sol.message}")
    Y = sol.y[:, -1].reshape(4, n)
    return (Y[0] + Y[3]).reshape(lams.shape)


# --- band structure -------------------------------------------------------------

@dataclass(frozen=True)
class BandEdge:
    value: float
    sign: int  # Delta = 2 * sign at the edge
    double: bool = False


@dataclass(frozen=True)
class BandStructure:
    bands: tuple[tuple[float, float], ...]
    edge_signs: tuple[tuple[int, int], ...]
    search_ceiling: float

    def band(self, j: int) -> tuple[float, float]:
        if not 0 <= j < len(self.bands):
            raise DomainError(f"band {j} not computed below search ceiling {self.search_ceiling:g}")
        return self.bands[j]

    def locate(self, lam: float) -> int | None:
        for j, (lo, hi) in enumerate(self.bands):
            if lo < lam < hi:
                return j
        return None

    def __len__(self):
        return len(self.bands)


def _dedupe(vals, tol):
    out = []
    for v in sorted(vals):
        if not out or abs(v - out[-1]) > tol:
            out.append(v)
    return out


def band_edges(q: PeriodicPotential, lambda_max: float, step=None) -> BandStructure:
    """All band edges below ``lambda_max``, returned as complete bands."""
    lo = -q.sup_norm() - 1.0
    if not lambda_max > lo:
        raise DomainError("lambda_max must exceed the bottom of the spectrum")
    h = step if step is not None else 0.1 / q.period ** 2
    for _attempt in range(4):
        try:
            return _band_edges_grid(q, lo, float(lambda_max), h)
        except _Refine:
            h /= 4.0
    raise ConvergenceError("band_edges: bracketing failed after grid refinement")


class _Refine(Exception):
    pass


def _band_edges_grid(q, lo, hi, h):
    n = int(math.ceil((hi - lo) / h)) + 1
    grid = np.linspace(lo, hi, n)
    D = discriminants(q, grid)
    scale = max(1.0, abs(hi))
    tol = ROOT_XTOL * scale
    edges: list[BandEdge] = []

    def f(lam, sgn):
        return discriminant(q, lam) - 2.0 * sgn

    for sgn in (1, -1):
        g = D - 2.0 * sgn
        roots = []
        for i in range(n - 1):
            if g[i] == 0.0:
                roots.append(grid[i])
            elif g[i] * g[i + 1] < 0:
                roots.append(brentq(f, grid[i], grid[i + 1], args=(sgn,), xtol=tol, rtol=1e-15))
        for r in _dedupe(roots, 1e3 * tol):
            edges.append(BandEdge(float(r), sgn))

    absD = np.abs(D)
    for i in range(1, n - 1):
        if not (absD[i] >= absD[i - 1] and absD[i] >= absD[i + 1]):
            continue
        if max(absD[i - 1], absD[i], absD[i + 1]) > 2.0:
            continue  # crossings already bracketed on the grid
        sgn = 1 if D[i] > 0 else -1
        a_, b_ = grid[i - 1], grid[i + 1]
        da, db = discriminant_derivative(q, a_), discriminant_derivative(q, b_)
        if da * db > 0:
            raise _Refine()
        lam_star = brentq(lambda x: discriminant_derivative(q, x), a_, b_, xtol=tol, rtol=1e-15)
        d_star = discriminant(q, lam_star)
        excess = sgn * d_star - 2.0
        if excess < -TOUCH_TOL:
            continue  # a genuine interior extremum cannot occur; treat as numerical flat spot
        if excess <= TOUCH_TOL:
            edges.append(BandEdge(float(lam_star), sgn, True))
            edges.append(BandEdge(float(lam_star), sgn, True))
        else:
            edges.append(BandEdge(brentq(f, a_, lam_star, args=(sgn,), xtol=tol, rtol=1e-15), sgn))
            edges.append(BandEdge(brentq(f, lam_star, b_, args=(sgn,), xtol=tol, rtol=1e-15), sgn))

    edges.sort(key=lambda e: e.value)
    bands, signs = [], []
    for j in range(len(edges) // 2):
        e0, e1 = edges[2 * j], edges[2 * j + 1]
        bands.append((e0.value, e1.value))
        signs.append((e0.sign, e1.sign))
    return BandStructure(tuple(bands), tuple(signs), hi)


@lru_cache(maxsize=64)
def bands_covering(q: PeriodicPotential, j: int) -> BandStructure:
    """A band structure containing at least bands 0..j (ceiling grown as needed)."""
    a = q.period
    ceiling = (math.pi * (j + 2) / a) ** 2 + q.sup_norm() + 1.0
    for _ in range(12):
        bs = band_edges(q, ceiling)
        if len(bs) > j:
            return bs
        ceiling *= 2.0
    raise ConvergenceError(f"could not find band {j}")


# --- quasi-momentum and Bloch solutions ----------------------------------------

def _k_branch(delta: float, j: int) -> float:
    x = ((-1) ** j) * delta / 2.0
    return math.pi * j + math.acos(min(1.0, max(-1.0, x)))


def quasimomentum(q: PeriodicPotential, lam: float, band_index: int, check: bool = True) -> float:
    """k(lambda) on band j, continuous and increasing from pi j to pi (j+1)."""
    T = transfer_matrix(q, lam)
    d = T.trace
    if abs(d) > 2.0:
        raise DomainError(f"lambda={lam!r} lies in a spectral gap (|Delta|={abs(d):.6g} > 2)")
    if check:
        j = band_index_of(q, lam, T)
        if j != band_index:
            raise DomainError(f"lambda={lam!r} lies in band {j}, not band {band_index}")
    return _k_branch(d, band_index)


def _eigvec(T: np.ndarray, mu: complex) -> np.ndarray:
    v1 = np.array([T[0, 1], mu - T[0, 0]], dtype=complex)
    v2 = np.array([mu - T[1, 1], T[1, 0]], dtype=complex)
    v = v1 if np.linalg.norm(v1) >= np.linalg.norm(v2) else v2
    return v / np.linalg.norm(v)


def _phase_increment(Y: np.ndarray, v: np.ndarray) -> float:
    psi = Y[:, 0, 0] * v[0] + Y[:, 0, 1] * v[1]
    ph = np.unwrap(np.angle(psi))
    steps = np.diff(ph)
    if np.max(np.abs(steps)) > math.pi / 2:
        raise _Refine()
    return float(ph[-1] - ph[0])


def band_index_of(q: PeriodicPotential, lam: float, T: TransferMatrix | None = None) -> int:
    """Band index from the winding of a Bloch solution over one period."""
    T = T or transfer_matrix(q, lam)
    d = T.trace
    if abs(d) >= 2.0:
        raise DomainError(f"lambda={lam!r} is not inside a band")
    mu = complex(d / 2.0, math.sqrt(max(0.0, 1.0 - d * d / 4.0)))
    phi = _winding(q, lam, _eigvec(T.entries, mu))
    return int(math.floor(abs(phi) / math.pi))


def _winding(q, lam, v, m=512, Y=None):
    """Continuous phase change of the solution with data v across one period."""
    for _ in range(5):
        if Y is None:
            Y = fundamental_matrix(q, lam, np.linspace(0.0, q.period, m + 1))
        try:
            return _phase_increment(Y, v)
        except _Refine:
            m *= 4
            Y = None
    raise ConvergenceError("phase unwrap across the period did not resolve")


@dataclass(frozen=True)
class BlochData:
    """Floquet data at one spectral point inside band ``band_index``.

    ``wronskian`` is ``psi_+ conj(psi_+)' - psi_+' conj(psi_+)`` at x = 0; the
    eta-system uses ``w_eta = -wronskian`` (the determinant of the Bloch matrix).
    ``fourier_b[l + l_max]`` holds b_l and ``fourier_b_plus[l + l_max]`` holds b+_l.
    """

    lam: float
    k: float
    psi_plus_init: np.ndarray = field(repr=False)
    wronskian: complex
    band_index: int
    fourier_b: np.ndarray = field(repr=False)
    fourier_b_plus: np.ndarray = field(repr=False)
    l_max: int
    potential: PeriodicPotential = field(repr=False)
    transfer: np.ndarray = field(repr=False)
    parseval_defect: float = 0.0

    @property
    def w_eta(self) -> complex:
        return -self.wronskian

    @property
    def period(self) -> float:
        return self.potential.period

    def b(self, l: int) -> complex:
        return complex(self.fourier_b[l + self.l_max])

    def b_plus(self, l: int) -> complex:
        return complex(self.fourier_b_plus[l + self.l_max])

    def b_minus(self, l: int) -> complex:
        return complex(np.conj(self.fourier_b_plus[-l + self.l_max]))

    def psi_plus_period(self, s) -> np.ndarray:
        """(psi_+, psi_+') at points s in [0, a]; shape (len(s), 2)."""
        Y = fundamental_matrix(self.potential, self.lam, s)
        return Y @ self.psi_plus_init

    def psi_plus(self, x) -> np.ndarray:
        """(psi_+, psi_+') at arbitrary x >= 0 via quasi-periodicity."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        n = np.floor(x / self.period)
        s = x - n * self.period
        order = np.argsort(s)
        vals = np.empty((len(x), 2), dtype=complex)
        vals[order] = self.psi_plus_period(s[order])
        return vals * np.exp(1j * self.k * n)[:, None]

    def bloch_matrix(self, x) -> np.ndarray:
        """[[psi_-, psi_+], [psi_-', psi_+']] at points x; shape (len(x), 2, 2)."""
        p = self.psi_plus(x)
        B = np.empty((len(p), 2, 2), dtype=complex)
        B[:, :, 1] = p
        B[:, :, 0] = np.conj(p)
        return B

    def rescaled(self, c: complex) -> "BlochData":
        """Same data for the Bloch solution c * psi_+ (psi_- becomes conj(c) psi_-)."""
        c = complex(c)
        return BlochData(self.lam, self.k, self.psi_plus_init * c, self.wronskian * abs(c) ** 2, self.band_index,
                         self.fourier_b * abs(c) ** 2, self.fourier_b_plus * c * c, self.l_max, self.potential,
                         self.transfer, self.parseval_defect)


def _normalize(v: np.ndarray) -> np.ndarray:
    v = v / np.linalg.norm(v)
    ref = v[0] if abs(v[0]) > 1e-12 else v[1]
    return v * (abs(ref) / ref)


def bloch_data(q: PeriodicPotential, lam: float, band_index: int | None = None, l_max: int = L_MAX,
               n_samples: int = N_SAMPLES, edge_margin: float = EDGE_MARGIN) -> BlochData:
    T = transfer_matrix(q, lam)
    d = T.trace
    if abs(d) >= 2.0 - edge_margin:
        raise DomainError(f"lambda={lam!r}: |Delta|={abs(d):.12g} is within {edge_margin:g} of a band edge or outside a band")
    mu = complex(d / 2.0, math.sqrt(1.0 - d * d / 4.0))
    v = _eigvec(T.entries, mu)
    m = max(n_samples, 8 * l_max)
    s = np.arange(m + 1) * (q.period / m)
    Y = fundamental_matrix(q, lam, s)
    # psi_+ is the eigenvector whose phase winds forward; the winding is k
    phi = _winding(q, lam, v, m, Y)
    j = int(math.floor(abs(phi) / math.pi))
    sign = 1 if phi > 0 else -1
    if band_index is not None and j != band_index:
        raise DomainError(f"lambda={lam!r} lies in band {j}, not band {band_index}")
    if sign < 0:
        v = np.conj(v)
    k = _k_branch(d, j)
    v = _normalize(v)
    W = complex(v[0] * np.conj(v[1]) - v[1] * np.conj(v[0]))

    psi = (Y[:-1] @ v)[:, 0]
    x = s[:-1]
    f_plus = psi * psi * np.exp(-2j * k * x / q.period)
    f_prod = np.abs(psi) ** 2
    Fp = np.fft.fft(f_plus) / m
    Fb = np.fft.fft(f_prod) / m
    ls = np.arange(-l_max, l_max + 1)
    b_plus = Fp[ls % m]
    b = Fb[ls % m]
    parseval = float(abs(np.sum(np.abs(b_plus) ** 2) - np.mean(np.abs(f_plus) ** 2)))
    return BlochData(float(lam), k, v, W, j, b, b_plus, int(l_max), q, T.entries, parseval)
