"""The discrete model system u_{n+1} = B_n(eps) u_n.

    B_n(eps) = exp(-beta int_n^{n+1} cos(eps r)/r dr) [I + (beta/n) J_n(eps) + R_n(eps)],
    J_n(eps) = [[cos eps n, sin eps n], [sin eps n, -cos eps n]].

Products are accumulated with a chunked scan; infinite tails beyond the last
computed index are closed with explicit correctors (a Gamma-function product
for eps = 0 and a second-order Magnus-type expansion for eps != 0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm
from scipy.special import gammaln, sici, zeta

from ..errors import ConfigError, ConvergenceError
from .harris_lutz import oscillatory_tail

EULER_GAMMA = 0.57721566490153286
LIMIT_RTOL = 1e-8


# --- remainder sequences ---------------------------------------------------------

@dataclass(frozen=True)
class RemainderSeq:
    """R_n of the model system.

    * ``zero``: R_n = 0.
    * ``synthetic``: R_n = amplitude * n**(-p) * G, or a single term at ``only_n``.
    * ``operator``: explicit values ``values[n - 1]`` for n <= len(values), zero beyond;
      ``tail_bound`` bounds the neglected part.
    """

    kind: str = "zero"
    p: float = 2.0
    amplitude: float = 0.0
    matrix: tuple = ((0.0, 1.0), (1.0, 0.0))
    only_n: int | None = None
    values: np.ndarray | None = field(default=None, repr=False, compare=False)
    tail_bound: float = 0.0

    def __post_init__(self):
        if self.kind not in ("zero", "synthetic", "operator"):
            raise ConfigError(f"remainder kind must be zero, synthetic or operator; got {self.kind!r}")
        if self.kind == "synthetic" and self.only_n is None and not self.p > 1:
            raise ConfigError("synthetic remainder needs p > 1 for summability")
        if self.kind == "operator" and self.values is None:
            raise ConfigError("operator remainder needs explicit values")

    @classmethod
    def zero(cls) -> "RemainderSeq":
        return cls()

    @classmethod
    def synthetic(cls, amplitude: float, p: float = 2.0, matrix=((0.0, 1.0), (1.0, 0.0))) -> "RemainderSeq":
        return cls("synthetic", p=p, amplitude=amplitude, matrix=tuple(map(tuple, matrix)))

    @classmethod
    def single(cls, n: int, matrix) -> "RemainderSeq":
        return cls("synthetic", amplitude=1.0, matrix=tuple(map(tuple, np.asarray(matrix).tolist())), only_n=int(n))

    @classmethod
    def operator(cls, values: np.ndarray, tail_bound: float = 0.0) -> "RemainderSeq":
        return cls("operator", values=np.asarray(values), tail_bound=float(tail_bound))

    @property
    def G(self) -> np.ndarray:
        return np.asarray(self.matrix)

    @property
    def is_complex(self) -> bool:
        if self.kind == "operator":
            return np.iscomplexobj(self.values)
        return np.iscomplexobj(np.asarray(self.matrix))

    @property
    def last_index(self) -> float:
        """Largest n with R_n possibly nonzero (inf for decaying sequences)."""
        if self.kind == "zero":
            return 0
        if self.kind == "operator":
            return len(self.values)
        return self.only_n if self.only_n is not None else math.inf

    def l1_bound(self, n_start: int = 1) -> float:
        if self.kind == "zero":
            return 0.0
        if self.kind == "operator":
            norms = np.linalg.norm(self.values[n_start - 1:], ord=2, axis=(1, 2))
            return float(np.sum(norms) + self.tail_bound)
        g = float(np.linalg.norm(self.G, 2)) * abs(self.amplitude)
        if self.only_n is not None:
            return g if self.only_n >= n_start else 0.0
        return g * float(zeta(self.p, n_start))

    def at(self, n: np.ndarray) -> np.ndarray | None:
        """R_n for an index array, or None when identically zero there."""
        if self.kind == "zero":
            return None
        n = np.asarray(n)
        if self.kind == "operator":
            L = len(self.values)
            if n[0] > L:
                return None
            out = np.zeros((len(n), 2, 2), dtype=self.values.dtype)
            inside = n <= L
            out[inside] = self.values[n[inside] - 1]
            return out
        G = self.G
        if self.only_n is not None:
            hit = n == self.only_n
            if not np.any(hit):
                return None
            out = np.zeros((len(n), 2, 2), dtype=G.dtype)
            out[hit] = self.amplitude * G
            return out
        return (self.amplitude * np.asarray(n, dtype=float) ** (-self.p))[:, None, None] * G

    def tail_sum(self, N: int) -> np.ndarray:
        """sum_{n >= N} R_n (synthetic sequences only; zero otherwise)."""
        if self.kind != "synthetic":
            return np.zeros((2, 2))
        if self.only_n is not None:
            return self.amplitude * self.G if self.only_n >= N else np.zeros((2, 2))
        return self.amplitude * float(zeta(self.p, N)) * self.G


@dataclass(frozen=True)
class ModelParams:
    beta: float
    epsilon: float = 0.0
    remainder: RemainderSeq = RemainderSeq()
    n_start: int | None = None

    def __post_init__(self):
        if not (self.beta >= 0 and math.isfinite(self.beta)):
            raise ConfigError("beta must be a nonnegative finite number")
        if not abs(self.epsilon) < 2 * math.pi:
            raise ConfigError("epsilon must lie in (-2 pi, 2 pi)")
        if self.n_start is None:
            ns = 1 if self.remainder.kind == "operator" else int(math.floor(self.beta)) + 1
            object.__setattr__(self, "n_start", ns)
        if self.n_start < 1:
            raise ConfigError("n_start must be positive")
        if self.remainder.kind != "operator" and not self.n_start > self.beta:
            raise ConfigError(f"n_start={self.n_start} must exceed beta={self.beta}")

    def with_epsilon(self, eps: float) -> "ModelParams":
        return ModelParams(self.beta, float(eps), self.remainder, self.n_start)


# --- elementary pieces ----------------------------------------------------------

def _cin(x):
    """Cin(x) = int_0^x (1 - cos t)/t dt."""
    x = np.asarray(x, dtype=float)
    small = x < 1.0
    out = np.empty_like(x)
    if np.any(small):
        xs = x[small]
        t = xs * xs
        acc = np.zeros_like(xs)
        term = t / 2.0  # x^2 / 2!
        for k in range(1, 12):
            acc = acc + term / (2 * k)
            term = -term * t / ((2 * k + 1) * (2 * k + 2))
        out[small] = acc
    if np.any(~small):
        xl = x[~small]
        out[~small] = EULER_GAMMA + np.log(xl) - sici(xl)[1]
    return out


def cos_integral_step(eps: float, n) -> np.ndarray:
    """int_n^{n+1} cos(eps r)/r dr, accurate for all eps and n."""
    n = np.asarray(n, dtype=float)
    base = np.log1p(1.0 / n)
    if eps == 0.0:
        return base
    e = abs(eps)
    x0, x1 = e * n, e * (n + 1)
    out = np.empty_like(n)
    small = x1 < 1.0
    if np.any(small):
        out[small] = base[small] - (_cin(x1[small]) - _cin(x0[small]))
    if np.any(~small):
        out[~small] = sici(x1[~small])[1] - sici(x0[~small])[1]
    return out


def cos_integral_from(eps: float, n: float) -> float:
    """int_n^inf cos(eps r)/r dr = -Ci(|eps| n) for eps != 0."""
    return float(-sici(abs(eps) * n)[1])


def b_matrices(params: ModelParams, n) -> np.ndarray:
    """Stack of B_n(eps) for an index array n."""
    n = np.asarray(n)
    nf = n.astype(float)
    beta, eps = params.beta, params.epsilon
    sc = np.exp(-beta * cos_integral_step(eps, nf))
    c = np.cos(eps * nf)
    s = np.sin(eps * nf)
    R = params.remainder.at(n)
    dtype = complex if (R is not None and np.iscomplexobj(R)) else float
    B = np.empty((len(nf), 2, 2), dtype=dtype)
    B[:, 0, 0] = 1.0 + beta / nf * c
    B[:, 0, 1] = beta / nf * s
    B[:, 1, 0] = beta / nf * s
    B[:, 1, 1] = 1.0 - beta / nf * c
    if R is not None:
        B = B + R
    return sc[:, None, None] * B


def b_matrix(params: ModelParams, n: int, epsilon: float | None = None) -> np.ndarray:
    if n < params.n_start:
        raise ConfigError(f"n={n} is below n_start={params.n_start}")
    p = params if epsilon is None else params.with_epsilon(epsilon)
    return b_matrices(p, np.array([n]))[0]


def prefix_products(B: np.ndarray, block: int = 1024) -> np.ndarray:
    """P[i] = B[i] @ ... @ B[0] for a stack B of 2x2 matrices.

    Local products are formed inside blocks (vectorized across blocks),
    then block carries are chained and applied in one batched product.
    """
    N = len(B)
    if N == 0:
        return B.copy()
    nb = -(-N // block)
    pad = nb * block - N
    if pad:
        eye = np.broadcast_to(np.eye(2, dtype=B.dtype), (pad, 2, 2))
        Bp = np.concatenate([B, eye])
    else:
        Bp = B
    Bb = Bp.reshape(nb, block, 2, 2)
    L = np.empty_like(Bb)
    L[:, 0] = Bb[:, 0]
    for i in range(1, block):
        L[:, i] = Bb[:, i] @ L[:, i - 1]
    carry = np.empty((nb, 2, 2), dtype=B.dtype)
    acc = np.eye(2, dtype=B.dtype)
    for b in range(nb):
        carry[b] = acc
        acc = L[b, -1] @ acc
    P = L @ carry[:, None]
    return P.reshape(nb * block, 2, 2)[:N]


# --- tails -----------------------------------------------------------------------

def tail_diag_zero(beta: float, N: int) -> float:
    """prod_{n >= N} (n/(n+1))^beta (1 + beta/n) = Gamma(N) N^beta / Gamma(N + beta)."""
    return float(np.exp(gammaln(N) + beta * math.log(N) - gammaln(N + beta)))


def tail_product(params: ModelParams, N: int) -> np.ndarray:
    """Approximation of prod_{n >= N} B_n(eps) (rightmost factor n = N).

    Exact for eps = 0 and zero remainder; for eps != 0 the error is
    O(beta^2 / (N eps)^2) plus the neglected remainder tail.
    """
    beta, eps = params.beta, params.epsilon
    rem = params.remainder
    if eps == 0.0:
        tau = tail_diag_zero(beta, N)
        T = np.array([[tau, 0.0], [0.0, 0.0]], dtype=complex if rem.is_complex else float)
        if rem.kind == "synthetic" and rem.only_n is None:
            G = rem.G
            T = T + rem.amplitude * np.array(
                [[tau * G[0, 0] * zeta(rem.p, N), G[0, 1] * N ** (2 * beta) * zeta(rem.p + 2 * beta, N)],
                 [0.0, 0.0]])
        elif rem.kind == "synthetic" and rem.only_n >= N:
            raise ConvergenceError("tail starts before the single synthetic term")
        return T
    sigma = beta * float(sici(abs(eps) * N)[1]) + 0.5 * (2 * gammaln(N) - gammaln(N - beta) - gammaln(N + beta))
    S = complex(oscillatory_tail(eps, np.array([N]))[0])
    a3 = beta * S.real
    a1 = beta * S.imag
    a2 = -beta * beta / (2.0 * N * math.tan(eps / 2.0))
    Om = np.array([[a3, a1 + a2], [a1 - a2, -a3]], dtype=complex if rem.is_complex else float)
    Om = Om + rem.tail_sum(N)
    return math.exp(sigma) * expm(Om)


# --- runs --------------------------------------------------------------------------

def _scan(params: ModelParams, n0: int, n1: int, chunk: int = 1 << 18):
    """Yield (n_array, cumulative products relative to index n0) chunk by chunk."""
    carry = None
    for c0 in range(n0, n1, chunk):
        c1 = min(n1, c0 + chunk)
        n = np.arange(c0, c1)
        P = prefix_products(b_matrices(params, n))
        if carry is not None:
            P = P @ carry
        carry = P[-1]
        yield n, P


@dataclass
class ModelRun:
    params: ModelParams
    f: np.ndarray
    checkpoints: np.ndarray
    u: np.ndarray
    limit_u: np.ndarray | None
    limit_estimates: np.ndarray
    limit_error: float
    converged: bool
    c3: float
    max_product_norm: float
    n_max: int
    slow_samples: list = field(default_factory=list)


def default_horizon(params: ModelParams, y_target: float = 2000.0, cap: int = 1 << 24) -> int:
    if params.epsilon == 0.0:
        n = 1 << 20
    else:
        n = int(math.ceil(y_target / abs(params.epsilon)))
    last = params.remainder.last_index
    if math.isfinite(last):
        n = max(n, 2 * int(last) + 2)
    n = max(n, 64 * params.n_start)
    return int(min(cap, 1 << int(math.ceil(math.log2(n)))))


def run_recursion(params: ModelParams, f, N: int | None = None, checkpoints=None,
                  rtol: float = LIMIT_RTOL) -> ModelRun:
    """Iterate u_{n+1} = B_n u_n from u_{n_start} = f up to n = N.

    Limit estimates T_n u_n (T_n the tail corrector) are formed at
    checkpoints n = n_start * 2^k; convergence is declared when two
    consecutive estimates agree to ``rtol`` relative.
    """
    f = np.asarray(f, dtype=complex if np.iscomplexobj(np.asarray(f)) or params.remainder.is_complex else float)
    ns = params.n_start
    N = int(N or default_horizon(params))
    if N <= ns:
        raise ConfigError("N must exceed n_start")
    if checkpoints is None:
        cps = []
        c = ns
        while c < N:
            c *= 2
            cps.append(min(c, N))
        checkpoints = np.unique(np.array(cps))
    checkpoints = np.asarray(checkpoints)
    u_cp = np.empty((len(checkpoints), 2), dtype=complex)
    max_norm = 1.0
    max_u = float(np.linalg.norm(f))
    cp_i = 0
    for n, P in _scan(params, ns, N):
        # P[i] is the product B_{n[i]} ... B_{ns}; it maps f to u_{n[i]+1}
        norms = np.linalg.norm(P, ord=2, axis=(1, 2)) if len(P) < (1 << 16) else _fast_norm2(P)
        max_norm = max(max_norm, float(np.max(norms)))
        U = P @ f
        max_u = max(max_u, float(np.max(np.linalg.norm(U, axis=1))))
        while cp_i < len(checkpoints) and checkpoints[cp_i] - 1 <= n[-1]:
            u_cp[cp_i] = U[checkpoints[cp_i] - 1 - n[0]]
            cp_i += 1
        if max_norm > 1e150:
            raise ConvergenceError("model recursion overflow: a priori bound violated")
    est = np.array([tail_product(params, int(c)) @ u for c, u in zip(checkpoints, u_cp)])
    limit, err, conv = None, math.inf, False
    if len(est) >= 2:
        diffs = np.linalg.norm(np.diff(est, axis=0), axis=1)
        scale = max(np.linalg.norm(est[-1]), np.finfo(float).tiny)
        err = float(diffs[-1])
        limit = est[-1]
        conv = bool(err <= rtol * scale) or bool(err <= 1e-14)
    nf = float(np.linalg.norm(f)) or 1.0
    return ModelRun(params, f, checkpoints, u_cp, limit, est, err, conv, max_u / nf, max_norm, N)


def _fast_norm2(P: np.ndarray) -> np.ndarray:
    """Spectral norms of a stack of 2x2 matrices via the closed form."""
    fro2 = np.sum(np.abs(P) ** 2, axis=(1, 2))
    det = np.abs(P[:, 0, 0] * P[:, 1, 1] - P[:, 0, 1] * P[:, 1, 0])
    return np.sqrt(0.5 * (fro2 + np.sqrt(np.maximum(fro2 * fro2 - 4 * det * det, 0.0))))


def max_product_norm(params: ModelParams, N: int) -> float:
    """max_{n <= N} ||B_n ... B_{n_start}||."""
    m = 1.0
    for _, P in _scan(params, params.n_start, N):
        m = max(m, float(np.max(_fast_norm2(P))))
    return m


@dataclass
class ThetaResult:
    theta: np.ndarray
    partial: np.ndarray
    singular_values: np.ndarray
    checkpoints: np.ndarray
    sigma_ratio: np.ndarray
    ratio_slope: float
    richardson: np.ndarray
    N: int


def theta_map(params: ModelParams, N: int = 10 ** 6) -> ThetaResult:
    """The eps = 0 limit map Theta = prod_{n >= n_start} B_n(0).

    ``partial`` is the raw product up to N, ``richardson`` the O(1/N)
    extrapolation 2 P_N - P_{N/2}, and ``theta`` the tail-corrected product.
    """
    if params.epsilon != 0.0:
        raise ConfigError("theta_map requires epsilon = 0")
    ns = params.n_start
    cps = []
    c = max(ns + 1, 16)
    while c < N:
        cps.append(c)
        c *= 2
    cps.append(N)
    half = N // 2
    cps = np.unique(np.array(cps + [half]))
    mats = {}
    for n, P in _scan(params, ns, N):
        for cp in cps:
            i = cp - 1 - n[0]
            if 0 <= i < len(n):
                mats[int(cp)] = P[i]  # product up to B_{cp-1}: maps u_ns to u_cp
    PN = mats[N]
    sv = np.linalg.svd(PN, compute_uv=False)
    ratios = np.array([np.linalg.svd(mats[int(c)], compute_uv=False) for c in cps])
    ratio = ratios[:, 1] / ratios[:, 0]
    use = cps >= max(64, ns * 8)
    slope = float(np.polyfit(np.log(cps[use]), np.log(ratio[use]), 1)[0]) if use.sum() >= 2 else float("nan")
    rich = 2 * PN - mats[half]
    theta = tail_product(params, N) @ PN
    return ThetaResult(theta, PN, sv, cps, ratio, slope, rich, N)


def levinson_limit(params: ModelParams, f, N: int = 10 ** 6) -> np.ndarray:
    """Limit of u_n(0, f) from the Levinson-type sum.

        lim u_n = P1 [ f + sum_{k >= n_start} R7_k u_k ],
        R7_k = B_k(0) - diag(1, (k/(k+1))^(2 beta)),

    with the sum beyond N closed by the exact diagonal tail.
    """
    if params.epsilon != 0.0:
        raise ConfigError("levinson_limit requires epsilon = 0")
    beta = params.beta
    f = np.asarray(f, dtype=complex)
    ns = params.n_start
    acc = complex(f[0])
    uN = f
    for n, P in _scan(params, ns, N):
        B = b_matrices(params, n)
        Pf = P @ f  # Pf[i] = u_{n[i]+1}
        U = np.concatenate([[uN], Pf[:-1]])  # U[i] = u_{n[i]}
        nf = n.astype(float)
        r7 = B.astype(complex)
        r7[:, 0, 0] -= 1.0
        r7[:, 1, 1] -= np.exp(2 * beta * (np.log(nf) - np.log1p(nf)))
        acc += np.sum(r7[:, 0, 0] * U[:, 0] + r7[:, 0, 1] * U[:, 1])
        uN = Pf[-1]
    # closing terms: the R = 0 part telescopes to u_N1 (tau_N - 1)
    tau = tail_diag_zero(beta, N)
    acc += uN[0] * (tau - 1.0)
    rem = params.remainder
    if rem.kind == "synthetic" and rem.only_n is None:
        G = rem.G
        acc += rem.amplitude * (G[0, 0] * uN[0] * tau * zeta(rem.p, N)
                                + G[0, 1] * uN[1] * N ** (2 * beta) * zeta(rem.p + 2 * beta, N))
    return np.array([acc, 0.0], dtype=complex)
