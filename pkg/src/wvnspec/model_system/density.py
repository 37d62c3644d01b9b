"""Spectral density through the model system (second, independent channel).

v_{n+1} = [I + (beta/n) J_n(eps) + R_n] v_n starts from the model image of
the boundary data; u_n = exp(-beta int_1^n cos(eps r)/r dr) v_n is the bounded
recursion, so lim v = exp(-beta Ci(|eps|)) lim u and rho' = 1/(2 pi |W| |lim v|^2).
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import sici

from ..errors import ConvergenceError, DomainError
from .harris_lutz import reduce_to_model
from .recursion import ModelParams, RemainderSeq, run_recursion

N_REMAINDER_MIN = 4096
N_REMAINDER_MAX = 1 << 18
N_RECURSION_MAX = 1 << 22


def default_remainder_horizon(eps: float) -> int:
    n = int(200.0 / abs(eps)) if eps else N_REMAINDER_MAX
    n = min(max(n, N_REMAINDER_MIN), N_REMAINDER_MAX)
    return 1 << int(math.ceil(math.log2(n)))


def _limit_v(red, alpha: float, n_rem: int, N=None):
    R = red.remainder[:n_rem]
    tail = float(np.linalg.norm(R[-1], 2)) * n_rem
    params = ModelParams(red.beta, red.epsilon, RemainderSeq.operator(R, tail), 1)
    run = run_recursion(params, red.v1(alpha), N)
    # the default horizon can stop just short of the Cauchy tolerance; extend it
    while N is None and not run.converged and run.n_max < N_RECURSION_MAX:
        run = run_recursion(params, red.v1(alpha), 4 * run.n_max)
    if run.limit_u is None:
        raise ConvergenceError("model recursion produced no limit estimate")
    scale = math.exp(-red.beta * float(sici(abs(red.epsilon))[1]))
    return scale * run.limit_u, run


def model_density(cfg, rp, lam: float, alpha: float | None = None, n_remainder: int | None = None, N=None):
    """DensitySample at ``lam`` from the model reduction around ``rp``.

    est_error combines the change of |lim v| when the operator remainder is
    cut at half the horizon with the recursion's own Cauchy difference.
    """
    from ..spectral import DensitySample, density_from_A

    if lam == rp.nu:
        raise DomainError("the model density is not defined at the resonance point itself")
    alpha = cfg.alpha if alpha is None else float(alpha)
    eps_guess = None
    n_rem = n_remainder
    if n_rem is None:
        red0 = reduce_to_model(cfg, rp, lam, 0)
        eps_guess = red0.epsilon
        n_rem = default_remainder_horizon(eps_guess)
    red = reduce_to_model(cfg, rp, lam, n_rem)
    v, run = _limit_v(red, alpha, n_rem, N)
    v_half, _ = _limit_v(red, alpha, n_rem // 2, N)
    A = red.a_from_v(v.real if np.max(np.abs(v.imag)) < 1e-8 * np.max(np.abs(v)) else v)
    err = abs(np.linalg.norm(v) - np.linalg.norm(v_half)) + run.limit_error
    W = red.bloch.wronskian
    sample = DensitySample(float(lam), A, density_from_A(A, W), float(n_rem * red.bloch.period), float(err),
                           bool(run.converged), abs(W), "model")
    return sample
