import math

import mpmath as mp
import numpy as np
import pytest

from wvnspec.errors import DomainError
from wvnspec.floquet import bloch_data
from wvnspec.model_system.harris_lutz import (beta_series, harris_lutz_bound, harris_lutz_Q1,
                                              harris_lutz_tail_bound, oscillatory_tail, reduce_to_model, u_cr_check)
from wvnspec.model_system.monodromy import discrete_monodromy, leading_defect, monodromy_sequence
from wvnspec.resonance import beta_from_bloch


@pytest.mark.parametrize("xi", [0.3, 2.0, math.pi, -1.1, 7.0])
def test_tail_from_one_is_log(xi):
    ref = complex(-mp.log(1 - mp.expjpi(xi / math.pi)))
    assert oscillatory_tail(xi, 1)[0] == pytest.approx(ref, abs=1e-13)


@pytest.mark.parametrize("xi", [0.05, 1.0, 3.0])
def test_tail_differences_are_partial_sums(xi):
    S = oscillatory_tail(xi, np.array([3, 503]))
    m = np.arange(3, 503)
    assert S[0] - S[1] == pytest.approx(np.sum(np.exp(1j * xi * m) / m), abs=1e-12)


@pytest.mark.parametrize("xi", [0.05, 0.7, 2.5, 6.0])
def test_tail_bound_brute_force(xi):
    # brute force: all partial sums of the tail from n stay within the bound
    for n in (1, 10, 100):
        m = np.arange(n, n + 200000)
        partial = np.cumsum(np.exp(1j * xi * m) / m)
        assert np.max(np.abs(partial)) <= harris_lutz_tail_bound(xi, n) * (1 + 1e-12)
        assert abs(oscillatory_tail(xi, n)[0]) <= harris_lutz_tail_bound(xi, n)


def test_tail_rejects_resonant_angle():
    with pytest.raises(DomainError):
        oscillatory_tail(4 * math.pi, 1)


@pytest.mark.parametrize("lam", [1.0, 1.3, 2.2])
def test_free_beta_series(free_wvn, lam):
    # psi_+ = e^{ikx}: |beta_pm| = |int_0^1 e^{2i(k pm omega)t} dt| / (2 |W|), |W| = 2k
    cfg, _, _ = free_wvn
    b = bloch_data(cfg.periodic, lam, 0)
    s = beta_series(b, cfg.wvn)
    k = math.sqrt(lam)
    for coef, x in ((s.beta_plus, k + 1.0), (s.beta_minus, k - 1.0)):
        ref = abs(np.sinc(x / math.pi)) / (4 * k)
        assert abs(coef) == pytest.approx(ref, abs=1e-10)


def test_series_matches_quadrature(mathieu_cfg):
    from wvnspec.resonance import resonance_points

    rp, rm = resonance_points(mathieu_cfg.periodic, mathieu_cfg.wvn, 0, with_beta=True)
    for r in (rp, rm):
        b = bloch_data(mathieu_cfg.periodic, r.nu, 0)
        s = beta_series(b, mathieu_cfg.wvn)
        assert abs(s.resonant(r.sign)) == pytest.approx(beta_from_bloch(b, mathieu_cfg.wvn, r.sign), rel=1e-10)


def test_q1_solves_difference_equation(mathieu_cfg):
    from wvnspec.resonance import resonance_points

    _, rm = resonance_points(mathieu_cfg.periodic, mathieu_cfg.wvn, 0)
    b = bloch_data(mathieu_cfg.periodic, rm.nu + 1e-4, 0)
    s = beta_series(b, mathieu_cfg.wvn)
    res = s.resonant(-1)
    n = np.arange(5, 40)
    Q = harris_lutz_Q1(s, res, -1, np.append(n, n[-1] + 1))
    # Q_{n+1} - Q_n = X_n / n with X_n the series matrix minus the frozen resonant term
    X = s.matrix(n)
    k, aw = s.k, s.a_omega
    e = res * np.exp(2j * (k - aw) * n)
    X[:, 0, 1] -= e
    X[:, 1, 0] -= np.conj(e)
    assert np.allclose(Q[1:] - Q[:-1], X / n[:, None, None], atol=1e-12)
    bound = harris_lutz_bound(s, res, -1, n)
    assert np.all(np.abs(Q[:-1]).max(axis=(1, 2)) <= bound * (1 + 1e-12))


def test_discrete_monodromy_matches_magnus(free_wvn):
    cfg, rp, rm = free_wvn
    b = bloch_data(cfg.periodic, 1.1, 0)
    M = monodromy_sequence(cfg, b, 12)
    for n in (1, 5, 12):
        assert np.allclose(M[n - 1], discrete_monodromy(cfg, b, n), atol=1e-9)


def test_leading_defect_summable(free_wvn):
    cfg, _, _ = free_wvn
    b = bloch_data(cfg.periodic, 1.1, 0)
    d = [leading_defect(cfg, b, n) for n in (10, 20, 40, 80)]
    # second-order defect decays like 1/n^2
    assert d[-1] < d[0] / 20


def test_u_cr_rule():
    assert u_cr_check(1.0, 1.0, 2.5, 0)
    assert not u_cr_check(3.1, 1.0, 2.5, 0)


def test_reduce_to_model_free_case(free_wvn):
    cfg, _, rm = free_wvn
    red = reduce_to_model(cfg, rm, 1.2, 256)
    assert red.beta == pytest.approx(0.25, abs=1e-10)
    assert red.epsilon == pytest.approx(2 * (math.sqrt(1.2) - 1.0), abs=1e-10)
    norms = np.linalg.norm(red.remainder, ord=2, axis=(1, 2))
    n = np.arange(1, len(norms) + 1)
    # remainder is O(1/n^2): n^2 |R_n| stays bounded
    assert np.max(norms[100:] * n[100:] ** 2) < 10 * np.max(norms[10:30] * n[10:30] ** 2)


def test_mathieu_monodromy_two_routes(mathieu_cfg):
    from wvnspec.resonance import resonance_points

    _, rm = resonance_points(mathieu_cfg.periodic, mathieu_cfg.wvn, 0, with_beta=False)
    b = bloch_data(mathieu_cfg.periodic, rm.nu, 0)
    M = monodromy_sequence(mathieu_cfg, b, 10)
    assert np.allclose(M[9], discrete_monodromy(mathieu_cfg, b, 10), atol=1e-7)
