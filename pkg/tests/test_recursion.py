import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import gamma

from wvnspec.errors import ConfigError
from wvnspec.model_system.recursion import (ModelParams, RemainderSeq, b_matrices, b_matrix, cos_integral_step,
                                            levinson_limit, max_product_norm, prefix_products, run_recursion,
                                            theta_map)


@pytest.mark.parametrize("eps", [0.0, 1e-6, 1e-3, 0.1, 1.5, -0.7])
@pytest.mark.parametrize("n", [1, 7, 1000])
def test_cos_integral_step_against_quadrature(eps, n):
    ref = float(mp.quad(lambda r: mp.cos(eps * r) / r, [n, n + 1]))
    assert cos_integral_step(eps, np.array([n]))[0] == pytest.approx(ref, rel=1e-13, abs=1e-16)


def test_b_matrix_zero_eps_is_diagonal():
    p = ModelParams(0.5)
    B = b_matrix(p, 3)
    s = math.exp(-0.5 * math.log(4 / 3))
    assert np.allclose(B, s * np.diag([1 + 0.5 / 3, 1 - 0.5 / 3]), atol=1e-15)


def test_n_start_guard():
    assert ModelParams(1.0).n_start == 2
    with pytest.raises(ConfigError, match="n_start"):
        ModelParams(1.0, n_start=1)
    with pytest.raises(ConfigError, match="n="):
        b_matrix(ModelParams(0.25), 0)


def test_prefix_products_match_loop():
    rng = np.random.default_rng(1)
    B = np.eye(2) + 0.1 * rng.standard_normal((3000, 2, 2))
    P = prefix_products(B, block=128)
    acc = np.eye(2)
    for i in range(len(B)):
        acc = B[i] @ acc
        if i in (0, 127, 128, 2999):
            assert np.allclose(P[i], acc, rtol=1e-12, atol=1e-12)


def test_beta_zero_is_identity():
    r = run_recursion(ModelParams(0.0, 0.3), [1.0, 2.0], N=4096)
    assert np.allclose(r.limit_u, [1.0, 2.0], atol=1e-14)


def test_telescoping_beta_one():
    # beta = 1, eps = 0: B_n = diag(n/(n+1) (1 + 1/n), ...) = diag(1, ...) exactly
    r = run_recursion(ModelParams(1.0), [1.0, 0.0])
    assert r.converged
    assert np.allclose(r.limit_u, [1.0, 0.0], atol=1e-8)


@pytest.mark.parametrize("beta", [0.25, 0.5, 1.0])
def test_theta_value_and_rank_one(beta):
    th = theta_map(ModelParams(beta), 1 << 18)
    # product of (1 + b/n)(n/(n+1))^b from n = n0 telescopes to a Gamma ratio
    n0 = ModelParams(beta).n_start
    ref = n0 ** beta * math.gamma(n0) / gamma(n0 + beta)
    assert th.theta[0, 0] == pytest.approx(ref, abs=1e-8)
    assert abs(th.theta[1, 1]) < 1e-8 and abs(th.theta[0, 1]) < 1e-14
    assert th.ratio_slope == pytest.approx(-2 * beta, rel=0.1)


def test_theta_beta_one_exact():
    th = theta_map(ModelParams(1.0), 1 << 16)
    assert th.richardson[0, 0] == pytest.approx(1.0, abs=1e-10)


def test_kernel_direction_maps_to_zero():
    r = run_recursion(ModelParams(0.25), [0.0, 1.0], N=1 << 20)
    assert np.linalg.norm(r.limit_u) < 1e-8


@settings(max_examples=5, deadline=None)
@given(st.floats(-1, 1), st.floats(-1, 1))
def test_levinson_matches_theta(f1, f2):
    p = ModelParams(0.25, 0.0, RemainderSeq.synthetic(0.3, 2.0))
    f = np.array([f1, f2])
    th = theta_map(p, 1 << 17)
    assert np.linalg.norm(th.theta @ f - levinson_limit(p, f, 1 << 17)) < 1e-8


def test_single_kick_remainder():
    G = np.array([[0.0, 0.5], [0.5, 0.0]])
    p = ModelParams(0.25, 0.0, RemainderSeq.single(5, G))
    th = theta_map(p, 1 << 16)
    # the kick couples the decaying component back into the surviving one
    assert abs(th.theta[0, 1]) > 1e-3
    assert np.linalg.norm(th.theta @ [0.0, 1.0] - levinson_limit(p, [0.0, 1.0], 1 << 16)) < 1e-8


def test_a_priori_bound_flat_in_eps():
    norms = [max_product_norm(ModelParams(0.5, e), 1 << 18) for e in (0.0, 0.2, 0.05, 0.0125, 0.003)]
    assert max(norms) / min(norms) < 2.0


def test_operator_remainder_needs_values():
    with pytest.raises(ConfigError):
        RemainderSeq("operator")
    with pytest.raises(ConfigError, match="p > 1"):
        RemainderSeq.synthetic(1.0, 1.0)


def test_b_matrices_vectorized_consistency():
    p = ModelParams(0.25, 0.3, RemainderSeq.synthetic(0.1))
    n = np.arange(1, 50)
    B = b_matrices(p, n)
    assert np.allclose(B[10], b_matrix(p, 11))
