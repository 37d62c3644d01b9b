import numpy as np
import pytest

from wvnspec.errors import ConfigError
from wvnspec.model_system.recursion import ModelParams, RemainderSeq, run_recursion, theta_map
from wvnspec.model_system.slow_scale import (interchange_check, limit_ode_solve, volterra_residual, volterra_solve,
                                             z_equation_residual)


def test_beta_zero_is_constant():
    t = volterra_solve(0.0, 1, [1.0, 2.0], 10.0)
    assert np.allclose(t.h, [1.0, 2.0])
    assert np.allclose(t.limit, [1.0, 2.0])


def test_zero_initial_value_stays_zero():
    t = volterra_solve(0.25, -1, [0.0, 0.0], 20.0, step=1e-2)
    assert np.max(np.abs(t.h)) == 0.0


@pytest.mark.parametrize("sign", [1, -1])
def test_volterra_against_limit_ode(sign):
    t = volterra_solve(0.25, sign, [1.0, 0.0], 60.0, step=2e-3)
    o = limit_ode_solve(0.25, t.at(1.0), 1.0, 60.0, sign, 0.0)
    assert np.max(np.abs(o.tail_value - t.h[-1])) < 1e-7


def test_volterra_residual_is_small():
    t = volterra_solve(0.5, 1, [1.0, 0.0], 20.0, step=2e-3)
    assert volterra_residual(t) < 1e-4
    coarse = volterra_solve(0.5, 1, [1.0, 0.0], 20.0, step=4e-3)
    assert np.max(np.abs(coarse.h[-1] - t.h[-1])) < 1e-6


def test_limit_is_horizon_stable():
    t = volterra_solve(0.25, 1, [1.0, 0.0], 10.0, step=2e-3)
    lims = [limit_ode_solve(0.25, t.at(1.0), 1.0, Y).limit for Y in (500.0, 2000.0)]
    assert np.max(np.abs(lims[0] - lims[1])) < 1e-5
    assert np.linalg.norm(lims[1]) > 0.5


@pytest.mark.parametrize("eps", [0.3, -0.05])
def test_z_equation_identity(eps):
    p = ModelParams(0.25, eps, RemainderSeq.synthetic(0.2))
    assert z_equation_residual(p, [1.0, 0.5], 2000) < 1e-12


def test_interchange_kernel_direction():
    rep = interchange_check(ModelParams(0.25), [0.2, 0.1], [0.0, 1.0], y_max=20.0, step=1e-2, theta_N=1 << 16,
                            run_N=1 << 16)
    assert np.linalg.norm(rep.h_limit) < 1e-8
    # the discrete limits fade like eps^(2 beta) toward the kernel
    norms = np.linalg.norm(rep.limits, axis=1)
    assert norms[1] / norms[0] == pytest.approx(2 ** -0.5, rel=0.1)


def test_interchange_rejects_two_sided_grid():
    with pytest.raises(ConfigError):
        interchange_check(ModelParams(0.25), [0.1, -0.1], [1.0, 0.0])


def test_finite_eps_run_approaches_h_limit():
    # at eps = 0.0125 the discrete limit is already close to the slow-scale limit
    p = ModelParams(0.25)
    h0 = theta_map(p, 1 << 18).theta @ np.array([1.0, 0.0])
    t = volterra_solve(0.25, 1, h0, 100.0, step=5e-3)
    r = run_recursion(p.with_epsilon(0.0125), [1.0, 0.0])
    assert r.converged
    assert np.linalg.norm(r.limit_u - t.limit) < 0.05
