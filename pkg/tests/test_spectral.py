import math

import numpy as np
import pytest

from wvnspec.errors import ConfigError, DomainError
from wvnspec.floquet import bloch_data
from wvnspec.model_system.density import model_density
from wvnspec.potentials import PeriodicPotential, ProblemConfig, WvnTerm, free_config
from wvnspec.spectral import (DensitySample, asymptotic_coefficient, check_alpha, density_sweep, donoghue_sum,
                              exponent_fit, geometric_grid, solve_cauchy, spectral_density)


def free_density(lam, alpha):
    # phi = sin(a) cos(kx) + cos(a) sin(kx)/k has amplitude R; psi_+ = e^{ikx}, |W| = 2k, |A| = R/2
    k = math.sqrt(lam)
    return 1.0 / (math.pi * k * (math.sin(alpha) ** 2 + math.cos(alpha) ** 2 / k ** 2))


@pytest.mark.parametrize("lam", [1.0, 4.0, 9.0, 0.3])
def test_unperturbed_density(lam):
    s = spectral_density(free_config(), lam)
    assert s.rho_prime == pytest.approx(math.sqrt(lam) / math.pi, abs=1e-10)


@pytest.mark.parametrize("alpha", [0.4, 1.5707963267948966, 2.9])
def test_unperturbed_density_any_alpha(alpha):
    s = spectral_density(free_config(alpha=alpha), 2.0)
    assert s.rho_prime == pytest.approx(free_density(2.0, alpha), rel=1e-10)


def test_cauchy_solution_free_closed_form():
    cfg = free_config(alpha=0.7)
    x = np.linspace(0, 30, 7)
    tr = solve_cauchy(cfg, 2.0, 30.0, x)
    k = math.sqrt(2.0)
    ref = math.sin(0.7) * np.cos(k * x) + math.cos(0.7) * np.sin(k * x) / k
    assert np.allclose(tr.phi, ref, atol=1e-8)


def test_cauchy_restarts_at_jumps():
    q = PeriodicPotential(1.0, step_nodes=(0.0, 0.5), step_values=(0.0, 0.0))
    cfg = ProblemConfig(q, WvnTerm(0.0, 1.0))
    tr = solve_cauchy(cfg, 3.0, 5.0, [5.0])
    assert tr.phi[0] == pytest.approx(math.sin(math.sqrt(3.0) * 5) / math.sqrt(3.0), abs=1e-9)


def test_two_routes_to_A(free_wvn):
    cfg, _, _ = free_wvn
    b = bloch_data(cfg.periodic, 1.21, 0)
    m = asymptotic_coefficient(cfg, b, method="monodromy", rel_tol=1e-3)
    o = asymptotic_coefficient(cfg, b, method="ode", rel_tol=1e-3)
    assert m.converged and o.converged
    # same horizon, so the window means agree far below the tolerance
    assert m.X_used == o.X_used
    assert abs(m.A - o.A) < 1e-6 * abs(m.A)


def test_mathieu_density_positive_and_finite(mathieu_cfg):
    s = spectral_density(mathieu_cfg, 0.63, 1, rel_tol=1e-3)
    assert s.converged and 0 < s.rho_prime < math.inf


def test_gap_point_raises(mathieu_cfg):
    with pytest.raises(DomainError):
        spectral_density(mathieu_cfg, 0.0)


def test_sweep_order_and_pool(free_wvn, monkeypatch):
    cfg, _, _ = free_wvn
    lams = [1.5, 1.1, 1.3]
    serial = density_sweep(cfg, lams, 0, workers=1)
    monkeypatch.setenv("WVN_THREADS", "2")
    par = density_sweep(cfg, lams, 0, workers=2)
    assert [s.lam for s in par] == lams
    assert [s.rho_prime for s in par] == [s.rho_prime for s in serial]


def test_geometric_grid_validation():
    g = geometric_grid(1e-3, 1e-1)
    assert g[0] == pytest.approx(1e-3) and g[-1] == pytest.approx(1e-1)
    steps = np.diff(np.log(g))
    assert np.allclose(steps, steps[0]) and steps[0] == pytest.approx(np.log(2) / 4, rel=0.1)
    with pytest.raises(ConfigError):
        geometric_grid(1e-1, 1e-3)


def test_alpha_near_critical_is_refused(free_wvn):
    from dataclasses import replace

    _, _, rm = free_wvn
    with pytest.raises(DomainError):
        check_alpha(1.0, replace(rm, alpha_cr=1.0 + 1e-5))
    check_alpha(0.0, replace(rm, alpha_cr=1.8))


def test_donoghue_sum_power_law():
    # rho' = d^2.5 on both sides: sum_side int d^0.5 dd = (2/3)(d1^1.5 - d0^1.5)
    nu = 1.0
    d = geometric_grid(1e-3, 1e-1, 400)
    samples = [DensitySample(nu + s * x, 1.0, x ** 2.5, 0.0, 0.0) for s in (-1, 1) for x in d]
    ref = 2 * (2 / 3) * (0.1 ** 1.5 - 1e-3 ** 1.5)
    assert donoghue_sum(samples, nu) == pytest.approx(ref, rel=1e-4)


def test_exponent_fit_free_quick(free_wvn):
    cfg, _, rm = free_wvn
    fit = exponent_fit(cfg, rm, "right", n_points=5, d_min=1e-2, d_max=1e-1)
    assert fit.predicted_exponent == pytest.approx(0.5)
    assert fit.fitted_exponent == pytest.approx(0.5, abs=0.05)
    assert fit.fitted_C > 0


def test_model_channel_unperturbed():
    from wvnspec.resonance import resonance_points

    cfg = free_config(1.0, 0.0, 1.0)
    _, rm = resonance_points(cfg.periodic, WvnTerm(1.0, 1.0), 0)
    for lam in (0.9, 1.2):
        assert model_density(cfg, rm, lam).rho_prime == pytest.approx(math.sqrt(lam) / math.pi, abs=1e-6)


def test_model_channel_local_power_law(free_wvn):
    cfg, _, rm = free_wvn
    r = [model_density(cfg, rm, 1.0 - d).rho_prime for d in (1e-2, 5e-3)]
    assert r[0] / r[1] == pytest.approx(2 ** 0.5, rel=0.01)


def test_model_channel_rejects_nu(free_wvn):
    cfg, _, rm = free_wvn
    with pytest.raises(DomainError):
        model_density(cfg, rm, rm.nu)
