import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import mathieu_a, mathieu_b

from wvnspec.errors import DomainError
from wvnspec.floquet import (band_edges, bloch_data, discriminant, fundamental_matrix, quasimomentum,
                             transfer_matrix)
from wvnspec.potentials import PeriodicPotential


def rk4_fundamental(q, lam, n=4000):
    """Fixed-step RK4 for Y' = [[0, 1], [q - lam, 0]] Y over one period."""
    h = q.period / n
    Y = np.eye(2)

    def f(x, Y):
        # sample q strictly inside the current step so jumps on grid nodes are seen once
        xs = min(max(x, x0 + 1e-6 * h), x0 + h - 1e-6 * h)
        return np.array([[0.0, 1.0], [q(xs) - lam, 0.0]]) @ Y

    x = 0.0
    for i in range(n):
        x0 = x
        k1 = f(x, Y)
        k2 = f(x + h / 2, Y + h / 2 * k1)
        k3 = f(x + h / 2, Y + h / 2 * k2)
        k4 = f(x + h, Y + h * k3)
        Y = Y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        x = (i + 1) * h
    return Y


def test_free_discriminant_closed_form():
    q = PeriodicPotential(1.3)
    for lam in (-2.0, 0.5, 7.0, 40.0):
        ref = 2 * math.cosh(1.3 * math.sqrt(-lam)) if lam < 0 else 2 * math.cos(1.3 * math.sqrt(lam))
        assert discriminant(q, lam) == pytest.approx(ref, abs=1e-10)


def test_free_band_edges():
    bs = band_edges(PeriodicPotential(1.0), 100.0)
    edges = np.array(bs.bands)
    for j, (lo, hi) in enumerate(edges):
        assert lo == pytest.approx((math.pi * j) ** 2, abs=1e-8)
        assert hi == pytest.approx((math.pi * (j + 1)) ** 2, abs=1e-8)


def test_mathieu_edges_against_characteristic_values(mathieu_q):
    # -y'' + 2 cos(x) y = lam y is Mathieu's equation with q = 4, a = 4 lam in z = x / 2
    bs = band_edges(mathieu_q, 5.0)
    for j, (lo, hi) in enumerate(bs.bands):
        assert lo == pytest.approx(mathieu_a(j, 4) / 4, abs=1e-9)
        assert hi == pytest.approx(mathieu_b(j + 1, 4) / 4, abs=1e-9)


def test_transfer_matrix_against_rk4(mathieu_q):
    for lam in (-1.0, 0.6, 3.0):
        T = transfer_matrix(mathieu_q, lam).entries
        assert np.allclose(T, rk4_fundamental(mathieu_q, lam), atol=1e-8)


def test_step_potential_transfer_against_rk4():
    q = PeriodicPotential(1.0, step_nodes=(0.0, 0.3), step_values=(2.0, -1.0))
    for lam in (0.5, 10.0):
        ref = rk4_fundamental(q, lam, 20000)
        assert np.allclose(transfer_matrix(q, lam).entries, ref, atol=1e-6)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.5, 3.0), st.floats(-2, 2), st.floats(-2, 2), st.floats(-5, 60))
def test_unit_determinant(a, c1, s1, lam):
    q = PeriodicPotential(a, (0.0, c1), (s1,))
    assert transfer_matrix(q, lam).det == pytest.approx(1.0, abs=1e-10)


def test_quasimomentum_monotone_and_edges(mathieu_q):
    bs = band_edges(mathieu_q, 5.0)
    for j, (lo, hi) in enumerate(bs.bands):
        lams = np.linspace(lo, hi, 22)[1:-1]
        k = [quasimomentum(mathieu_q, l, j) for l in lams]
        assert np.all(np.diff(k) > 0)
        # k ~ sqrt(distance) near an edge, so step in by 1e-12 of the band
        d = 1e-12 * (hi - lo)
        assert quasimomentum(mathieu_q, lo + d, j, check=False) == pytest.approx(math.pi * j, abs=1e-3)
        assert quasimomentum(mathieu_q, hi - d, j, check=False) == pytest.approx(math.pi * (j + 1), abs=1e-3)


def test_free_quasimomentum():
    q = PeriodicPotential(1.0)
    assert quasimomentum(q, 2.0, 0) == pytest.approx(math.sqrt(2.0), abs=1e-10)
    assert quasimomentum(q, 20.0, 1) == pytest.approx(math.sqrt(20.0), abs=1e-10)


def test_gap_raises(mathieu_q):
    with pytest.raises(DomainError, match="gap"):
        quasimomentum(mathieu_q, 0.0, 0)


def test_bloch_quasi_periodicity(mathieu_q):
    b = bloch_data(mathieu_q, 0.63, 1)
    x = np.array([0.3, 1.7])
    p0 = b.psi_plus(x)
    p1 = b.psi_plus(x + b.period)
    assert np.allclose(p1, np.exp(1j * b.k) * p0, atol=1e-10)


def test_wronskian_constant_across_period(mathieu_q):
    b = bloch_data(mathieu_q, 0.63, 1)
    p = b.psi_plus_period(np.array([0.0, 1.0, b.period]))
    W = p[:, 0] * np.conj(p[:, 1]) - p[:, 1] * np.conj(p[:, 0])
    assert np.allclose(W, b.wronskian, atol=1e-9)
    assert abs(W[0].real) < 1e-12  # purely imaginary inside a band


def test_free_bloch_fourier_coefficients():
    # psi_+ = e^{i k x} / norm: b_l = |psi|^2 on l = 0 only, b+_l = psi^2 on l = 0 only
    b = bloch_data(PeriodicPotential(1.0), 2.0, 0)
    others = np.delete(np.abs(b.fourier_b), b.l_max)
    assert np.max(others) < 1e-10
    assert np.max(np.abs(b.fourier_b_plus)) < 1e-10 or abs(b.b_plus(0)) > 0


def test_rescaling_covariance(mathieu_q):
    b = bloch_data(mathieu_q, 0.63, 1)
    c = 1.7 * np.exp(0.4j)
    r = b.rescaled(c)
    assert r.wronskian == pytest.approx(abs(c) ** 2 * b.wronskian)
    assert r.b_plus(2) == pytest.approx(c * c * b.b_plus(2))
    p = r.psi_plus_period(np.array([0.0, 2.0]))
    W = p[:, 0] * np.conj(p[:, 1]) - p[:, 1] * np.conj(p[:, 0])
    assert np.allclose(W, r.wronskian, atol=1e-9)


def test_fourier_decay_mathieu(mathieu_q):
    b = bloch_data(mathieu_q, 0.63, 1)
    ls = np.arange(-b.l_max, b.l_max + 1)
    sel = (np.abs(ls) >= 2) & (np.abs(ls) <= 12)
    C = np.max(np.abs(b.fourier_b_plus[sel]) * ls[sel] ** 2)
    b2 = bloch_data(mathieu_q, 0.63, 1, l_max=2 * b.l_max)
    ls2 = np.arange(-b2.l_max, b2.l_max + 1)
    sel2 = (np.abs(ls2) >= 2) & (np.abs(ls2) <= 12)
    C2 = np.max(np.abs(b2.fourier_b_plus[sel2]) * ls2[sel2] ** 2)
    assert C2 == pytest.approx(C, rel=1e-6)


def test_fundamental_matrix_domain(mathieu_q):
    with pytest.raises(DomainError):
        fundamental_matrix(mathieu_q, 0.0, [-0.1])


def test_free_transfer_examples():
    T = transfer_matrix(PeriodicPotential(math.pi), 1.0).entries
    assert np.allclose(T, -np.eye(2), atol=1e-12)
    T = transfer_matrix(PeriodicPotential(1.0), 0.0).entries
    assert np.allclose(T, [[1, 1], [0, 1]], atol=1e-12)
    assert discriminant(PeriodicPotential(1.0), math.pi ** 2) == pytest.approx(-2.0, abs=1e-12)
    assert discriminant(PeriodicPotential(1.0), (math.pi / 2) ** 2) == pytest.approx(0.0, abs=1e-12)


def test_free_band_edges_period_two():
    bs = band_edges(PeriodicPotential(2.0), 13.0)
    for j, (lo, hi) in enumerate(bs.bands):
        assert lo == pytest.approx((math.pi * j / 2) ** 2, abs=1e-8)
        assert hi == pytest.approx((math.pi * (j + 1) / 2) ** 2, abs=1e-8)


def test_mathieu_quasimomentum_is_acos_branch(mathieu_q):
    # 0.9 sits in a gap for q = 2 cos x, so use points of band 1 (k in (pi, 2 pi))
    for lam in np.linspace(0.59, 0.68, 5):
        d = discriminant(mathieu_q, lam)
        assert quasimomentum(mathieu_q, lam, 1) == pytest.approx(2 * math.pi - math.acos(d / 2), abs=1e-10)
