import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from epsoliton.grid import (Grid, default_grid, derivative, integrate, inner,
                            l2norm, zeta, make_weights, default_weights, norms)


@pytest.fixture(scope="module")
def g():
    return Grid(L=20.0, N=512)


# ------------------------------------------------------------ derivative

def test_derivative_trig_exact(g):
    f = np.sin(np.pi * g.x / g.L)
    df = derivative(f, g, 1)
    assert np.max(np.abs(df - np.pi / g.L * np.cos(np.pi * g.x / g.L))) < 1e-12


def test_derivative_constant(g):
    assert np.max(np.abs(derivative(np.ones(g.N), g, 1))) < 1e-13


def test_derivative_gaussian_second(g):
    f = np.exp(-g.x ** 2)
    d2 = derivative(f, g, 2)
    exact = (4 * g.x ** 2 - 2) * np.exp(-g.x ** 2)
    assert np.max(np.abs(d2 - exact)) < 1e-8


def test_derivative_rejects_nonfinite(g):
    f = np.ones(g.N)
    f[3] = np.nan
    with pytest.raises(ValueError):
        derivative(f, g, 1)


def test_leibniz_rule_spectral(g):
    k1, k2 = 2 * np.pi / g.L, 3 * np.pi / g.L
    f, h = np.sin(k1 * g.x), np.cos(k2 * g.x)
    lhs = derivative(f * h, g, 1)
    rhs = derivative(f, g, 1) * h + f * derivative(h, g, 1)
    assert np.max(np.abs(lhs - rhs)) < 1e-11


# ------------------------------------------------------------ quadrature

def test_integrate_constant(g):
    assert integrate(np.ones(g.N), g) == pytest.approx(2 * g.L, rel=1e-14)


def test_integrate_sech2(g):
    val = integrate(1.0 / np.cosh(g.x) ** 2, g)
    assert val == pytest.approx(2 * np.tanh(20.0), rel=1e-12)


def test_inner_orthogonality(g):
    k = 2 * np.pi / (2 * g.L)
    assert abs(inner(np.sin(k * g.x), np.cos(k * g.x), g)) < 1e-14


def test_inner_is_bilinear_no_conjugation(g):
    f = 1j * np.exp(-g.x ** 2)
    # bilinear pairing: <if, if> = -<f, f>, not +|f|^2
    assert inner(f, f, g).real < 0


# ------------------------------------------------------------ weights

def test_zeta_far_value():
    assert zeta(np.array([20.0]), 10.0)[0] == pytest.approx(np.exp(-2.0), rel=1e-12)


def test_zeta_plateau_even_monotone(g):
    z = zeta(g.x, 10.0)
    assert np.all(z[np.abs(g.x) <= 1.0] == 1.0)
    assert np.max(np.abs(z[1:] - z[1:][::-1])) < 1e-14  # even (node 0 = -L unpaired)
    right = z[g.x >= 0]
    assert np.all(np.diff(right) <= 1e-15)


def test_weightset_basics(g):
    w = make_weights(A=100.0, B=10.0, A1=10 ** 0.6, kappa=0.1, a_rate=0.1,
                     eps=0.1, grid=g)
    i0 = int(np.argmin(np.abs(g.x)))
    assert w.phi1[i0] == 0.0 and w.phi2[i0] == 0.0
    assert np.max(np.abs(w.theta1 + w.theta2 - 1.0)) < 1e-15


def test_psi_weight_derivative_analytic(g):
    # psi is not periodic on the box: verify psi' = sech^2(eps*kappa*x) by
    # centered differences at interior nodes, never spectrally.
    w = default_weights(0.1, g)
    ek = 0.1 * w.kappa
    dpsi = (w.psi_weight[2:] - w.psi_weight[:-2]) / (2 * g.h)
    exact = 1.0 / np.cosh(ek * g.x[1:-1]) ** 2
    assert np.max(np.abs(dpsi - exact)) < 1e-6


def test_weights_deterministic(g):
    w1 = default_weights(0.1, g)
    w2 = default_weights(0.1, g)
    for name in ("zeta_A", "zeta_B", "phi1", "phi2", "psi_weight",
                 "sech_weight", "exp_weight"):
        assert np.array_equal(getattr(w1, name), getattr(w2, name))


def test_weights_positivity_validation(g):
    with pytest.raises(ValueError):
        make_weights(A=-1.0, B=10.0, A1=4.0, kappa=0.1, a_rate=0.1,
                     eps=0.1, grid=g)


def test_degenerate_partition_flag(g):
    w = make_weights(A=100.0, B=10.0, A1=2 * g.L, kappa=0.1, a_rate=0.1,
                     eps=0.1, grid=g)
    assert w.degenerate_partition


# ------------------------------------------------------------ norms

def test_norms_zero(g):
    w = default_weights(0.1, g)
    out = norms(np.zeros((3, g.N)), w)
    assert all(v == 0.0 for v in out.values())


def test_norms_derivative_term_acts_on_vphi_only(g):
    w = default_weights(0.1, g)
    sech = 1.0 / np.cosh(g.x)
    V = np.array([sech, sech, np.zeros(g.N)])
    out = norms(V, w)
    manual = l2norm(w.theta1 * w.zeta_A * V, g)
    assert out["Sigma1"] == pytest.approx(manual, rel=1e-12)


def test_norms_l2a_closed_form(g):
    w = make_weights(A=100.0, B=10.0, A1=10 ** 0.6, kappa=0.1, a_rate=0.1,
                     eps=0.1, grid=g)
    V = np.zeros((3, g.N))
    V[0] = 1.0
    out = norms(V, w)
    Lw = 0.8 * g.L  # interior window
    exact = np.sqrt((np.exp(2 * 0.1 * Lw) - np.exp(-2 * 0.1 * Lw)) / 0.2)
    assert out["L2a"] == pytest.approx(exact, rel=2e-2)


def test_norms_component_count_rejected(g):
    w = default_weights(0.1, g)
    with pytest.raises(ValueError):
        norms(np.zeros((5, g.N)), w)


# ------------------------------------------------------------ properties

@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=1, max_value=8), st.integers(min_value=1, max_value=8))
def test_derivative_resolved_modes_property(m1, m2):
    g = Grid(L=10.0, N=256)
    k1, k2 = m1 * np.pi / g.L, m2 * np.pi / g.L
    f = np.sin(k1 * g.x) * np.cos(k2 * g.x)
    # spectral derivative of a resolved trigonometric product is exact
    exact = (k1 * np.cos(k1 * g.x) * np.cos(k2 * g.x)
             - k2 * np.sin(k1 * g.x) * np.sin(k2 * g.x))
    assert np.max(np.abs(derivative(f, g, 1) - exact)) < 1e-10
