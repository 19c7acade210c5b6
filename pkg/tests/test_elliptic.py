import numpy as np
import pytest

from epsoliton.grid import Grid, derivative, integrate, l2norm
from epsoliton import elliptic as ell


@pytest.fixture(scope="module")
def g():
    return Grid(L=20.0, N=512)


# ------------------------------------------------------------ solve_poisson

def test_poisson_zero(g):
    phi, rep = ell.solve_poisson(np.zeros(g.N), g)
    assert np.max(np.abs(phi)) < 1e-13


def test_poisson_profile_consistency(p10):
    phi, rep = ell.solve_poisson(p10.n, p10.grid)
    assert np.max(np.abs(phi - p10.phi)) < 1e-4  # profile-construction tolerance


def test_poisson_small_n_linearization(g):
    n = 1e-6 * np.exp(-g.x ** 2)
    phi, rep = ell.solve_poisson(n, g)
    lin = np.fft.ifft(np.fft.fft(n) / (g.k ** 2 + 1.0)).real
    assert np.max(np.abs(phi - lin)) < 1e-6 * np.max(np.abs(n)) * 10


def test_poisson_uniqueness_two_guesses(g):
    n = 0.3 * np.exp(-(g.x / 3) ** 2)
    phi_a, _ = ell.solve_poisson(n, g, phi0=np.zeros(g.N))
    phi_b, _ = ell.solve_poisson(n, g, phi0=n.copy())
    assert np.max(np.abs(phi_a - phi_b)) < 1e-10


def test_poisson_residual_reported(g):
    n = 0.1 * np.exp(-(g.x / 4) ** 2)
    phi, rep = ell.solve_poisson(n, g)
    res = -derivative(phi, g, 2) + np.exp(phi) - 1.0 - n
    assert np.max(np.abs(res)) < 1e-10
    assert rep.residual < 1e-10


# --------------------------------------------------- apply_inv_schrodinger

def test_inv_schrodinger_symbol(g):
    k = 2 * np.pi * 3 / (2 * g.L)
    f = np.cos(k * g.x)
    out = ell.apply_inv_schrodinger(f, np.zeros(g.N), g)
    assert np.max(np.abs(out - f / (k ** 2 + 1.0))) < 1e-11


def test_inv_schrodinger_round_trip(g, p10):
    f = np.exp(-g.x ** 2) * np.cos(g.x)
    phi_c = np.exp(-(g.x / 5) ** 2)
    out = ell.apply_inv_schrodinger(f, phi_c, g)
    back = -derivative(out, g, 2) + np.exp(phi_c) * out
    assert np.max(np.abs(back - f)) < 1e-10


def test_inv_schrodinger_kernel_decay(g):
    f = np.zeros(g.N)
    f[g.N // 2] = 1.0 / g.h  # point-like bump
    out = ell.apply_inv_schrodinger(f, np.zeros(g.N), g)
    sel = (g.x > 2) & (g.x < 12)
    rate = -np.polyfit(g.x[sel], np.log(out[sel]), 1)[0]
    assert abs(rate - 1.0) < 0.02


# ------------------------------------------------------------ resolvent_hc

def test_resolvent_hc_matches_inv_schrodinger(g):
    f = np.exp(-g.x ** 2)
    phi_c = 0.3 * np.exp(-(g.x / 4) ** 2)
    a = ell.resolvent_hc(f, phi_c, g, z=-1.0)
    b = ell.apply_inv_schrodinger(f, phi_c, g)
    assert np.max(np.abs(a - b)) < 1e-11


def test_resolvent_hc_round_trip(g):
    f = np.exp(-(g.x / 2) ** 2)
    phi_c = 0.2 * np.exp(-(g.x / 4) ** 2)
    z = -0.7
    out = ell.resolvent_hc(f, phi_c, g, z=z)
    back = -derivative(out, g, 2) + (np.exp(phi_c) - 1.0 - z) * out
    assert np.max(np.abs(back - f)) < 1e-10


def test_resolvent_hc_free_kernel(g):
    j = g.N // 2 + 40
    f = np.zeros(g.N)
    f[j] = 1.0 / g.h
    out = ell.resolvent_hc(f, np.zeros(g.N), g, z=-1.0)
    # away from the kink node (the discrete delta differs there at O(h^2))
    interior = (np.abs(g.x - g.x[j]) < 10) & (np.abs(g.x - g.x[j]) > 0.5)
    exact = 0.5 * np.exp(-np.abs(g.x - g.x[j]))
    assert np.max(np.abs(out[interior] - exact[interior])) < 1e-3


def test_resolvent_hc_rejects_essential_spectrum(g):
    with pytest.raises(ValueError):
        ell.resolvent_hc(np.zeros(g.N), np.zeros(g.N), g, z=0.5)


def test_resolvent_kernel_symmetry(g):
    phi_c = 0.2 * np.exp(-(g.x / 4) ** 2)
    i1, i2 = g.N // 2 - 30, g.N // 2 + 50
    cols = {}
    for j in (i1, i2):
        f = np.zeros(g.N)
        f[j] = 1.0 / g.h
        cols[j] = ell.resolvent_hc(f, phi_c, g, z=-1.0)
    assert abs(cols[i1][i2] - cols[i2][i1]) < 1e-10


# ------------------------------------------------------------ scalar Jost

def test_scalar_jost_free(g):
    m, dm = ell.scalar_jost(1.0, np.zeros(g.N), g)
    assert np.max(np.abs(m - 1.0)) < 1e-12


def test_scalar_jost_anchor_and_bound(p10):
    g = p10.grid
    k = 1.0
    m, dm = ell.scalar_jost(k, p10.phi, g)
    assert abs(m[-1] - 1.0) < 1e-6
    q = np.abs(np.exp(p10.phi) - 1.0)
    eta = (np.cumsum(q[::-1]) * g.h)[::-1]
    bound = eta / abs(k) * np.exp(eta / abs(k))
    assert np.all(np.abs(m - 1.0) <= bound + 1e-10)


def test_wronskian_constancy(p10):
    g = p10.grid
    k = 0.7
    m, dm = ell.scalar_jost(k, p10.phi, g)
    _, spread = ell._inv_transmission(k, m, dm, g)
    assert spread < 1e-8


# ------------------------------------------------------------ transmission

def test_transmission_free(g):
    for k in (0.3, 1.0, 4.0):
        T = ell.transmission(k, np.zeros(g.N), g)
        assert abs(T - 1.0) < 1e-10


def test_transmission_bounds(p10):
    g = p10.grid
    Kt = ell.transmission_constant(p10.phi, g) * ell.potential_moment(p10.phi, g)
    for k in np.linspace(0.05, 5.0, 12):
        T = ell.transmission(k, p10.phi, g)  # internally asserts both bounds
        assert abs(T) <= 1.0 + 1e-9
        assert 2 * abs(k) <= abs(T) * (2 * abs(k) + Kt) * (1 + 1e-9)


def test_transmission_rejects_zero(g):
    with pytest.raises(ValueError):
        ell.transmission(0.0, np.zeros(g.N), g)


# ------------------------------------------------------- potential moment

def test_potential_moment_zero(g):
    assert ell.potential_moment(np.zeros(g.N), g) == 0.0


def test_potential_moment_monotone(p10):
    a = ell.potential_moment(p10.phi, p10.grid)
    b = ell.potential_moment(0.5 * p10.phi, p10.grid)
    assert 0.0 < b < a
