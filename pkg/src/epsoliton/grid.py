"""Uniform 1D grid, fields, differentiation, quadrature, and weight functions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid


@dataclass(frozen=True)
class Grid:
    """Uniform grid on [-L, L) with spacing h = 2L/N.

    boundary_mode 'periodic' wraps derivatives (FFT collocation);
    'line' uses 4th-order finite differences with one-sided closures.
    """

    L: float
    N: int
    boundary_mode: str = "periodic"

    def __post_init__(self):
        if self.N < 16 or self.N % 2 != 0:
            raise ValueError("N must be an even integer >= 16")
        if self.L <= 0:
            raise ValueError("L must be positive")
        if self.boundary_mode not in ("periodic", "line"):
            raise ValueError(f"unknown boundary_mode {self.boundary_mode!r}")

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.N

    @property
    def x(self) -> np.ndarray:
        return -self.L + self.h * np.arange(self.N)

    @property
    def k(self) -> np.ndarray:
        """Fourier wavenumbers for the periodic mode."""
        return 2.0 * np.pi * np.fft.fftfreq(self.N, d=self.h)


def default_grid(eps: float, L_factor: float = 40.0, h_factor: float = 0.25,
                 boundary_mode: str = "periodic") -> Grid:
    """Grid resolving a soliton of width ~ eps^{-1/2}: L = 40/sqrt(eps), h <= 0.25/sqrt(eps)."""
    L = L_factor / np.sqrt(eps)
    h_max = h_factor / np.sqrt(eps)
    N = int(2 ** np.ceil(np.log2(2 * L / h_max)))
    return Grid(L=L, N=max(N, 16), boundary_mode=boundary_mode)


@dataclass
class Field:
    """Per-node values with 1..4 interleaved components, shape (ncomp, N) or (N,)."""

    values: np.ndarray
    grid: Grid

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.ndim == 1:
            self.values = self.values[None, :]
        if self.values.shape[1] != self.grid.N:
            raise ValueError("values length does not match grid")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("non-finite field values")

    @property
    def ncomp(self) -> int:
        return self.values.shape[0]


# ---------------------------------------------------------------------------
# differentiation / quadrature

_FD1_INTERIOR = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_FD2_INTERIOR = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0
# 4th-order one-sided first derivative (forward), 5-point
_FD1_EDGE = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0
# 4th-order one-sided second derivative (forward), 6-point
_FD2_EDGE = np.array([45.0, -154.0, 214.0, -156.0, 61.0, -10.0]) / 12.0


def _fd_apply(v: np.ndarray, h: float, order: int) -> np.ndarray:
    n = v.shape[-1]
    out = np.empty_like(v, dtype=float)
    if order == 1:
        stencil, edge, p = _FD1_INTERIOR, _FD1_EDGE, 1
    else:
        stencil, edge, p = _FD2_INTERIOR, _FD2_EDGE, 2
    core = np.apply_along_axis(lambda r: np.convolve(r, stencil[::-1], mode="valid"), -1, v)
    out[..., 2:n - 2] = core
    m = len(edge)
    for i in (0, 1):
        out[..., i] = v[..., i:i + m] @ edge
        out[..., n - 1 - i] = ((-1) ** p) * (v[..., n - 1 - i - m + 1:n - i][..., ::-1] @ edge)
    return out / h ** p


def derivative(v: np.ndarray, grid: Grid, order: int = 1) -> np.ndarray:
    """Differentiate node values; spectral in periodic mode, FD4 on the line."""
    if order not in (1, 2, 3):
        raise ValueError("order must be 1, 2, or 3")
    v = np.asarray(v)
    if not np.all(np.isfinite(v)):
        raise ValueError("non-finite input to derivative")
    if grid.boundary_mode == "periodic":
        ik = 1j * grid.k
        if order == 2:
            sym = -grid.k ** 2
        elif order == 3:
            sym = -1j * grid.k ** 3
            sym[grid.N // 2] = 0.0  # kill the asymmetric Nyquist mode for odd orders
        else:
            sym = ik.copy()
            sym[grid.N // 2] = 0.0
        out = np.fft.ifft(sym * np.fft.fft(v, axis=-1), axis=-1)
        return out.real if np.isrealobj(v) else out
    if order == 3:
        return _fd_apply(_fd_apply(v, grid.h, 2), grid.h, 1)
    return _fd_apply(v, grid.h, order)


def integrate(v: np.ndarray, grid: Grid) -> float | complex:
    """Quadrature consistent with boundary_mode (rectangle/trapezoid)."""
    v = np.asarray(v)
    if not np.all(np.isfinite(v)):
        raise ValueError("non-finite input to integrate")
    if grid.boundary_mode == "periodic":
        return grid.h * v.sum(axis=-1)
    s = v.sum(axis=-1) - 0.5 * (v[..., 0] + v[..., -1])
    return grid.h * s


def inner(f: np.ndarray, g: np.ndarray, grid: Grid):
    """Bilinear pairing <f, g> = integral of sum_j f_j g_j, no conjugation."""
    f, g = np.asarray(f), np.asarray(g)
    prod = f * g
    if prod.ndim == 2:
        prod = prod.sum(axis=0)
    return integrate(prod, grid)


def l2norm(v: np.ndarray, grid: Grid) -> float:
    v = np.asarray(v)
    return float(np.sqrt(integrate(np.abs(v) ** 2, grid).sum()))


# ---------------------------------------------------------------------------
# weights

def smooth_bump(x: np.ndarray) -> np.ndarray:
    """Even C^1-smoothstep bump: 1 on |x|<=1, 0 on |x|>=2, quintic transition."""
    s = np.clip(np.abs(x) - 1.0, 0.0, 1.0)
    return 1.0 - s ** 3 * (10.0 - 15.0 * s + 6.0 * s ** 2)


def zeta(x: np.ndarray, C: float) -> np.ndarray:
    """zeta_C(x) = exp(-(|x|/C)(1 - chi(x))): 1 near 0, e^{-|x|/C} for |x| >= 2."""
    return np.exp(-(np.abs(x) / C) * (1.0 - smooth_bump(x)))


@dataclass
class WeightSet:
    A: float
    B: float
    A1: float
    kappa: float
    a_rate: float
    eps: float
    grid: Grid
    zeta_A: np.ndarray = field(init=False)
    zeta_B: np.ndarray = field(init=False)
    theta1: np.ndarray = field(init=False)
    theta2: np.ndarray = field(init=False)
    phi1: np.ndarray = field(init=False)
    phi2: np.ndarray = field(init=False)
    psi_weight: np.ndarray = field(init=False)
    sech_weight: np.ndarray = field(init=False)
    exp_weight: np.ndarray = field(init=False)
    degenerate_partition: bool = field(init=False, default=False)

    def __post_init__(self):
        for name in ("A", "B", "A1", "kappa", "a_rate"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        g, x = self.grid, self.grid.x
        self.degenerate_partition = self.A1 >= g.L
        self.zeta_A = zeta(x, self.A)
        self.zeta_B = zeta(x, self.B)
        self.theta1 = smooth_bump(x / self.A1)
        self.theta2 = 1.0 - self.theta1
        self.phi1 = self._phi_i(self.theta1)
        self.phi2 = self._phi_i(self.theta2)
        ek = self.eps * self.kappa
        self.psi_weight = np.tanh(ek * x) / ek
        self.sech_weight = 1.0 / np.cosh(ek * x)
        self.exp_weight = np.exp(self.a_rate * x)

    def _phi_i(self, theta: np.ndarray) -> np.ndarray:
        """phi_{iAA1}(x) = int_0^x zeta_A^2 theta_i^2, cumulative quadrature anchored at 0."""
        g = self.grid
        integ = self.zeta_A ** 2 * theta ** 2
        F = np.concatenate([[0.0], cumulative_trapezoid(integ, g.x)])
        # anchor at x = 0 (node since N even and grid starts at -L)
        i0 = int(np.argmin(np.abs(g.x)))
        return F - F[i0]


def make_weights(A: float, B: float, A1: float, kappa: float, a_rate: float,
                 eps: float, grid: Grid) -> WeightSet:
    return WeightSet(A=A, B=B, A1=A1, kappa=kappa, a_rate=a_rate, eps=eps, grid=grid)


def default_weights(eps: float, grid: Grid, A: float = 100.0, B: float = 10.0,
                    kappa: float = 0.1, rho: float = 0.3) -> WeightSet:
    return make_weights(A, B, B ** 0.6, kappa, rho * np.sqrt(eps), eps, grid)


def norms(V: np.ndarray, w: WeightSet) -> dict:
    """Norm bundle {Sigma1, Sigma2, Sigma_tilde, L2a, weighted_local} of a perturbation.

    For the Sigma norms V must have 3 components (V_n, V_u, V_phi); the derivative
    term acts on V_phi only.  2-component input is accepted for the others.
    """
    V = np.asarray(V)
    if V.ndim == 1:
        V = V[None, :]
    g = w.grid
    out = {}
    if V.shape[0] == 3:
        for i, theta in ((1, w.theta1), (2, w.theta2)):
            wz = theta * w.zeta_A
            main = l2norm(wz * V, g)
            dterm = l2norm(derivative(wz * V[2], g, 1), g)
            out[f"Sigma{i}"] = main + dterm
    elif V.shape[0] == 2:
        out["Sigma1"] = out["Sigma2"] = float("nan")
    else:
        raise ValueError("norms expects 2 or 3 components")
    out["Sigma_tilde"] = l2norm(w.sech_weight * V, g)
    win = np.abs(g.x) <= 0.8 * g.L
    out["L2a"] = l2norm(np.where(win, w.exp_weight * V, 0.0), g)
    bracket = np.sqrt(1.0 + g.x ** 2)
    out["weighted_local"] = float(integrate(
        np.exp(-2.0 * w.a_rate * bracket) * (np.abs(V) ** 2).sum(axis=0), g))
    return out
