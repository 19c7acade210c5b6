"""Elliptic solves: nonlinear Poisson, Schrodinger-type linear solves, Jost functions.

Three families of problems share one discretisation:

* the nonlinear Poisson constraint  -phi'' + e^phi - 1 - n = 0, solved by
  Newton (the functional F(phi) = 1/2 ||phi'||^2 + int(e^phi - phi - 1 - n phi)
  is strictly convex, so the root is unique and Newton from a sensible guess
  converges quadratically);
* linear solves with  -d^2/dx^2 + e^{phi_c}  and the shifted operator
  h_c - z = -d^2/dx^2 + (e^{phi_c} - 1) - z  for z off [0, inf);
* the Jost machinery for the scalar operator h_c: decaying/oscillatory
  solutions f+-(x,k) = e^{+-ikx} m+-(x,k), the transmission coefficient
  1/T = (1/2ik)[f+, f-], and the resolvent kernel built from them.

Periodic grids use matrix-free Krylov iterations preconditioned by the
constant-coefficient Fourier symbol; line grids use a cached sparse matrix
of the finite-difference Laplacian.
"""

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline
from scipy.sparse import csc_matrix
from scipy.sparse.linalg import LinearOperator, cg, gmres, factorized

from .grid import Grid, derivative, integrate

_D2_CACHE = {}


def _line_d2_solver(grid, w, z=0.0):
    """Factorized solver for (-D2 + diag(w) - z) on a line grid."""
    key = (grid.L, grid.N)
    if key not in _D2_CACHE:
        N = grid.N
        cols = np.zeros((N, N))
        e = np.zeros(N)
        for j in range(N):
            e[:] = 0.0
            e[j] = 1.0
            cols[:, j] = derivative(e, grid, order=2)
        _D2_CACHE[key] = csc_matrix(cols)
    D2 = _D2_CACHE[key]
    N = grid.N
    from scipy.sparse import identity, diags
    A = -D2 + diags(np.asarray(w, dtype=complex if np.iscomplexobj(w) or np.iscomplexobj(z) else float)) \
        - z * identity(N, dtype=complex if np.iscomplexobj(z) else float)
    return factorized(csc_matrix(A))


def _helmholtz_solve(f, w, grid, z=0.0, tol=1e-13):
    """Solve (-d^2/dx^2 + w(x) - z) g = f.

    w real positive (typically e^{phi_c}); z complex off the spectrum of the
    constant-coefficient part.  Periodic: preconditioned Krylov with the
    Fourier symbol 1/(k^2 + mean(w) - z).  Line: direct sparse solve.
    """
    f = np.asarray(f)
    w = np.broadcast_to(np.asarray(w, dtype=float), f.shape).copy()
    if grid.boundary_mode == "line":
        return _line_d2_solver(grid, w, z)(f.astype(complex) if np.iscomplexobj(z) or np.iscomplexobj(f) else f)

    k2 = grid.k ** 2
    shift = np.mean(w) - z
    complex_mode = np.iscomplexobj(f) or np.iscomplexobj(np.asarray(z))
    dtype = complex if complex_mode else float

    def apply_A(v):
        v = v.view()
        return -derivative(v, grid, order=2) + (w - z) * v

    def apply_M(v):
        return np.fft.ifft(np.fft.fft(v) / (k2 + shift))

    def apply_M_real(v):
        return np.fft.irfft(np.fft.rfft(v) / (k2[: grid.N // 2 + 1] + shift), n=grid.N)

    if not np.iscomplexobj(np.asarray(z)) and np.iscomplexobj(f):
        # real operator, complex data: two symmetric solves
        gr = _helmholtz_solve(f.real, w, grid, z=float(np.real(z)), tol=tol)
        gi = _helmholtz_solve(f.imag, w, grid, z=float(np.real(z)), tol=tol)
        return gr + 1j * gi

    A = LinearOperator((grid.N, grid.N), matvec=apply_A, dtype=dtype)
    if complex_mode:
        M = LinearOperator((grid.N, grid.N), matvec=apply_M, dtype=complex)
        g, info = gmres(A, f.astype(complex), M=M, rtol=max(tol, 3e-12), atol=0.0,
                        restart=60, maxiter=50)
    else:
        M = LinearOperator((grid.N, grid.N), matvec=apply_M_real, dtype=float)
        g, info = cg(A, f, M=M, rtol=tol, atol=0.0, maxiter=300)
    if info != 0:
        raise RuntimeError(f"Helmholtz Krylov solve failed to converge (info={info})")
    return g


@dataclass
class EllipticSolveReport:
    iterations: int
    residual: float
    convex_ok: bool


def _poisson_F(phi, n, grid):
    """Convex functional whose gradient is the Poisson residual."""
    dphi = derivative(phi, grid, order=1)
    dens = 0.5 * dphi ** 2 + np.exp(phi) - phi - 1.0 - n * phi
    return integrate(dens, grid)


def solve_poisson(n, grid, phi0=None, tol=1e-11, maxiter=30):
    """Solve -phi'' + e^phi - 1 - n = 0 by Newton; returns (phi, report).

    Initial guess is the linearisation (-d^2/dx^2 + 1)^{-1} n unless phi0 is
    given.  On stagnation/divergence falls back to damped Newton with a line
    search on the convex functional F.
    """
    n = np.asarray(n, dtype=float)
    if not np.all(np.isfinite(n)):
        raise ValueError("solve_poisson: non-finite density")
    if phi0 is None:
        phi = _helmholtz_solve(n, np.ones_like(n), grid)
    else:
        phi = np.array(phi0, dtype=float)

    def residual(p):
        return -derivative(p, grid, order=2) + np.exp(p) - 1.0 - n

    if grid.boundary_mode == "periodic":
        # warm-started fast path: quasi-Newton with the constant-coefficient
        # symbol as approximate Jacobian inverse (linear but cheap; the
        # variable part e^phi - mean is a small relative perturbation)
        k2 = grid.k[: grid.N // 2 + 1] ** 2
        r = residual(phi)
        res = float(np.max(np.abs(r)))
        it = 0
        while res > tol and it < 40:
            sym = k2 + max(float(np.max(np.exp(phi))), 1e-10)
            phi = phi - np.fft.irfft(np.fft.rfft(r) / sym, n=grid.N)
            r = residual(phi)
            new_res = float(np.max(np.abs(r)))
            if new_res > 0.9 * res and new_res > tol:
                break  # too slow; fall through to full Newton
            res = new_res
            it += 1
        if res <= tol:
            return phi, EllipticSolveReport(iterations=it, residual=res, convex_ok=True)

    r = residual(phi)
    res = float(np.max(np.abs(r)))
    grow = 0
    F_prev = _poisson_F(phi, n, grid)
    convex_ok = True
    it = 0
    while res > tol and it < maxiter:
        delta = _helmholtz_solve(r, np.exp(phi), grid)
        step = 1.0
        if grow >= 3:
            # damped Newton: backtrack on F (descent direction by convexity)
            while step > 1e-8:
                if _poisson_F(phi - step * delta, n, grid) < F_prev:
                    break
                step *= 0.5
        phi = phi - step * delta
        r = residual(phi)
        new_res = float(np.max(np.abs(r)))
        grow = grow + 1 if new_res > res else 0
        res = new_res
        F_new = _poisson_F(phi, n, grid)
        if F_new > F_prev + 1e-12 * (1.0 + abs(F_prev)):
            convex_ok = False
        F_prev = F_new
        it += 1
    if res > tol:
        raise RuntimeError(f"solve_poisson: Newton failed, residual {res:.3e} after {it} iterations")
    return phi, EllipticSolveReport(iterations=it, residual=res, convex_ok=convex_ok)


def apply_inv_schrodinger(f, phi_c, grid, tol=1e-13):
    """Solve (-d^2/dx^2 + e^{phi_c}) g = f."""
    return _helmholtz_solve(f, np.exp(np.asarray(phi_c, dtype=float)), grid, z=0.0, tol=tol)


def resolvent_hc(f, phi_c, grid, z=-1.0, tol=1e-13):
    """Solve (h_c - z) g = f with h_c = -d^2/dx^2 + e^{phi_c} - 1.

    z must lie off the essential spectrum [0, inf).
    """
    z = complex(z)
    if z.imag == 0.0 and z.real >= 0.0:
        raise ValueError("resolvent_hc: z on the essential spectrum [0, inf)")
    if z.imag == 0.0:
        z = z.real
    phi_c = np.asarray(phi_c, dtype=float)
    return _helmholtz_solve(f, np.exp(phi_c), grid, z=1.0 + z, tol=tol)


def _q_spline(phi_c, grid):
    q = np.exp(np.asarray(phi_c, dtype=float)) - 1.0
    xs = np.concatenate([grid.x, [grid.L]])
    qs = np.concatenate([q, [q[0] if grid.boundary_mode == "periodic" else 0.0]])
    return CubicSpline(xs, qs, extrapolate=False)


def scalar_jost(k, phi_c, grid, rtol=1e-11):
    """Jost solution m+(x,k) of m'' + 2ik m' = q_c m with m -> 1 at +L.

    Returns (m, dm) on the grid nodes (complex).  Valid for Im k >= 0; the
    anchored variable has no exponentially growing mode marching leftward.
    m-(x,k) = m+(-x,k) by evenness of phi_c.
    """
    k = complex(k)
    if k == 0:
        raise ValueError("scalar_jost: k = 0 not admitted")
    qs = _q_spline(phi_c, grid)
    x_hi = grid.x[-1]
    tail = abs(np.exp(float(np.asarray(phi_c)[np.argmax(grid.x)])) - 1.0)
    if tail > 1e-8:
        import warnings
        warnings.warn(f"scalar_jost: potential not decayed at the boundary (|q| = {tail:.2e})")

    def rhs(x, y):
        m, p = y[0] + 1j * y[1], y[2] + 1j * y[3]
        q = qs(x)
        if np.isnan(q):
            q = 0.0
        dm = p
        dp = -2j * k * p + q * m
        return [dm.real, dm.imag, dp.real, dp.imag]

    sol = solve_ivp(rhs, (x_hi, grid.x[0]), [1.0, 0.0, 0.0, 0.0],
                    t_eval=grid.x[::-1], rtol=rtol, atol=1e-13, method="DOP853")
    if not sol.success:
        raise RuntimeError(f"scalar_jost: integration failed: {sol.message}")
    y = sol.y[:, ::-1]
    m = y[0] + 1j * y[1]
    dm = y[2] + 1j * y[3]
    return m, dm


def _inv_transmission(k, m, dm, grid):
    """1/T(k) from the Wronskian [f+, f-] evaluated at every node.

    f-(x) = e^{-ikx} m+(-x); the Wronskian is x-independent, so the nodewise
    values double as a consistency diagnostic.  Returns (median 1/T, relative
    spread).
    """
    k = complex(k)
    N = grid.N
    refl = (-np.arange(N)) % N
    mr = m[refl]       # m-(x) = m+(-x)
    dmr = -dm[refl]    # m-'(x) = -m+'(-x)
    # [f+, f-] = e^{i k x} e^{-i k x} [(m' + ikm) m- - m (m-' - ik m-)]
    w = (dm + 1j * k * m) * mr - m * (dmr - 1j * k * mr)
    inv_T = w / (2j * k)
    mid = inv_T[N // 2]
    # node 0 (x = -L) has no reflected partner on the grid; exclude it
    spread = float(np.max(np.abs(inv_T[1:] - mid)) / max(abs(mid), 1e-300))
    return mid, spread


def transmission_constant(phi_c, grid):
    """Constant K = 1 + g0 + g0^2 e^{g0}, g0 = int_0^inf y |q_c(y)| dy.

    This is the constant entering the transmission lower bound
    2|k| <= |T| (2|k| + K ||(1+|x|) q_c||_L1).
    """
    q = np.exp(np.asarray(phi_c, dtype=float)) - 1.0
    mask = grid.x >= 0
    g0 = float(np.trapezoid(grid.x[mask] * np.abs(q[mask]), grid.x[mask]))
    return 1.0 + g0 + g0 ** 2 * np.exp(g0)


def transmission(k, phi_c, grid):
    """Transmission coefficient T(c,k) for real k != 0.

    Asserts |T| <= 1 and the lower bound
    2|k| <= |T| (2|k| + K ||<x> q_c||_L1) with K = transmission_constant.
    """
    k = float(k)
    if k == 0.0:
        raise ValueError("transmission: k = 0 rejected (T -> 0 limit only)")
    m, dm = scalar_jost(k, phi_c, grid)
    inv_T, _ = _inv_transmission(k, m, dm, grid)
    T = 1.0 / inv_T
    Ktilde = transmission_constant(phi_c, grid) * potential_moment(phi_c, grid)
    assert abs(T) <= 1.0 + 1e-10, f"|T| = {abs(T)} > 1"
    assert 2 * abs(k) <= abs(T) * (2 * abs(k) + Ktilde) * (1 + 1e-10), \
        f"transmission lower bound violated at k={k}"
    return T


def potential_moment(phi_c, grid):
    """||<x> (e^{phi_c} - 1)||_{L^1} with <x> = 1 + |x|."""
    q = np.exp(np.asarray(phi_c, dtype=float)) - 1.0
    return float(integrate((1.0 + np.abs(grid.x)) * np.abs(q), grid))


def jost_kernel_column(y_index, phi_c, grid, z=-1.0):
    """Column x -> R(x, y) of the resolvent kernel of h_c at spectral point z.

    Built from the Jost pair: R(x,y) = -(T(k)/2ik) f-(x<) f+(x>), k = sqrt(z)
    with Im k > 0.  Independent oracle for resolvent_hc.
    """
    z = complex(z)
    k = np.sqrt(z)
    if k.imag < 0:
        k = -k
    if k.imag <= 0:
        raise ValueError("jost_kernel_column: z on the essential spectrum")
    m, dm = scalar_jost(k, phi_c, grid)
    inv_T, _ = _inv_transmission(k, m, dm, grid)
    refl = (-np.arange(grid.N)) % grid.N
    x = grid.x
    fp = np.exp(1j * k * x) * m
    fm = np.exp(-1j * k * x) * m[refl]
    # R(x,y) = -(T/2ik) fm(min(x,y)) fp(max(x,y))
    col = np.where(x <= x[y_index], fm * fp[y_index], fp * fm[y_index])
    return -(1.0 / inv_T) / (2j * k) * col


def jost_resolvent_apply(f, phi_c, grid, z=-1.0):
    """Apply the Jost-built resolvent kernel of h_c at z to a smooth field f.

    (R f)(x) = -(T/2ik) [ f+(x) int_{-L}^x f- f dy + f-(x) int_x^{L} f+ f dy ].
    Independent oracle for resolvent_hc (quadrature instead of a linear solve).
    """
    z = complex(z)
    k = np.sqrt(z)
    if k.imag < 0:
        k = -k
    m, dm = scalar_jost(k, phi_c, grid)
    inv_T, _ = _inv_transmission(k, m, dm, grid)
    refl = (-np.arange(grid.N)) % grid.N
    x = grid.x
    fp = np.exp(1j * k * x) * m
    fm = np.exp(-1j * k * x) * m[refl]
    f = np.asarray(f)

    def cumint(vals):
        return CubicSpline(x, vals).antiderivative()(x)

    left = cumint(fm * f)
    right = cumint(fp * f)
    right = right[-1] - right
    return -(1.0 / inv_T) / (2j * k) * (fp * left + fm * right)
