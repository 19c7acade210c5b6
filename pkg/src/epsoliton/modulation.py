"""Generalized kernel vectors and modulation tracking (c(t), D(t), V(t)).

The linearisation about a solitary wave has a 2-dimensional generalized
kernel spanned by xi1 = d/dx(n_c, u_c) and xi2 = d/dc(n_c, u_c); the adjoint
kernel vectors are

    eta2 = theta3 (u_c, n_c),            theta3 = 1 / (d/dc int n_c u_c dx),
    eta1(x) = theta1 int_{-inf}^x d/dc(u_c, n_c) dx' + theta2 (u_c, n_c),
    theta1 = -theta3,  theta2 = theta3^2 (int d/dc n_c)(int d/dc u_c),

normalised so <xi_i, eta_j> = delta_ij.  `decompose` extracts (c, D) from a
state by Newton iteration on the two orthogonality conditions

    <shift(U, -D) - S_c, zeta_B eta1[c]> = 0,
    <shift(U, -D) - S_c, eta2[c]> = 0,

and `track` runs this along a trajectory, monitoring |dD/dt - c| and |dc/dt|
against the weighted-norm bounds they must satisfy.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .grid import Grid, integrate, inner, norms, derivative
from .profile import build_profile, profile_c_derivative
from .elliptic import solve_poisson


@dataclass
class KernelVectors:
    xi1: np.ndarray   # (2, N): d/dx (n_c, u_c)
    xi2: np.ndarray   # (2, N): d/dc (n_c, u_c)
    eta1: np.ndarray
    eta2: np.ndarray
    theta1: float
    theta2: float
    theta3: float
    eta1_deriv: np.ndarray = None  # closed-form x-derivative of eta1
    eta2_deriv: np.ndarray = None
    gram_correction: float = 0.0  # size of the enforcing correction, if any


def _pair(a, b, grid):
    return inner(a[0], b[0], grid) + inner(a[1], b[1], grid)


def kernel_vectors(p, dc=1e-5, xi2=None, enforce_tol=1e-6):
    """Build (xi1, xi2, eta1, eta2) and the theta scalars for a profile."""
    grid = p.grid
    xi1 = np.array([p.dn, p.du])
    if xi2 is None:
        xi2 = profile_c_derivative(p.c, p.K, grid, dc=dc)["xi2"]
    dMdc = integrate(xi2[0] * p.u + xi2[1] * p.n, grid)
    if abs(dMdc) < 1e-14:
        raise ValueError("kernel_vectors: degenerate normalization d/dc M = 0")
    theta3 = 1.0 / dMdc
    theta1 = -theta3
    int_dcn = integrate(xi2[0], grid)
    int_dcu = integrate(xi2[1], grid)
    theta2 = theta3 ** 2 * int_dcn * int_dcu
    eta2 = theta3 * np.array([p.u, p.n])
    # cumulative integral from the left grid edge; the neglected tail beyond
    # -L is exponentially small (profile derivatives decay at rate mu4)
    from scipy.interpolate import CubicSpline
    cum_u = CubicSpline(grid.x, xi2[1]).antiderivative()(grid.x)
    cum_n = CubicSpline(grid.x, xi2[0]).antiderivative()(grid.x)
    eta1 = theta1 * np.array([cum_u, cum_n]) + theta2 * np.array([p.u, p.n])
    # closed-form derivatives (eta1 itself is not periodic; its derivative is)
    deta1 = theta1 * np.array([xi2[1], xi2[0]]) + theta2 * np.array([p.du, p.dn])
    deta2 = theta3 * np.array([p.du, p.dn])

    kv = KernelVectors(xi1, xi2, eta1, eta2, theta1, theta2, theta3,
                       eta1_deriv=deta1, eta2_deriv=deta2)
    # biorthogonality check, 2x2 Gram correction on (eta1, eta2) if needed
    G = np.array([[_pair(xi1, eta1, grid), _pair(xi1, eta2, grid)],
                  [_pair(xi2, eta1, grid), _pair(xi2, eta2, grid)]])
    err = np.max(np.abs(G - np.eye(2)))
    if err > enforce_tol:
        A = np.linalg.solve(G.T, np.eye(2))  # new etas = A11 eta1 + A21 eta2 ...
        kv.eta1 = A[0, 0] * eta1 + A[1, 0] * eta2
        kv.eta2 = A[0, 1] * eta1 + A[1, 1] * eta2
        kv.eta1_deriv = A[0, 0] * deta1 + A[1, 0] * deta2
        kv.eta2_deriv = A[0, 1] * deta1 + A[1, 1] * deta2
        kv.gram_correction = float(err)
    return kv


class ModulationContext:
    """Profiles and kernel vectors as smooth functions of c near a base speed.

    Builds the profile at c0 and c0 +- dc once and interpolates quadratically
    in c; Newton iterations in `decompose` then cost only quadratures.
    """

    def __init__(self, c0, K, grid, dc=1e-3):
        self.c0, self.K, self.grid, self.dc = float(c0), float(K), grid, float(dc)
        self.p0 = build_profile(c0, K, grid)
        self.pm = build_profile(c0 - dc, K, grid)
        self.pp = build_profile(c0 + dc, K, grid)
        self._stack = {}
        for nm in ("n", "u", "phi", "dn", "du"):
            self._stack[nm] = np.array([getattr(self.pm, nm),
                                        getattr(self.p0, nm),
                                        getattr(self.pp, nm)])

    def _coeffs(self, c):
        s = (c - self.c0) / self.dc
        if abs(s) > 1.5:
            raise ValueError(f"ModulationContext: c = {c} outside interpolation window")
        return np.array([s * (s - 1) / 2, 1 - s * s, s * (s + 1) / 2]), s

    def fields(self, c):
        """(n_c, u_c, phi_c) by quadratic interpolation in c."""
        w, _ = self._coeffs(c)
        st = self._stack
        return (w @ st["n"], w @ st["u"], w @ st["phi"])

    def xi1(self, c):
        w, _ = self._coeffs(c)
        return np.array([w @ self._stack["dn"], w @ self._stack["du"]])

    def xi2(self, c):
        _, s = self._coeffs(c)
        dw = np.array([(2 * s - 1) / 2, -2 * s, (2 * s + 1) / 2]) / self.dc
        return np.array([dw @ self._stack["n"], dw @ self._stack["u"]])

    def kernel_vectors(self, c):
        w, _ = self._coeffs(c)
        st = self._stack
        proxy = _ProfileProxy(c, self.K, self.grid,
                              n=w @ st["n"], u=w @ st["u"],
                              dn=w @ st["dn"], du=w @ st["du"])
        return kernel_vectors(proxy, xi2=self.xi2(c))


@dataclass
class _ProfileProxy:
    c: float
    K: float
    grid: Grid
    n: np.ndarray
    u: np.ndarray
    dn: np.ndarray
    du: np.ndarray


@dataclass
class DecomposeReport:
    iterations: int
    residual: float
    converged: bool
    history: list


def shift_fields(fields, shift, grid):
    """Translate each row of `fields` by `shift` via Fourier phase."""
    kh = grid.k[: grid.N // 2 + 1]
    ph = np.exp(-1j * kh * shift)
    return np.array([np.fft.irfft(np.fft.rfft(f) * ph, n=grid.N) for f in np.atleast_2d(fields)])


def decompose(state, ctx, weights, c_guess=None, D_guess=None,
              tol=1e-12, maxiter=40):
    """Extract (c, D, V, V_phi) from a state near the soliton family.

    Newton iteration on the two orthogonality conditions with a
    finite-difference 2x2 Jacobian.  Returns (c, D, V, V_phi, report).
    """
    grid = ctx.grid
    U = np.array([state.n, state.u])
    if D_guess is None:
        # cross-correlation peak against the base profile
        corr = np.fft.irfft(np.fft.rfft(state.n) * np.conj(np.fft.rfft(ctx.p0.n)), n=grid.N)
        lag = np.argmax(corr) * grid.h
        D_guess = float(((lag + grid.L) % (2 * grid.L)) - grid.L)
    if c_guess is None:
        c_guess = ctx.c0

    zeta_B = weights.zeta_B

    def F(D, c):
        V = shift_fields(U, -D, grid) - np.array(ctx.fields(c)[:2])
        kv = ctx.kernel_vectors(c)
        r1 = _pair(V, zeta_B * kv.eta1, grid)
        r2 = _pair(V, kv.eta2, grid)
        return np.array([r1, r2]), V, kv

    D, c = float(D_guess), float(c_guess)
    hD, hc = 1e-7, 1e-7
    history = []
    converged = False
    scale = max(np.sqrt(_pair(U, U, grid)), 1e-30)
    try:
        for it in range(maxiter):
            r, V, kv = F(D, c)
            res = float(np.max(np.abs(r))) / scale
            history.append(res)
            if res < tol:
                converged = True
                break
            rD, _, _ = F(D + hD, c)
            rc, _, _ = F(D, c + hc)
            J = np.column_stack([(rD - r) / hD, (rc - r) / hc])
            try:
                step = np.linalg.solve(J, r)
            except np.linalg.LinAlgError:
                break
            D, c = D - step[0], c - step[1]
            if len(history) > 4 and history[-1] > 0.5 * history[-4]:
                break  # stagnation
        r, V, kv = F(D, c)
    except ValueError as e:
        # Newton left the context's interpolation window: a tracking failure
        raise RuntimeError(f"decompose: {e}") from e
    res = float(np.max(np.abs(r))) / scale
    converged = res < tol
    if not converged:
        raise RuntimeError(f"decompose: Newton stagnated, residual history {history}")
    # electric-potential component of the perturbation
    n_shift = shift_fields(state.n, -D, grid)[0]
    phi_full, _ = solve_poisson(n_shift, grid)
    V_phi = phi_full - ctx.fields(c)[2]
    return c, D, V, V_phi, DecomposeReport(len(history), res, converged, history)


@dataclass
class ModulationTrack:
    t: np.ndarray
    c: np.ndarray
    D: np.ndarray
    residuals: np.ndarray
    norms: list           # per-snapshot dict from grid.norms
    dD_rate: np.ndarray   # centered finite differences of D
    dc_rate: np.ndarray
    r_D: np.ndarray       # |dD/dt - c| / (B^{-1/2} (Sigma1 + Sigma2))
    r_c: np.ndarray       # |dc/dt| / (Sigma1^2 + Sigma2^2)
    truncated: bool = False
    Vs: list = None        # per-snapshot (V_n, V_u, V_phi) in the profile frame


def track(traj, ctx, weights):
    """Run decompose along a trajectory and assemble monitor ratios."""
    ts, cs, Ds, res, nrm, Vs = [], [], [], [], [], []
    c_g, D_g = None, None
    truncated = False
    states = traj.states
    for i, s in enumerate(states):
        try:
            c, D, V, V_phi, rep = decompose(s, ctx, weights, c_guess=c_g, D_guess=D_g)
        except RuntimeError:
            truncated = True
            break
        ts.append(s.t); cs.append(c); Ds.append(D); res.append(rep.residual)
        Vs.append(np.array([V[0], V[1], V_phi]))
        nrm.append(norms(Vs[-1], weights))
        c_g = c
        if i + 1 < len(states):
            # advect the shift guess to the next snapshot time
            Dp = D + c * (states[i + 1].t - s.t)
            D_g = float(((Dp + ctx.grid.L) % (2 * ctx.grid.L)) - ctx.grid.L)
    ts = np.array(ts); cs = np.array(cs); Ds = np.array(Ds)
    # unwrap D across the periodic domain before differencing
    Dw = np.unwrap(Ds, period=2 * ctx.grid.L)
    dD = np.gradient(Dw, ts) if len(ts) > 2 else np.full_like(ts, np.nan)
    dc = np.gradient(cs, ts) if len(ts) > 2 else np.full_like(ts, np.nan)
    B = weights.B
    s1 = np.array([d["Sigma1"] for d in nrm])
    s2 = np.array([d["Sigma2"] for d in nrm])
    denom_D = (s1 + s2) / np.sqrt(B)
    denom_c = s1 ** 2 + s2 ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        r_D = np.abs(dD - cs) / denom_D
        r_c = np.abs(dc) / denom_c
    return ModulationTrack(ts, cs, Dw, np.array(res), nrm, dD, dc, r_D, r_c,
                           truncated=truncated, Vs=Vs)
