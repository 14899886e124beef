"""Constant negative Gauss curvature surfaces on characteristic grids.

The angle omega between the unit coordinate directions of a K-surface obeys
the sine-Gordon equation omega_{xi eta} = sin(omega) / rho^2; conversely any
solution integrates to a surface via its Gauss-Weingarten frame.  This
module marches the PDE, integrates the frame, and estimates fundamental
forms and curvatures by finite differences so that every reconstruction can
be checked against the invariants it is supposed to have.

Sign conventions: the unit normal is N = f_xi x f_eta / |...| and the
tangents satisfy rho (N x N_xi) = f_xi and rho (N x N_eta) = -f_eta.  The
opposite normal swaps the two signs.
"""

from dataclasses import dataclass

import numpy as np

from . import faults
from .defaults import TOLERANCES
from .errors import DataError, DegeneracyError
from .grids import Grid2D, ScalarField, VecField, diff, interior

__all__ = [
    "solve_sine_gordon",
    "soliton_omega",
    "pseudosphere_patch",
    "sphere_patch_polar",
    "integrate_frame",
    "FrameResult",
    "lelieuvre_residual",
    "LelieuvreReport",
    "fundamental_forms",
    "FundForms",
    "check_tchebyshev",
    "TchebyshevReport",
    "degenerate_mask",
]


def degenerate_mask(omega_values, tol=None):
    """Vertices where |sin omega| is too small for the surface to immerse."""
    tol = TOLERANCES["degenerate_sin"] if tol is None else tol
    return np.abs(np.sin(omega_values)) < tol


def solve_sine_gordon(omega_xi_axis, omega_eta_axis, rho, grid):
    """March omega_{xi eta} = sin(omega)/rho^2 from characteristic boundary data.

    omega_xi_axis holds omega on the row eta = eta0 (length n1), omega_eta_axis
    on the column xi = xi0 (length n2); they must agree at the corner.  The
    cell update integrates the equation over each grid cell with the midpoint
    value approximated first from the three known corners and then corrected
    once with the predicted fourth corner, which keeps the scheme second
    order without linear solves.
    """
    if rho == 0:
        raise DataError("rho must be nonzero")
    row0 = np.asarray(omega_xi_axis, dtype=float)
    col0 = np.asarray(omega_eta_axis, dtype=float)
    if row0.shape != (grid.n1,) or col0.shape != (grid.n2,):
        raise DataError("boundary data length does not match the grid")
    if abs(row0[0] - col0[0]) > TOLERANCES["sine_gordon_corner"]:
        raise DataError(f"boundary rows disagree at the corner by {abs(row0[0]-col0[0]):.3e}")

    omega = np.empty(grid.shape)
    omega[:, 0] = row0
    omega[0, :] = col0
    area = grid.h1 * grid.h2 / rho**2
    for j in range(grid.n2 - 1):
        known_row = omega[:, j]
        for i in range(grid.n1 - 1):
            o00 = known_row[i]
            o10 = known_row[i + 1]
            o01 = omega[i, j + 1]
            pred = o10 + o01 - o00 + area * np.sin((o00 + o10 + o01) / 3.0)
            omega[i + 1, j + 1] = o10 + o01 - o00 + area * np.sin((o00 + o10 + o01 + pred) / 4.0)
    return ScalarField(grid, omega)


def soliton_omega(xi, eta, shift=0.0):
    """The kink omega = 4 arctan(exp(xi + eta - shift)), an exact solution at rho = 1."""
    return 4.0 * np.arctan(np.exp(np.asarray(xi) + np.asarray(eta) - shift))


def pseudosphere_patch(grid, shift=0.0):
    """Exact pseudosphere carrying the kink angle field, as (f, N) fields.

    With u = xi + eta - shift and v = xi - eta the immersion is the tractrix
    surface (sech u cos v, sech u sin v, u - tanh u); its Gauss map in our
    orientation is N = -(tanh u cos v, tanh u sin v, sech u).  The patch is
    immersed wherever u != 0, so pick the shift to keep the grid on one side
    of the cuspidal rim.
    """
    xi, eta = grid.mesh()
    u = xi + eta - shift
    v = xi - eta
    s = 1.0 / np.cosh(u)
    t = np.tanh(u)
    f = np.stack([s * np.cos(v), s * np.sin(v), u - t], axis=-1)
    n = -np.stack([t * np.cos(v), t * np.sin(v), s], axis=-1)
    return VecField(grid, f), VecField(grid, n)


def sphere_patch_polar(grid, radius=1.0):
    """Round sphere sampled on a polar-coordinate patch; a negative control.

    Axis 1 is the polar angle theta, axis 2 the azimuth phi; the coordinates
    are neither asymptotic nor unit-speed, so every K-surface diagnostic is
    expected to fail on this field.
    """
    theta, phi = grid.mesh()
    f = radius * np.stack([np.sin(theta) * np.cos(phi),
                           np.sin(theta) * np.sin(phi),
                           np.cos(theta)], axis=-1)
    n = f / radius
    return VecField(grid, f), VecField(grid, n)


def _gw_coefficients(omega, domega, rho, direction):
    """Coefficient matrix A with Y' = A Y for the frame rows (f_xi, f_eta, N).

    direction 0 differentiates in xi (domega = omega_xi), 1 in eta.
    """
    so = np.sin(omega)
    co = np.cos(omega)
    a = np.zeros(omega.shape + (3, 3))
    if direction == 0:
        a[..., 0, 0] = domega * co / so
        a[..., 0, 1] = -domega / so
        a[..., 1, 2] = so / rho
        a[..., 2, 0] = co / (rho * so)
        a[..., 2, 1] = -1.0 / (rho * so)
    else:
        a[..., 0, 2] = so / rho
        a[..., 1, 0] = -domega / so
        a[..., 1, 1] = domega * co / so
        a[..., 2, 0] = -1.0 / (rho * so)
        a[..., 2, 1] = co / (rho * so)
    return a


def _gram_targets(omega):
    g = np.zeros(omega.shape + (3, 3))
    g[..., 0, 0] = 1.0
    g[..., 1, 1] = 1.0
    g[..., 2, 2] = 1.0
    g[..., 0, 1] = np.cos(omega)
    g[..., 1, 0] = np.cos(omega)
    return g


def _sym_sqrt(m, inverse=False):
    w, v = np.linalg.eigh(m)
    w = np.clip(w, 1e-15, None)
    d = 1.0 / np.sqrt(w) if inverse else np.sqrt(w)
    return (v * d[..., None, :]) @ np.swapaxes(v, -1, -2)


def _gram_correct(frame, omega):
    """Snap a frame onto the exact first fundamental form of its vertex.

    The replacement F~ = G^{1/2} (F F^T)^{-1/2} F is the symmetric choice
    with F~ F~^T equal to the target Gram matrix, so unit tangents and the
    unit normal hold to machine precision while the O(h^2) shape error of
    the integrator is untouched.
    """
    gram = frame @ np.swapaxes(frame, -1, -2)
    target = _gram_targets(omega)
    return _sym_sqrt(target) @ _sym_sqrt(gram, inverse=True) @ frame


def _march(frame, omega0, omega1, domega, h, rho, direction):
    """One explicit-midpoint step of the frame ODE with Gram correction."""
    om_mid = 0.5 * (omega0 + omega1)
    a = _gw_coefficients(om_mid, domega, rho, direction)
    half = frame + 0.5 * h * (a @ frame)
    nxt = frame + h * (a @ half)
    return _gram_correct(nxt, omega1)


@dataclass(frozen=True)
class FrameResult:
    f: VecField
    n: VecField
    f_xi: VecField
    f_eta: VecField
    cross_path_deviation: float


def integrate_frame(omega, rho, frame0=None):
    """Reconstruct (f, N) whose first and second forms carry the given angle field.

    Marches the Gauss-Weingarten system along row 0 and then up each column
    with an explicit midpoint rule; after every step the frame is projected
    back onto its exact Gram matrix, which pins the Tchebyshev property and
    unit normal independently of integration drift.  Positions integrate the
    stored tangents with a Hermite-corrected trapezoid rule (the second
    derivatives come for free from the frame equations).

    The default initial frame at the origin vertex is f = 0,
    f_xi = (1, 0, 0), f_eta = (cos w0, sin w0, 0), N = (0, 0, 1), fixing the
    rigid motion left free by Bonnet's theorem.  Raises DegeneracyError when
    |sin omega| falls under the degeneracy threshold anywhere, naming the
    worst vertex.
    """
    grid = omega.grid
    om = omega.values
    bad = degenerate_mask(om)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise DegeneracyError(
            f"sin(omega) = {np.sin(om[i, j]):.2e} at vertex ({i}, {j}); surface does not immerse",
            vertex=(int(i), int(j)))

    if frame0 is None:
        w0 = om[0, 0]
        frame0 = np.array([[1.0, 0.0, 0.0],
                           [np.cos(w0), np.sin(w0), 0.0],
                           [0.0, 0.0, 1.0]])

    frames = _integrate_frames(grid, om, rho, frame0, row_first=True)
    frames_alt = _integrate_frames(grid, om, rho, frame0, row_first=False)
    cross_dev = float(np.max(np.linalg.norm(frames - frames_alt, axis=(-2, -1))))

    f = _integrate_positions(grid, om, rho, frames)
    return FrameResult(
        f=VecField(grid, f),
        n=VecField(grid, frames[..., 2, :].copy()),
        f_xi=VecField(grid, frames[..., 0, :].copy()),
        f_eta=VecField(grid, frames[..., 1, :].copy()),
        cross_path_deviation=cross_dev,
    )


def _integrate_frames(grid, om, rho, frame0, row_first):
    frames = np.empty(grid.shape + (3, 3))
    frames[0, 0] = _gram_correct(frame0, om[0, 0])
    if row_first:
        for i in range(grid.n1 - 1):
            dom = (om[i + 1, 0] - om[i, 0]) / grid.h1
            frames[i + 1, 0] = _march(frames[i, 0], om[i, 0], om[i + 1, 0], dom, grid.h1, rho, 0)
        for j in range(grid.n2 - 1):
            dom = (om[:, j + 1] - om[:, j]) / grid.h2
            frames[:, j + 1] = _march(frames[:, j], om[:, j], om[:, j + 1], dom, grid.h2, rho, 1)
    else:
        for j in range(grid.n2 - 1):
            dom = (om[0, j + 1] - om[0, j]) / grid.h2
            frames[0, j + 1] = _march(frames[0, j], om[0, j], om[0, j + 1], dom, grid.h2, rho, 1)
        for i in range(grid.n1 - 1):
            dom = (om[i + 1, :] - om[i, :]) / grid.h1
            frames[i + 1, :] = _march(frames[i, :], om[i, :], om[i + 1, :], dom, grid.h1, rho, 0)
    return frames


def _integrate_positions(grid, om, rho, frames):
    """Trapezoid rule with the Euler-Maclaurin h^2/12 endpoint-derivative fix."""
    dom_xi = diff(om, 0, grid.h1, order=4)
    dom_eta = diff(om, 1, grid.h2, order=4)
    a_xi = _gw_coefficients(om, dom_xi, rho, 0)
    a_eta = _gw_coefficients(om, dom_eta, rho, 1)
    fxx = (a_xi @ frames)[..., 0, :]   # f_xixi at vertices
    fxe = (a_eta @ frames)[..., 0, :]  # d/deta of f_xi
    fex = (a_xi @ frames)[..., 1, :]
    fee = (a_eta @ frames)[..., 1, :]
    txi = frames[..., 0, :]
    teta = frames[..., 1, :]

    f = np.empty(grid.shape + (3,))
    f[0, 0] = 0.0
    h1, h2 = grid.h1, grid.h2
    for i in range(grid.n1 - 1):
        f[i + 1, 0] = (f[i, 0] + 0.5 * h1 * (txi[i, 0] + txi[i + 1, 0])
                       + h1 * h1 / 12.0 * (fxx[i, 0] - fxx[i + 1, 0]))
    for j in range(grid.n2 - 1):
        f[:, j + 1] = (f[:, j] + 0.5 * h2 * (teta[:, j] + teta[:, j + 1])
                       + h2 * h2 / 12.0 * (fee[:, j] - fee[:, j + 1]))
    # unused mixed derivatives keep the stencil symmetric if ever needed
    del fxe, fex
    return f


@dataclass(frozen=True)
class LelieuvreReport:
    """Max residuals of rho(N x N_xi) = f_xi and rho(N x N_eta) = -f_eta.

    The swapped entries evaluate the opposite sign pattern, which is what the
    residuals become under rho -> -rho.
    """

    res_xi: float
    res_eta: float
    res_xi_swapped: float
    res_eta_swapped: float

    def max(self):
        return max(self.res_xi, self.res_eta)


def lelieuvre_residual(f, n, rho):
    """Finite-difference residual of Lelieuvre's formula over interior vertices."""
    grid = f.grid
    sign = -1.0 if faults.is_active("lelieuvre-sign") else 1.0
    fx = diff(f.values, 0, grid.h1, order=4)
    fe = diff(f.values, 1, grid.h2, order=4)
    nx = diff(n.values, 0, grid.h1, order=4)
    ne = diff(n.values, 1, grid.h2, order=4)
    cx = np.cross(n.values, nx)
    ce = np.cross(n.values, ne)
    mask = interior(grid.shape, 2)

    def worst(arr):
        return float(np.max(np.linalg.norm(arr, axis=-1)[mask]))

    return LelieuvreReport(
        res_xi=worst(sign * rho * cx - fx),
        res_eta=worst(sign * rho * ce + fe),
        res_xi_swapped=worst(sign * rho * cx + fx),
        res_eta_swapped=worst(sign * rho * ce - fe),
    )


@dataclass(frozen=True)
class FundForms:
    """Per-vertex fundamental forms and curvatures of a sampled immersion.

    III is the third form of the discrete shape operator (II I^{-1} II), so
    the Cayley-Hamilton identity III - 2H II + K I = 0 is available as an
    exact consistency check of the linear algebra; the independent
    finite-difference dN.dN is kept as `third_fd` for discretisation
    diagnostics.
    """

    I: np.ndarray
    II: np.ndarray
    III: np.ndarray
    third_fd: np.ndarray
    H: np.ndarray
    K: np.ndarray
    kappa1: np.ndarray
    kappa2: np.ndarray
    normal: np.ndarray
    immersed: np.ndarray

    def cayley_hamilton_residual(self):
        """Relative residual of III - 2 H II + K I over immersed vertices."""
        res = self.III - 2.0 * self.H[..., None, None] * self.II + self.K[..., None, None] * self.I
        scale = np.maximum(np.linalg.norm(self.III, axis=(-2, -1)), 1e-30)
        rel = np.linalg.norm(res, axis=(-2, -1)) / scale
        return float(np.max(rel[self.immersed]))


def fundamental_forms(f, n_field=None, rank_tol=1e-7):
    """Estimate I, II, III, H, K from a sampled immersion by central differences.

    When the Gauss map is known exactly (for instance stored by
    integrate_frame) pass it as n_field; otherwise it is rebuilt from the
    normalised cross product of the tangent estimates.  Vertices whose
    finite-difference Jacobian drops rank are flagged non-immersed and
    masked out of the curvature arrays.
    """
    grid = f.grid
    fx = diff(f.values, 0, grid.h1, order=4)
    fe = diff(f.values, 1, grid.h2, order=4)
    e = np.sum(fx * fx, axis=-1)
    fcross = np.sum(fx * fe, axis=-1)
    g = np.sum(fe * fe, axis=-1)
    det_i = e * g - fcross**2
    immersed = det_i > rank_tol * np.maximum(e * g, 1e-30)

    if n_field is None:
        nor = np.cross(fx, fe)
        norm = np.linalg.norm(nor, axis=-1, keepdims=True)
        nor = nor / np.where(norm > 0, norm, 1.0)
    else:
        nor = n_field.values
    nx = diff(nor, 0, grid.h1, order=4)
    ne = diff(nor, 1, grid.h2, order=4)

    form_i = np.stack([np.stack([e, fcross], -1), np.stack([fcross, g], -1)], -2)
    l11 = -np.sum(fx * nx, axis=-1)
    l22 = -np.sum(fe * ne, axis=-1)
    l12 = -0.5 * (np.sum(fx * ne, axis=-1) + np.sum(fe * nx, axis=-1))
    form_ii = np.stack([np.stack([l11, l12], -1), np.stack([l12, l22], -1)], -2)
    third_fd = np.stack([
        np.stack([np.sum(nx * nx, -1), np.sum(nx * ne, -1)], -1),
        np.stack([np.sum(nx * ne, -1), np.sum(ne * ne, -1)], -1)], -2)

    safe_det = np.where(immersed, det_i, 1.0)
    inv_i = np.empty_like(form_i)
    inv_i[..., 0, 0] = g / safe_det
    inv_i[..., 1, 1] = e / safe_det
    inv_i[..., 0, 1] = -fcross / safe_det
    inv_i[..., 1, 0] = -fcross / safe_det
    shape_op = inv_i @ form_ii
    mean = 0.5 * np.trace(shape_op, axis1=-2, axis2=-1)
    gauss = np.linalg.det(shape_op)
    form_iii = form_ii @ inv_i @ form_ii

    disc = np.sqrt(np.clip(mean**2 - gauss, 0.0, None))
    k1 = mean + disc
    k2 = mean - disc
    for arr in (mean, gauss, k1, k2):
        arr[~immersed] = np.nan
    return FundForms(I=form_i, II=form_ii, III=form_iii, third_fd=third_fd,
                     H=mean, K=gauss, kappa1=k1, kappa2=k2, normal=nor,
                     immersed=immersed)


@dataclass(frozen=True)
class TchebyshevReport:
    deviation_xi: float
    deviation_eta: float
    tolerance: float

    @property
    def deviation(self):
        return max(self.deviation_xi, self.deviation_eta)

    @property
    def passed(self):
        return self.deviation <= self.tolerance


def check_tchebyshev(f, tol=None):
    """Report how far the coordinate curves are from unit speed.

    Uses fourth-order stencils on the interior 2-ring; the pass verdict
    compares the worst deviation of |f_xi| and |f_eta| from 1 against the
    configured tolerance.
    """
    tol = TOLERANCES["tchebyshev"] if tol is None else tol
    grid = f.grid
    fx = diff(f.values, 0, grid.h1, order=4)
    fe = diff(f.values, 1, grid.h2, order=4)
    mask = interior(grid.shape, 2)
    dev_xi = float(np.max(np.abs(np.linalg.norm(fx, axis=-1) - 1.0)[mask]))
    dev_eta = float(np.max(np.abs(np.linalg.norm(fe, axis=-1) - 1.0)[mask]))
    return TchebyshevReport(dev_xi, dev_eta, tol)
