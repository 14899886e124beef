"""Smooth isothermic surfaces in the light-cone model.

A patch in conformal curvature-line coordinates carries a closed 1-form eta
with values in the abelian subalgebra f ^ f-perp of so(4,1); the pencil
d_t = d + t eta is then flat for every t, and all the classical transforms
drop out of its parallel sections and trivialising gauges:

* Darboux transforms are d_a-parallel null line bundles,
* T-transforms apply the trivialising gauge of d_s to the lift itself,
* Christoffel duals integrate the conjugate differential,
* Bianchi quadrilaterals and the cube theorem are pointwise Gamma-map
  algebra on lifted representatives, exact up to round-off.

Edge values of eta use the lift of the euclidean edge midpoint, which keeps
each value exactly 2-step nilpotent in the sense 'kills sigma, maps
sigma-perp into sigma'; the pencil transports are then exact degree-two
polynomial exponentials and preserve the Minkowski metric to round-off.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .defaults import TOLERANCES
from .errors import DataError, DegeneracyError, GeometryError, NotFlatError, SingularConfigurationError
from .grids import Grid2D, diff, interior
from .lightcone import (NullLine, concircular_batch, cross_ratio_batch, gamma_matrix,
                        inner, lift_vector, metric_diagonal, project_vectors)

__all__ = [
    "CurvatureLinePatch",
    "make_example",
    "PatchReport",
    "RetractionForm",
    "build_eta",
    "eta_closedness",
    "pencil_transports",
    "pencil_flatness",
    "darboux",
    "DarbouxResult",
    "t_transform",
    "TTransformResult",
    "christoffel_dual",
    "DualResult",
    "bianchi_quad",
    "BianchiQuadResult",
    "cube",
    "CubeResult",
    "sphere_congruence_tangency",
]


@dataclass(frozen=True)
class PatchReport:
    conformality: float        # | |f_x| - |f_y| | / e^u
    orthogonality: float       # |f_x . f_y| / e^{2u}
    curvature_line: float      # |II_12| relative to |II|
    tolerance: float

    @property
    def passed(self):
        return max(self.conformality, self.orthogonality, self.curvature_line) <= self.tolerance


@dataclass(frozen=True)
class CurvatureLinePatch:
    """Sampled surface in conformal curvature-line coordinates (x, y).

    f holds points of R^3, u the conformal factor with |f_x| = |f_y| = e^u,
    sigma the chart-normalised light-cone lifts.  mask marks usable
    vertices; transforms may switch off vertices that hit infinity or a
    singular configuration.
    """

    grid: Grid2D
    f: np.ndarray
    u: np.ndarray
    sigma: np.ndarray = field(repr=False, default=None)
    mask: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if self.sigma is None:
            object.__setattr__(self, "sigma", lift_vector(self.f))
        if self.mask is None:
            object.__setattr__(self, "mask", np.ones(self.grid.shape, dtype=bool))
        if self.f.shape != self.grid.shape + (3,) or self.u.shape != self.grid.shape:
            raise DataError("patch field shapes do not match the grid")

    def validate(self, tol=None):
        """Check the defining invariants by finite differences."""
        tol = TOLERANCES["patch_invariants"] if tol is None else tol
        g = self.grid
        fx = diff(self.f, 0, g.h1, order=4)
        fy = diff(self.f, 1, g.h2, order=4)
        m = interior(g.shape, 2) & self.mask
        eu = np.exp(self.u)
        nx = np.linalg.norm(fx, axis=-1)
        ny = np.linalg.norm(fy, axis=-1)
        conf = float(np.max((np.abs(nx - ny) / eu)[m]))
        orth = float(np.max((np.abs(np.sum(fx * fy, -1)) / eu**2)[m]))
        nor = np.cross(fx, fy)
        nor /= np.maximum(np.linalg.norm(nor, axis=-1, keepdims=True), 1e-300)
        nxd = diff(nor, 0, g.h1, order=4)
        nyd = diff(nor, 1, g.h2, order=4)
        ii12 = -0.5 * (np.sum(fx * nyd, -1) + np.sum(fy * nxd, -1))
        ii11 = -np.sum(fx * nxd, -1)
        ii22 = -np.sum(fy * nyd, -1)
        scale = np.maximum(np.abs(ii11) + np.abs(ii22), 1e-12 * eu**2)
        cl = float(np.max((np.abs(ii12) / scale)[m]))
        return PatchReport(conformality=conf, orthogonality=orth, curvature_line=cl, tolerance=tol)


def _profile_speed(profile, t, eps=1e-6):
    r, h = profile(np.asarray(t, dtype=float))
    rp, hp = profile(np.asarray(t, dtype=float) + eps)
    rm, hm = profile(np.asarray(t, dtype=float) - eps)
    dr = (np.asarray(rp) - np.asarray(rm)) / (2 * eps)
    dh = (np.asarray(hp) - np.asarray(hm)) / (2 * eps)
    if np.any(np.asarray(r) <= 0):
        raise DataError("profile must stay in the upper half plane (r > 0)")
    return np.asarray(r), np.sqrt(dr**2 + dh**2) / np.asarray(r)


def _reparametrize_hyperbolic(profile, t_range, y_targets, substeps=64):
    """t(y) where y is hyperbolic arc length along the profile, by RK4 on dt/dy = r/|c'|.

    Marches from t_range[0] (where y = 0) through the sorted targets; the
    profile callable is treated as analytic, so the reparametrisation is
    accurate to integrator order and the grid resolution never sees it.
    """
    y_sorted = np.unique(np.round(y_targets, 14))
    if np.min(y_sorted) < -1e-12:
        raise DataError("revolution grids must start at nonnegative arc length")
    out = {}
    t = float(t_range[0])
    y = 0.0
    rhs = lambda tt: 1.0 / _profile_speed(profile, tt)[1]
    for target in y_sorted:
        gap = target - y
        n_sub = max(1, int(np.ceil(gap / 0.01)))
        hstep = gap / n_sub if n_sub else 0.0
        for _ in range(n_sub):
            k1 = rhs(t)
            k2 = rhs(t + 0.5 * hstep * k1)
            k3 = rhs(t + 0.5 * hstep * k2)
            k4 = rhs(t + hstep * k3)
            t = t + hstep / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        y = target
        if t > t_range[1] + 1e-9:
            raise DataError("grid exceeds the hyperbolic arc length of the profile")
        out[float(target)] = t
    return out


def make_example(kind, grid=None, **params):
    """Shipped isothermic examples on conformal curvature-line grids.

    kind is one of 'cylinder', 'catenoid', 'sphere_patch', 'revolution'.
    Cylinders use arc length along the circular direction so u = 0; the
    catenoid carries u = log cosh y; sphere patches are Mercator.  For
    'revolution' pass `profile` (a callable t -> (r(t), h(t)) into the upper
    half plane) and `t_range`; the profile is reparametrised by hyperbolic
    arc length, which is what makes the coordinates conformal.
    """
    if grid is None:
        grid = Grid2D(49, 49, 1.0 / 48, 1.0 / 48, -0.5, -0.5)
    x, y = grid.mesh()
    if kind == "cylinder":
        radius = params.get("radius", 1.0)
        if radius <= 0:
            raise DataError("cylinder radius must be positive")
        f = np.stack([radius * np.cos(x / radius), radius * np.sin(x / radius), y], -1)
        u = np.zeros(grid.shape)
    elif kind == "catenoid":
        f = np.stack([np.cosh(y) * np.cos(x), np.cosh(y) * np.sin(x), y], -1)
        u = np.log(np.cosh(y))
    elif kind == "sphere_patch":
        radius = params.get("radius", 1.0)
        if radius <= 0:
            raise DataError("sphere radius must be positive")
        sech = 1.0 / np.cosh(y)
        f = radius * np.stack([sech * np.cos(x), sech * np.sin(x), np.tanh(y)], -1)
        u = np.log(radius * sech)
    elif kind == "revolution":
        profile = params["profile"]
        t_range = params["t_range"]
        t_map = _reparametrize_hyperbolic(profile, t_range, grid.axis2)
        t_of_y = np.array([t_map[float(np.round(yy, 14))] for yy in grid.axis2])
        r_prof, h_prof = profile(t_of_y)
        r = np.broadcast_to(np.asarray(r_prof), grid.shape)
        h = np.broadcast_to(np.asarray(h_prof), grid.shape)
        f = np.stack([r * np.cos(x), r * np.sin(x), h], -1)
        u = np.log(r)
    else:
        raise DataError(f"unknown example kind {kind!r}")
    return CurvatureLinePatch(grid=grid, f=f, u=u)


def graph_control_patch(grid):
    """Non-isothermic control: the graph z = x^2 + 2 y^3 in graph coordinates.

    The coordinates are neither conformal nor curvature-line, so the eta
    built from them fails to close; refinement cannot repair it.
    """
    x, y = grid.mesh()
    f = np.stack([x, y, x**2 + 2 * y**3], -1)
    fx = diff(f, 0, grid.h1, order=4)
    fy = diff(f, 1, grid.h2, order=4)
    u = 0.5 * (np.log(np.linalg.norm(fx, axis=-1)) + np.log(np.linalg.norm(fy, axis=-1)))
    return CurvatureLinePatch(grid=grid, f=f, u=u)


# ---------------------------------------------------------------------------
# the retraction form


def _wedge(u, v):
    """so(4,1) element u ^ v acting as w -> (u,w) v - (v,w) u (broadcasting)."""
    g = metric_diagonal(u.shape[-1])
    return v[..., :, None] * (g * u)[..., None, :] - u[..., :, None] * (g * v)[..., None, :]


@dataclass(frozen=True)
class RetractionForm:
    """Edge-midpoint samples of the closed form eta attached to a patch.

    eta_x[i, j] is the value on the x-edge (i,j)->(i+1,j) (a 5x5 array in
    f ^ f-perp), eta_y the corresponding y-edge values; the 1-form carries
    opposite signs on the two coordinate directions, which is exactly the
    conjugate-differential structure the closedness theorem needs.
    """

    grid: Grid2D
    eta_x: np.ndarray
    eta_y: np.ndarray

    def nilpotency_residual(self, patch):
        """Residuals of 'kills the midpoint lift' and of cubic nilpotency at edges."""
        fm_x = lift_vector(0.5 * (patch.f[:-1, :] + patch.f[1:, :]))
        fm_y = lift_vector(0.5 * (patch.f[:, :-1] + patch.f[:, 1:]))
        worst = 0.0
        for values, sig in ((self.eta_x, fm_x), (self.eta_y, fm_y)):
            kill = np.einsum("...ij,...j->...i", values, sig)
            rel = np.linalg.norm(kill, axis=-1) / (
                np.linalg.norm(values, axis=(-2, -1)) * np.linalg.norm(sig, axis=-1))
            worst = max(worst, float(np.max(rel)))
            cube_ = values @ values @ values
            scale = np.maximum(np.linalg.norm(values, axis=(-2, -1)) ** 3, 1e-300)
            worst = max(worst, float(np.max(np.linalg.norm(cube_, axis=(-2, -1)) / scale)))
        return worst

    def abelian_residual(self, patch):
        """Max relative norm of [eta(dx), eta(dy)] evaluated at common vertices.

        Both values are rebuilt at each vertex from the same lift with
        cone-tangent derivatives, which is the configuration in which the
        abelian-subalgebra property is an identity; edge samples at distinct
        midpoints would differ by the discretisation order instead.
        """
        wx, wy = eta_vertex_values(patch)
        comm = wx @ wy - wy @ wx
        scale = np.maximum(np.linalg.norm(wx, axis=(-2, -1)) * np.linalg.norm(wy, axis=(-2, -1)), 1e-300)
        return float(np.max(np.linalg.norm(comm, axis=(-2, -1)) / scale))


def eta_vertex_values(patch):
    """Vertex samples of (eta(dx), eta(dy)) built from one common lift each.

    The finite-difference lift derivatives are corrected to be tangent to
    the cone at sigma ((sigma, d sigma) = 0 exactly, via the e5 direction
    which never pairs to zero with a chart lift), so both values land in the
    same abelian subalgebra sigma ^ sigma-perp on the nose.
    """
    g = patch.grid
    s = patch.sigma
    e5 = np.zeros(5)
    e5[4] = 1.0

    def corrected(ds):
        pairing = inner(ds, s)
        return ds + (pairing / s[..., 4])[..., None] * e5

    sx = corrected(diff(s, 0, g.h1, order=2))
    sy = corrected(diff(s, 1, g.h2, order=2))
    scale = np.exp(-2.0 * patch.u)[..., None, None]
    return scale * _wedge(s, sx), -scale * _wedge(s, sy)


def build_eta(patch, c0=1.0):
    """Edge samples of eta = c0 e^{-2u} (sigma ^ sigma_x dx - sigma ^ sigma_y dy).

    Midpoint lifts come from the euclidean edge midpoint, so (sigma_m,
    sigma_m) = 0 and (sigma_m, Delta sigma) = 0 hold exactly and every
    value is exactly nilpotent.  c0 rescales the whole pencil parameter and
    is kept at 1 throughout the package.
    """
    if not np.all(np.isfinite(patch.u)):
        raise DegeneracyError("conformal factor is not finite; the patch fails to immerse")
    g = patch.grid
    s = patch.sigma

    def edge_values(axis, sign, h):
        if axis == 0:
            sig_a, sig_b = s[:-1, :], s[1:, :]
            f_a, f_b = patch.f[:-1, :], patch.f[1:, :]
            u_m = 0.5 * (patch.u[:-1, :] + patch.u[1:, :])
        else:
            sig_a, sig_b = s[:, :-1], s[:, 1:]
            f_a, f_b = patch.f[:, :-1], patch.f[:, 1:]
            u_m = 0.5 * (patch.u[:, :-1] + patch.u[:, 1:])
        sig_m = lift_vector(0.5 * (f_a + f_b))
        dsig = (sig_b - sig_a) / h
        return sign * c0 * np.exp(-2.0 * u_m)[..., None, None] * _wedge(sig_m, dsig)

    return RetractionForm(grid=g, eta_x=edge_values(0, 1.0, g.h1), eta_y=edge_values(1, -1.0, g.h2))


def eta_closedness(eta, margin=0):
    """Max plaquette circulation of eta per unit area: the discrete d eta.

    Vanishes at second order exactly on isothermic patches; the negative
    control keeps a finite residual under refinement.  `margin` drops that
    many plaquette rings at the boundary, which matters for patches whose
    conformal factor was itself measured by one-sided stencils there.
    """
    g = eta.grid
    circ = (g.h1 * eta.eta_x[:, :-1] + g.h2 * eta.eta_y[1:, :]
            - g.h1 * eta.eta_x[:, 1:] - g.h2 * eta.eta_y[:-1, :])
    norms = np.linalg.norm(circ, axis=(-2, -1))
    if margin:
        norms = norms[margin:-margin, margin:-margin]
    return float(np.max(norms)) / (g.h1 * g.h2)


def pencil_transports(eta, t):
    """Edge transports of d_t = d + t eta, exact because the values are nilpotent.

    exp(-t h W) = 1 - t h W + (t h W)^2 / 2 with W^3 = 0; each transport is
    exactly orthogonal for the Minkowski metric up to round-off.
    """
    def expm_nilpotent(w, step):
        m = -t * step * w
        return np.eye(5) + m + 0.5 * (m @ m)

    return expm_nilpotent(eta.eta_x, eta.grid.h1), expm_nilpotent(eta.eta_y, eta.grid.h2)


def pencil_flatness(patch, eta, t):
    """Holonomy defect of d_t per plaquette area."""
    px, pe = pencil_transports(eta, t)
    bottom = px[:, :-1]
    right = pe[1:, :]
    top_inv = np.linalg.inv(px[:, 1:])
    left_inv = np.linalg.inv(pe[:-1, :])
    hol = left_inv @ top_inv @ right @ bottom
    g = eta.grid
    return float(np.max(np.linalg.norm(hol - np.eye(5), axis=(-2, -1)))) / (g.h1 * g.h2)


def _trivialize_pencil(grid, px, pe):
    t = np.empty(grid.shape + (5, 5))
    t[0, 0] = np.eye(5)
    for i in range(grid.n1 - 1):
        t[i + 1, 0] = t[i, 0] @ np.linalg.inv(px[i, 0])
    for j in range(grid.n2 - 1):
        t[:, j + 1] = t[:, j] @ np.linalg.inv(pe[:, j])
    return t


def _transport_line(grid, px, pe, seed):
    lifts = np.empty(grid.shape + (5,))
    lifts[0, 0] = seed / np.linalg.norm(seed)
    for i in range(grid.n1 - 1):
        v = px[i, 0] @ lifts[i, 0]
        lifts[i + 1, 0] = v / np.linalg.norm(v)
    for j in range(grid.n2 - 1):
        v = np.einsum("aij,aj->ai", pe[:, j], lifts[:, j])
        lifts[:, j + 1] = v / np.linalg.norm(v, axis=-1, keepdims=True)
    return lifts


def _patch_from_lifts(grid, lifts, reference_u=None):
    """Project transformed lifts back to a patch, masking points at infinity."""
    pts, finite = project_vectors(lifts)
    f = np.where(finite[..., None], pts, 0.0)
    fx = diff(f, 0, grid.h1, order=4)
    fy = diff(f, 1, grid.h2, order=4)
    nx = np.maximum(np.linalg.norm(fx, axis=-1), 1e-300)
    ny = np.maximum(np.linalg.norm(fy, axis=-1), 1e-300)
    u = 0.5 * (np.log(nx) + np.log(ny))
    return CurvatureLinePatch(grid=grid, f=f, u=u, mask=finite)


@dataclass(frozen=True)
class DarbouxResult:
    patch: CurvatureLinePatch
    lifts: np.ndarray               # representatives of the parallel bundle
    a: float
    collision_floor: float          # min separation from f; small means singular
    plaquette_defect: float         # transport around plaquettes, per area


def darboux(patch, eta, a, y0, collision_tol=1e-7):
    """Darboux transform: the d_a-parallel null line bundle through y0.

    y0 is a NullLine (or lift vector) off f at the base vertex.  Vertices
    where the transported bundle meets f are flagged and masked rather than
    interpolated; a collision at the seed itself is rejected outright.
    """
    if a == 0:
        raise GeometryError("Darboux parameter must be nonzero")
    seed = y0.rep if isinstance(y0, NullLine) else np.asarray(y0, dtype=float)
    base = patch.sigma[0, 0]
    if abs(inner(seed, base)) < 1e-10 * np.linalg.norm(seed) * np.linalg.norm(base):
        raise SingularConfigurationError("seed line meets f at the base vertex", vertex=(0, 0))
    px, pe = pencil_transports(eta, a)
    lifts = _transport_line(patch.grid, px, pe, seed)

    pairing = np.abs(inner(lifts, patch.sigma)) / (
        np.linalg.norm(lifts, axis=-1) * np.linalg.norm(patch.sigma, axis=-1))
    floor = float(np.min(pairing))
    out = _patch_from_lifts(patch.grid, lifts)
    mask = out.mask & (pairing > collision_tol)
    out = replace(out, mask=mask)
    defect = pencil_flatness(patch, eta, a)
    return DarbouxResult(patch=out, lifts=lifts, a=a, collision_floor=floor,
                         plaquette_defect=defect)


@dataclass(frozen=True)
class TTransformResult:
    patch: CurvatureLinePatch
    lifts: np.ndarray
    gauge: np.ndarray               # T_s at every vertex
    s: float
    eta_s_closedness: float         # discrete d(Ad_T eta), per area


def t_transform(patch, eta, s, flat_tol=None):
    """T-transform via the trivialising gauge of d_s applied to the lift.

    The conjugated form eta_s = Ad_{T_s} eta (edge values averaged over the
    two endpoint gauges) is returned through its closedness residual, which
    is the isothermic certificate for the transformed surface.
    """
    flat_tol = 50 * TOLERANCES["eta_closedness"] if flat_tol is None else flat_tol
    if s == 0:
        gauge = np.broadcast_to(np.eye(5), patch.grid.shape + (5, 5)).copy()
        return TTransformResult(patch=patch, lifts=patch.sigma.copy(), gauge=gauge, s=0.0,
                                eta_s_closedness=eta_closedness(eta))
    defect = pencil_flatness(patch, eta, s)
    if defect > flat_tol:
        raise NotFlatError(f"pencil defect {defect:.3e} at t={s}; patch is not isothermic")
    px, pe = pencil_transports(eta, s)
    gauge = _trivialize_pencil(patch.grid, px, pe)
    lifts = np.einsum("...ij,...j->...i", gauge, patch.sigma)
    out = _patch_from_lifts(patch.grid, lifts)

    inv = np.linalg.inv(gauge)
    ex = 0.5 * (gauge[:-1, :] @ eta.eta_x @ inv[:-1, :] + gauge[1:, :] @ eta.eta_x @ inv[1:, :])
    ey = 0.5 * (gauge[:, :-1] @ eta.eta_y @ inv[:, :-1] + gauge[:, 1:] @ eta.eta_y @ inv[:, 1:])
    eta_s = RetractionForm(grid=patch.grid, eta_x=ex, eta_y=ey)
    return TTransformResult(patch=out, lifts=lifts, gauge=gauge, s=s,
                            eta_s_closedness=eta_closedness(eta_s))


@dataclass(frozen=True)
class DualResult:
    patch: CurvatureLinePatch
    path_defect: float              # plaquette closure of the dual differential


def christoffel_dual(patch, path_tol=1e-3):
    """Christoffel dual integrated from df^c = e^{-2u} (f_y dy - f_x dx).

    Edge increments use midpoint conformal factors; the dual patch inherits
    u^c = -u, which makes the double dual reproduce the original edge
    increments identically (the involution is exact by construction).  The
    plaquette closure of the increments is the isothermic certificate; a
    closure above `path_tol` (scaled by the grid area) raises GeometryError.
    """
    g = patch.grid
    f = patch.f
    um_x = 0.5 * (patch.u[:-1, :] + patch.u[1:, :])
    um_y = 0.5 * (patch.u[:, :-1] + patch.u[:, 1:])
    inc_x = -np.exp(-2 * um_x)[..., None] * (f[1:, :] - f[:-1, :])
    inc_y = np.exp(-2 * um_y)[..., None] * (f[:, 1:] - f[:, :-1])

    closure = inc_x[:, :-1] + inc_y[1:, :] - inc_x[:, 1:] - inc_y[:-1, :]
    defect = float(np.max(np.linalg.norm(closure, axis=-1))) / (g.h1 * g.h2)
    if defect > path_tol / (g.h1 * g.h2) * 10:
        raise GeometryError(f"dual differential fails to close (defect {defect:.3e}); not isothermic")

    fc = np.empty_like(f)
    fc[0, 0] = 0.0
    for i in range(g.n1 - 1):
        fc[i + 1, 0] = fc[i, 0] + inc_x[i, 0]
    for j in range(g.n2 - 1):
        fc[:, j + 1] = fc[:, j] + inc_y[:, j]
    dual = CurvatureLinePatch(grid=g, f=fc, u=-patch.u, mask=patch.mask.copy())
    return DualResult(patch=dual, path_defect=defect)


# ---------------------------------------------------------------------------
# pointwise Gamma algebra: Bianchi quadrilaterals and the cube theorem


def _normalize_rows(lifts):
    return lifts / np.linalg.norm(lifts, axis=-1, keepdims=True)


def _projective_distance(u, v):
    """Sine of the angle between lines, stable down to round-off.

    Computed as the norm of the rejection of u from v, so tiny angles are
    resolved exactly instead of flooring at sqrt(machine epsilon) the way a
    1 - cos^2 formulation would.
    """
    vn = v / np.linalg.norm(v, axis=-1, keepdims=True)
    proj = np.sum(u * vn, axis=-1, keepdims=True) * vn
    return np.linalg.norm(u - proj, axis=-1) / np.linalg.norm(u, axis=-1)


@dataclass(frozen=True)
class BianchiQuadResult:
    lifts_a: np.ndarray
    lifts_b: np.ndarray
    lifts_ab: np.ndarray
    candidate_distance: float       # projective gap between the two Gamma routes
    cross_ratio_error: float        # max |cr(f_b, f_a; f, f_ab) - a/b|
    eq12_error: float               # max |cr(f_a, f; f_b, f_ab) - (1 - b/a)|
    concircular: bool


def _bianchi_fourth(sig, la, lb, a, b):
    """Both Gamma routes to the fourth surface; returns (lifts, projective gap)."""
    c1 = np.einsum("...ij,...j->...i", gamma_matrix(la, sig, 1.0 - b / a), lb)
    c2 = np.einsum("...ij,...j->...i", gamma_matrix(lb, sig, 1.0 - a / b), la)
    gap = float(np.max(_projective_distance(c1, c2)))
    return _normalize_rows(c1), gap


def bianchi_quad(patch, eta, a, b, y0a, y0b):
    """Permutability of two Darboux transforms, checked pointwise.

    The fourth surface is algebraic in (f, f_a, f_b): both displayed Gamma
    expressions are evaluated at every vertex and compared projectively; the
    quadruple is checked for concircularity and for the cross-ratio a/b.
    No integration enters this step.
    """
    if a == b or a == 0 or b == 0:
        raise GeometryError("Bianchi quadrilaterals need distinct nonzero parameters")
    res_a = darboux(patch, eta, a, y0a)
    res_b = darboux(patch, eta, b, y0b)
    sig = _normalize_rows(patch.sigma)
    la = res_a.lifts
    lb = res_b.lifts
    if float(np.min(_projective_distance(la, lb))) < 1e-9:
        raise GeometryError("the two transforms coincide at a vertex; quadrilateral degenerates")
    lab, gap = _bianchi_fourth(sig, la, lb, a, b)

    cr, _ = cross_ratio_batch(lb, la, sig, lab)
    cr_err = float(np.max(np.abs(cr - a / b)))
    cr12, _ = cross_ratio_batch(la, sig, lb, lab)
    eq12_err = float(np.max(np.abs(cr12 - (1.0 - b / a))))
    quad = np.stack([sig, la, lb, lab], axis=-2)
    conc = bool(np.all(concircular_batch(quad)))
    return BianchiQuadResult(lifts_a=la, lifts_b=lb, lifts_ab=lab,
                             candidate_distance=gap, cross_ratio_error=cr_err,
                             eq12_error=eq12_err, concircular=conc)


def eq10_identity_residual(patch, quad, a, b, t_values=(-1.0, 0.3, 5.0)):
    """Residuals of the three-member Gamma identity behind permutability.

    Evaluates left, middle and right members on the (f, f_a, f_b, f_ab)
    quadruple of a BianchiQuadResult at the sampled pencil parameters and
    returns the worst pairwise matrix deviation.
    """
    sig = _normalize_rows(patch.sigma)
    la, lb, lab = quad.lifts_a, quad.lifts_b, quad.lifts_ab
    worst = 0.0
    for t in t_values:
        left = gamma_matrix(lab, la, 1.0 - t / b) @ gamma_matrix(la, sig, 1.0 - t / a)
        mid = gamma_matrix(lb, la, (1.0 - t / b) / (1.0 - t / a))
        right = gamma_matrix(lab, lb, 1.0 - t / a) @ gamma_matrix(lb, sig, 1.0 - t / b)
        worst = max(worst,
                    float(np.max(np.linalg.norm(left - mid, axis=(-2, -1)))),
                    float(np.max(np.linalg.norm(right - mid, axis=(-2, -1)))))
    return worst


@dataclass(frozen=True)
class CubeResult:
    lifts: dict                     # keys '', 'a', 'b', 'c', 'ab', 'ac', 'bc', 'abc'
    closure_residual: float         # projective gap among the three routes to f_abc
    cross_ratio_error: float        # |cr(f_a, f_b; f_c, f_abc) - (1-c/b)/(1-c/a)|
    quad_cross_ratio_errors: dict   # the three top quadrilaterals as Bianchi quads
    concircular: bool


def cube(patch, eta, a, b, c, y0a, y0b, y0c):
    """Cube theorem: eight surfaces from three Darboux transforms.

    f_abc comes from the displayed identity; the three alternative routes
    through the quadrilateral tops must agree projectively, and the new
    quadruple (f_a, f_b; f_c, f_abc) has cross-ratio (1-c/b)/(1-c/a).
    """
    if len({a, b, c}) != 3 or 0 in (a, b, c):
        raise GeometryError("cube needs pairwise distinct nonzero parameters")
    sig = _normalize_rows(patch.sigma)
    lifts = {"": sig}
    for key, par, seed in (("a", a, y0a), ("b", b, y0b), ("c", c, y0c)):
        lifts[key] = darboux(patch, eta, par, seed).lifts
    pairs = {"ab": (a, b), "ac": (a, c), "bc": (b, c)}
    for key, (pa, pb) in pairs.items():
        lifts[key], _ = _bianchi_fourth(sig, lifts[key[0]], lifts[key[1]], pa, pb)

    mid = np.einsum("...ij,...j->...i",
                    gamma_matrix(lifts["b"], lifts["a"], (1.0 - c / b) / (1.0 - c / a)),
                    lifts["c"])
    left = np.einsum("...ij,...j->...i",
                     gamma_matrix(lifts["ab"], lifts["a"], 1.0 - c / b), lifts["ac"])
    right = np.einsum("...ij,...j->...i",
                      gamma_matrix(lifts["ab"], lifts["b"], 1.0 - c / a), lifts["bc"])
    closure = max(float(np.max(_projective_distance(left, mid))),
                  float(np.max(_projective_distance(right, mid))))
    lifts["abc"] = _normalize_rows(mid)

    cr, _ = cross_ratio_batch(lifts["b"], lifts["a"], lifts["c"], lifts["abc"])
    cr_err = float(np.max(np.abs(cr - (1.0 - c / b) / (1.0 - c / a))))
    conc = bool(np.all(concircular_batch(np.stack(
        [lifts["a"], lifts["b"], lifts["c"], lifts["abc"]], axis=-2))))

    quad_errors = {}
    for base, t1, t2, pa, pb in (("a", "ab", "ac", b, c), ("b", "ab", "bc", a, c), ("c", "ac", "bc", a, b)):
        cr_q, _ = cross_ratio_batch(lifts[t2], lifts[t1], lifts[base], lifts["abc"])
        quad_errors[base] = float(np.max(np.abs(cr_q - pa / pb)))
    return CubeResult(lifts=lifts, closure_residual=closure, cross_ratio_error=cr_err,
                      quad_cross_ratio_errors=quad_errors, concircular=conc)


def sphere_congruence_tangency(patch, result):
    """First-order tangency of the transform to the enveloped sphere congruence.

    The sphere at p is spanned by sigma, sigma_x, sigma_y and the transform
    line; tangency asks the transform's first jet to stay inside that span.
    Returns the worst least-squares inclusion residual over interior
    vertices: an O(h) statement of the enveloping condition.
    """
    g = patch.grid
    sx = diff(patch.sigma, 0, g.h1, order=2)
    sy = diff(patch.sigma, 1, g.h2, order=2)
    hx = diff(result.lifts, 0, g.h1, order=2)
    hy = diff(result.lifts, 1, g.h2, order=2)
    worst = 0.0
    m = interior(g.shape, 1) & patch.mask & result.patch.mask
    idx = np.argwhere(m)
    for i, j in idx[:: max(1, len(idx) // 400)]:
        span = np.stack([patch.sigma[i, j], sx[i, j], sy[i, j], result.lifts[i, j]], axis=1)
        for jet in (hx[i, j], hy[i, j]):
            coef, res, *_ = np.linalg.lstsq(span, jet, rcond=None)
            resid = np.linalg.norm(span @ coef - jet) / max(np.linalg.norm(jet), 1e-300)
            worst = max(worst, float(resid))
    return worst
