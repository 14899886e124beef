"""Discrete gauge theory on quad-graphs of null lines.

A discrete isothermic surface is a map of Z^2 into the projective light
cone together with a factorising function on edges, equal on opposite edges
of every face, whose per-face cross-ratios it factorises.  The attached
family of connections puts a Gamma map on every edge; flatness for all t is
equivalent to the isothermic condition, and Darboux transforms, triple
systems and the spectral deformation are parallel sections and trivialising
gauges of this family.

Unlike the smooth modules there is no discretisation error anywhere here:
every identity is pointwise Gamma algebra and the tolerances are pure
floating point.
"""

from dataclasses import dataclass, field

import numpy as np

from .defaults import TOLERANCES
from .errors import DataError, GeometryError, NotFlatError, PoleError, SingularConfigurationError
from .lightcone import (concircular_batch, cross_ratio_batch, gamma_matrix, inner,
                        lift_vector, project_vectors, translate_reps, translation_matrix)

__all__ = [
    "QuadMap",
    "EdgeWeights",
    "planar_grid",
    "cylinder_grid",
    "from_bianchi_face",
    "is_isothermic",
    "FaceReport",
    "connection",
    "DiscreteConnection",
    "flatness",
    "trivialize",
    "darboux",
    "DiscreteDarbouxResult",
    "triple_system",
    "TripleSystem",
    "t_transform",
]


def _normalize(lifts):
    return lifts / np.linalg.norm(lifts, axis=-1, keepdims=True)


def _chart_normalize(lifts):
    """Scale representatives to the euclidean chart (l5 - l4 = 1) where finite.

    Chart scaling keeps the pairing of nearby lines at the squared euclidean
    distance scale regardless of how far from the origin they sit, which is
    what the Gamma-map numerics want; representatives near infinity fall
    back to unit scale.
    """
    lifts = np.asarray(lifts, dtype=float)
    denom = lifts[..., 4] - lifts[..., 3]
    scale = np.linalg.norm(lifts, axis=-1)
    finite = np.abs(denom) > 1e-9 * scale
    safe = np.where(finite, denom, scale)
    return lifts / safe[..., None]


@dataclass(frozen=True)
class QuadMap:
    """Z^2 family of null lines in R^{4,1}, chart-normalised where finite."""

    lifts: np.ndarray               # (n1, n2, 5)

    def __post_init__(self):
        if self.lifts.ndim != 3 or self.lifts.shape[-1] != 5:
            raise DataError("QuadMap wants an (n1, n2, 5) array of representatives")
        pairing = inner(self.lifts, self.lifts) / np.sum(self.lifts**2, axis=-1)
        if np.max(np.abs(pairing)) > 1e-9:
            raise DataError("representatives must be null")
        object.__setattr__(self, "lifts", _chart_normalize(self.lifts))

    @property
    def shape(self):
        return self.lifts.shape[:2]

    @classmethod
    def from_points(cls, points):
        return cls(lift_vector(np.asarray(points, dtype=float)))

    def points(self):
        """Chart projection; returns (points, finite_mask)."""
        return project_vectors(self.lifts)


@dataclass(frozen=True)
class EdgeWeights:
    """Factorising function: constant along each edge's transverse direction.

    Equality on opposite edges forces the weight of an axis-0 edge to depend
    only on its column and of an axis-1 edge only on its row, so the whole
    function is two vectors.
    """

    alpha: np.ndarray               # (n1 - 1,) axis-0 edge weights
    beta: np.ndarray                # (n2 - 1,) axis-1 edge weights

    def __post_init__(self):
        alpha = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        if np.any(alpha == 0) or np.any(beta == 0):
            raise DataError("edge weights must be nonzero")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)

    def ratio_grid(self):
        """alpha_i / beta_j on every face."""
        return self.alpha[:, None] / self.beta[None, :]


def planar_grid(n1, n2, p=1.0, q=1.0):
    """Planar rectangular seed, centred at the origin: f(i, j) ~ (i p, j q, 0).

    Every face is a p x q rectangle, hence cyclic with cross-ratio
    (f(l), f(j); f(i), f(k)) = -q^2/p^2 in the convention of
    `lightcone.cross_ratio`; the factorisation puts q^2 on axis-0 edges and
    -p^2 on axis-1 edges.
    """
    i, j = np.meshgrid(np.arange(n1), np.arange(n2), indexing="ij")
    pts = np.stack([(i - (n1 - 1) / 2.0) * p, (j - (n2 - 1) / 2.0) * q,
                    np.zeros_like(i, dtype=float)], axis=-1)
    weights = EdgeWeights(alpha=np.full(n1 - 1, q**2), beta=np.full(n2 - 1, -(p**2)))
    return QuadMap.from_points(pts), weights


def cylinder_grid(n1, n2, dtheta=0.25, dz=0.2, radius=1.0):
    """Circular cylinder sampled on a curvature-line lattice, centred axially.

    Faces are planar rectangles with angular chord 2 r sin(dtheta/2) and
    height dz, so the same rectangle factorisation applies with the chord
    in place of p.
    """
    i, j = np.meshgrid(np.arange(n1), np.arange(n2), indexing="ij")
    th = i * dtheta
    z = (j - (n2 - 1) / 2.0) * dz
    pts = np.stack([radius * np.cos(th), radius * np.sin(th), z], axis=-1)
    chord = 2.0 * radius * np.sin(dtheta / 2.0)
    weights = EdgeWeights(alpha=np.full(n1 - 1, dz**2), beta=np.full(n2 - 1, -(chord**2)))
    return QuadMap.from_points(pts), weights


def from_bianchi_face(sigma, lift_a, lift_b, lift_ab, a, b):
    """Single-face quad map from a smooth Bianchi quadrilateral at one vertex.

    The face (f, f_a, f_ab, f_b) has cross-ratio a/b, so the weights are
    just the transform parameters.
    """
    lifts = np.empty((2, 2, 5))
    lifts[0, 0] = sigma
    lifts[1, 0] = lift_a
    lifts[1, 1] = lift_ab
    lifts[0, 1] = lift_b
    return QuadMap(lifts), EdgeWeights(alpha=np.array([a]), beta=np.array([b]))


@dataclass(frozen=True)
class FaceReport:
    cross_ratio_error: np.ndarray   # (n1-1, n2-1)
    concircular: np.ndarray         # (n1-1, n2-1) bool
    tolerance: float

    @property
    def worst(self):
        return float(np.max(self.cross_ratio_error))

    @property
    def passed(self):
        return bool(np.all(self.concircular)) and self.worst <= self.tolerance

    def failing_faces(self):
        bad = (self.cross_ratio_error > self.tolerance) | ~self.concircular
        return [tuple(ij) for ij in np.argwhere(bad)]


def is_isothermic(quad, weights, tol=None):
    """Per-face concircularity and cross-ratio factorisation check.

    The face at (i, j) has corners i=(i,j), j=(i+1,j), k=(i+1,j+1),
    l=(i,j+1) and must satisfy (f(l), f(j); f(i), f(k)) = alpha_i / beta_j.
    """
    tol = TOLERANCES["discrete_face"] if tol is None else tol
    f = quad.lifts
    if weights.alpha.shape[0] != quad.shape[0] - 1 or weights.beta.shape[0] != quad.shape[1] - 1:
        raise DataError("edge weight vectors do not match the grid")
    fi, fj, fk, fl = _recenter([f[:-1, :-1], f[1:, :-1], f[1:, 1:], f[:-1, 1:]])
    cr, resid = cross_ratio_batch(fl, fj, fi, fk)
    err = np.abs(cr - weights.ratio_grid())
    quadruples = np.stack([fi, fj, fk, fl], axis=-2)
    conc = concircular_batch(quadruples) & (resid < np.sqrt(tol))
    return FaceReport(cross_ratio_error=err, concircular=conc, tolerance=tol)


@dataclass(frozen=True)
class DiscreteConnection:
    """Gamma maps on directed edges: gx[i, j] carries (i, j) to (i+1, j).

    The edge maps live in recentred chart coordinates (grid centroid at the
    origin); `center` is the translation that restores the original chart.
    All holonomy and gauge statements are conjugation-invariant, so the
    recentring only buys conditioning.
    """

    t: float
    gx: np.ndarray                  # (n1-1, n2, 5, 5)
    gy: np.ndarray                  # (n1, n2-1, 5, 5)
    lifts: np.ndarray               # recentred vertex representatives
    alpha: np.ndarray
    beta: np.ndarray
    center: np.ndarray


def _grid_centroid(lifts):
    pts, finite = project_vectors(lifts)
    count = max(int(np.sum(finite)), 1)
    return np.sum(np.where(finite[..., None], pts, 0.0), axis=(0, 1)) / count


def connection(quad, weights, t):
    """The family member Gamma^t with edge maps Gamma_{f(i)}^{f(j)}(1 - t/a(i,j)).

    t = 0 is the trivial connection; t equal to any edge weight is a pole of
    the corresponding Gamma factor and is rejected with the offending edge.
    """
    bad_a = np.flatnonzero(np.abs(weights.alpha - t) < 1e-12)
    bad_b = np.flatnonzero(np.abs(weights.beta - t) < 1e-12)
    if bad_a.size or bad_b.size:
        axis, idx = ("axis-0", bad_a[0]) if bad_a.size else ("axis-1", bad_b[0])
        raise PoleError(f"t = {t} hits the weight of {axis} edge family {idx}")
    center = _grid_centroid(quad.lifts)
    f = translate_reps(quad.lifts, -center)
    gx = gamma_matrix(f[1:, :], f[:-1, :], 1.0 - t / weights.alpha[:, None])
    gy = gamma_matrix(f[:, 1:], f[:, :-1], 1.0 - t / weights.beta[None, :])
    return DiscreteConnection(t=t, gx=gx, gy=gy, lifts=f,
                              alpha=weights.alpha, beta=weights.beta, center=center)


def _recenter(lift_groups):
    """Translate groups of representatives so each group's centroid sits at 0.

    Euclidean translations are exact O(4,1) matrices fixing infinity, and
    conjugating a face (or edge) computation by one changes nothing
    algebraically while removing the R^4 pairing falloff that makes Gamma
    products of far-from-origin points numerically useless.  Vertices at
    infinity simply drop out of the centroid.
    """
    stacked = np.stack(lift_groups, axis=-2)
    pts, finite = project_vectors(stacked)
    count = np.maximum(np.sum(finite, axis=-1), 1)
    centroid = np.sum(np.where(finite[..., None], pts, 0.0), axis=-2) / count[..., None]
    return [translate_reps(g, -centroid) for g in lift_groups]


def flatness(conn):
    """Max face holonomy defect |Gamma_il Gamma_lk Gamma_kj Gamma_ji - 1|.

    Every face is recentred before its four Gamma maps are formed; the
    holonomy is conjugation-invariant, so this only removes the pairing
    falloff of far-from-origin faces from the numerics.
    """
    f = conn.lifts
    t = conn.t
    fi, fj, fk, fl = _recenter([f[:-1, :-1], f[1:, :-1], f[1:, 1:], f[:-1, 1:]])
    sx = 1.0 - t / conn.alpha[:, None]
    sy = 1.0 - t / conn.beta[None, :]
    g_ji = gamma_matrix(fj, fi, sx)
    g_kj = gamma_matrix(fk, fj, sy)
    g_kl = gamma_matrix(fk, fl, sx)
    g_li = gamma_matrix(fl, fi, sy)
    hol = np.linalg.inv(g_li) @ np.linalg.inv(g_kl) @ g_kj @ g_ji
    return float(np.max(np.linalg.norm(hol - np.eye(5), axis=(-2, -1))))


@dataclass(frozen=True)
class DiscreteGauge:
    """Trivialising gauge held in per-vertex local frames.

    The raw gauge matrices T(v) of a spread-out quad map are numerically
    useless (their entries grow with the fourth power of the chart radius),
    so what is stored is T_loc(v) = T(v) U_{p(v)}, with U the translation
    carrying the origin to the vertex's base point.  T_loc is bounded, all
    defining relations are checked in this representation, and the global
    T(v) = T_loc(v) U_{p(v)}^{-1} is recoverable on demand.
    """

    t_local: np.ndarray             # (n1, n2, 5, 5)
    points: np.ndarray              # (n1, n2, 3) recentred base points
    center: np.ndarray              # translation back to the original chart

    def apply_to_base(self):
        """T(v) f(v) for the base lines themselves, in recentred coordinates."""
        origin = np.array([0.0, 0.0, 0.0, -0.5, 0.5])
        return np.einsum("...ij,j->...i", self.t_local, origin)

    def parallel_section(self, x0):
        """sigma(v) = T(v)^{-1} x0: a Gamma-parallel section through x0."""
        sec = np.einsum("...ij,...j->...i", np.linalg.inv(self.t_local), np.asarray(x0, dtype=float))
        return translate_reps(sec, self.points)

    def global_matrices(self):
        """The raw T(v); fine for small configurations, ill-conditioned far out."""
        return self.t_local @ np.linalg.inv(translation_matrix(self.points))


def _edge_transition(lift_from, lift_to, pt_from, pt_to, s):
    """M = U_{p_i}^{-1} Gamma_{ji}^{-1} U_{p_j}: the bounded local-frame step."""
    g = gamma_matrix(translate_reps(lift_to, -pt_from), translate_reps(lift_from, -pt_from), s)
    return np.linalg.inv(g) @ translation_matrix(pt_to - pt_from)


def trivialize(conn, flat_tol=1e-7):
    """Gauge T with T(base) = 1 and Gamma_{ji} = T(j)^{-1} T(i) on every edge.

    The base vertex is the lexicographically smallest index.  Returns
    (gauge, reconstruction_residual, path_independence): the residual is
    the worst edge defect of the defining relation and path independence
    compares the row-major spanning order against the column-major one,
    both evaluated in the bounded local-frame representation.
    """
    defect = flatness(conn)
    if defect > flat_tol:
        raise NotFlatError(f"face defect {defect:.3e} exceeds {flat_tol:.1e}; no trivialising gauge")
    n1, n2 = conn.lifts.shape[:2]
    pts, finite = project_vectors(conn.lifts)
    pts = np.where(finite[..., None], pts, 0.0)

    sx = 1.0 - conn.t / conn.alpha[:, None]
    sy = 1.0 - conn.t / conn.beta[None, :]
    mx = _edge_transition(conn.lifts[:-1, :], conn.lifts[1:, :], pts[:-1, :], pts[1:, :], sx)
    my = _edge_transition(conn.lifts[:, :-1], conn.lifts[:, 1:], pts[:, :-1], pts[:, 1:], sy)

    def build(row_major):
        t = np.empty((n1, n2, 5, 5))
        t[0, 0] = translation_matrix(pts[0, 0])
        if row_major:
            for i in range(n1 - 1):
                t[i + 1, 0] = t[i, 0] @ mx[i, 0]
            for j in range(n2 - 1):
                t[:, j + 1] = t[:, j] @ my[:, j]
        else:
            for j in range(n2 - 1):
                t[0, j + 1] = t[0, j] @ my[0, j]
            for i in range(n1 - 1):
                t[i + 1, :] = t[i, :] @ mx[i, :]
        return t

    t_row = build(True)
    t_col = build(False)
    path = float(np.max(np.linalg.norm(t_row - t_col, axis=(-2, -1))))
    # defining relation, edge by edge: T_loc(j) = T_loc(i) M_{ji}
    res_x = np.linalg.norm(t_row[:-1, :] @ mx - t_row[1:, :], axis=(-2, -1))
    res_y = np.linalg.norm(t_row[:, :-1] @ my - t_row[:, 1:], axis=(-2, -1))
    residual = max(float(np.max(res_x)), float(np.max(res_y)))
    gauge = DiscreteGauge(t_local=t_row, points=pts, center=conn.center)
    return gauge, residual, path


@dataclass(frozen=True)
class DiscreteDarbouxResult:
    quad: QuadMap
    a_hat: float
    vertical_cross_ratios_x: np.ndarray   # per axis-0 edge, fixed value alpha_i / a_hat
    vertical_cross_ratios_y: np.ndarray
    collision_floor: float

    def gauge_identity_residual(self, base, weights, t_values=(-1.0, 0.2, 3.0)):
        """Residual of Gamma_f^{f^}(1 - t/a^) . Gamma^t = Gamma^t of the transform.

        Evaluated per edge in coordinates recentred on the four lines the
        identity involves, where the statement is exact algebra.
        """
        worst = 0.0
        for axis in (0, 1):
            if axis == 0:
                f_i, f_j = base.lifts[:-1, :], base.lifts[1:, :]
                h_i, h_j = self.quad.lifts[:-1, :], self.quad.lifts[1:, :]
                edge_par = weights.alpha[:, None]
            else:
                f_i, f_j = base.lifts[:, :-1], base.lifts[:, 1:]
                h_i, h_j = self.quad.lifts[:, :-1], self.quad.lifts[:, 1:]
                edge_par = weights.beta[None, :]
            f_i, f_j, h_i, h_j = _recenter([f_i, f_j, h_i, h_j])
            for t in t_values:
                s_edge = 1.0 - t / edge_par
                s_hat = 1.0 - t / self.a_hat
                g_base = gamma_matrix(f_j, f_i, s_edge)
                g_hat = gamma_matrix(h_j, h_i, s_edge)
                gauge_i = gamma_matrix(h_i, f_i, s_hat)
                gauge_j = gamma_matrix(h_j, f_j, s_hat)
                lhs = gauge_j @ g_base @ np.linalg.inv(gauge_i)
                worst = max(worst, float(np.max(np.linalg.norm(lhs - g_hat, axis=(-2, -1)))))
        return worst


def darboux(quad, weights, a_hat, y0, collision_tol=1e-8):
    """Discrete Darboux transform: the Gamma^{a_hat}-parallel line through y0.

    a_hat must avoid every edge weight; y0 must miss f at the base vertex.
    The transform is discrete isothermic with the same factorising function,
    and each vertical quadrilateral (f(i), f(j), f^(i), f^(j)) is concircular
    with the fixed cross-ratio a(i,j)/a_hat, reported per edge family.
    collision_tol is the euclidean separation below which a vertex counts
    as an intersection of the transform with f.
    """
    conn = connection(quad, weights, a_hat)
    seed_raw = y0.rep if hasattr(y0, "rep") else np.asarray(y0, dtype=float)
    seed = translate_reps(seed_raw, -conn.center)
    seed = seed / np.linalg.norm(seed)
    base = conn.lifts[0, 0]
    if abs(inner(seed, base)) < 1e-12 * np.linalg.norm(base):
        raise SingularConfigurationError("seed meets f at the base vertex", vertex=(0, 0))
    n1, n2 = quad.shape
    hat = np.empty_like(quad.lifts)
    hat[0, 0] = seed
    for i in range(n1 - 1):
        v = conn.gx[i, 0] @ hat[i, 0]
        hat[i + 1, 0] = v / np.linalg.norm(v)
    for j in range(n2 - 1):
        v = np.einsum("aij,aj->ai", conn.gy[:, j], hat[:, j])
        hat[:, j + 1] = v / np.linalg.norm(v, axis=-1, keepdims=True)

    pts_f, fin_f = project_vectors(conn.lifts)
    pts_h, fin_h = project_vectors(hat)
    both = fin_f & fin_h
    sep = np.where(both, np.linalg.norm(pts_h - pts_f, axis=-1), np.inf)
    floor = float(np.min(sep))
    if floor < collision_tol:
        i, j = np.argwhere(sep < collision_tol)[0]
        raise SingularConfigurationError(
            f"transform meets f at vertex ({i}, {j})", vertex=(int(i), int(j)))

    # vertical quadrilaterals: the parallel condition f^(j) = Gamma_{f(i)}^{f(j)}
    # (1 - a_hat/a) f^(i) pins (f(j), f(i); f^(i), f^(j)) = 1 - a_hat/a; the
    # reported labeling (f^(i), f(i); f(j), f^(j)) carries the fixed ratio
    # 1 - a/a_hat, whose spread is the constancy check.
    fx_i, fx_j, hx_i, hx_j = _recenter([conn.lifts[:-1, :], conn.lifts[1:, :], hat[:-1, :], hat[1:, :]])
    fy_i, fy_j, hy_i, hy_j = _recenter([conn.lifts[:, :-1], conn.lifts[:, 1:], hat[:, :-1], hat[:, 1:]])
    crx, _ = cross_ratio_batch(hx_i, fx_i, fx_j, hx_j)
    cry, _ = cross_ratio_batch(hy_i, fy_i, fy_j, hy_j)
    hat_original = translate_reps(hat, conn.center)
    return DiscreteDarbouxResult(quad=QuadMap(hat_original), a_hat=a_hat,
                                 vertical_cross_ratios_x=crx,
                                 vertical_cross_ratios_y=cry,
                                 collision_floor=floor)


@dataclass(frozen=True)
class TripleSystem:
    """Z^3 stack of iterated Darboux transforms with its three weight vectors."""

    lifts: np.ndarray               # (n1, n2, levels, 5)
    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray               # (levels - 1,) the Darboux parameters

    def level_sets(self):
        """Yield (axis, index, QuadMap, EdgeWeights) for every coordinate slice."""
        n1, n2, n3 = self.lifts.shape[:3]
        for m in range(n3):
            yield 2, m, QuadMap(self.lifts[:, :, m]), EdgeWeights(self.alpha, self.beta)
        for i in range(n1):
            yield 0, i, QuadMap(self.lifts[i, :, :]), EdgeWeights(self.beta, self.gamma)
        for j in range(n2):
            yield 1, j, QuadMap(self.lifts[:, j, :]), EdgeWeights(self.alpha, self.gamma)


def triple_system(quad, weights, a_hat_list, seeds):
    """Iterate Darboux transforms into a triple system of discrete isothermic maps.

    Every level pair is a Darboux step, so all three families of coordinate
    level-sets factorise: the original weights within levels, and the
    Darboux parameters across them.
    """
    a_hats = list(a_hat_list)
    if len(seeds) != len(a_hats):
        raise DataError("need one seed per Darboux parameter")
    for ah in a_hats:
        if np.any(np.abs(weights.alpha - ah) < 1e-12) or np.any(np.abs(weights.beta - ah) < 1e-12):
            raise PoleError(f"Darboux parameter {ah} collides with an edge weight")
    levels = [quad.lifts]
    current = quad
    for ah, seed in zip(a_hats, seeds):
        result = darboux(current, weights, ah, seed)
        current = result.quad
        levels.append(current.lifts)
    return TripleSystem(lifts=np.stack(levels, axis=2), alpha=weights.alpha,
                        beta=weights.beta, gamma=np.asarray(a_hats, dtype=float))


def t_transform(quad, weights, s):
    """Discrete spectral deformation: gauge the map by the trivialisation of Gamma^s.

    f_s(i) = T_s(i) f(i) with T_s the trivialising gauge of the flat family
    member at s.  The result is discrete isothermic with the same
    factorising function, and composing deformations adds the parameters;
    both facts are checked by the callers rather than assumed.
    """
    if s == 0:
        return QuadMap(quad.lifts.copy())
    conn = connection(quad, weights, s)
    gauge, _, _ = trivialize(conn)
    return QuadMap(translate_reps(gauge.apply_to_base(), conn.center))
