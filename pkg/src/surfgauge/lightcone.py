"""Metric linear algebra for the light-cone model of conformal S^3.

Points of S^3 are null lines in R^{4,1} with the inner product of signature
(+,+,+,+,-); circles and 2-spheres are linear subspaces.  The same code runs
over C^3 with the complex-bilinear dot product, which is where the dressing
factors for constant-curvature surfaces live.

The central object is the orthogonal map ``Gamma^x_y(t)`` attached to a pair
of null lines with nonzero pairing: eigenvalue ``t`` on ``x``, ``1/t`` on
``y`` and ``1`` on the orthogonal complement of their span.  It is both the
atom of every dressing transformation in this package and a rational
parametrisation of circles, which is how cross-ratios are computed here.

Conventions
-----------
* ``inner`` infers the metric from the vector length: 5 means Minkowski
  R^{4,1}, 3 means the complex-bilinear dot product on C^3.
* ``cross_ratio(x, y, z, w) = t`` if and only if ``w = Gamma^x_y(t) z``
  projectively.  ``tests/fixtures/cross_ratio_convention.json`` records the
  calibration of this convention against the classical complex cross-ratio.
* Null-line representatives are stored with unit euclidean norm; in the real
  case the first nonzero coordinate is positive, in the complex case the
  entry of largest modulus is rotated to the positive real axis.
"""

from dataclasses import dataclass, field

import numpy as np

from .defaults import TOLERANCES
from .errors import GeometryError, DataError

__all__ = [
    "AT_INFINITY",
    "metric_diagonal",
    "inner",
    "minkowski_gram",
    "NullLine",
    "lift_euclidean",
    "infinity",
    "project_to_r3",
    "lift_vector",
    "project_vectors",
    "GammaMap",
    "gamma_matrix",
    "gamma_apply",
    "cross_ratio",
    "cross_ratio_batch",
    "concircular",
    "concircular_batch",
    "span_signature",
    "reflection",
    "translate_reps",
    "orthogonality_defect",
    "line_distance",
]


class _Infinity:
    """Sentinel for the point at infinity of the euclidean chart."""

    def __repr__(self):
        return "AT_INFINITY"


AT_INFINITY = _Infinity()


def metric_diagonal(dim):
    """Diagonal of the ambient inner product for the given dimension.

    Dimension 5 is Minkowski R^{4,1} with signature (+,+,+,+,-); dimension 3
    is the bilinear (not hermitian) dot product used on complexified R^3.
    """
    if dim == 5:
        return np.array([1.0, 1.0, 1.0, 1.0, -1.0])
    if dim == 3:
        return np.ones(3)
    raise DataError(f"unsupported ambient dimension {dim}")


def inner(u, v):
    """Bilinear inner product of two vectors of equal dimension.

    Symmetric and bilinear over C; no conjugation happens in the complex
    case, so null vectors can genuinely pair to zero with themselves.
    """
    u = np.asarray(u)
    v = np.asarray(v)
    if u.shape[-1] != v.shape[-1]:
        raise DataError(f"dimension mismatch: {u.shape[-1]} vs {v.shape[-1]}")
    g = metric_diagonal(u.shape[-1])
    return np.sum(u * g * v, axis=-1)


def minkowski_gram(vectors):
    """Gram matrix of a family of row vectors under the ambient metric."""
    vectors = np.asarray(vectors)
    g = metric_diagonal(vectors.shape[-1])
    return (vectors * g) @ vectors.T


def _canonical_rep(vec):
    vec = np.asarray(vec, dtype=complex if np.iscomplexobj(vec) else float)
    norm = np.linalg.norm(vec)
    if norm == 0:
        raise GeometryError("zero vector cannot represent a null line")
    vec = vec / norm
    if np.iscomplexobj(vec):
        k = int(np.argmax(np.abs(vec)))
        phase = vec[k] / abs(vec[k])
        vec = vec / phase
        if np.max(np.abs(vec.imag)) < 1e-14:
            vec = vec.real.astype(float)
            return _canonical_rep(vec)
    else:
        k = int(np.flatnonzero(np.abs(vec) > 1e-14)[0])
        if vec[k] < 0:
            vec = -vec
    return vec


@dataclass(frozen=True)
class NullLine:
    """A point of P(L): a null line through the origin, stored by a unit representative.

    Two null lines compare equal when their representatives are parallel,
    which is decided projectively so rescaled input vectors give the same
    line.
    """

    rep: np.ndarray = field(repr=True)

    def __init__(self, vec, tol=None):
        rep = _canonical_rep(vec)
        tol = TOLERANCES["null_rep"] if tol is None else tol
        pairing = inner(rep, rep)
        if abs(pairing) > tol:
            raise GeometryError(f"representative is not null: (v,v) = {pairing:.3e}")
        object.__setattr__(self, "rep", rep)

    @property
    def dim(self):
        return self.rep.shape[0]

    @property
    def is_complex(self):
        return np.iscomplexobj(self.rep)

    def parallel_to(self, other, tol=1e-9):
        return line_distance(self.rep, other.rep) < tol

    def __eq__(self, other):
        if not isinstance(other, NullLine):
            return NotImplemented
        return self.parallel_to(other)

    def __hash__(self):
        raise TypeError("NullLine equality is projective; not hashable")


def line_distance(u, v):
    """Projective distance between two lines: sin of the angle between them.

    Uses the hermitian inner product so it works for real and complex lines
    alike and is invariant under rescaling of either representative; the
    rejection form stays accurate for nearly parallel lines.
    """
    u = np.asarray(u)
    v = np.asarray(v)
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise GeometryError("zero vector has no direction")
    vn = v / nv
    rej = u - np.vdot(vn, u) * vn
    return float(np.linalg.norm(rej) / nu)


def lift_euclidean(x):
    """Lift a point of R^3 to its null line in R^{4,1}.

    The chart is phi(x) = (x, (|x|^2 - 1)/2, (|x|^2 + 1)/2), which is null by
    construction and pairs as (phi(x), phi(y)) = -|x - y|^2 / 2.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (3,) or not np.all(np.isfinite(x)):
        raise DataError("lift_euclidean needs a finite point of R^3")
    return NullLine(lift_vector(x))


def lift_vector(x):
    """Raw lift of points of R^3, broadcasting over leading axes."""
    x = np.asarray(x, dtype=float)
    n2 = np.sum(x * x, axis=-1, keepdims=True)
    return np.concatenate([x, (n2 - 1.0) / 2.0, (n2 + 1.0) / 2.0], axis=-1)


def infinity():
    """The null line of the point at infinity of the euclidean chart."""
    return NullLine(np.array([0.0, 0.0, 0.0, 1.0, 1.0]))


def project_to_r3(line):
    """Invert the euclidean chart; returns AT_INFINITY when l5 = l4.

    Accepts a NullLine or a raw representative.  The result does not depend
    on the scaling of the representative.
    """
    rep = line.rep if isinstance(line, NullLine) else np.asarray(line, dtype=float)
    denom = rep[4] - rep[3]
    if abs(denom) <= 1e-12 * np.linalg.norm(rep):
        return AT_INFINITY
    return rep[:3] / denom


def project_vectors(reps):
    """Chart projection over an array of representatives; returns (points, finite_mask)."""
    reps = np.asarray(reps, dtype=float)
    denom = reps[..., 4] - reps[..., 3]
    scale = np.linalg.norm(reps, axis=-1)
    finite = np.abs(denom) > 1e-12 * scale
    safe = np.where(finite, denom, 1.0)
    return reps[..., :3] / safe[..., None], finite


def _pairing_coefficients(x, y, v):
    """Coefficients (alpha, beta, w) of v = alpha x + beta y + w with w in (x+y)^perp."""
    s = inner(x, y)
    alpha = inner(v, y) / s
    beta = inner(v, x) / s
    w = v - alpha * x - beta * y
    return alpha, beta, w


def gamma_matrix(x, y, t):
    """Matrix of Gamma^x_y(t): eigenvalue t on x, 1/t on y, 1 on (x + y)^perp.

    x and y are null representatives (vectors, NullLines, or arrays of
    vectors broadcasting over leading axes) with nonzero pairing; t is a
    nonzero scalar or an array matching the leading axes.  The result
    preserves the ambient metric and has unit determinant.
    """
    xv = x.rep if isinstance(x, NullLine) else np.asarray(x)
    yv = y.rep if isinstance(y, NullLine) else np.asarray(y)
    t = np.asarray(t)
    if np.any(t == 0):
        raise GeometryError("Gamma parameter must be nonzero")
    s = inner(xv, yv)
    scale = np.linalg.norm(xv, axis=-1) * np.linalg.norm(yv, axis=-1)
    if np.any(np.abs(s) < 1e-13 * scale):
        raise GeometryError("degenerate pair: (x, y) = 0 so x + y is a null 2-plane")
    g = metric_diagonal(xv.shape[-1])
    dtype = np.result_type(xv, yv, t, float)
    xv = xv.astype(dtype)
    yv = yv.astype(dtype)
    n = xv.shape[-1]
    coef_x = ((t - 1.0) / s)[..., None, None]
    coef_y = ((1.0 / t - 1.0) / s)[..., None, None]
    m = np.broadcast_to(np.eye(n, dtype=dtype), np.broadcast_shapes(xv.shape, yv.shape)[:-1] + (n, n)).copy()
    m += coef_x * (xv[..., :, None] * (g * yv)[..., None, :])
    m += coef_y * (yv[..., :, None] * (g * xv)[..., None, :])
    return m


def gamma_apply(gamma, v):
    """Apply a GammaMap (or gamma_matrix arguments packed in a GammaMap) to a vector."""
    return gamma.matrix @ np.asarray(v, dtype=gamma.matrix.dtype)


@dataclass(frozen=True)
class GammaMap:
    """The eigen-decomposed orthogonal map Gamma^x_y(t).

    Acts as t on x, 1/t on y, identity on the metric complement of the span.
    Gamma(x, y, 1) is the identity and Gamma(x, y, s) Gamma(x, y, t) equals
    Gamma(x, y, s t).
    """

    x: NullLine
    y: NullLine
    t: complex

    @property
    def matrix(self):
        return gamma_matrix(self.x, self.y, self.t)

    def apply(self, v):
        return gamma_apply(self, v)

    def apply_line(self, line):
        return NullLine(self.matrix @ line.rep.astype(self.matrix.dtype))


def span_signature(points, rank_rel=None):
    """(rank, n_positive, n_negative) of the span of a family of representatives."""
    reps = np.stack([p.rep if isinstance(p, NullLine) else np.asarray(p, dtype=float) for p in points])
    rank_rel = TOLERANCES["rank_rel"] if rank_rel is None else rank_rel
    _, sing, vt = np.linalg.svd(reps, full_matrices=False)
    if sing[0] == 0:
        return 0, 0, 0
    rank = int(np.sum(sing > rank_rel * sing[0]))
    basis = vt[:rank]
    gram = (basis * metric_diagonal(reps.shape[-1])) @ basis.T
    eig = np.linalg.eigvalsh(gram)
    n_pos = int(np.sum(eig > rank_rel))
    n_neg = int(np.sum(eig < -rank_rel))
    return rank, n_pos, n_neg


def concircular(points, rank_rel=None):
    """True when the points lie on a common circle.

    The span of the representatives must have dimension at most 3 and, when
    the dimension is exactly 3, carry signature (2,1) so that it actually
    cuts the light cone in a circle.  Any three distinct points pass; fewer
    than three distinct lines are trivially concircular.
    """
    if len(points) < 3:
        raise DataError("concircularity needs at least 3 points")
    rank, n_pos, n_neg = span_signature(points, rank_rel)
    if rank <= 2:
        return True
    if rank > 3:
        return False
    return n_pos == 2 and n_neg == 1


def cross_ratio(x, y, z, w, fit_tol=None):
    """Cross-ratio (x, y; z, w): the t with Gamma^x_y(t) z = w projectively.

    For real concircular quadruples the value lies in R plus infinity
    (returned as math.inf via numpy).  w coinciding with x gives infinity,
    with y gives 0.  Non-concircular input raises GeometryError because no
    such t exists.
    """
    fit_tol = TOLERANCES["cross_ratio_fit"] if fit_tol is None else fit_tol
    xv, yv, zv, wv = (p.rep if isinstance(p, NullLine) else np.asarray(p) for p in (x, y, z, w))
    s = inner(xv, yv)
    if abs(s) < 1e-13 * np.linalg.norm(xv) * np.linalg.norm(yv):
        raise GeometryError("x and y coincide; the parametrising pair is degenerate")
    if line_distance(zv, xv) < 1e-12 or line_distance(zv, yv) < 1e-12:
        raise GeometryError("z must differ from x and y")
    if line_distance(wv, xv) < 1e-12:
        return np.inf
    if line_distance(wv, yv) < 1e-12:
        return 0.0

    a_z, b_z, p_z = _pairing_coefficients(xv, yv, zv)
    a_w, b_w, p_w = _pairing_coefficients(xv, yv, wv)
    nz = np.linalg.norm(p_z)
    nw = np.linalg.norm(p_w)
    if nz < 1e-13 or nw < 1e-13:
        raise GeometryError("z or w lies in the span of x and y but is not x or y")
    # w = c Gamma(t) z forces w_perp = c z_perp; fit c on the perp part.
    c = np.vdot(p_z, p_w) / np.vdot(p_z, p_z)
    perp_residual = np.linalg.norm(p_w - c * p_z) / nw
    if perp_residual > np.sqrt(fit_tol):
        raise GeometryError(f"points are not concircular (perp residual {perp_residual:.2e})")
    t = a_w / (c * a_z)
    t_inv = b_w / (c * b_z)
    consistency = abs(t * t_inv - 1.0) / max(1.0, abs(t))
    if consistency > fit_tol * 1e4:
        raise GeometryError(f"points are not concircular (eigenvalue residual {consistency:.2e})")
    if not np.iscomplexobj(np.asarray(t)):
        return float(t)
    if abs(np.imag(t)) < 1e-10 * max(1.0, abs(t)):
        return float(np.real(t))
    return complex(t)


def cross_ratio_batch(x, y, z, w):
    """Vectorised cross-ratio over arrays of representatives.

    Returns (values, residuals): the fitted parameter per tuple and the
    relative defect of the Gamma fit, which is the concircularity residual.
    No exceptional values are handled here; use cross_ratio for single
    tuples that may degenerate.
    """
    x, y, z, w = (np.asarray(v) for v in (x, y, z, w))
    s = inner(x, y)
    a_z = inner(z, y) / s
    b_z = inner(z, x) / s
    a_w = inner(w, y) / s
    b_w = inner(w, x) / s
    p_z = z - a_z[..., None] * x - b_z[..., None] * y
    p_w = w - a_w[..., None] * x - b_w[..., None] * y
    c = np.sum(np.conj(p_z) * p_w, axis=-1) / np.sum(np.conj(p_z) * p_z, axis=-1)
    resid = np.linalg.norm(p_w - c[..., None] * p_z, axis=-1) / np.linalg.norm(p_w, axis=-1)
    t = a_w / (c * a_z)
    t_inv = b_w / (c * b_z)
    resid = np.maximum(resid, np.abs(t * t_inv - 1.0) / np.maximum(1.0, np.abs(t)))
    if not np.iscomplexobj(t):
        return t, resid
    return np.where(np.abs(t.imag) < 1e-10 * np.maximum(1.0, np.abs(t)), t.real, t), resid


def concircular_batch(points, rank_rel=None):
    """Concircularity of stacked quadruples: points has shape (..., k, dim).

    Returns a boolean array over the leading axes; same criterion as
    `concircular` (rank at most 3, signature (2,1) when the rank is 3).
    """
    pts = np.asarray(points, dtype=float)
    rank_rel = TOLERANCES["rank_rel"] if rank_rel is None else rank_rel
    pts = pts / np.linalg.norm(pts, axis=-1, keepdims=True)
    _, sing, vt = np.linalg.svd(pts, full_matrices=False)
    rank3 = sing[..., 3:] <= rank_rel * sing[..., :1] if sing.shape[-1] > 3 else np.ones(sing.shape[:-1] + (1,), bool)
    rank_ok = np.all(rank3, axis=-1)
    basis = vt[..., :3, :]
    gram = (basis * metric_diagonal(pts.shape[-1])) @ np.swapaxes(basis, -1, -2)
    eig = np.linalg.eigvalsh(gram)
    rank2 = sing[..., 2] <= rank_rel * sing[..., 0]
    sig_ok = (np.sum(eig > rank_rel, axis=-1) == 2) & (np.sum(eig < -rank_rel, axis=-1) == 1)
    return rank_ok & (sig_ok | rank2)


def translate_reps(reps, v):
    """Apply the euclidean translation by v to light-cone representatives.

    Translations act linearly on R^{4,1} (they form the stabiliser of the
    point at infinity), so this works on arbitrary representatives,
    including ones at or near infinity, and commutes with every projective
    construction.  v may broadcast over the leading axes of reps.
    """
    reps = np.asarray(reps, dtype=float)
    v = np.asarray(v, dtype=float)
    a = reps[..., :3]
    b = reps[..., 3]
    c = reps[..., 4]
    w = c - b
    shift = np.sum(a * v, axis=-1) + 0.5 * w * np.sum(v * v, axis=-1)
    out = np.empty_like(reps)
    out[..., :3] = a + w[..., None] * v
    out[..., 3] = b + shift
    out[..., 4] = c + shift
    return out


def translation_matrix(v):
    """The O(4,1) matrix of the euclidean translation by v (broadcasting over v).

    Satisfies translation_matrix(v) @ rep == translate_reps(rep, v) and
    translation_matrix(a) @ translation_matrix(b) = translation_matrix(a+b).
    """
    v = np.asarray(v, dtype=float)
    lead = v.shape[:-1]
    m = np.zeros(lead + (5, 5))
    eye3 = np.eye(3)
    m[..., :3, :3] = eye3
    m[..., :3, 3] = -v
    m[..., :3, 4] = v
    dot = np.sum(v * v, axis=-1)
    m[..., 3, :3] = v
    m[..., 3, 3] = 1.0 - 0.5 * dot
    m[..., 3, 4] = 0.5 * dot
    m[..., 4, :3] = v
    m[..., 4, 3] = -0.5 * dot
    m[..., 4, 4] = 1.0 + 0.5 * dot
    return m


def reflection(basis):
    """Orthogonal involution fixing span(basis) and negating its metric complement.

    basis is a (k, n) array of row vectors spanning a subspace that must be
    nondegenerate for the ambient metric.
    """
    basis = np.atleast_2d(np.asarray(basis, dtype=float))
    n = basis.shape[-1]
    g = metric_diagonal(n)
    gram = (basis * g) @ basis.T
    if abs(np.linalg.det(gram)) < 1e-12 * max(1.0, np.linalg.norm(gram) ** basis.shape[0]):
        raise GeometryError("degenerate subspace: induced metric is singular")
    proj = basis.T @ np.linalg.solve(gram, basis * g)
    return 2.0 * proj - np.eye(n)


def orthogonality_defect(m):
    """How far a matrix is from preserving the ambient metric: |M^T G M - G|."""
    m = np.asarray(m)
    g = np.diag(metric_diagonal(m.shape[-1])).astype(m.dtype)
    return float(np.linalg.norm(m.swapaxes(-1, -2) @ g @ m - g))
