"""Rectangular coordinate grids and the sampled fields that live on them.

One grid type serves both coordinate systems in this package: asymptotic
coordinates (xi, eta) on characteristic grids and conformal curvature-line
coordinates (x, y) on patches.  Axis 0 of every value array runs along the
first coordinate.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class Grid2D:
    """Vertex-centred rectangular grid: n1 x n2 vertices, steps h1, h2."""

    n1: int
    n2: int
    h1: float
    h2: float
    o1: float = 0.0
    o2: float = 0.0

    def __post_init__(self):
        if self.n1 < 2 or self.n2 < 2:
            raise DataError("grids need at least 2 vertices per direction")
        if self.h1 <= 0 or self.h2 <= 0:
            raise DataError("grid steps must be positive")

    @property
    def shape(self):
        return (self.n1, self.n2)

    @property
    def axis1(self):
        return self.o1 + self.h1 * np.arange(self.n1)

    @property
    def axis2(self):
        return self.o2 + self.h2 * np.arange(self.n2)

    def mesh(self):
        return np.meshgrid(self.axis1, self.axis2, indexing="ij")

    def refine(self, factor=2):
        """Same footprint with factor times finer steps."""
        return Grid2D((self.n1 - 1) * factor + 1, (self.n2 - 1) * factor + 1,
                      self.h1 / factor, self.h2 / factor, self.o1, self.o2)


def square_grid(side, h, origin=(0.0, 0.0)):
    """Square grid covering [origin, origin + side] with step h (n = side/h + 1)."""
    n = int(round(side / h)) + 1
    return Grid2D(n, n, h, h, origin[0], origin[1])


@dataclass(frozen=True)
class ScalarField:
    grid: Grid2D
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != self.grid.shape:
            raise DataError(f"scalar field shape {self.values.shape} != grid {self.grid.shape}")


@dataclass(frozen=True)
class VecField:
    """Per-vertex vectors (components along the last axis, length 3 or 5)."""

    grid: Grid2D
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape[:2] != self.grid.shape or self.values.ndim != 3:
            raise DataError(f"vector field shape {self.values.shape} != grid {self.grid.shape}")

    @property
    def dim(self):
        return self.values.shape[2]


def diff(values, axis, step, order=2):
    """Interior finite differences along an axis; boundaries fall back to
    lower-order one-sided stencils.

    order=4 uses the five-point stencil where a 2-ring exists and degrades
    gracefully on narrow grids.
    """
    v = np.asarray(values, dtype=float)
    out = np.empty_like(v)
    n = v.shape[axis]
    if n < 2:
        raise DataError("cannot differentiate a single row")

    def sl(idx):
        s = [slice(None)] * v.ndim
        s[axis] = idx
        return tuple(s)

    # second-order central everywhere possible
    out[sl(slice(1, -1))] = (v[sl(slice(2, None))] - v[sl(slice(0, -2))]) / (2 * step)
    if n >= 3:
        out[sl(0)] = (-3 * v[sl(0)] + 4 * v[sl(1)] - v[sl(2)]) / (2 * step)
        out[sl(-1)] = (3 * v[sl(-1)] - 4 * v[sl(-2)] + v[sl(-3)]) / (2 * step)
    else:
        out[sl(0)] = (v[sl(1)] - v[sl(0)]) / step
        out[sl(-1)] = (v[sl(-1)] - v[sl(-2)]) / step

    if order == 4 and n >= 5:
        body = slice(2, -2)
        out[sl(body)] = (
            -v[sl(slice(4, None))] + 8 * v[sl(slice(3, -1))]
            - 8 * v[sl(slice(1, -3))] + v[sl(slice(0, -4))]
        ) / (12 * step)
    return out


def interior(shape, width=1):
    """Boolean mask selecting vertices at least `width` away from the boundary."""
    mask = np.zeros(shape, dtype=bool)
    mask[width:-width or None, width:-width or None] = True
    return mask
