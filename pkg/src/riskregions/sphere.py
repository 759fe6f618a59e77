"""Geometry and fixed quadrature grids on the unit circle (d=2) and unit sphere (d=3).

Directions are plain unit-norm numpy vectors.  Grids are deterministic so
that every downstream computation is reproducible; integration is a plain
weighted sum, exact for constants.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SUPPORTED_DIMS = (2, 3)

#: default grid resolutions: 720 angles for d=2, 48 polar x 96 azimuth for d=3.
#: Both resolve caps of half-width h >= 0.05 with >= 10 nodes.
DEFAULT_RESOLUTION = {2: 720, 3: 48}

_UNIT_TOL = 1e-12


def surface_area(d: int) -> float:
    """Total surface measure of the unit sphere in R^d (2*pi or 4*pi)."""
    _check_dim(d)
    return 2.0 * np.pi if d == 2 else 4.0 * np.pi


def _check_dim(d):
    if d not in SUPPORTED_DIMS:
        raise ValueError(f"unsupported dimension d={d}; supported: {SUPPORTED_DIMS}")


def unit_direction(coords) -> np.ndarray:
    """Validate a vector as a point on the unit sphere (norm 1 within 1e-12)."""
    v = np.asarray(coords, dtype=float)
    if v.ndim != 1 or v.shape[0] not in SUPPORTED_DIMS:
        raise ValueError(f"direction must be a vector in R^2 or R^3, got shape {v.shape}")
    if abs(np.linalg.norm(v) - 1.0) > _UNIT_TOL:
        raise ValueError(f"not a unit vector: |norm - 1| = {abs(np.linalg.norm(v) - 1.0):.2e}")
    return v


def directions(points: np.ndarray) -> np.ndarray:
    """Row-normalize an (m, d) array of nonzero vectors to unit directions."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    norms = np.linalg.norm(pts, axis=1)
    if np.any(norms == 0.0):
        raise ValueError("zero vector has no direction")
    return pts / norms[:, None]


@dataclass(frozen=True)
class Cap:
    """Spherical cap {v on the sphere : center . v >= 1 - h}, h in (0, 2]."""

    center: np.ndarray
    h: float

    def __post_init__(self):
        unit_direction(self.center)
        if not 0.0 < self.h <= 2.0:
            raise ValueError(f"cap parameter h must lie in (0, 2], got {self.h}")

    def contains(self, v) -> bool:
        return bool(np.dot(self.center, np.asarray(v, dtype=float)) >= 1.0 - self.h)


def cap_measure(h: float, d: int) -> float:
    """Surface measure of a cap with parameter h: 2*arccos(1-h) for d=2, 2*pi*h for d=3."""
    _check_dim(d)
    if not 0.0 < h <= 2.0:
        raise ValueError(f"cap parameter h must lie in (0, 2], got {h}")
    if d == 2:
        return 2.0 * np.arccos(1.0 - h)
    return 2.0 * np.pi * h


@dataclass(frozen=True)
class SphereGrid:
    """Fixed quadrature grid: unit nodes (m, d) and positive surface-measure weights (m,)."""

    nodes: np.ndarray
    weights: np.ndarray
    d: int

    def __post_init__(self):
        _check_dim(self.d)
        if self.nodes.shape != (self.weights.shape[0], self.d):
            raise ValueError("nodes and weights shapes do not match")

    def __len__(self) -> int:
        return self.nodes.shape[0]

    def rotated(self, rot: np.ndarray) -> "SphereGrid":
        """Grid with every node rotated by the matrix `rot`, same weights."""
        return SphereGrid(self.nodes @ np.asarray(rot, dtype=float).T, self.weights, self.d)


def make_grid(d: int, resolution: int | None = None) -> SphereGrid:
    """Deterministic integration grid on the unit sphere.

    d=2: `resolution` equally spaced angles, each weighted 2*pi/resolution.
    d=3: Gauss-Legendre in cos(polar) with `resolution` nodes, times
         2*resolution uniform azimuths, product weights (sum to 4*pi).
    """
    _check_dim(d)
    if resolution is None:
        resolution = DEFAULT_RESOLUTION[d]
    if resolution < 16:
        raise ValueError(f"resolution must be >= 16, got {resolution}")
    if d == 2:
        theta = np.arange(resolution) * (2.0 * np.pi / resolution)
        nodes = np.stack([np.cos(theta), np.sin(theta)], axis=1)
        weights = np.full(resolution, 2.0 * np.pi / resolution)
        return SphereGrid(nodes, weights, 2)

    n_az = 2 * resolution
    u, wu = np.polynomial.legendre.leggauss(resolution)  # u = cos(polar)
    phi = np.arange(n_az) * (2.0 * np.pi / n_az)
    su = np.sqrt(1.0 - u**2)
    nodes = np.empty((resolution * n_az, 3))
    nodes[:, 0] = np.outer(su, np.cos(phi)).ravel()
    nodes[:, 1] = np.outer(su, np.sin(phi)).ravel()
    nodes[:, 2] = np.repeat(u, n_az)
    weights = np.repeat(wu * (2.0 * np.pi / n_az), n_az)
    return SphereGrid(nodes, weights, 3)


def integrate(grid: SphereGrid, f) -> float:
    """Quadrature sum(w_i * f(node_i)) over the grid.

    `f` may be a callable on direction vectors (vectorized over an (m, d)
    array or per-node) or an array of precomputed node values.
    """
    if callable(f):
        try:
            values = np.asarray(f(grid.nodes), dtype=float)
        except Exception:
            values = np.array([float(f(x)) for x in grid.nodes])
        if values.shape != (len(grid),):
            values = np.array([float(f(x)) for x in grid.nodes])
    else:
        values = np.asarray(f, dtype=float)
        if values.shape != (len(grid),):
            raise ValueError("value array length does not match grid size")
    if not np.all(np.isfinite(values)):
        raise ValueError("non-finite integrand value on the grid")
    return float(grid.weights @ values)


def grid_angles(grid: SphereGrid) -> np.ndarray:
    """Angular parameters of the grid nodes: theta (d=2) or (polar, azimuth) (d=3)."""
    if grid.d == 2:
        return np.mod(np.arctan2(grid.nodes[:, 1], grid.nodes[:, 0]), 2.0 * np.pi)
    polar = np.arccos(np.clip(grid.nodes[:, 2], -1.0, 1.0))
    azimuth = np.mod(np.arctan2(grid.nodes[:, 1], grid.nodes[:, 0]), 2.0 * np.pi)
    return np.stack([polar, azimuth], axis=1)
