"""Assembly of estimated extreme risk regions from tail and spectral fits,
membership queries, per-observation p-values with extreme-observation
ranking, and boundary export.

A region is star-shaped about the origin: {r*w : r >= scale * base_radial(w)}.
Membership queries evaluate the radial function exactly (no interpolation);
values on the standard grid are cached for export and evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import spectral, tailfit
from .sphere import SphereGrid, grid_angles, make_grid
from .spectral import LINEAR, Kernel, SpectralEstimate
from .tailfit import EstimationError, StabilityScan

DEFAULT_BANDWIDTH = {2: 0.4, 3: 0.5}


@dataclass(frozen=True)
class StarRegion:
    """Star-shaped region about the origin, scale (data units) times a base radial profile."""

    scale: float
    base_radial: Callable[[np.ndarray], np.ndarray]
    d: int
    meta: dict = field(default_factory=dict)
    grid: SphereGrid | None = None
    base_values: np.ndarray | None = None

    def __post_init__(self):
        if self.scale <= 0.0:
            raise ValueError("scale must be positive")

    def boundary_radius(self, w) -> float | np.ndarray:
        """Boundary radius along direction(s) w."""
        return self.scale * self.base_radial(np.asarray(w, dtype=float))

    def boundary_on(self, grid: SphereGrid) -> np.ndarray:
        """Boundary radii at the grid nodes, using the cached values when the grid matches."""
        if self.grid is grid and self.base_values is not None:
            return self.scale * self.base_values
        return self.scale * np.asarray(self.base_radial(grid.nodes), dtype=float)

    def contains(self, z) -> bool | np.ndarray:
        """Membership of one point (1-D) or a batch (2-D); the origin is outside."""
        pts = np.asarray(z, dtype=float)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        norms = np.linalg.norm(pts, axis=1)
        out = np.zeros(pts.shape[0], dtype=bool)
        nz = norms > 0.0
        if np.any(nz):
            dirs = pts[nz] / norms[nz, None]
            out[nz] = norms[nz] >= self.scale * np.asarray(self.base_radial(dirs), dtype=float)
        return bool(out[0]) if single else out


def contains(region: StarRegion, z) -> bool:
    """True when z lies in the closed region; z = 0 is outside by convention."""
    return bool(region.contains(np.asarray(z, dtype=float)))


@dataclass(frozen=True)
class _SpectralRadial:
    """Base radial profile (alpha * psi_hat(w))^(1/(alpha+d)) of a fitted spectral estimate."""

    est: SpectralEstimate
    alpha_hat: float

    def __call__(self, w):
        return spectral.s_radial(self.est, self.alpha_hat, w)


@dataclass(frozen=True)
class ConstantRadial:
    """Constant base radial profile (spherical boundary)."""

    value: float

    def __call__(self, w):
        w = np.asarray(w, dtype=float)
        if w.ndim == 1:
            return self.value
        return np.full(w.shape[0], self.value)


@dataclass
class RegionEstimator:
    """Fitted context: everything needed to build regions at any p and rank observations."""

    sample: np.ndarray
    radii: np.ndarray
    gamma_hat: float
    alpha_hat: float
    k_alpha: int
    u_hat: float
    k_u: int
    spectral_est: SpectralEstimate
    nu_s: float
    grid: SphereGrid
    estimator: str
    h: float
    scans: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.radii.size

    @property
    def d(self) -> int:
        return self.sample.shape[1]

    def region(self, p: float) -> StarRegion:
        """Estimated risk region at tail probability p."""
        if not 0.0 < p < 1.0:
            raise ValueError(f"p must lie in (0, 1), got {p}")
        scale = self.u_hat * (self.k_u * self.nu_s / (self.n * p)) ** (1.0 / self.alpha_hat)
        base = _SpectralRadial(self.spectral_est, self.alpha_hat)
        meta = {
            "provenance": "estimated",
            "p": p,
            "n": self.n,
            "estimator": self.estimator,
            "k_alpha": self.k_alpha,
            "k_u": self.k_u,
            "k_psi": self.spectral_est.k_psi,
            "h": self.h,
            "alpha_hat": self.alpha_hat,
            "gamma_hat": self.gamma_hat,
            "u_hat": self.u_hat,
            "nu_s": self.nu_s,
        }
        return StarRegion(
            scale=scale,
            base_radial=base,
            d=self.d,
            meta=meta,
            grid=self.grid,
            base_values=np.asarray(base(self.grid.nodes), dtype=float),
        )

    def p_values(self, points) -> np.ndarray:
        """Smallest p putting each point on the region boundary; inf where the base radius is 0."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        norms = np.linalg.norm(pts, axis=1)
        if np.any(norms == 0.0):
            raise ValueError("p-value undefined at the origin")
        rho = np.asarray(_SpectralRadial(self.spectral_est, self.alpha_hat)(pts / norms[:, None]))
        out = np.full(pts.shape[0], np.inf)
        pos = rho > 0.0
        out[pos] = (self.k_u * self.nu_s / self.n) * (
            self.u_hat * rho[pos] / norms[pos]
        ) ** self.alpha_hat
        return out

    def p_value(self, x) -> float:
        return float(self.p_values(np.asarray(x, dtype=float)[None, :])[0])

    def rank_extremes(self, m: int) -> list[tuple[int, float]]:
        """The m sample observations with smallest p-value, ascending, ties by index."""
        if not 0 <= m <= self.n:
            raise ValueError(f"m must lie in [0, {self.n}]")
        pv = self.p_values(self.sample)
        order = np.lexsort((np.arange(self.n), pv))[:m]
        return [(int(i), float(pv[i])) for i in order]


def fit_region_estimator(sample, k_alpha="auto", k_u="auto", k_psi="auto",
                         h: float | None = None, estimator: str = "moment",
                         kernel: Kernel = LINEAR, grid: SphereGrid | None = None,
                         k_grid=None, window: int = 5, rel_spread: float = 0.10) -> RegionEstimator:
    """Fit the full estimation chain: tail index, scale, spectral density, nu_hat(S).

    Each rank may be given explicitly or as "auto", in which case the first
    stable window of the matching stability scan picks it: the index scan for
    k_alpha, the scaled-scale scan for k_u, and the spectral-mass scan for k_psi.
    """
    x = np.atleast_2d(np.asarray(sample, dtype=float))
    n, d = x.shape
    if estimator not in ("moment", "hill"):
        raise ValueError(f"unknown estimator {estimator!r}")
    if grid is None:
        grid = make_grid(d)
    if h is None:
        h = DEFAULT_BANDWIDTH[d]
    radii = np.linalg.norm(x, axis=1)
    if np.any(radii == 0.0):
        raise ValueError("sample contains a zero vector")
    if k_grid is None:
        k_grid = tailfit.default_k_grid(n)
    scans = {}

    if k_alpha == "auto":
        scan = tailfit.stability_scan(radii, estimator, k_grid, window=window, rel_spread=rel_spread)
        scans["alpha"] = scan
        k_alpha, gamma_hat = scan.selected_k, scan.selected_value
    else:
        k_alpha = int(k_alpha)
        gamma_hat = {"moment": tailfit.moment_estimator, "hill": tailfit.hill}[estimator](radii, k_alpha)
    if gamma_hat <= 0.0:
        raise EstimationError(
            f"estimated extreme-value index {gamma_hat:.4f} <= 0: region undefined"
        )
    alpha_hat = 1.0 / gamma_hat

    if k_u == "auto":
        scan = tailfit.stability_scan(radii, "scaled_u", k_grid, window=window,
                                      rel_spread=rel_spread, alpha_hat=alpha_hat)
        scans["scale"] = scan
        k_u = scan.selected_k
    else:
        k_u = int(k_u)
    u_hat = tailfit.scale_u_hat(radii, k_u)

    if k_psi == "auto":
        nu_values = spectral.nu_s_scan(x, k_grid, h, alpha_hat, grid, kernel)
        lookup = dict(zip((int(k) for k in k_grid), nu_values))
        scan = tailfit.stability_scan(None, lambda k: lookup[int(k)], k_grid,
                                      window=window, rel_spread=rel_spread)
        scans["nu_s"] = scan
        k_psi = scan.selected_k
    else:
        k_psi = int(k_psi)

    est = spectral.fit_spectral(x, k_psi, h, kernel)
    nu_s = spectral.nu_s_hat(est, alpha_hat, grid)
    return RegionEstimator(
        sample=x,
        radii=radii,
        gamma_hat=gamma_hat,
        alpha_hat=alpha_hat,
        k_alpha=k_alpha,
        u_hat=u_hat,
        k_u=k_u,
        spectral_est=est,
        nu_s=nu_s,
        grid=grid,
        estimator=estimator,
        h=h,
        scans=scans,
    )


def estimate_region(sample, p: float, k_alpha="auto", k_u="auto", k_psi="auto",
                    h: float | None = None, estimator: str = "moment",
                    kernel: Kernel = LINEAR, grid: SphereGrid | None = None) -> StarRegion:
    """One-shot region estimate at tail probability p (fit everything, then assemble)."""
    fit = fit_region_estimator(sample, k_alpha=k_alpha, k_u=k_u, k_psi=k_psi, h=h,
                               estimator=estimator, kernel=kernel, grid=grid)
    return fit.region(p)


def p_value(fit: RegionEstimator, x) -> float:
    """Smallest p such that x lies on the boundary of the estimated region at p."""
    return fit.p_value(x)


def rank_extremes(fit: RegionEstimator, m: int) -> list[tuple[int, float]]:
    """Indices and p-values of the m most extreme observations of the fitted sample."""
    return fit.rank_extremes(m)


def boundary_table(region: StarRegion, grid: SphereGrid) -> tuple[list[str], np.ndarray]:
    """Boundary as one row per grid node: angles, boundary radius, cartesian coordinates."""
    if grid.d != region.d:
        raise ValueError("grid dimension does not match the region")
    r = np.asarray(region.boundary_on(grid), dtype=float)
    angles = grid_angles(grid)
    if region.d == 2:
        names = ["theta", "radius", "x", "y"]
        cols = [angles, r, r * grid.nodes[:, 0], r * grid.nodes[:, 1]]
    else:
        names = ["polar", "azimuth", "radius", "x", "y", "z"]
        cols = [angles[:, 0], angles[:, 1], r,
                r * grid.nodes[:, 0], r * grid.nodes[:, 1], r * grid.nodes[:, 2]]
    return names, np.column_stack(cols)


def export_boundary(region: StarRegion, grid: SphereGrid) -> np.ndarray:
    """Boundary table as a plain array (see boundary_table for the column layout)."""
    return boundary_table(region, grid)[1]
