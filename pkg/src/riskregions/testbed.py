"""Reference heavy-tailed distributions with exact densities, seeded polar
samplers, limiting spectral densities, and the true-risk-region oracle.

Seven models: bivariate and trivariate Cauchy, a bivariate elliptical law, a
four-lobed "clover" law, an asymmetric law shifted to (-5, 0), independent
t3 components (discrete spectral measure, off-model), and a "logarithmic"
law whose quantile function grows like t*log(t) (off-model scale behavior).

Samplers draw radius by inverting the closed-form radial law and the angle
from the exact conditional angular density (rejection where non-uniform), so
sampler and density agree exactly and output is reproducible given the seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, optimize

from ._radial import segment_integrals, tail_integrals
from .region import StarRegion
from .sphere import SphereGrid, make_grid, surface_area

_CLIP = 1e-16  # keeps inverse-CDF draws away from u in {0, 1}


def _solve_disc_radius(power: int, expo: float, half_factor: float) -> float:
    """Radius r0 at which the uniform-core mass and the polynomial tail mass sum to 1."""
    def gap(r):
        s = r**power
        return half_factor * s * (1.0 + s) ** (-expo - 1.0) + (1.0 + s) ** (-expo) - 1.0
    return optimize.brentq(gap, 1.0, 2.0, xtol=1e-15, rtol=8.9e-16)


#: disc radius shared by the elliptical and clover laws (~1.2481)
R0_SIXTH = _solve_disc_radius(6, 0.5, 1.5)
#: disc radius of the asymmetric shifted law (~1.2331)
R0_FOURTH = _solve_disc_radius(4, 0.25, 0.5)


def _uniform_angle(rng, n):
    return 2.0 * np.pi * rng.random(n)


def _clipped(rng, n):
    return np.clip(rng.random(n), _CLIP, 1.0 - _CLIP)


def _bisect(fn, lo, hi, iters: int = 80):
    """Vectorized bisection for fn decreasing in its argument, roots of fn = 0."""
    lo = np.array(lo, dtype=float, copy=True)
    hi = np.array(hi, dtype=float, copy=True)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        high = fn(mid) > 0.0
        lo = np.where(high, mid, lo)
        hi = np.where(high, hi, mid)
    return 0.5 * (lo + hi)


class Model:
    """Common surface of the reference models."""

    name: str
    d: int
    alpha: float
    center: np.ndarray
    has_spectral_density: bool = True

    def density(self, points) -> np.ndarray:
        raise NotImplementedError

    def sample(self, n: int, seed) -> np.ndarray:
        raise NotImplementedError

    def spectral_density(self, w) -> np.ndarray:
        raise NotImplementedError

    def _points(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.d:
            raise ValueError(f"{self.name} expects points in R^{self.d}")
        return pts

    def _dirs(self, w) -> np.ndarray:
        return np.atleast_2d(np.asarray(w, dtype=float))


def _spherical_direction(rng, n, d):
    if d == 2:
        theta = _uniform_angle(rng, n)
        return np.stack([np.cos(theta), np.sin(theta)], axis=1)
    z = 2.0 * rng.random(n) - 1.0
    phi = _uniform_angle(rng, n)
    s = np.sqrt(np.clip(1.0 - z**2, 0.0, None))
    return np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=1)


class Cauchy2(Model):
    """Bivariate Cauchy: radial survival (1+t^2)^(-1/2), uniform spectral density."""

    name = "cauchy2"
    d = 2
    alpha = 1.0
    center = np.zeros(2)

    def density(self, points):
        pts = self._points(points)
        r2 = np.sum(pts**2, axis=1)
        return 1.0 / (2.0 * np.pi * (1.0 + r2) ** 1.5)

    def radial_survival(self, t):
        return (1.0 + np.asarray(t, dtype=float) ** 2) ** -0.5

    def sample(self, n, seed):
        rng = np.random.default_rng(seed)
        u = _clipped(rng, n)
        r = np.sqrt(u**-2 - 1.0)
        return r[:, None] * _spherical_direction(rng, n, 2)

    def spectral_density(self, w):
        return np.full(self._dirs(w).shape[0], 1.0 / (2.0 * np.pi))


class Cauchy3(Model):
    """Trivariate Cauchy: spherically symmetric, inverse radial CDF by root-finding."""

    name = "cauchy3"
    d = 3
    alpha = 1.0
    center = np.zeros(3)

    def density(self, points):
        pts = self._points(points)
        r2 = np.sum(pts**2, axis=1)
        return 1.0 / (np.pi**2 * (1.0 + r2) ** 2)

    def radial_survival(self, t):
        t = np.asarray(t, dtype=float)
        return (2.0 / np.pi) * (np.pi / 2.0 - np.arctan(t) + t / (1.0 + t**2))

    def sample(self, n, seed):
        rng = np.random.default_rng(seed)
        u = _clipped(rng, n)
        # survival(t) < 4/(pi t), so the upper bracket is guaranteed
        hi = 4.0 / (np.pi * u) + 10.0
        r = _bisect(lambda t: self.radial_survival(t) - u, np.zeros(n), hi)
        return r[:, None] * _spherical_direction(rng, n, 3)

    def spectral_density(self, w):
        return np.full(self._dirs(w).shape[0], 1.0 / (4.0 * np.pi))


class Elliptical(Model):
    """Bivariate elliptical law: circular in (x/2, y) with a uniform core disc."""

    name = "elliptical"
    d = 2
    alpha = 3.0
    center = np.zeros(2)
    _psi_norm: float | None = None

    def density(self, points):
        pts = self._points(points)
        e = pts[:, 0] ** 2 / 4.0 + pts[:, 1] ** 2
        r0 = R0_SIXTH
        inside = 3.0 / (4.0 * np.pi) * r0**4 * (1.0 + r0**6) ** -1.5
        outside = 3.0 * e**2 / (4.0 * np.pi * (1.0 + e**3) ** 1.5)
        return np.where(e < r0**2, inside, outside)

    def sample(self, n, seed):
        rng = np.random.default_rng(seed)
        r0 = R0_SIXTH
        tail_mass = (1.0 + r0**6) ** -0.5
        branch = rng.random(n)
        u = _clipped(rng, n)
        theta = _uniform_angle(rng, n)
        rho_in = r0 * np.sqrt(u)
        rho_out = ((u * tail_mass) ** -2 - 1.0) ** (1.0 / 6.0)
        rho = np.where(branch < 1.0 - tail_mass, rho_in, rho_out)
        return np.stack([2.0 * rho * np.cos(theta), rho * np.sin(theta)], axis=1)

    def spectral_density(self, w):
        if Elliptical._psi_norm is None:
            total, _ = integrate.quad(
                lambda t: (1.0 + 3.0 * np.sin(t) ** 2) ** -2.5, 0.0, 2.0 * np.pi,
                epsabs=1e-13, epsrel=1e-13)
            Elliptical._psi_norm = 1.0 / total
        dirs = self._dirs(w)
        return Elliptical._psi_norm * (1.0 + 3.0 * dirs[:, 1] ** 2) ** -2.5


class Clover(Model):
    """Four-lobed bivariate law sharing the elliptical radial structure."""

    name = "clover"
    d = 2
    alpha = 3.0
    center = np.zeros(2)

    def density(self, points):
        pts = self._points(points)
        x, y = pts[:, 0], pts[:, 1]
        rho2 = x**2 + y**2
        rho = np.sqrt(rho2)
        r0 = R0_SIXTH
        cross = x**2 * y**2
        with np.errstate(divide="ignore", invalid="ignore"):
            angular = np.where(rho > 0.0, (4.0 * rho2**2 - 32.0 * cross) / (r0 * rho**3), 0.0)
        inside = 3.0 / (10.0 * np.pi) * r0**4 * (1.0 + r0**6) ** -1.5 * (5.0 + angular)
        outside = 3.0 * (9.0 * rho2**2 - 32.0 * cross) / (10.0 * np.pi * (1.0 + rho2**3) ** 1.5)
        return np.where(rho2 < r0**2, inside, outside)

    def sample(self, n, seed):
        rng = np.random.default_rng(seed)
        r0 = R0_SIXTH
        tail_mass = (1.0 + r0**6) ** -0.5
        branch = rng.random(n)
        u = _clipped(rng, n)
        inside = branch < 1.0 - tail_mass
        rho = np.where(inside, r0 * np.sqrt(u), ((u * tail_mass) ** -2 - 1.0) ** (1.0 / 6.0))
        # conditional angle law: (5 + a(4 - 8 sin^2 2t))/(10 pi) with a = rho/r0
        # inside the disc, a = 1 outside; envelope value 9
        a = np.where(inside, rho / r0, 1.0)
        theta = np.empty(n)
        pending = np.ones(n, dtype=bool)
        while np.any(pending):
            m = int(np.count_nonzero(pending))
            prop = _uniform_angle(rng, m)
            accept_p = (5.0 + a[pending] * (4.0 - 8.0 * np.sin(2.0 * prop) ** 2)) / 9.0
            ok = rng.random(m) < accept_p
            idx = np.flatnonzero(pending)[ok]
            theta[idx] = prop[ok]
            pending[idx] = False
        return rho[:, None] * np.stack([np.cos(theta), np.sin(theta)], axis=1)

    def spectral_density(self, w):
        dirs = self._dirs(w)
        return (9.0 - 32.0 * dirs[:, 0] ** 2 * dirs[:, 1] ** 2) / (10.0 * np.pi)


class AsymmetricShifted(Model):
    """Asymmetric law centered at (-5, 0) with different upper and lower angle laws."""

    name = "asymm_shifted"
    d = 2
    alpha = 1.0
    center = np.array([-5.0, 0.0])

    def density(self, points):
        pts = self._points(points)
        u = pts[:, 0] + 5.0
        v = pts[:, 1]
        r = np.sqrt(u**2 + v**2)
        rt = np.maximum(R0_FOURTH, r)
        common = rt**2 / (6.0 * np.pi * (1.0 + rt**4) ** 1.25)
        upper = 3.0 + u / rt
        lower = 3.0 + (u**3 - 3.0 * u * v**2) / rt**3
        return common * np.where(v >= 0.0, upper, lower)

    def sample(self, n, seed):
        rng = np.random.default_rng(seed)
        r0 = R0_FOURTH
        tail_mass = (1.0 + r0**4) ** -0.25
        branch = rng.random(n)
        u = _clipped(rng, n)
        inside = branch < 1.0 - tail_mass
        r = np.where(inside, r0 * np.sqrt(u), ((u * tail_mass) ** -4 - 1.0) ** 0.25)
        # angle law: (3 + a cos t)/(6 pi) for t in [0, pi), (3 + b cos 3t)/(6 pi) below,
        # with a = r/r0, b = (r/r0)^3 inside the disc and a = b = 1 outside; envelope 4
        a = np.where(inside, r / r0, 1.0)
        b = a**3
        theta = np.empty(n)
        pending = np.ones(n, dtype=bool)
        while np.any(pending):
            m = int(np.count_nonzero(pending))
            prop = _uniform_angle(rng, m)
            num = np.where(prop < np.pi,
                           3.0 + a[pending] * np.cos(prop),
                           3.0 + b[pending] * np.cos(3.0 * prop))
            ok = rng.random(m) < num / 4.0
            idx = np.flatnonzero(pending)[ok]
            theta[idx] = prop[ok]
            pending[idx] = False
        return np.stack([r * np.cos(theta) - 5.0, r * np.sin(theta)], axis=1)

    def spectral_density(self, w):
        dirs = self._dirs(w)
        w1 = dirs[:, 0]
        upper = (3.0 + w1) / (6.0 * np.pi)
        lower = (3.0 + 4.0 * w1**3 - 3.0 * w1) / (6.0 * np.pi)
        return np.where(dirs[:, 1] >= 0.0, upper, lower)


class IndependentT3(Model):
    """Independent t3 components; the limiting spectral measure is discrete."""

    name = "indep_t3"
    d = 2
    alpha = 3.0
    center = np.zeros(2)
    has_spectral_density = False

    @staticmethod
    def _t3_pdf(x):
        return 2.0 / (np.pi * np.sqrt(3.0)) * (1.0 + x**2 / 3.0) ** -2

    def density(self, points):
        pts = self._points(points)
        return self._t3_pdf(pts[:, 0]) * self._t3_pdf(pts[:, 1])

    def sample(self, n, seed):
        rng = np.random.default_rng(seed)
        return rng.standard_t(3, size=(n, 2))

    def spectral_density(self, w):
        raise ValueError("indep_t3 has a discrete spectral measure: no spectral density")


class Logarithmic(Model):
    """Uniform angle; radial survival (1 + log r)/r beyond r = e, CDF linear below.

    The quantile function then grows like t*log(t), so the scale condition of
    the estimator fails, which is the point of this off-model case.
    """

    name = "logarithmic"
    d = 2
    alpha = 1.0
    center = np.zeros(2)

    _r_star = float(np.e)
    _core_mass = 1.0 - 2.0 / np.e

    def radial_survival(self, t):
        t = np.asarray(t, dtype=float)
        core = 1.0 - self._core_mass * t / self._r_star
        return np.where(t >= self._r_star, (1.0 + np.log(np.maximum(t, 1.0))) / t, core)

    def density(self, points):
        pts = self._points(points)
        r = np.linalg.norm(pts, axis=1)
        r = np.maximum(r, 1e-300)
        core = self._core_mass / self._r_star / (2.0 * np.pi * r)
        tail = np.log(np.maximum(r, 1.0)) / (2.0 * np.pi * r**3)
        return np.where(r >= self._r_star, tail, core)

    def sample(self, n, seed):
        rng = np.random.default_rng(seed)
        q = _clipped(rng, n)
        r_core = q * self._r_star / self._core_mass
        v = 1.0 - q
        hi = np.empty(n)
        lo = np.full(n, self._r_star)
        guess = (1.0 + np.log(np.maximum(1.0 / v, 1.0))) / v
        hi = 4.0 * guess + 8.0
        while np.any((1.0 + np.log(hi)) / hi >= v):
            bad = (1.0 + np.log(hi)) / hi >= v
            hi[bad] *= 4.0
        r_tail = _bisect(lambda t: (1.0 + np.log(t)) / t - v, lo, hi)
        r = np.where(q <= self._core_mass, r_core, r_tail)
        theta = _uniform_angle(rng, n)
        return r[:, None] * np.stack([np.cos(theta), np.sin(theta)], axis=1)

    def spectral_density(self, w):
        return np.full(self._dirs(w).shape[0], 1.0 / (2.0 * np.pi))


MODELS = {m.name: m for m in (
    Cauchy2(), Cauchy3(), Elliptical(), Clover(), AsymmetricShifted(),
    IndependentT3(), Logarithmic(),
)}


def get_model(model) -> Model:
    if isinstance(model, Model):
        return model
    try:
        return MODELS[model]
    except KeyError:
        raise ValueError(f"unknown model {model!r}; available: {sorted(MODELS)}") from None


def density(model, z) -> np.ndarray:
    """Exact density of the named model at point(s) z."""
    m = get_model(model)
    z_arr = np.asarray(z, dtype=float)
    vals = m.density(z_arr)
    return float(vals[0]) if z_arr.ndim == 1 else vals


def sample(model, n: int, seed) -> np.ndarray:
    """n i.i.d. draws; bit-identical for a fixed seed."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return get_model(model).sample(n, seed)


def true_spectral(model, w) -> np.ndarray:
    """Limiting spectral density at direction(s) w (models with a continuous one only)."""
    m = get_model(model)
    w_arr = np.asarray(w, dtype=float)
    vals = m.spectral_density(w_arr)
    return float(vals[0]) if w_arr.ndim == 1 else vals


def true_alpha(model) -> float:
    """Tail index of the radius."""
    return get_model(model).alpha


@dataclass(frozen=True)
class _TrueRadial:
    """Per-ray boundary radius of a density sublevel set, by exact root-finding."""

    model: Model
    beta: float
    r_lo: float
    r_hi: float

    def __call__(self, w):
        w_arr = np.atleast_2d(np.asarray(w, dtype=float))
        return _boundary_radii(self.model, w_arr, self.beta, self.r_lo, self.r_hi)


def _boundary_radii(model: Model, nodes: np.ndarray, beta: float,
                    r_lo: float, r_hi: float) -> np.ndarray:
    """Outermost radius r per ray with f(r*w) = beta, via geometric scan + bisection."""
    m = nodes.shape[0]
    lo, hi = r_lo, r_hi
    while np.min(model.density(lo * nodes)) <= beta:
        lo /= 4.0
        if lo < 1e-12:
            raise RuntimeError("failed to bracket the level-set boundary from below")
    while np.max(model.density(hi * nodes)) >= beta:
        hi *= 4.0
        if hi > 1e15:
            raise RuntimeError("failed to bracket the level-set boundary from above")
    n_scan = max(8, int(np.ceil(np.log(hi / lo) / np.log(1.15))))
    radii = lo * (hi / lo) ** (np.arange(n_scan + 1) / n_scan)
    above = np.empty((n_scan + 1, m), dtype=bool)
    for j, r in enumerate(radii):
        above[j] = model.density(r * nodes) >= beta
    last = (n_scan) - np.argmax(above[::-1], axis=0)  # outermost scan point still >= beta
    bracket_lo = radii[last]
    bracket_hi = radii[np.minimum(last + 1, n_scan)]

    def fn(r):
        pts = r[:, None] * nodes
        return model.density(pts) - beta

    return _bisect(fn, bracket_lo, bracket_hi)


@dataclass(frozen=True)
class TrueRegionOracle:
    """True risk region {f <= beta} with P = p, represented as a star region."""

    model: Model
    p: float
    beta: float
    region: StarRegion


_TRUE_REGION_CACHE: dict = {}


def region_probability(model: Model, boundary_radii: np.ndarray, grid: SphereGrid,
                       rel_tol: float = 1e-5) -> float:
    """P of the star region with the given per-node boundary radii, by radial quadrature."""
    tails = tail_integrals(model.density, grid.nodes, boundary_radii, model.alpha, rel_tol)
    return float(grid.weights @ tails)


def true_region(model, p: float, grid: SphereGrid | None = None,
                rel_tol: float = 1e-4) -> TrueRegionOracle:
    """Oracle region: bisection on the density level beta until P({f <= beta}) = p.

    Boundaries are found per ray from the origin (outermost crossing); the
    probability is radial-then-angular quadrature of the density.  Results are
    cached per (model, p, grid resolution).
    """
    m = get_model(model)
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    if grid is None:
        grid = make_grid(m.d)
    key = (m.name, float(p), len(grid))
    if key in _TRUE_REGION_CACHE:
        return _TRUE_REGION_CACHE[key]

    # typical boundary radius: invert the radial survival of the model itself
    def total_tail(r):
        return region_probability(m, np.full(len(grid), r), grid, rel_tol=1e-4)

    r_hat = 1.0
    while total_tail(r_hat) > p:
        r_hat *= 4.0
    r_typ = float(_bisect(lambda r: np.array([total_tail(r[0]) - p]), np.array([r_hat / 4.0]),
                          np.array([r_hat]), iters=40)[0])
    beta0 = float(np.median(m.density(r_typ * grid.nodes)))

    def prob_at(beta: float) -> float:
        radii = _boundary_radii(m, grid.nodes, beta, r_typ, 4.0 * r_typ)
        return region_probability(m, radii, grid, rel_tol)

    beta_lo, beta_hi = beta0, beta0
    while prob_at(beta_lo) > p:
        beta_lo /= 8.0
    while prob_at(beta_hi) < p:
        beta_hi *= 8.0
    beta = optimize.brentq(lambda lb: prob_at(np.exp(lb)) - p,
                           np.log(beta_lo), np.log(beta_hi), xtol=1e-11, rtol=8.9e-16)
    beta = float(np.exp(beta))

    radii = _boundary_radii(m, grid.nodes, beta, r_typ, 4.0 * r_typ)
    base = _TrueRadial(m, beta, r_typ, 4.0 * r_typ)
    region = StarRegion(
        scale=1.0,
        base_radial=base,
        d=m.d,
        meta={"provenance": "true-oracle", "model": m.name, "p": p, "beta": beta},
        grid=grid,
        base_values=radii,
    )
    oracle = TrueRegionOracle(model=m, p=p, beta=beta, region=region)
    _TRUE_REGION_CACHE[key] = oracle
    return oracle
