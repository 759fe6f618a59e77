"""Kernel estimation of the spectral density on the unit sphere from the
k largest observations, the cap-normalizing constant c(h, K), the estimated
base set's radial function, and the plug-in spectral mass nu_hat(S).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate

from .sphere import SphereGrid, surface_area, _check_dim
from .tailfit import EstimationError

_EVAL_CHUNK = 4_000_000  # max entries of the (queries x included) kernel matrix per block


def _linear(u):
    return 1.0 - u


@dataclass(frozen=True)
class Kernel:
    """Directional kernel on [0, 1]: continuous, nonincreasing, K(0)=1, K(1)=0."""

    evaluate: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"

    def __post_init__(self):
        u = np.linspace(0.0, 1.0, 1001)
        v = np.asarray(self.evaluate(u), dtype=float)
        if abs(v[0] - 1.0) > 1e-9 or abs(v[-1]) > 1e-9:
            raise ValueError("kernel must satisfy K(0)=1 and K(1)=0")
        if np.any(np.diff(v) > 1e-12) or np.any(v < -1e-12) or np.any(v > 1.0 + 1e-12):
            raise ValueError("kernel must be nonincreasing with values in [0, 1]")

    def __call__(self, u):
        return self.evaluate(u)


LINEAR = Kernel(_linear, name="linear")


def c_norm(h: float, kernel: Kernel = LINEAR, d: int = 2) -> float:
    """Normalizing constant c(h, K): reciprocal of the kernel mass over a cap.

    Computed by 1-D quadrature of the rotation-invariant cap integral
    (dimensional constant 2*pi^((d-1)/2)/Gamma((d-1)/2) times
    K((1-t)/h) (1-t^2)^((d-3)/2) over t in [1-h, 1]); for d=2 the angle
    substitution t = cos(phi) removes the endpoint singularity.

    h must lie in (0, 1); h = 1 is admitted as a boundary case for testing.
    """
    _check_dim(d)
    if not 0.0 < h <= 1.0:
        raise ValueError(f"bandwidth h must lie in (0, 1], got {h}")
    if d == 2:
        phi0 = np.arccos(1.0 - h)
        val, _ = integrate.quad(lambda p: kernel((1.0 - np.cos(p)) / h), 0.0, phi0,
                                epsabs=1e-13, epsrel=1e-13)
        mass = 2.0 * val
    else:
        val, _ = integrate.quad(lambda t: kernel((1.0 - t) / h), 1.0 - h, 1.0,
                                epsabs=1e-13, epsrel=1e-13)
        mass = 2.0 * np.pi * val
    return 1.0 / mass


@dataclass(frozen=True)
class SpectralEstimate:
    """Evaluable kernel estimate of the spectral density, bound to its threshold rank.

    Stores all sample directions with inclusion flags for the k_psi largest
    radii (strict exceedance of the threshold order statistic; ties can leave
    n_included < k_psi and are reported, the divisor stays k_psi).
    """

    directions: np.ndarray
    included: np.ndarray
    k_psi: int
    h: float
    kernel: Kernel
    c: float
    n_included: int

    def density(self, w) -> float | np.ndarray:
        """Spectral density estimate at one direction or an (m, d) batch."""
        w_arr = np.asarray(w, dtype=float)
        single = w_arr.ndim == 1
        queries = w_arr[None, :] if single else w_arr
        pts = self.directions[self.included]
        m = queries.shape[0]
        out = np.empty(m)
        block = max(1, _EVAL_CHUNK // max(1, pts.shape[0]))
        for lo in range(0, m, block):
            dots = queries[lo:lo + block] @ pts.T
            u = (1.0 - dots) / self.h
            inside = u <= 1.0
            u = np.clip(u, 0.0, 1.0)
            out[lo:lo + block] = np.sum(self.kernel(u) * inside, axis=1)
        out *= self.c / self.k_psi
        return float(out[0]) if single else out


def fit_spectral(sample, k_psi: int, h: float, kernel: Kernel = LINEAR) -> SpectralEstimate:
    """Fit the directional kernel estimator to the k_psi largest observations."""
    x = np.atleast_2d(np.asarray(sample, dtype=float))
    n, d = x.shape
    _check_dim(d)
    if not 1 <= k_psi < n:
        raise ValueError(f"k_psi={k_psi} out of range [1, {n - 1}]")
    radii = np.linalg.norm(x, axis=1)
    if np.any(radii == 0.0):
        raise ValueError("sample contains a zero vector: direction undefined")
    threshold = np.sort(radii)[n - k_psi - 1]
    included = radii > threshold
    return SpectralEstimate(
        directions=x / radii[:, None],
        included=included,
        k_psi=k_psi,
        h=h,
        kernel=kernel,
        c=c_norm(h, kernel, d),
        n_included=int(np.count_nonzero(included)),
    )


def psi_hat(est: SpectralEstimate, w) -> float | np.ndarray:
    """Evaluate the fitted spectral density estimate at direction(s) w."""
    return est.density(w)


def s_radial(est: SpectralEstimate, alpha_hat: float, w) -> float | np.ndarray:
    """Base radius of the estimated unit-level set: (alpha_hat * psi_hat(w))^(1/(alpha_hat+d))."""
    if alpha_hat <= 0.0:
        raise ValueError("alpha_hat must be positive")
    d = est.directions.shape[1]
    return (alpha_hat * est.density(w)) ** (1.0 / (alpha_hat + d))


def nu_s_integral(psi_values, alpha_hat: float, grid: SphereGrid) -> float:
    """The spectral-mass functional alpha^(-alpha/(alpha+d)) * integral of psi^(d/(alpha+d))."""
    if alpha_hat <= 0.0:
        raise ValueError("alpha_hat must be positive")
    vals = np.asarray(psi_values, dtype=float)
    if vals.shape != (len(grid),):
        raise ValueError("psi values do not match the grid")
    if np.any(vals < 0.0) or not np.all(np.isfinite(vals)):
        raise ValueError("spectral density values must be finite and nonnegative")
    d = grid.d
    expo = d / (alpha_hat + d)
    total = float(grid.weights @ vals**expo)
    return alpha_hat ** (-alpha_hat / (alpha_hat + d)) * total


def nu_s_hat(est: SpectralEstimate, alpha_hat: float, grid: SphereGrid) -> float:
    """Plug-in estimate of the limit-measure mass of the base set via grid quadrature."""
    if grid.d != est.directions.shape[1]:
        raise ValueError("grid dimension does not match the spectral estimate")
    vals = est.density(grid.nodes)
    if not np.any(vals > 0.0):
        raise EstimationError("degenerate spectral estimate: psi_hat vanishes on the grid")
    return nu_s_integral(vals, alpha_hat, grid)


def nu_s_scan(sample, k_grid, h: float, alpha_hat: float, grid: SphereGrid,
              kernel: Kernel = LINEAR) -> np.ndarray:
    """nu_hat(S) as a function of the threshold rank k, for the stability scan.

    Shares one kernel-weight pass over the sample: observations are processed
    in decreasing radius order and the per-node kernel sums accumulated, so
    the whole k grid costs one (nodes x sample) sweep.
    """
    x = np.atleast_2d(np.asarray(sample, dtype=float))
    n, d = x.shape
    if grid.d != d:
        raise ValueError("grid dimension does not match the sample")
    k_values = np.asarray(k_grid, dtype=int)
    if np.any(k_values < 1) or np.any(k_values >= n):
        raise ValueError("k grid out of range")
    radii = np.linalg.norm(x, axis=1)
    if np.any(radii == 0.0):
        raise ValueError("sample contains a zero vector")
    dirs = x / radii[:, None]
    order = np.argsort(radii)[::-1]  # decreasing radius
    sorted_radii = radii[order]

    c = c_norm(h, kernel, d)
    sums = np.zeros(len(grid))
    results = np.empty(k_values.size)
    done = 0
    for j, k in enumerate(np.sort(k_values)):
        # strict exceedance of R_{n-k:n}: ties at the threshold stay excluded
        count = int(np.searchsorted(-sorted_radii, -sorted_radii[k - 1], side="left"))
        take = order[done:count]
        if take.size:
            dots = grid.nodes @ dirs[take].T
            u = (1.0 - dots) / h
            inside = u <= 1.0
            sums += np.sum(kernel(np.clip(u, 0.0, 1.0)) * inside, axis=1)
            done = count
        vals = sums * (c / k)
        results[j] = nu_s_integral(vals, alpha_hat, grid)
    # undo the sort to match the caller's k order
    out = np.empty_like(results)
    out[np.argsort(k_values, kind="stable")] = results
    return out
