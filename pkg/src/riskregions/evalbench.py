"""Accuracy evaluation of region estimates: the symmetric-difference error
P(estimate triangle truth)/p, the two comparator estimators (parametric
angular family for d=2 and the minimum-volume-ellipsoid complement), and the
replication benchmark harness with per-task seeding.
"""

from __future__ import annotations

import os
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from . import region as region_mod
from . import spectral, tailfit, testbed
from ._radial import segment_integrals
from .region import RegionEstimator, StarRegion
from .sphere import SphereGrid, grid_angles, make_grid
from .tailfit import EstimationError

MVE_SUBSETS = 10_000
_MVE_BATCH = 256


def symm_diff_prob(model, region_a: StarRegion, region_b: StarRegion,
                   grid: SphereGrid | None = None, rel_tol: float = 1e-4) -> float:
    """P(A triangle B) for two star regions about the origin under the model.

    Per angular node the symmetric difference is the radial band between the
    two boundary radii; its mass is adaptive radial quadrature of the density.
    """
    m = testbed.get_model(model)
    if region_a.d != m.d or region_b.d != m.d:
        raise ValueError("region dimension does not match the model")
    if grid is None:
        grid = make_grid(m.d)
    ra = np.asarray(region_a.boundary_on(grid), dtype=float)
    rb = np.asarray(region_b.boundary_on(grid), dtype=float)
    return _symm_diff_radii(m, ra, rb, grid, rel_tol)


def _symm_diff_radii(m, ra, rb, grid, rel_tol=1e-4):
    lo = np.minimum(ra, rb)
    hi = np.maximum(ra, rb)
    bands = segment_integrals(m.density, grid.nodes, lo, hi, m.alpha, rel_tol)
    return float(grid.weights @ np.abs(bands))


def relative_error(model, estimated: StarRegion, p: float,
                   grid: SphereGrid | None = None, rel_tol: float = 1e-4) -> float:
    """P(estimated triangle true region at p) / p."""
    m = testbed.get_model(model)
    oracle = testbed.true_region(m, p, grid)
    return symm_diff_prob(m, estimated, oracle.region, grid, rel_tol) / p


def angular_mle(angles: np.ndarray, n_grid: int = 720) -> float:
    """Maximizer over [0, pi) of sum(log(2 + sin(2*(theta_i - rho)))) (pi-periodic)."""
    angles = np.asarray(angles, dtype=float)

    def neg_loglik(rho):
        return -np.sum(np.log(2.0 + np.sin(2.0 * (angles - rho))))

    rhos = np.arange(n_grid) * (np.pi / n_grid)
    values = -np.sum(np.log(2.0 + np.sin(2.0 * (angles[None, :] - rhos[:, None]))), axis=1)
    best = int(np.argmin(values))
    span = np.pi / n_grid
    res = optimize.minimize_scalar(
        neg_loglik, bounds=(rhos[best] - span, rhos[best] + span), method="bounded",
        options={"xatol": 1e-12})
    return float(np.mod(res.x, np.pi))


@dataclass(frozen=True)
class _ParametricRadial:
    """Base radial profile using the fitted angular family instead of the kernel estimate."""

    rho: float
    alpha_hat: float

    def psi(self, w):
        w_arr = np.atleast_2d(np.asarray(w, dtype=float))
        theta = np.arctan2(w_arr[:, 1], w_arr[:, 0])
        return (2.0 + np.sin(2.0 * (theta - self.rho))) / (4.0 * np.pi)

    def __call__(self, w):
        vals = (self.alpha_hat * self.psi(w)) ** (1.0 / (self.alpha_hat + 2.0))
        return vals if np.asarray(w).ndim > 1 else float(vals[0])


def parametric_region(sample, p: float, k: int, grid: SphereGrid | None = None) -> StarRegion:
    """d=2 comparator: Hill tail index plus a one-parameter sine family for the
    angular density, same scale construction as the main estimator."""
    x = np.atleast_2d(np.asarray(sample, dtype=float))
    n, d = x.shape
    if d != 2:
        raise ValueError("the parametric comparator is defined for d=2 only")
    if grid is None:
        grid = make_grid(2)
    radii = np.linalg.norm(x, axis=1)
    gamma = tailfit.hill(radii, k)
    if gamma <= 0.0:
        raise EstimationError("Hill estimate <= 0: parametric region undefined")
    alpha_hat = 1.0 / gamma
    threshold = np.sort(radii)[n - k - 1]
    top = x[radii > threshold]
    rho = angular_mle(np.arctan2(top[:, 1], top[:, 0]))
    base = _ParametricRadial(rho, alpha_hat)
    nu_s = spectral.nu_s_integral(base.psi(grid.nodes), alpha_hat, grid)
    u_hat = tailfit.scale_u_hat(radii, k)
    scale = u_hat * (k * nu_s / (n * p)) ** (1.0 / alpha_hat)
    meta = {"provenance": "comparator", "method": "parametric", "p": p, "k": k,
            "alpha_hat": alpha_hat, "rho": rho, "nu_s": nu_s, "u_hat": u_hat}
    return StarRegion(scale=scale, base_radial=base, d=2, meta=meta,
                      grid=grid, base_values=np.asarray(base(grid.nodes), dtype=float))


@dataclass(frozen=True)
class _EllipsoidComplementRadial:
    """Exit radius of rays from the origin out of an ellipsoid containing the origin."""

    center: np.ndarray
    shape_inv: np.ndarray
    radius2: float

    def __call__(self, w):
        w_arr = np.atleast_2d(np.asarray(w, dtype=float))
        mw = w_arr @ self.shape_inv
        a = np.sum(mw * w_arr, axis=1)
        b = -2.0 * mw @ self.center
        c0 = float(self.center @ self.shape_inv @ self.center) - self.radius2
        disc = b**2 - 4.0 * a * c0
        if np.any(disc <= 0.0) or c0 >= 0.0:
            raise EstimationError("origin lies outside the inflated ellipsoid")
        out = (-b + np.sqrt(disc)) / (2.0 * a)
        return out if np.asarray(w).ndim > 1 else float(out[0])


def mve_region(sample, n_subsets: int = MVE_SUBSETS, seed=0) -> StarRegion:
    """Nonparametric comparator: complement of the approximate minimum-volume
    ellipsoid covering half the data, inflated so the observation with the
    largest Mahalanobis distance lies on the boundary.

    Candidates come from random (d+1)-point subsets: each subset's mean and
    scatter are rescaled to cover ceil(n/2) points; the smallest-volume
    candidate wins.  Singular subsets are skipped.
    """
    x = np.atleast_2d(np.asarray(sample, dtype=float))
    n, d = x.shape
    if n <= 2 * (d + 1):
        raise ValueError("sample too small for the MVE heuristic")
    rng = np.random.default_rng(seed)
    h_half = int(np.ceil(n / 2))
    best = None

    for start in range(0, n_subsets, _MVE_BATCH):
        count = min(_MVE_BATCH, n_subsets - start)
        idx = rng.integers(0, n, size=(count, d + 1))
        pts = x[idx]  # (count, d+1, d)
        means = pts.mean(axis=1)
        centered = pts - means[:, None, :]
        covs = np.einsum("bij,bik->bjk", centered, centered) / (d + 1)
        dets = np.linalg.det(covs)
        ok = dets > 1e-12
        if not np.any(ok):
            continue
        inv = np.linalg.inv(covs[ok])
        diffs = x[None, :, :] - means[ok][:, None, :]
        # squared Mahalanobis distances of all points under each candidate
        m2 = np.einsum("bnj,bjk,bnk->bn", diffs, inv, diffs)
        m2_half = np.partition(m2, h_half - 1, axis=1)[:, h_half - 1]
        volumes = np.sqrt(dets[ok]) * m2_half ** (d / 2.0)
        j = int(np.argmin(volumes))
        if best is None or volumes[j] < best[0]:
            best = (float(volumes[j]), means[ok][j], covs[ok][j], inv[j])

    if best is None:
        raise EstimationError("all MVE candidate subsets were degenerate")
    _, center, cov, inv = best
    diffs = x - center
    m2_all = np.einsum("nj,jk,nk->n", diffs, inv, diffs)
    radius2 = float(np.max(m2_all))
    base = _EllipsoidComplementRadial(center=center, shape_inv=inv, radius2=radius2)
    meta = {"provenance": "comparator", "method": "mve", "n_subsets": n_subsets,
            "center": center.tolist(), "radius2": radius2}
    return StarRegion(scale=1.0, base_radial=base, d=d, meta=meta)


@dataclass
class EvalReport:
    """Per-cell benchmark result: one model, method, and tail probability."""

    model: str
    method: str
    p: float
    errors: list
    median: float
    n_reps: int
    n_failures: int
    valid: bool
    seed: int
    params: dict = field(default_factory=dict)


def _default_params():
    return {
        "k_alpha": "auto",
        "k_u": "auto",
        "k_psi": "auto",
        "h": None,  # per-dimension default
        "estimator": "moment",
        "k_parametric": "auto",
        "mve_subsets": MVE_SUBSETS,
        "grid_resolution": None,
    }


def _fit_evt_regions(x, p_values, params, grid):
    fit = region_mod.fit_region_estimator(
        x, k_alpha=params["k_alpha"], k_u=params["k_u"], k_psi=params["k_psi"],
        h=params["h"], estimator=params["estimator"], grid=grid)
    return {p: fit.region(p) for p in p_values}


def _replication(model_name, rep, p_values, methods, n, seed, params, true_radii):
    """One benchmark replication; returns {(method, p): error or ('fail', msg)}."""
    m = testbed.get_model(model_name)
    grid = make_grid(m.d, params["grid_resolution"])
    rng_id = [seed, zlib.crc32(model_name.encode()), rep]
    x = m.sample(n, np.random.default_rng(rng_id))
    out = {}

    def record(method, p, reg):
        err = _symm_diff_radii(m, np.asarray(reg.boundary_on(grid), dtype=float),
                               true_radii[p], grid) / p
        out[(method, p)] = err

    if "evt" in methods:
        try:
            regions = _fit_evt_regions(x, p_values, params, grid)
            for p, reg in regions.items():
                record("evt", p, reg)
        except (EstimationError, ValueError) as exc:
            for p in p_values:
                out[("evt", p)] = ("fail", str(exc))
    if "parametric" in methods and m.d == 2:
        try:
            k_par = params["k_parametric"]
            if k_par == "auto":
                radii = np.linalg.norm(x, axis=1)
                scan = tailfit.stability_scan(radii, "hill")
                k_par = scan.selected_k
            for p in p_values:
                record("parametric", p, parametric_region(x, p, int(k_par), grid))
        except (EstimationError, ValueError) as exc:
            for p in p_values:
                out[("parametric", p)] = ("fail", str(exc))
    if "mve" in methods:
        p_mve = 1.0 / n
        try:
            reg = mve_region(x, n_subsets=params["mve_subsets"],
                             seed=np.random.default_rng(rng_id + [1]))
            if p_mve in true_radii:
                record("mve", p_mve, reg)
        except (EstimationError, ValueError) as exc:
            out[("mve", p_mve)] = ("fail", str(exc))
    return out


def run_benchmark(models, methods=("evt", "parametric", "mve"), p_values=None,
                  replications: int = 50, n: int = 5000, seed: int = 0,
                  params: dict | None = None, n_jobs: int | None = None,
                  progress=None) -> list[EvalReport]:
    """Replicated accuracy study: simulate, fit every method, score against the
    true-region oracle, and aggregate per-cell medians.

    Results are a deterministic function of `seed`: every replication draws
    from its own generator keyed by (seed, model, replication index), so the
    schedule (serial or process pool) cannot change any number.  The MVE cell
    is only defined at p = 1/n; the parametric comparator only for d = 2.
    """
    merged = _default_params()
    if params:
        merged.update(params)
    if p_values is None:
        p_values = (1.0 / n, 1.0 / (2 * n))
    p_values = tuple(float(p) for p in p_values)
    if n_jobs is None:
        n_jobs = os.cpu_count() or 1

    reports = []
    for model_name in models:
        m = testbed.get_model(model_name)
        grid = make_grid(m.d, merged["grid_resolution"])
        cell_ps = set(p_values)
        if "mve" in methods:
            cell_ps.add(1.0 / n)
        true_radii = {p: testbed.true_region(m, p, grid).region.base_values
                      for p in sorted(cell_ps)}

        args = [(m.name, rep, p_values, tuple(methods), n, seed, merged, true_radii)
                for rep in range(replications)]
        if n_jobs > 1 and replications > 1:
            with ProcessPoolExecutor(max_workers=n_jobs) as pool:
                results = list(pool.map(_replication_star, args, chunksize=1))
        else:
            results = [_replication_star(a) for a in args]
        if progress is not None:
            progress(m.name)

        for method in methods:
            if method == "parametric" and m.d != 2:
                continue
            method_ps = (1.0 / n,) if method == "mve" else p_values
            for p in method_ps:
                errors, failures = [], 0
                for res in results:
                    val = res.get((method, p))
                    if val is None or isinstance(val, tuple):
                        failures += 1
                    else:
                        errors.append(float(val))
                valid = failures == 0 or failures / replications < 0.05
                median = float(np.median(errors)) if errors else float("nan")
                reports.append(EvalReport(
                    model=m.name, method=method, p=p, errors=errors, median=median,
                    n_reps=replications, n_failures=failures, valid=valid,
                    seed=seed, params=dict(merged)))
    return reports


def _replication_star(args):
    return _replication(*args)


def format_table(reports: list[EvalReport]) -> str:
    """Wide table: one row per model, one column per method x p (p ascending)."""
    models = list(dict.fromkeys(r.model for r in reports))
    cells = {}
    columns = []
    for r in reports:
        key = (r.method, r.p)
        if key not in columns:
            columns.append(key)
        cells[(r.model, key)] = r
    columns.sort(key=lambda key: (key[0], -key[1]))
    header = ["model"] + [f"{meth}_p{1 / p:.0f}" for meth, p in columns]
    lines = ["\t".join(header)]
    for model in models:
        row = [model]
        for key in columns:
            r = cells.get((model, key))
            if r is None or np.isnan(r.median):
                row.append("-")
            else:
                row.append(f"{r.median:.4f}" + ("" if r.valid else "*"))
        lines.append("\t".join(row))
    return "\n".join(lines) + "\n"


def format_long(reports: list[EvalReport]) -> str:
    """Long-format per-replication errors for external plotting."""
    lines = ["model\tmethod\tp\treplication\trelative_error"]
    for r in reports:
        for i, err in enumerate(r.errors):
            lines.append(f"{r.model}\t{r.method}\t{r.p:.10g}\t{i}\t{err:.10g}")
    return "\n".join(lines) + "\n"
