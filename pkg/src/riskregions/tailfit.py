"""Univariate tail estimation on radii: Hill and moment estimators of the
extreme-value index gamma = 1/alpha, the order-statistic scale U(n/k), rank
stability scans, and a bootstrap test for equality of tail indices across
several samples.

Order statistics follow the ascending convention: R_{1:n} <= ... <= R_{n:n},
so the threshold for rank k is R_{n-k:n}.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class EstimationError(RuntimeError):
    """A statistical estimation step failed (degenerate input, non-heavy tail, ...)."""


@dataclass(frozen=True)
class TailFit:
    """Fitted tail: gamma_hat = 1/alpha_hat and the scale u_hat = R_{n-k_u:n}."""

    gamma_hat: float
    alpha_hat: float
    u_hat: float
    k_alpha: int
    k_u: int
    estimator: str


@dataclass(frozen=True)
class StabilityScan:
    """Estimator-vs-k series with the first stable window's midpoint selected."""

    k_values: np.ndarray
    estimates: np.ndarray
    selected_k: int
    selected_value: float
    stable: bool
    window: int
    rel_spread: float


def _sorted_radii(radii) -> np.ndarray:
    r = np.asarray(radii, dtype=float)
    if r.ndim != 1 or r.size < 2:
        raise ValueError("radii must be a 1-D array with at least 2 entries")
    return np.sort(r)


def _check_k(k: int, n: int):
    if not 1 <= k < n:
        raise ValueError(f"rank k={k} out of range [1, {n - 1}]")


def _log_spacings(sorted_r: np.ndarray, k: int) -> np.ndarray:
    n = sorted_r.size
    threshold = sorted_r[n - k - 1]
    if threshold <= 0.0:
        raise ValueError("threshold order statistic must be positive")
    top = sorted_r[n - k:]
    if np.any(top <= 0.0):
        raise ValueError("radii must be positive")
    return np.log(top / threshold)


def hill(radii, k: int) -> float:
    """Hill estimator: mean of the top-k log spacings log(R_{n-i+1:n}/R_{n-k:n})."""
    r = _sorted_radii(radii)
    _check_k(k, r.size)
    return float(np.mean(_log_spacings(r, k)))


def moment_estimator(radii, k: int) -> float:
    """Moment estimator M1 + 1 - (1/2) (1 - M1^2/M2)^(-1) of the extreme-value index."""
    r = _sorted_radii(radii)
    _check_k(k, r.size)
    logs = _log_spacings(r, k)
    m1 = float(np.mean(logs))
    m2 = float(np.mean(logs**2))
    if m2 <= m1**2:
        raise EstimationError(f"degenerate log spacings at k={k}: M2 <= M1^2")
    return m1 + 1.0 - 0.5 / (1.0 - m1**2 / m2)


def scale_u_hat(radii, k: int) -> float:
    """Empirical scale U(n/k): the (n-k)th ascending order statistic of the radii."""
    r = _sorted_radii(radii)
    _check_k(k, r.size)
    return float(r[r.size - k - 1])


def fit_tail(radii, k_alpha: int, k_u: int | None = None, estimator: str = "moment") -> TailFit:
    """Combine an index estimate at rank k_alpha with the scale at rank k_u."""
    if k_u is None:
        k_u = k_alpha
    gamma = {"moment": moment_estimator, "hill": hill}[estimator](radii, k_alpha)
    if gamma <= 0.0:
        raise EstimationError(
            f"estimated extreme-value index {gamma:.4f} <= 0: radius tail is not heavy"
        )
    return TailFit(
        gamma_hat=gamma,
        alpha_hat=1.0 / gamma,
        u_hat=scale_u_hat(radii, k_u),
        k_alpha=k_alpha,
        k_u=k_u,
        estimator=estimator,
    )


def default_k_grid(n: int, lo_frac: float = 0.02, hi_frac: float = 0.2, count: int = 40) -> np.ndarray:
    """Rank grid for stability scans: `count` ranks from ~lo_frac*n to ~hi_frac*n."""
    lo = max(10, int(round(lo_frac * n)))
    hi = min(n - 1, max(lo + count, int(round(hi_frac * n))))
    return np.unique(np.linspace(lo, hi, count).astype(int))


def stability_scan(radii, estimator, k_grid=None, window: int = 5,
                   rel_spread: float = 0.10, alpha_hat: float | None = None,
                   select: str = "min_std") -> StabilityScan:
    """Scan an estimator over ranks k and select a stable window.

    `estimator` is one of "hill", "moment", "scaled_u" (the statistic
    U_hat(n/k) * (k/n)^(1/alpha_hat), requiring `alpha_hat`), or any callable
    k -> value (used for the spectral-mass scan).

    A window of `window` consecutive grid points is stable when its relative
    spread (max-min over |mean|) is at most `rel_spread`.  Among stable
    windows, `select` picks either the one with the smallest standard
    deviation ("min_std", ties to the earliest) or the earliest one
    ("first"); the midpoint of the winning window is selected.  If no window
    qualifies, the globally smallest-spread window is returned flagged
    unstable.
    """
    if callable(estimator):
        fn = estimator
        if k_grid is None:
            raise ValueError("k_grid is required with a callable estimator")
    else:
        r = _sorted_radii(radii)
        n = r.size
        if k_grid is None:
            k_grid = default_k_grid(n)
        if estimator == "hill":
            fn = lambda k: hill(r, k)
        elif estimator == "moment":
            fn = lambda k: moment_estimator(r, k)
        elif estimator == "scaled_u":
            if alpha_hat is None or alpha_hat <= 0.0:
                raise ValueError("scaled_u scan requires a positive alpha_hat")
            fn = lambda k: scale_u_hat(r, k) * (k / n) ** (1.0 / alpha_hat)
        else:
            raise ValueError(f"unknown estimator {estimator!r}")

    k_values = np.asarray(k_grid, dtype=int)
    if k_values.size < window:
        raise ValueError(f"k_grid must have at least window={window} points")
    if window < 3:
        raise ValueError("window must be >= 3 grid points")
    if np.any(np.diff(k_values) <= 0):
        raise ValueError("k_grid must be strictly increasing")

    estimates = np.array([fn(int(k)) for k in k_values], dtype=float)

    n_win = k_values.size - window + 1
    spreads = np.empty(n_win)
    stds = np.empty(n_win)
    for i in range(n_win):
        block = estimates[i:i + window]
        mean = np.mean(block)
        spreads[i] = (np.max(block) - np.min(block)) / max(abs(mean), 1e-12)
        stds[i] = np.std(block)

    if select not in ("min_std", "first"):
        raise ValueError(f"unknown selection rule {select!r}")
    ok = spreads <= rel_spread
    if np.any(ok):
        if select == "first":
            best = int(np.argmax(ok))
        else:
            best = int(np.argmin(np.where(ok, stds, np.inf)))
        stable = True
    else:
        best = int(np.argmin(spreads))
        stable = False
    mid = best + window // 2
    return StabilityScan(
        k_values=k_values,
        estimates=estimates,
        selected_k=int(k_values[mid]),
        selected_value=float(estimates[mid]),
        stable=stable,
        window=window,
        rel_spread=rel_spread,
    )


@dataclass(frozen=True)
class EqualTailReport:
    """Result of the multi-sample tail-index equality check."""

    estimates: np.ndarray
    k_values: np.ndarray
    max_difference: float
    null_bound: float
    reject: bool
    level: float
    bootstrap_reps: int
    failures: tuple = field(default=())


def test_equal_tail_indices(samples, k_values, bootstrap_reps: int = 500,
                            level: float = 0.95, seed: int | None = 0) -> EqualTailReport:
    """Moment estimates per sample, their max pairwise difference, and a
    bootstrap-calibrated upper bound for that difference under equality.

    Calibration resamples each sample with replacement, recomputes the moment
    estimate, and centers it at the sample's original estimate; the null bound
    is the `level` quantile of the centered max-min statistic.  Rejects when
    the observed max difference exceeds the bound.
    """
    if len(samples) < 2:
        raise ValueError("need at least 2 samples")
    ks = list(k_values) if np.ndim(k_values) else [int(k_values)] * len(samples)
    if len(ks) != len(samples):
        raise ValueError("one k per sample required")

    sorted_samples = [_sorted_radii(s) for s in samples]
    estimates = np.array([moment_estimator(s, k) for s, k in zip(sorted_samples, ks)])
    max_difference = float(np.max(estimates) - np.min(estimates))

    rng = np.random.default_rng(seed)
    stats = np.empty(bootstrap_reps)
    failures = []
    for b in range(bootstrap_reps):
        deltas = np.empty(len(samples))
        for j, (s, k) in enumerate(zip(sorted_samples, ks)):
            res = s[rng.integers(0, s.size, s.size)]
            try:
                deltas[j] = moment_estimator(res, k) - estimates[j]
            except EstimationError:
                deltas[j] = np.nan
        if np.any(np.isnan(deltas)):
            failures.append(b)
            stats[b] = np.nan
        else:
            stats[b] = np.max(deltas) - np.min(deltas)
    good = stats[~np.isnan(stats)]
    if good.size < bootstrap_reps // 2:
        raise EstimationError("bootstrap calibration failed in over half the replications")
    null_bound = float(np.quantile(good, level))
    return EqualTailReport(
        estimates=estimates,
        k_values=np.asarray(ks, dtype=int),
        max_difference=max_difference,
        null_bound=null_bound,
        reject=bool(max_difference > null_bound),
        level=level,
        bootstrap_reps=bootstrap_reps,
        failures=tuple(failures),
    )
