"""Trace statistics: flight distances, power-law and spectral-slope fits,
autocorrelation and mode-occupancy KL divergence."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .distributions import GaussianMixture, nearest_modes


class FitError(ValueError):
    """Input cannot support the requested regression."""


def _positions(trace) -> np.ndarray:
    pos = getattr(trace, "positions", trace)
    pos = np.asarray(pos, dtype=float)
    return pos[:, None] if pos.ndim == 1 else pos


def flight_distances(trace) -> np.ndarray:
    """Euclidean distances between consecutive positions (zeros kept)."""
    pos = _positions(trace)
    if pos.shape[0] < 2:
        raise ValueError("need at least two positions")
    return np.linalg.norm(np.diff(pos, axis=0), axis=1)


def _ols(x: np.ndarray, y: np.ndarray):
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = ((y - y.mean()) ** 2).sum()
    r2 = 1.0 - (resid**2).sum() / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), float(min(max(r2, 0.0), 1.0))


def _window_means(x: np.ndarray, y: np.ndarray, lo: float, hi: float, n: int):
    edges = np.linspace(lo, hi, n + 1)
    idx = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, n - 1)
    cx, cy = [], []
    for k in range(n):
        sel = idx == k
        if sel.any():
            cx.append(x[sel].mean())
            cy.append(y[sel].mean())
    return np.array(cx), np.array(cy)


@dataclass
class PowerLawFit:
    mu_hat: float
    intercept: float
    n_cells: int
    r_squared: float
    n_zero_flights_excluded: int
    log_x: np.ndarray = field(repr=False, default=None)
    log_y: np.ndarray = field(repr=False, default=None)
    cell_x: np.ndarray = field(repr=False, default=None)
    cell_y: np.ndarray = field(repr=False, default=None)

    def to_json(self) -> dict:
        return {
            "mu_hat": self.mu_hat,
            "intercept": self.intercept,
            "n_cells": self.n_cells,
            "r_squared": self.r_squared,
            "excluded_zeros": self.n_zero_flights_excluded,
        }


MIN_CELLS = 3


def log_binned_density(distances, n_bins: int = 50):
    """(log10 bin centre, log10 density) of the nonempty log-spaced bins.

    Bins span [min, max] of the positive distances; counts are divided by
    the total count and by each bin's width.
    """
    d = np.asarray(distances, dtype=float)
    d = d[d > 0]
    lo, hi = d.min(), d.max()
    edges = np.logspace(np.log10(lo), np.log10(hi), n_bins + 1)
    edges[0], edges[-1] = lo, hi
    counts, _ = np.histogram(d, edges)
    density = counts / (d.size * np.diff(edges))
    centres = np.sqrt(edges[:-1] * edges[1:])
    keep = counts > 0
    return np.log10(centres[keep]), np.log10(density[keep])


def fit_power_law(distances, n_windows: int = 10, n_bins: int = 50) -> PowerLawFit:
    """Estimate mu in P(l) ~ l**-mu by regression on window-averaged log-binned densities.

    Zero distances are dropped and counted. The log10-distance axis between
    the smallest and largest positive distance is cut into ``n_windows``
    equal windows; the binned points inside each window are averaged and an
    ordinary least-squares line is fitted through those cell means.
    """
    d = np.asarray(distances, dtype=float).ravel()
    if not np.all(np.isfinite(d)) or np.any(d < 0):
        raise FitError("distances must be finite and nonnegative")
    pos = d[d > 0]
    n_zero = int(d.size - pos.size)
    if np.unique(pos).size < 2:
        raise FitError("need at least two distinct positive distances")
    lx, ly = log_binned_density(pos, n_bins)
    cx, cy = _window_means(lx, ly, np.log10(pos.min()), np.log10(pos.max()), n_windows)
    if cx.size < MIN_CELLS:
        raise FitError(f"only {cx.size} nonempty windows, need {MIN_CELLS}")
    slope, intercept, r2 = _ols(cx, cy)
    return PowerLawFit(-slope, intercept, int(cx.size), r2, n_zero, lx, ly, cx, cy)


def periodogram(series):
    """One-sided periodogram |X_k|^2 / n at f_k = k/n, k = 1..n//2, after mean removal.

    Returns (frequencies, power) arrays.
    """
    x = np.asarray(series, dtype=float).ravel()
    n = x.size
    if n < 8:
        raise ValueError("series needs at least 8 values")
    if not np.all(np.isfinite(x)):
        raise ValueError("series must be finite")
    X = np.fft.rfft(x - x.mean())
    k = np.arange(1, n // 2 + 1)
    return k / n, np.abs(X[k]) ** 2 / n


@dataclass
class SpectralFit:
    alpha_hat: float
    intercept: float
    n_blocks: int
    r_squared: float
    frequencies_used: tuple
    block_x: np.ndarray = field(repr=False, default=None)
    block_y: np.ndarray = field(repr=False, default=None)
    log_f: np.ndarray = field(repr=False, default=None)
    log_s: np.ndarray = field(repr=False, default=None)

    def to_json(self) -> dict:
        return {
            "alpha_hat": self.alpha_hat,
            "intercept": self.intercept,
            "n_blocks": self.n_blocks,
            "r_squared": self.r_squared,
            "frequencies_used": list(self.frequencies_used),
        }


def fit_spectral_slope(pgram, n_blocks: int = 10) -> SpectralFit:
    """Slope of block-averaged log power against log frequency; alpha_hat = -slope.

    ``pgram`` is the (frequencies, power) pair from :func:`periodogram` or a
    sequence of (f, S) rows. Blocks split the log-frequency axis evenly and
    empty blocks are skipped.
    """
    arr = np.asarray(pgram, dtype=float)
    if arr.ndim == 2 and arr.shape[1] == 2 and arr.shape[0] != 2:
        arr = arr.T  # list of (f, S) pairs
    f, S = arr[0], arr[1]
    if n_blocks < 2:
        raise ValueError("n_blocks must be >= 2")
    keep = (f > 0) & (S > 0)
    f, S = f[keep], S[keep]
    if f.size < n_blocks:
        raise FitError(f"{f.size} usable periodogram points for {n_blocks} blocks")
    lf, ls = np.log10(f), np.log10(S)
    bx, by = _window_means(lf, ls, lf.min(), lf.max(), n_blocks)
    if bx.size < 2:
        raise FitError("fewer than two nonempty blocks")
    slope, intercept, r2 = _ols(bx, by)
    return SpectralFit(-slope, intercept, int(bx.size), r2, (float(f.min()), float(f.max())), bx, by, lf, ls)


def spectral_slope(series, n_blocks: int = 10) -> SpectralFit:
    return fit_spectral_slope(periodogram(series), n_blocks)


def autocorrelation(series, max_lag: int) -> np.ndarray:
    """Biased normalised autocorrelation C(0..max_lag)."""
    x = np.asarray(series, dtype=float).ravel()
    if not 0 <= max_lag < x.size:
        raise ValueError("max_lag must be below the series length")
    x = x - x.mean()
    denom = float(x @ x)
    if denom == 0:
        raise ValueError("constant series has no autocorrelation")
    n = x.size
    return np.array([float(x[: n - k] @ x[k:]) / denom for k in range(max_lag + 1)])


@dataclass
class KLTrajectory:
    t: np.ndarray
    kl: np.ndarray

    @property
    def values(self):
        return list(zip(self.t.tolist(), self.kl.tolist()))

    def at(self, t: int) -> float:
        return float(self.kl[np.flatnonzero(self.t == t)[0]])


def kl_from_counts(counts) -> float:
    """sum_i H_i log(H_i * N) with 0 log 0 = 0, where H = counts / total."""
    c = np.asarray(counts, dtype=float)
    H = c / c.sum()
    nz = H > 0
    return float((H[nz] * np.log(H[nz] * c.size)).sum())


def kl_mode_divergence(trace, target: GaussianMixture, checkpoints) -> KLTrajectory:
    """KL divergence of the nearest-mode visit histogram from uniform, at each checkpoint t."""
    if not isinstance(target, GaussianMixture):
        raise TypeError("mode divergence needs a mixture target")
    pos = _positions(trace)
    cps = np.asarray(sorted(int(t) for t in checkpoints))
    if cps.size == 0 or cps[0] < 1 or cps[-1] > pos.shape[0]:
        raise ValueError("checkpoints must lie in 1..len(trace)")
    modes = nearest_modes(target, pos[: cps[-1]])
    onehot = np.zeros((cps[-1], target.n_modes))
    onehot[np.arange(cps[-1]), modes] = 1.0
    cum = np.cumsum(onehot, axis=0)
    kl = np.array([kl_from_counts(cum[t - 1]) for t in cps])
    return KLTrajectory(cps, kl)


def mode_visit_counts(trace, target: GaussianMixture) -> np.ndarray:
    return np.bincount(nearest_modes(target, _positions(trace)), minlength=target.n_modes)


def write_plotdata_csv(path, log_x, log_y, cell_x, cell_y) -> None:
    """Binned scatter rows (cell_mean=0) followed by window means (cell_mean=1)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["logx", "logy", "cell_mean"])
        for a, b in zip(log_x, log_y):
            w.writerow([repr(float(a)), repr(float(b)), 0])
        for a, b in zip(cell_x, cell_y):
            w.writerow([repr(float(a)), repr(float(b)), 1])


def read_series_csv(path, column: str | None = None) -> np.ndarray:
    """Read one numeric column from a CSV (header optional)."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise ValueError(f"{path}: no data")
    try:
        [float(c) for c in rows[0]]
        header, body = None, rows
    except ValueError:
        header, body = [c.strip() for c in rows[0]], rows[1:]
    if column is None:
        col = 0
    elif header is not None and column in header:
        col = header.index(column)
    else:
        try:
            col = int(column)
        except ValueError:
            raise ValueError(f"{path}: no column {column!r}") from None
    return np.array([float(r[col]) for r in body])


__all__ = [
    "FitError",
    "PowerLawFit",
    "SpectralFit",
    "KLTrajectory",
    "flight_distances",
    "log_binned_density",
    "fit_power_law",
    "periodogram",
    "fit_spectral_slope",
    "spectral_slope",
    "autocorrelation",
    "kl_from_counts",
    "kl_mode_divergence",
    "mode_visit_counts",
    "write_plotdata_csv",
    "read_series_csv",
]
