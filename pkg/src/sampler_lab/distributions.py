"""Target landscapes: Gaussian mixtures and isotropic Gaussians.

Points are 1-D float arrays. Every target is immutable after construction and
carries its dimension; all evaluations validate it.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

LOG_2PI = math.log(2.0 * math.pi)


class DimensionError(ValueError):
    pass


def as_point(x, dim: int) -> np.ndarray:
    p = np.asarray(x, dtype=float).reshape(-1)
    if p.shape[0] != dim:
        raise DimensionError(f"point has dimension {p.shape[0]}, target has {dim}")
    return p


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    """Mixture of Gaussians sharing one covariance matrix.

    Parameters
    ----------
    means : (n_modes, d) array
    covariance : (d, d) symmetric positive-definite array, identity by default
    weights : (n_modes,) array summing to one, equal by default
    """

    means: np.ndarray
    covariance: np.ndarray | None = None
    weights: np.ndarray | None = None
    _chol_inv: np.ndarray = field(init=False, repr=False)
    _log_norm: np.ndarray = field(init=False, repr=False)
    _identity: bool = field(init=False, repr=False)

    def __post_init__(self):
        means = np.atleast_2d(np.asarray(self.means, dtype=float))
        if means.shape[0] < 1:
            raise ValueError("a mixture needs at least one mode")
        if not np.all(np.isfinite(means)):
            raise ValueError("mode means must be finite")
        n, d = means.shape
        cov = np.eye(d) if self.covariance is None else np.asarray(self.covariance, dtype=float)
        if cov.shape != (d, d):
            raise DimensionError(f"covariance shape {cov.shape} does not match dimension {d}")
        if not np.allclose(cov, cov.T):
            raise ValueError("covariance must be symmetric")
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise ValueError("covariance must be positive-definite") from None
        w = np.full(n, 1.0 / n) if self.weights is None else np.asarray(self.weights, dtype=float)
        if w.shape != (n,) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be nonnegative, one per mode, and sum to 1")
        means.setflags(write=False)
        cov.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covariance", cov)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "_chol_inv", np.linalg.inv(chol))
        object.__setattr__(self, "_identity", bool(np.array_equal(cov, np.eye(d))))
        logdet = 2.0 * np.log(np.diag(chol)).sum()
        with np.errstate(divide="ignore"):
            log_w = np.log(w)
        object.__setattr__(self, "_log_norm", log_w - 0.5 * (d * LOG_2PI + logdet))

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def n_modes(self) -> int:
        return self.means.shape[0]

    def component_log_densities(self, x: np.ndarray) -> np.ndarray:
        """log(w_k) + log N(x; mu_k, Sigma) for every component k."""
        diff = x - self.means
        if not self._identity:
            diff = diff @ self._chol_inv.T
        return self._log_norm - 0.5 * np.einsum("ij,ij->i", diff, diff)

    def to_json(self) -> dict:
        cov = "identity" if self._identity else self.covariance.tolist()
        return {
            "dim": self.dim,
            "means": self.means.tolist(),
            "covariance": cov,
            "weights": self.weights.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "GaussianMixture":
        means = np.asarray(obj["means"], dtype=float).reshape(-1, int(obj["dim"]))
        cov = obj.get("covariance", "identity")
        cov = None if cov == "identity" else np.asarray(cov, dtype=float)
        weights = obj.get("weights")
        return cls(means, cov, None if weights is None else np.asarray(weights, dtype=float))


@dataclass(frozen=True, eq=False)
class UnimodalGaussian:
    """Isotropic Gaussian with per-axis standard deviation ``sigma``."""

    mean: np.ndarray
    sigma: float

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        if not np.all(np.isfinite(mean)):
            raise ValueError("mean must be finite")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        mean.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "sigma", float(self.sigma))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def to_json(self) -> dict:
        return {"dim": self.dim, "mean": self.mean.tolist(), "sigma": self.sigma}


TargetDistribution = Union[GaussianMixture, UnimodalGaussian]


def _log_density(target: TargetDistribution, x: np.ndarray) -> float:
    # unchecked fast path, x already validated
    if isinstance(target, UnimodalGaussian):
        z = (x - target.mean) / target.sigma
        return -0.5 * float(z @ z) - target.dim * (math.log(target.sigma) + 0.5 * LOG_2PI)
    a = target.component_log_densities(x)
    m = a.max()
    if m == -np.inf:
        return -math.inf
    return float(m + math.log(np.exp(a - m).sum()))


def log_density(target: TargetDistribution, x) -> float:
    """Log of the normalised density at ``x`` (log-sum-exp for mixtures)."""
    return _log_density(target, as_point(x, target.dim))


def tempered_log_density(target: TargetDistribution, x, T: float) -> float:
    if not T >= 1:
        raise ValueError(f"temperature must be >= 1, got {T}")
    return log_density(target, x) / T


def mode_of(target: TargetDistribution) -> np.ndarray:
    """Highest-weight mode mean (first on ties)."""
    if isinstance(target, UnimodalGaussian):
        return target.mean.copy()
    return target.means[int(np.argmax(target.weights))].copy()


def sample_direct(target: TargetDistribution, rng: np.random.Generator, size: int | None = None):
    """Exact ancestral draw(s): pick a component by weight, then a Gaussian.

    Returns a point, or an (size, d) array when ``size`` is given.
    """
    n = 1 if size is None else int(size)
    if isinstance(target, UnimodalGaussian):
        out = target.mean + target.sigma * rng.standard_normal((n, target.dim))
    else:
        comp = rng.choice(target.n_modes, size=n, p=target.weights)
        z = rng.standard_normal((n, target.dim))
        if not target._identity:
            z = z @ np.linalg.cholesky(target.covariance).T
        out = target.means[comp] + z
    return out[0] if size is None else out


def generate_patchy_environment(n_modes: int, r: float, d: int, rng: np.random.Generator) -> GaussianMixture:
    """Equal-weight, identity-covariance mixture with means uniform on [-r, r]^d."""
    if n_modes < 1 or d < 1:
        raise ValueError("n_modes and d must be >= 1")
    if not r > 0:
        raise ValueError("r must be positive")
    return GaussianMixture(rng.uniform(-r, r, size=(n_modes, d)))


def nearest_modes(target: GaussianMixture, xs) -> np.ndarray:
    """Vectorised nearest-mode assignment for an (n, d) array of points."""
    if not isinstance(target, GaussianMixture):
        raise TypeError("nearest-mode assignment needs a mixture target")
    xs = np.asarray(xs, dtype=float)
    if xs.ndim != 2 or xs.shape[1] != target.dim:
        raise DimensionError(f"expected (n, {target.dim}) points, got {xs.shape}")
    d2 = ((xs[:, None, :] - target.means[None, :, :]) ** 2).sum(axis=-1)
    # argmin returns the first minimum, i.e. lowest index on ties
    return np.argmin(d2, axis=1)


def nearest_mode(target: GaussianMixture, x) -> int:
    if not isinstance(target, GaussianMixture):
        raise TypeError("nearest-mode assignment needs a mixture target")
    return int(nearest_modes(target, as_point(x, target.dim)[None, :])[0])


def mean_mode_distance(target: GaussianMixture) -> float:
    """Mean Euclidean distance over all unordered pairs of mode means."""
    if not isinstance(target, GaussianMixture):
        raise TypeError("mode distances need a mixture target")
    if target.n_modes < 2:
        raise ValueError("mean mode distance needs at least two modes")
    i, j = np.triu_indices(target.n_modes, k=1)
    return float(np.linalg.norm(target.means[i] - target.means[j], axis=1).mean())


def target_to_json(target: TargetDistribution) -> dict:
    out = target.to_json()
    out["kind"] = "mixture" if isinstance(target, GaussianMixture) else "gaussian"
    return out


def target_from_json(obj: dict) -> TargetDistribution:
    if obj.get("kind", "mixture") == "gaussian":
        return UnimodalGaussian(np.asarray(obj["mean"], dtype=float), float(obj["sigma"]))
    return GaussianMixture.from_json(obj)


def save_environment(target: TargetDistribution, path) -> None:
    with open(path, "w") as fh:
        json.dump(target_to_json(target), fh, indent=1)


def load_environment(path) -> TargetDistribution:
    with open(path) as fh:
        return target_from_json(json.load(fh))


__all__ = [
    "DimensionError",
    "GaussianMixture",
    "UnimodalGaussian",
    "TargetDistribution",
    "log_density",
    "tempered_log_density",
    "sample_direct",
    "generate_patchy_environment",
    "nearest_mode",
    "nearest_modes",
    "mean_mode_distance",
    "mode_of",
    "target_to_json",
    "target_from_json",
    "save_environment",
    "load_environment",
]

