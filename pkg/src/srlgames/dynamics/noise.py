"""Observation noise on the score process.

Three modes: no noise; independent per-coordinate noise with coefficients
that are constant or affine in the (flattened) mixed profile; and a constant
full covariance, sampled through a fixed square-root factor.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

PSD_CLIP = 1e-10


class NoiseError(ValueError):
    pass


def psd_factor(cov: np.ndarray, clip: float = PSD_CLIP) -> np.ndarray:
    """Symmetric square root factor L with L L^T = cov (eigenvalues clipped at 0)."""
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise NoiseError("covariance must be a square matrix")
    if not np.allclose(cov, cov.T, atol=1e-12):
        raise NoiseError("covariance is not symmetric")
    w, V = np.linalg.eigh(cov)
    scale = max(1.0, float(np.abs(w).max())) if w.size else 1.0
    if w.size and w.min() < -clip * scale:
        raise NoiseError(f"covariance is not positive semidefinite (eigenvalue {w.min():.3e})")
    w = np.clip(w, 0.0, None)
    return V * np.sqrt(w)


@dataclass(frozen=True)
class NoiseModel:
    mode: str = "none"
    dim: int = 0
    sigma: np.ndarray | None = None     # diagonal: base coefficients, shape (d,)
    slope: np.ndarray | None = None     # diagonal: sigma(x) = sigma + slope @ x
    cov: np.ndarray | None = None       # correlated: constant covariance (d, d)
    factor: np.ndarray | None = None    # correlated: L with L L^T = cov
    sigma_max: float | None = None

    def __post_init__(self):
        if self.mode not in ("none", "diagonal", "correlated"):
            raise NoiseError(f"unknown noise mode {self.mode!r}")

    @classmethod
    def none(cls, dim: int) -> "NoiseModel":
        return cls(mode="none", dim=dim, sigma_max=0.0)

    @classmethod
    def diagonal(cls, sigma, slope=None, dim: int | None = None,
                 sigma_max: float | None = None) -> "NoiseModel":
        sigma = np.asarray(sigma, dtype=float)
        if sigma.ndim == 0:
            if dim is None:
                raise NoiseError("scalar sigma needs an explicit dimension")
            sigma = np.full(dim, float(sigma))
        d = sigma.size
        if slope is not None:
            slope = np.asarray(slope, dtype=float)
            if slope.shape != (d, d):
                raise NoiseError(f"noise slope must have shape {(d, d)}")
            slope.setflags(write=False)
        sigma.setflags(write=False)
        if not np.all(np.isfinite(sigma)):
            raise NoiseError("noise coefficients must be finite")
        return cls(mode="diagonal", dim=d, sigma=sigma, slope=slope, sigma_max=sigma_max)

    @classmethod
    def correlated(cls, cov) -> "NoiseModel":
        cov = np.array(cov, dtype=float)
        L = psd_factor(cov)
        cov.setflags(write=False)
        L.setflags(write=False)
        return cls(mode="correlated", dim=cov.shape[0], cov=cov, factor=L,
                   sigma_max=float(np.sqrt(np.max(np.diag(cov)))) if cov.size else 0.0)

    @property
    def is_constant(self) -> bool:
        return self.mode != "diagonal" or self.slope is None

    def coefficients(self, X) -> np.ndarray:
        """Per-coordinate noise levels at the flat profile(s) X (diagonal mode)."""
        X = np.asarray(X, dtype=float)
        if self.mode == "none":
            return np.zeros_like(X)
        if self.mode == "correlated":
            return np.broadcast_to(np.sqrt(np.diag(self.cov)), X.shape).copy()
        if self.slope is None:
            return np.broadcast_to(self.sigma, X.shape).copy()
        return self.sigma + X @ self.slope.T

    def variances(self, X) -> np.ndarray:
        return self.coefficients(X) ** 2

    def check_bounds(self, actions, rng: np.random.Generator | None = None,
                     n_random: int = 256) -> float:
        """Largest coefficient over vertices and random profiles; raises on negativity
        or on exceeding the declared ``sigma_max``.  Exact for affine coefficients."""
        if self.mode != "diagonal":
            return float(self.sigma_max or 0.0)
        rng = rng or np.random.default_rng(0)
        points = []
        if self.slope is None:
            points.append(np.concatenate([np.full(n, 1.0 / n) for n in actions]))
        else:
            for prof in itertools.islice(itertools.product(*(range(n) for n in actions)), 4096):
                points.append(np.concatenate([np.eye(n)[a] for a, n in zip(prof, actions)]))
            for _ in range(n_random):
                points.append(np.concatenate([rng.dirichlet(np.ones(n)) for n in actions]))
        vals = self.coefficients(np.array(points))
        if vals.min() < 0:
            raise NoiseError("noise coefficients become negative on the strategy space")
        top = float(vals.max())
        if self.sigma_max is not None and top > self.sigma_max + 1e-12:
            raise NoiseError(f"noise coefficient {top} exceeds declared bound {self.sigma_max}")
        return top

    @property
    def noise_dim(self) -> int:
        if self.mode == "none":
            return 0
        if self.mode == "correlated":
            return self.factor.shape[1]
        return self.dim

    def increment(self, X, xi, sqdt: float) -> np.ndarray:
        """Noise increment from standard normal draws ``xi`` (batched on the leading axis)."""
        if self.mode == "none":
            return np.zeros_like(X)
        if self.mode == "correlated":
            # einsum keeps each row's arithmetic independent of the batch shape
            return np.einsum("...j,ij->...i", xi, self.factor) * sqdt
        return self.coefficients(X) * xi * sqdt

    def to_dict(self) -> dict:
        if self.mode == "none":
            return {"mode": "none"}
        if self.mode == "correlated":
            return {"mode": "correlated", "covariance": self.cov.tolist()}
        out = {"mode": "diagonal", "sigma": self.sigma.tolist()}
        if self.slope is not None:
            out["slope"] = self.slope.tolist()
        if self.sigma_max is not None:
            out["sigma_max"] = self.sigma_max
        return out


def sample_noise_increment(noise: NoiseModel, X, dt: float,
                           rng: np.random.Generator) -> np.ndarray:
    """One Euler-Maruyama noise increment at the flat profile X."""
    if dt <= 0:
        raise NoiseError("time step must be positive")
    X = np.asarray(X, dtype=float)
    if noise.mode == "none":
        return np.zeros(X.shape)
    xi = rng.standard_normal(X.shape[:-1] + (noise.noise_dim,))
    return noise.increment(X, xi, np.sqrt(dt))
