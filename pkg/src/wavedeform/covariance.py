"""Stationary covariance assembled over deformed coordinates.

In the deformed plane the process is isotropic: correlation between two
sites depends only on the Euclidean distance between their images,

    Sigma_ij = nu * rho(||y_i - y_j|| / theta)   (i != j),
    Sigma_ii = nu + nugget,

with the exponential family rho(u) = exp(-u). ``family`` is an extension
point; only the exponential member ships.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .monotone import DomainError

DUPLICATE_TOL = 1e-12

CORRELATION_FAMILIES = ("exponential",)


class DuplicatePointWarning(UserWarning):
    """Two coordinates coincide; only the nugget separates their rows."""


@dataclass(frozen=True)
class CovarianceParams:
    """Spatial variance, correlation range, and nugget variance."""

    nu: float
    theta: float
    nugget: float = 0.0

    def __post_init__(self):
        for name in ("nu", "theta", "nugget"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (np.isfinite(self.nu) and self.nu > 0.0):
            raise DomainError("nu must be finite and positive")
        if not (np.isfinite(self.theta) and self.theta > 0.0):
            raise DomainError("theta must be finite and positive")
        if not (np.isfinite(self.nugget) and self.nugget >= 0.0):
            raise DomainError("nugget must be finite and nonnegative")

    def as_tuple(self):
        return (self.nu, self.theta, self.nugget)


def correlation(theta, d, family="exponential"):
    """Isotropic correlation at distance d; exp(-d/theta) in (0, 1]."""
    if family not in CORRELATION_FAMILIES:
        raise ValueError(f"unknown correlation family {family!r}")
    if not theta > 0.0:
        raise DomainError("theta must be positive")
    d_arr = np.asarray(d, dtype=np.float64)
    if np.any(d_arr < 0.0):
        raise DomainError("distances must be nonnegative")
    out = np.exp(d_arr / (-theta))
    if np.isscalar(d) or np.ndim(d) == 0:
        return float(out)
    return out


def _validated_coords(coords):
    coords = np.ascontiguousarray(coords, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] != 2:
        raise ValueError("coordinates must have shape (n, 2)")
    if coords.shape[0] < 2:
        raise ValueError("need at least two coordinates")
    if not np.all(np.isfinite(coords)):
        raise ValueError("coordinates must be finite")
    return coords


def distance_matrix(coords):
    """Pairwise Euclidean distances; exactly symmetric, zero diagonal."""
    return _kernels.pairwise_distances(_validated_coords(coords))


def _warn_on_duplicates(dists):
    n = dists.shape[0]
    iu, ju = np.triu_indices(n, k=1)
    hits = int(np.count_nonzero(dists[iu, ju] < DUPLICATE_TOL))
    if hits:
        warnings.warn(
            f"{hits} coordinate pair(s) coincide within {DUPLICATE_TOL:g}; "
            "their covariance rows differ only through the nugget",
            DuplicatePointWarning,
            stacklevel=3,
        )


def covariance_from_distances(dists, params, family="exponential"):
    """Covariance from a precomputed distance matrix (no duplicate scan)."""
    if family not in CORRELATION_FAMILIES:
        raise ValueError(f"unknown correlation family {family!r}")
    return _kernels.exp_cov_from_dists(dists, params.nu, params.theta, params.nugget)


def build_covariance(coords, params, family="exponential"):
    """Full covariance over deformed coordinates; warns on coincident points."""
    dists = distance_matrix(coords)
    _warn_on_duplicates(dists)
    return covariance_from_distances(dists, params, family=family)


def save_matrix_csv(path, matrix):
    """Row-major, header-free CSV dump with full float precision."""
    np.savetxt(path, np.asarray(matrix, dtype=np.float64),
               delimiter=",", fmt="%.17g")
