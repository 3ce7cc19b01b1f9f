"""Synthetic nonstationary fields: ground-truth maps, sampling, scoring.

Four reference deformations bend the unit square: an anisotropic linear
mix, a quadratic bowl, a smooth rotation field, and an additive monotone
map built from a small Mexican hat expansion. A Gaussian field sampled
on the deformed coordinates (exponential covariance plus nugget) gives
the observation matrix; fits are scored by how well they recover the
covariance parameters and the correlation structure.
"""

import functools
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .covariance import CovarianceParams
from .likelihood import (NotPositiveDefiniteError, SpatioTemporalDataSet,
                         empirical_correlation, fit_alternating,
                         fitted_correlation)
from .monotone import Deformation
from .wavelets import WaveletExpansion, WaveletFamily

SCENARIO_KINDS = ("linear", "quadratic", "nonlinear", "wavelet")

# Coefficients of the wavelet-built reference deformation (J=1, Mexican
# hat, single-integral variant), one (c00, c10, c11) triple per component.
WAVELET_SCENARIO_COEFFS = {
    "g11": (0.25, 0.01, -0.036),
    "g12": (-0.37, 0.065, -1.2),
    "g21": (-0.032, -0.043, -1.0),
    "g22": (-0.031, 0.11, 0.19),
}

DEFAULT_SCENARIO_PARAMS = CovarianceParams(nu=1.0, theta=0.25, nugget=0.05)

TABLE_COLUMNS = ("scenario", "family", "J", "nu", "theta", "nugget",
                 "mse", "converged", "seconds")


def _as_points(x):
    pts = np.asarray(x, dtype=np.float64)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[1] != 2:
        raise ValueError("points must have shape (n, 2)")
    return pts, single


def linear_deformation(x):
    """y1 = 0.75 x1 + x2, y2 = x1 + 0.25 x2."""
    pts, single = _as_points(x)
    x1, x2 = pts[:, 0], pts[:, 1]
    out = np.column_stack([0.75 * x1 + x2, x1 + 0.25 * x2])
    return tuple(out[0]) if single else out


def quadratic_deformation(x):
    """Quadratic bowls around the square's center, offset to stay positive."""
    pts, single = _as_points(x)
    u = pts[:, 0] - 0.5
    v = pts[:, 1] - 0.5
    out = np.column_stack([-0.5 * u * u + v + 0.6, u - 0.5 * v * v + 0.6])
    return tuple(out[0]) if single else out


def nonlinear_deformation(x):
    """Rotation about the center by an angle that decays with radius."""
    pts, single = _as_points(x)
    u = pts[:, 0] - 0.5
    v = pts[:, 1] - 0.5
    angle = 2.5 * np.exp(-(u * u + v * v)) + 1.5 * np.pi
    c, s = np.cos(angle), np.sin(angle)
    out = np.column_stack([c * u + s * v + 0.5, -s * u + c * v + 0.5])
    return tuple(out[0]) if single else out


@functools.lru_cache(maxsize=1)
def wavelet_scenario_deformation():
    """The reference additive monotone map used by the wavelet scenario."""
    expansions = []
    for name in ("g11", "g12", "g21", "g22"):
        c00, c10, c11 = WAVELET_SCENARIO_COEFFS[name]
        expansions.append(WaveletExpansion.from_levels(
            WaveletFamily.MEXICAN_HAT, [[c00], [c10, c11]]))
    return Deformation.from_expansions(*expansions)


def wavelet_deformation(x):
    return wavelet_scenario_deformation().evaluate(x)


_GENERATORS = {
    "linear": linear_deformation,
    "quadratic": quadratic_deformation,
    "nonlinear": nonlinear_deformation,
    "wavelet": wavelet_deformation,
}


def true_deformation(kind, x):
    """Evaluate the named reference deformation at a point or point array."""
    if kind not in _GENERATORS:
        raise ValueError(f"unknown scenario kind {kind!r}; choose from {SCENARIO_KINDS}")
    return _GENERATORS[kind](x)


@dataclass(frozen=True)
class ScenarioSpec:
    """One simulated experiment: which map, how many sites and times."""

    kind: str
    n: int = 50
    n_times: int = 2048
    params: CovarianceParams = DEFAULT_SCENARIO_PARAMS
    seed: int = 0

    def __post_init__(self):
        if self.kind not in SCENARIO_KINDS:
            raise ValueError(
                f"unknown scenario kind {self.kind!r}; choose from {SCENARIO_KINDS}")
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if self.n_times < 1:
            raise ValueError("n_times must be >= 1")


@dataclass(frozen=True)
class ScenarioRun:
    """Everything one simulated draw produced."""

    spec: ScenarioSpec
    locations: np.ndarray
    true_deformed: np.ndarray
    observations: np.ndarray
    empirical_corr: np.ndarray

    def dataset(self):
        return SpatioTemporalDataSet(locations=self.locations,
                                     observations=self.observations)

    def true_model_correlation(self):
        """Correlation implied by the generating map and range, not the data."""
        return fitted_correlation(self.true_deformed, self.spec.params.theta)


def generate_locations(n, seed):
    """n i.i.d. uniform draws from the open unit square, reproducible."""
    if n < 2:
        raise ValueError("n must be >= 2")
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0.0, 1.0, size=(n, 2))
    # the half-open draw can land exactly on 0; redraw those entries
    while np.any(pts == 0.0):
        mask = pts == 0.0
        pts[mask] = rng.uniform(0.0, 1.0, size=int(mask.sum()))
    return pts


def sample_gp(sigma, n_times, seed):
    """n_times i.i.d. zero-mean draws with covariance sigma, as columns.

    Sampling is the Cholesky factor applied to seeded standard normals.
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    if n_times < 1:
        raise ValueError("n_times must be >= 1")
    try:
        chol = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(str(exc)) from exc
    rng = np.random.default_rng(seed)
    eps = rng.standard_normal((sigma.shape[0], int(n_times)))
    return chol @ eps


def run_scenario_data(spec):
    """Simulate one draw: locations, deformed truth, observations."""
    locations = generate_locations(spec.n, seed=[spec.seed, 0])
    true_deformed = np.asarray(true_deformation(spec.kind, locations))
    dists = _kernels.pairwise_distances(np.ascontiguousarray(true_deformed))
    sigma = _kernels.exp_cov_from_dists(dists, spec.params.nu,
                                        spec.params.theta, spec.params.nugget)
    observations = sample_gp(sigma, spec.n_times, seed=[spec.seed, 1])
    corr = empirical_correlation(observations)
    return ScenarioRun(spec=spec, locations=locations,
                       true_deformed=true_deformed,
                       observations=observations, empirical_corr=corr)


def table_row(scenario, result, seconds=None):
    """One summary row in the fixed column order."""
    return {
        "scenario": scenario,
        "family": result.config.family.value,
        "J": result.config.max_level,
        "nu": result.params.nu,
        "theta": result.params.theta,
        "nugget": result.params.nugget,
        "mse": result.mse,
        "converged": result.converged,
        "seconds": seconds,
    }


def run_scenario(spec, fit_configs):
    """Simulate once, then fit every config; one summary row per fit."""
    run = run_scenario_data(spec)
    data = run.dataset()
    rows = []
    for config in fit_configs:
        start = time.perf_counter()
        result = fit_alternating(data, config)
        seconds = time.perf_counter() - start
        rows.append(table_row(spec.kind, result, seconds=seconds))
    return rows


def run_scenario_replicates(spec, fit_configs, replicates, threads=1):
    """Repeat the scenario over shifted seeds and summarize MSE spread.

    Returns (rows, summaries): rows carry an extra ``replicate`` key;
    summaries hold mean/sd of MSE and the convergence count per config.
    """
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    specs = [replace(spec, seed=spec.seed + r) for r in range(replicates)]
    datasets = [run_scenario_data(s).dataset() for s in specs]
    jobs = [(r, ci) for r in range(replicates) for ci in range(len(fit_configs))]

    def fit_job(job):
        r, ci = job
        start = time.perf_counter()
        result = fit_alternating(datasets[r], fit_configs[ci])
        return r, ci, result, time.perf_counter() - start

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(fit_job, jobs))
    else:
        outcomes = [fit_job(job) for job in jobs]

    rows = []
    per_config = {ci: [] for ci in range(len(fit_configs))}
    for r, ci, result, seconds in sorted(outcomes, key=lambda t: (t[1], t[0])):
        row = table_row(spec.kind, result, seconds=seconds)
        row["replicate"] = r
        rows.append(row)
        per_config[ci].append(result)

    summaries = []
    for ci, results in per_config.items():
        mses = np.array([res.mse for res in results])
        summaries.append({
            "scenario": spec.kind,
            "family": fit_configs[ci].family.value,
            "J": fit_configs[ci].max_level,
            "replicates": replicates,
            "mse_mean": float(mses.mean()),
            "mse_sd": float(mses.std(ddof=1)) if replicates > 1 else 0.0,
            "n_converged": int(sum(res.converged for res in results)),
        })
    return rows, summaries


def unit_grid(grid_size):
    """Uniform grid over the unit square, first coordinate fastest."""
    if grid_size < 2:
        raise ValueError("grid_size must be >= 2")
    t = np.linspace(0.0, 1.0, grid_size)
    x2, x1 = np.meshgrid(t, t, indexing="ij")
    return np.column_stack([x1.ravel(), x2.ravel()])


def deformed_grid(kind, grid_size=21):
    """Reference-deformation image of the uniform grid (figure export)."""
    grid = unit_grid(grid_size)
    return grid, np.asarray(true_deformation(kind, grid))
