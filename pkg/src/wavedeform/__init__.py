"""Nonstationary spatial covariance via deformed coordinates.

The package estimates a warped coordinate system in which a spatial
process becomes isotropic: strictly monotone coordinate maps built from
analytic wavelet expansions, an exponential covariance over the deformed
plane, Gaussian maximum likelihood fitting by alternating ascent, a
simulation harness, and a fixed-width climate-archive reader.
"""

from ._kernels import IMPLEMENTATION as KERNEL_IMPLEMENTATION
from .covariance import (CORRELATION_FAMILIES, CovarianceParams,
                         DuplicatePointWarning, build_covariance, correlation,
                         covariance_from_distances, distance_matrix,
                         save_matrix_csv)
from .ghcn import (EmptySelectionError, InconsistentLengthError, IngestConfig,
                   MalformedLineError, MonthRecord, StationInfo, StationRecord,
                   TruncatedRecordError, build_dataset, days_in_range,
                   denormalize_coords, parse_dly, parse_stations,
                   read_dataset_bundle, select_complete_stations,
                   write_dataset_bundle)
from .likelihood import (CoeffOptions, DegenerateSeriesError,
                         DegenerateSeriesWarning, FitConfig, FitContext,
                         FitResult, GammaOptions, NotPositiveDefiniteError,
                         SampleCovariance, SpatioTemporalDataSet,
                         correlation_mse, correlation_mse_between,
                         deformation_from_coefficients, empirical_correlation,
                         fit_alternating, fit_coeff_step, fit_gamma_step,
                         fitted_correlation, log_likelihood, objective,
                         procrustes_align, sample_covariance,
                         split_coefficients)
from .monotone import (DEFAULT_QUADRATURE, VARIANT_DOUBLE, VARIANT_SINGLE,
                       Deformation, DomainError, MonotoneEvalPlan,
                       MonotoneFunction, QuadratureConfig, integrate_prefix)
from .simulate import (SCENARIO_KINDS, ScenarioRun, ScenarioSpec,
                       deformed_grid, generate_locations, run_scenario,
                       run_scenario_data, run_scenario_replicates, sample_gp,
                       true_deformation, unit_grid,
                       wavelet_scenario_deformation)
from .wavelets import (NoFatherWaveletError, WaveletExpansion, WaveletFamily,
                       basis_matrix, eval_dilated, eval_father, eval_mother,
                       expansion_size, integral_basis_matrix)

__version__ = "0.1.0"
