"""Gaussian likelihood pieces and the alternating fit machinery."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from wavedeform.covariance import CovarianceParams, build_covariance
from wavedeform.likelihood import (
    DegenerateSeriesError,
    DegenerateSeriesWarning,
    FitConfig,
    FitContext,
    FitResult,
    NotPositiveDefiniteError,
    SampleCovariance,
    SpatioTemporalDataSet,
    correlation_mse,
    correlation_mse_between,
    deformation_from_coefficients,
    empirical_correlation,
    fit_alternating,
    fit_coeff_step,
    fit_gamma_step,
    fitted_correlation,
    log_likelihood,
    objective,
    procrustes_align,
    sample_covariance,
    split_coefficients,
)


def _tiny_dataset(n=6, n_times=64, seed=0):
    rng = np.random.default_rng(seed)
    locations = rng.uniform(0.05, 0.95, size=(n, 2))
    sigma = build_covariance(locations, CovarianceParams(1.0, 0.3, 0.05))
    obs = np.linalg.cholesky(sigma) @ rng.standard_normal((n, n_times))
    return SpatioTemporalDataSet(locations=locations, observations=obs)


def test_dataset_validation():
    good = _tiny_dataset()
    assert good.n_sites == 6 and good.n_times == 64
    with pytest.raises(ValueError):
        SpatioTemporalDataSet(locations=np.array([[0.5, 1.5], [0.2, 0.2]]),
                              observations=np.zeros((2, 4)))
    with pytest.raises(ValueError):
        SpatioTemporalDataSet(locations=np.array([[0.5, 0.5], [0.5, 0.5]]),
                              observations=np.zeros((2, 4)))
    with pytest.raises(ValueError):  # row count mismatch
        SpatioTemporalDataSet(locations=good.locations,
                              observations=np.zeros((5, 4)))


def test_sample_covariance_hand_example():
    # two sites, two times: centered rows are (+-1) and (+-2)
    data = SpatioTemporalDataSet(
        locations=np.array([[0.1, 0.1], [0.9, 0.9]]),
        observations=np.array([[1.0, -1.0], [2.0, -2.0]]))
    s = sample_covariance(data)
    assert_allclose(s.matrix, [[1.0, 2.0], [2.0, 4.0]], rtol=0, atol=0)
    assert_allclose(s.mean, [0.0, 0.0], rtol=0, atol=0)


def test_sample_covariance_constant_series():
    data = SpatioTemporalDataSet(
        locations=np.array([[0.1, 0.1], [0.9, 0.9]]),
        observations=np.array([[3.0, 3.0, 3.0], [1.0, 2.0, 3.0]]))
    with pytest.warns(DegenerateSeriesWarning):
        sample_covariance(data)
    with pytest.raises(DegenerateSeriesError):
        sample_covariance(data, nugget_fitted=False)


def test_log_likelihood_matches_brute_force():
    rng = np.random.default_rng(42)
    for _ in range(20):
        n = int(rng.integers(2, 9))
        a = rng.standard_normal((n, n))
        sigma = a @ a.T + n * np.eye(n)
        b = rng.standard_normal((n, n))
        s = b @ b.T / n
        t = int(rng.integers(2, 500))
        got = log_likelihood(SampleCovariance(s, np.zeros(n)), sigma, t)
        sign, logdet = np.linalg.slogdet(sigma)
        want = (-0.5 * n * t * np.log(2 * np.pi) - 0.5 * t * logdet
                - 0.5 * t * np.trace(np.linalg.solve(sigma, s)))
        assert sign > 0
        assert_allclose(got, want, rtol=1e-10)


def test_log_likelihood_accepts_bare_matrix():
    sigma = np.array([[2.0, 0.5], [0.5, 1.0]])
    s = np.array([[1.0, 0.2], [0.2, 0.8]])
    a = log_likelihood(SampleCovariance(s, np.zeros(2)), sigma, 10)
    b = log_likelihood(s, sigma, 10)
    assert a == b


def test_log_likelihood_rejects_indefinite_sigma():
    sigma = np.array([[1.0, 2.0], [2.0, 1.0]])  # eigenvalues 3, -1
    with pytest.raises(NotPositiveDefiniteError):
        log_likelihood(np.eye(2), sigma, 5)


def test_empirical_correlation_unit_diagonal():
    obs = np.random.default_rng(1).standard_normal((5, 40))
    corr = empirical_correlation(obs)
    assert_allclose(np.diag(corr), 1.0, rtol=0, atol=0)
    assert_allclose(corr, corr.T, rtol=0, atol=0)
    assert np.all(np.abs(corr) <= 1.0 + 1e-12)


def test_mse_zero_when_matrices_match():
    obs = np.random.default_rng(3).standard_normal((6, 50))
    corr = empirical_correlation(obs)
    assert correlation_mse_between(corr, corr.copy()) == 0.0


def test_mse_counts_every_entry():
    a = np.zeros((3, 3))
    b = np.full((3, 3), 0.5)
    assert_allclose(correlation_mse_between(a, b), 0.25)


def test_fitted_correlation_values():
    coords = np.array([[0.0, 0.0], [0.3, 0.4]])
    corr = fitted_correlation(coords, theta=0.25)
    assert_allclose(corr[0, 1], np.exp(-0.5 / 0.25), rtol=1e-15)
    assert_allclose(np.diag(corr), 1.0, rtol=0, atol=0)


def test_procrustes_recovers_similarity_transform():
    rng = np.random.default_rng(8)
    ref = rng.uniform(0, 1, size=(30, 2))
    angle = 0.7
    rot = np.array([[np.cos(angle), -np.sin(angle)],
                    [np.sin(angle), np.cos(angle)]])
    moved = 2.5 * ref @ rot.T + np.array([3.0, -1.0])
    aligned = procrustes_align(moved, ref)
    assert_allclose(aligned, ref, atol=1e-12)


def test_procrustes_handles_reflection_by_rotation_only():
    # a mirrored cloud cannot be matched exactly by a proper rotation;
    # the alignment must still return finite coordinates
    rng = np.random.default_rng(9)
    ref = rng.uniform(0, 1, size=(12, 2))
    mirrored = ref @ np.diag([1.0, -1.0])
    aligned = procrustes_align(mirrored, ref)
    assert np.all(np.isfinite(aligned))


def test_split_coefficients_round_trip():
    flat = np.arange(12.0)
    c11, c12, c21, c22 = split_coefficients(flat, 3)
    assert_allclose(c11, [0, 1, 2])
    assert_allclose(c22, [9, 10, 11])
    with pytest.raises(ValueError):
        split_coefficients(np.arange(11.0), 3)


def test_deformation_from_coefficients_matches_context_coords():
    data = _tiny_dataset()
    config = FitConfig(family="mexican_hat", max_level=1)
    ctx = FitContext(data, config)
    coeffs = np.random.default_rng(5).uniform(-0.3, 0.3, config.n_coeffs)
    deform = deformation_from_coefficients(config, coeffs)
    assert_allclose(ctx.coords(coeffs), deform.evaluate(data.locations),
                    rtol=1e-12, atol=1e-13)


def test_objective_equals_explicit_likelihood():
    data = _tiny_dataset()
    config = FitConfig(family="shannon", max_level=1)
    coeffs = np.random.default_rng(6).uniform(-0.2, 0.2, config.n_coeffs)
    params = CovarianceParams(1.1, 0.28, 0.06)
    deform = deformation_from_coefficients(config, coeffs)
    sigma = build_covariance(deform.evaluate(data.locations), params)
    want = log_likelihood(sample_covariance(data), sigma, data.n_times)
    got = objective(coeffs, params, data, config)
    assert_allclose(got, want, rtol=1e-12)


def test_gamma_step_does_not_decrease_objective():
    data = _tiny_dataset()
    config = FitConfig(family="mexican_hat", max_level=1)
    coeffs = np.random.default_rng(7).uniform(-0.2, 0.2, config.n_coeffs)
    start = CovarianceParams(0.5, 0.4, 0.3)
    f0 = objective(coeffs, start, data, config)
    params = fit_gamma_step(coeffs, data, config, start)
    assert isinstance(params, CovarianceParams)
    assert objective(coeffs, params, data, config) >= f0 - 1e-12


def test_coeff_step_does_not_decrease_objective():
    data = _tiny_dataset()
    config = FitConfig(family="mexican_hat", max_level=1)
    coeffs = np.random.default_rng(8).uniform(-0.2, 0.2, config.n_coeffs)
    params = CovarianceParams(1.0, 0.3, 0.05)
    f0 = objective(coeffs, params, data, config)
    better = fit_coeff_step(params, data, config, coeffs)
    assert better.shape == coeffs.shape
    assert objective(better, params, data, config) >= f0 - 1e-12


def test_batched_likelihood_matches_single_path():
    data = _tiny_dataset()
    config = FitConfig(family="shannon", max_level=2)
    ctx = FitContext(data, config)
    params = CovarianceParams(1.0, 0.3, 0.05)
    rng = np.random.default_rng(10)
    batch = rng.uniform(-0.4, 0.4, size=(5, config.n_coeffs))
    vals = ctx.loglik_batch(batch, params)
    for i in range(5):
        assert_allclose(vals[i], ctx.loglik(batch[i], params), rtol=1e-10)


def test_fit_alternating_small_run():
    data = _tiny_dataset(n=8, n_times=256, seed=11)
    config = FitConfig(family="mexican_hat", max_level=0, outer_max_iters=6,
                       init_seed=3)
    result = fit_alternating(data, config)
    assert isinstance(result, FitResult)
    trace = np.asarray(result.loglik_trace)
    assert trace.size >= 3
    assert np.all(np.diff(trace) >= -1e-12 * np.maximum(1.0, np.abs(trace[:-1])))
    assert result.final_loglik == trace[-1]
    assert result.deformed_coords.shape == (8, 2)
    assert 0.0 <= result.mse <= 1.0
    assert_allclose(correlation_mse(data, result), result.mse, rtol=1e-14)
    # the result is self-describing
    blob = result.to_json_dict()
    assert blob["params"]["theta"] == result.params.theta
    assert "seconds" not in blob and "wall" not in str(blob.keys())


def test_fit_respects_zero_outer_iterations():
    data = _tiny_dataset(n=5, n_times=32, seed=12)
    config = FitConfig(family="mexican_hat", max_level=0, outer_max_iters=0)
    result = fit_alternating(data, config)
    assert result.iterations == 0
    assert not result.converged


def test_fit_restarts_pick_best_likelihood():
    data = _tiny_dataset(n=6, n_times=128, seed=13)
    base = dict(family="mexican_hat", max_level=0, outer_max_iters=3)
    single = fit_alternating(data, FitConfig(**base, restarts=1))
    double = fit_alternating(data, FitConfig(**base, restarts=2))
    assert double.final_loglik >= single.final_loglik - 1e-9
    assert double.restart_index in (0, 1)


def test_fit_result_json_round_trip():
    data = _tiny_dataset(n=5, n_times=64, seed=14)
    config = FitConfig(family="shannon", max_level=1, outer_max_iters=2)
    result = fit_alternating(data, config)
    import json

    blob = json.loads(result.to_json())
    assert blob["converged"] in (True, False)
    assert len(blob["coefficients"]) == config.n_coeffs
    assert blob["family"] == "shannon"
