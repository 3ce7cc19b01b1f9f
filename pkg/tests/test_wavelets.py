"""Wavelet evaluation, indexing, and expansion bookkeeping."""

import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from wavedeform.wavelets import (
    NoFatherWaveletError,
    WaveletExpansion,
    WaveletFamily,
    basis_matrix,
    eval_dilated,
    eval_father,
    eval_mother,
    expansion_size,
    integral_basis_matrix,
    n_detail_coeffs,
)

import _oracles


def test_mexican_hat_mother_peak_value():
    assert_allclose(eval_mother("mexican_hat", 0.0), _oracles.PSI_MEXHAT_AT_0,
                    rtol=1e-15)


def test_mexican_hat_mother_zeros_at_unit():
    # (1 - x^2) factor vanishes at +-1
    assert eval_mother("mexican_hat", 1.0) == 0.0
    assert eval_mother("mexican_hat", -1.0) == 0.0


def test_mexican_hat_is_even():
    x = np.linspace(-4.0, 4.0, 41)
    assert_allclose(eval_mother("mexican_hat", x),
                    eval_mother("mexican_hat", -x), rtol=0, atol=0)


def test_shannon_father_values():
    assert eval_father("shannon", 0.0) == 1.0
    assert_allclose(eval_father("shannon", 0.5), _oracles.SINC_AT_HALF,
                    rtol=1e-15)
    # sinc vanishes at every nonzero integer
    assert_allclose(eval_father("shannon", np.arange(1, 6, dtype=float)),
                    0.0, atol=1e-15)


def test_shannon_mother_from_sinc_pair():
    # psi(x) = 2 sinc(2x) - sinc(x), checked directly on a grid
    x = np.linspace(-3.0, 3.0, 61)
    expected = 2.0 * eval_father("shannon", 2.0 * x) - eval_father("shannon", x)
    assert_allclose(eval_mother("shannon", x), expected, rtol=0, atol=1e-15)


def test_mexican_hat_has_no_father():
    with pytest.raises(NoFatherWaveletError):
        eval_father("mexican_hat", 0.3)


def test_family_accepts_aliases():
    assert WaveletFamily("mexican_hat") is WaveletFamily.MEXICAN_HAT
    assert WaveletFamily("shannon") is WaveletFamily.SHANNON
    with pytest.raises(ValueError):
        WaveletFamily("haar")


def test_dilated_matches_manual_scaling():
    x = np.linspace(0.0, 1.0, 17)
    for j, k in [(0, 0), (1, 1), (3, 5)]:
        expected = 2.0 ** (j / 2.0) * eval_mother("shannon", 2.0 ** j * x - k)
        assert_allclose(eval_dilated("shannon", j, k, x), expected,
                        rtol=0, atol=0)


def test_dilated_rejects_out_of_range_shift():
    with pytest.raises(ValueError):
        eval_dilated("mexican_hat", 1, 2, 0.5)  # k must be < 2^j
    with pytest.raises(ValueError):
        eval_dilated("mexican_hat", 1, -1, 0.5)
    with pytest.raises(ValueError):
        eval_dilated("mexican_hat", -1, 0, 0.5)


def test_expansion_sizes():
    # 2^(J+1) - 1 detail functions, plus a father term for shannon
    assert n_detail_coeffs(3) == 15
    assert expansion_size("mexican_hat", 3) == 15
    assert expansion_size("shannon", 3) == 16
    assert expansion_size("mexican_hat", 0) == 1
    assert expansion_size("shannon", 0) == 2


def test_basis_matrix_column_order():
    """Columns follow father first (when present), then levels j=0..J
    with shifts k=0..2^j-1 inside each level."""
    x = np.linspace(0.0, 1.0, 9)
    mat = basis_matrix("shannon", 1, x)
    assert mat.shape == (9, 4)
    assert_allclose(mat[:, 0], eval_father("shannon", x))
    assert_allclose(mat[:, 1], eval_dilated("shannon", 0, 0, x))
    assert_allclose(mat[:, 2], eval_dilated("shannon", 1, 0, x))
    assert_allclose(mat[:, 3], eval_dilated("shannon", 1, 1, x))

    mat = basis_matrix("mexican_hat", 1, x)
    assert mat.shape == (9, 3)
    assert_allclose(mat[:, 0], eval_dilated("mexican_hat", 0, 0, x))


def test_expansion_evaluate_is_linear_in_coefficients():
    rng = np.random.default_rng(7)
    x = np.linspace(0.0, 1.0, 33)
    for family in ("mexican_hat", "shannon"):
        p = expansion_size(family, 2)
        a = rng.normal(size=p)
        b = rng.normal(size=p)
        ea = WaveletExpansion(family, 2, a)
        eb = WaveletExpansion(family, 2, b)
        eab = WaveletExpansion(family, 2, 2.0 * a - 3.0 * b)
        assert_allclose(eab.evaluate(x), 2.0 * ea.evaluate(x) - 3.0 * eb.evaluate(x),
                        rtol=1e-12, atol=1e-12)


def test_expansion_oracle_value():
    expansion = WaveletExpansion("mexican_hat", 1, [0.25, 0.01, -0.036])
    assert_allclose(expansion.evaluate(0.5), _oracles.OMEGA_LEVEL1_AT_HALF,
                    rtol=1e-14)


def test_expansion_level_slices():
    expansion = WaveletExpansion("shannon", 2, np.arange(8.0))
    assert expansion.father_coeff == 0.0
    assert_allclose(expansion.level(0), [1.0])
    assert_allclose(expansion.level(1), [2.0, 3.0])
    assert_allclose(expansion.level(2), [4.0, 5.0, 6.0, 7.0])
    with pytest.raises(ValueError):
        expansion.level(3)


def test_expansion_from_levels_round_trip():
    levels = [np.array([0.3]), np.array([-0.1, 0.2])]
    expansion = WaveletExpansion.from_levels("shannon", levels, father_coeff=0.7)
    assert expansion.max_level == 1
    assert expansion.father_coeff == 0.7
    assert_allclose(expansion.level(1), [-0.1, 0.2])


def test_antiderivative_matches_quadrature():
    """Closed-form antiderivatives agree with brute numerical integration."""
    from scipy.integrate import quad

    rng = np.random.default_rng(3)
    for family in ("mexican_hat", "shannon"):
        p = expansion_size(family, 2)
        expansion = WaveletExpansion(family, 2, rng.uniform(-1, 1, p))
        for x in (0.2, 0.55, 1.0):
            val, err = quad(lambda u: float(expansion.evaluate(u)), 0.0, x,
                            limit=200)
            assert_allclose(expansion.antiderivative(x), val,
                            rtol=1e-9, atol=max(1e-10, 2 * err))


def test_antiderivative_vanishes_at_origin():
    expansion = WaveletExpansion("shannon", 1, [0.4, -0.2, 0.1, 0.05])
    assert expansion.antiderivative(0.0) == 0.0


def test_json_round_trip():
    rng = np.random.default_rng(11)
    for family in ("mexican_hat", "shannon"):
        p = expansion_size(family, 2)
        expansion = WaveletExpansion(family, 2, rng.normal(size=p))
        again = WaveletExpansion.from_json(expansion.to_json())
        assert again.family == expansion.family
        assert again.max_level == expansion.max_level
        assert_allclose(again.coeffs, expansion.coeffs, rtol=0, atol=0)
        # the serialized form is plain JSON
        blob = json.loads(expansion.to_json())
        assert blob["J"] == 2


def test_integral_basis_matrix_matches_antiderivative():
    x = np.array([0.1, 0.4, 0.9])
    for family in ("mexican_hat", "shannon"):
        p = expansion_size(family, 1)
        mat = integral_basis_matrix(family, 1, x)
        assert mat.shape == (3, p)
        coeffs = np.linspace(0.5, -0.5, p)
        expansion = WaveletExpansion(family, 1, coeffs)
        assert_allclose(mat @ coeffs, [expansion.antiderivative(v) for v in x],
                        rtol=1e-12, atol=1e-12)


def test_coefficients_are_copied_and_frozen():
    coeffs = np.zeros(3)
    expansion = WaveletExpansion("mexican_hat", 1, coeffs)
    coeffs[0] = 99.0
    assert expansion.coeffs[0] == 0.0
    with pytest.raises((ValueError, AttributeError)):
        expansion.coeffs[0] = 1.0
