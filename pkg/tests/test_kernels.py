"""The compiled kernel core and its pure-numpy fallback must agree.

Every comparison here runs against an independent numpy reference, and,
when the extension built, pairwise between the two implementations.
"""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from wavedeform import _kernels
from wavedeform._kernels import _fallback

try:
    from wavedeform._kernels import _core
    IMPLS = [_fallback, _core]
except ImportError:
    _core = None
    IMPLS = [_fallback]

needs_core = pytest.mark.skipif(_core is None, reason="extension not built")


def test_dispatch_names_an_implementation():
    assert _kernels.IMPLEMENTATION in ("compiled", "python")
    if _core is not None:
        assert _kernels.IMPLEMENTATION == "compiled"


@pytest.mark.parametrize("impl", IMPLS)
def test_sinc_series_branch(impl):
    x = np.array([0.0, 1e-9, 5e-5, -5e-5, 0.5, 1.0, 2.5, -3.0])
    want = np.array([1.0 if v == 0 else np.sin(np.pi * v) / (np.pi * v)
                     for v in x])
    assert_allclose(impl.sinc(x), want, rtol=1e-14, atol=1e-16)


@pytest.mark.parametrize("impl", IMPLS)
def test_mexican_hat_formula(impl):
    x = np.linspace(-4, 4, 81)
    want = (2.0 / (np.sqrt(3.0) * np.pi ** 0.25)
            * (1 - x ** 2) * np.exp(-0.5 * x ** 2))
    assert_allclose(impl.mexican_hat(x), want, rtol=1e-14)


@needs_core
def test_constants_match():
    assert _core.MEXHAT_NORM == _fallback.MEXHAT_NORM
    assert _core.FAMILY_MEXICAN_HAT == _fallback.FAMILY_MEXICAN_HAT
    assert _core.FAMILY_SHANNON == _fallback.FAMILY_SHANNON


@needs_core
@pytest.mark.parametrize("family,father", [(0, False), (1, True), (1, False)])
@pytest.mark.parametrize("max_level", [0, 2, 4])
def test_basis_matrix_implementations_agree(family, father, max_level):
    x = np.random.default_rng(1).uniform(0, 1, 64)
    a = _fallback.basis_matrix(family, max_level, father, x)
    b = _core.basis_matrix(family, max_level, father, x)
    assert a.shape == b.shape
    assert_allclose(a, b, rtol=1e-13, atol=1e-15)


@pytest.mark.parametrize("impl", IMPLS)
def test_monotone_reduce_reference(impl):
    """Panel accumulation equals a straightforward prefix-sum evaluation."""
    rng = np.random.default_rng(3)
    k = 8
    n_pts, n_panels = 11, 6
    w_ref = rng.uniform(0.1, 1.0, k)
    omega = rng.normal(size=n_panels * k)
    panel_half = rng.uniform(0.005, 0.025, size=n_panels)
    panel_idx = rng.integers(0, n_panels + 1, size=n_pts)
    got = impl.monotone_reduce(omega, w_ref, panel_half, panel_idx, 0.25, 1.5)
    sums = panel_half * (np.exp(omega).reshape(-1, k) @ w_ref)
    prefix = np.concatenate(([0.0], np.cumsum(sums)))
    want = 0.25 + 1.5 * prefix[panel_idx]
    assert_allclose(got, want, rtol=1e-13)


def test_monotone_reduce_never_decreases():
    """Positive panel integrals force a non-decreasing prefix, whatever
    the exponent values are."""
    rng = np.random.default_rng(13)
    k = 8
    n_panels = 40
    w_ref = np.polynomial.legendre.leggauss(k)[1]
    omega = rng.uniform(-12.0, 12.0, size=n_panels * k)
    panel_half = rng.uniform(1e-6, 0.025, size=n_panels)
    panel_idx = np.arange(n_panels + 1)
    for impl in IMPLS:
        vals = impl.monotone_reduce(omega, w_ref, panel_half, panel_idx,
                                    0.0, 1.0)
        assert np.all(np.diff(vals) >= 0.0)


@needs_core
def test_pairwise_distances_implementations_agree():
    coords = np.random.default_rng(4).uniform(-2, 2, size=(40, 2))
    a = _fallback.pairwise_distances(coords)
    b = _core.pairwise_distances(coords)
    assert_allclose(a, b, rtol=0, atol=0)
    assert_allclose(a, a.T, rtol=0, atol=0)
    # reference: dense hypot
    diff = coords[:, None, :] - coords[None, :, :]
    want = np.hypot(diff[..., 0], diff[..., 1])
    assert_allclose(a, want, rtol=1e-15, atol=1e-15)


@needs_core
def test_exp_cov_implementations_agree():
    rng = np.random.default_rng(5)
    coords = rng.uniform(0, 1, size=(25, 2))
    dists = _fallback.pairwise_distances(coords)
    a = _fallback.exp_cov_from_dists(dists, 1.3, 0.21, 0.07)
    b = _core.exp_cov_from_dists(dists, 1.3, 0.21, 0.07)
    # the two exp code paths may differ in the last ulp
    assert_allclose(a, b, rtol=5e-15, atol=0)
    want = 1.3 * np.exp(-dists / 0.21)
    np.fill_diagonal(want, 1.3 + 0.07)
    assert_allclose(a, want, rtol=1e-14)


@pytest.mark.parametrize("impl", IMPLS)
@pytest.mark.parametrize("n,k", [(5, 5), (7, 1), (6, 13), (40, 7)])
def test_tri_solve_sq_norms_reference(impl, n, k):
    """Rectangular right-hand sides (k != n) must be handled exactly."""
    rng = np.random.default_rng(100 * n + k)
    batch = 4
    ls = np.empty((batch, n, n))
    for b in range(batch):
        a = rng.standard_normal((n, n))
        ls[b] = np.linalg.cholesky(a @ a.T + n * np.eye(n))
    rhs = rng.standard_normal((n, k))
    got = impl.tri_solve_sq_norms(ls, rhs)
    want = np.array([
        np.sum(np.linalg.solve(ls[b], rhs) ** 2) for b in range(batch)])
    assert_allclose(got, want, rtol=1e-10)


@needs_core
def test_tri_solve_implementations_agree():
    rng = np.random.default_rng(8)
    n, k = 30, 12
    ls = np.empty((3, n, n))
    for b in range(3):
        a = rng.standard_normal((n, n))
        ls[b] = np.linalg.cholesky(a @ a.T + n * np.eye(n))
    rhs = rng.standard_normal((n, k))
    assert_allclose(_core.tri_solve_sq_norms(ls, rhs),
                    _fallback.tri_solve_sq_norms(ls, rhs), rtol=1e-12)


def test_pure_python_env_override():
    """WAVEDEFORM_PURE_PYTHON forces the fallback in a fresh process."""
    import subprocess
    import sys

    code = ("import wavedeform; "
            "print(wavedeform.KERNEL_IMPLEMENTATION)")
    out = subprocess.run([sys.executable, "-c", code],
                         env={"WAVEDEFORM_PURE_PYTHON": "1", "PATH": "/usr/bin:/bin"},
                         capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
