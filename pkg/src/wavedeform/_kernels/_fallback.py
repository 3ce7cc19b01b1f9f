"""Pure-numpy implementations of the numerical kernels.

Selected when the compiled extension is unavailable or when
``WAVEDEFORM_PURE_PYTHON=1``. Every function here must stay numerically
interchangeable with its twin in ``_core.pyx`` (same formulas, same
branch cutoffs); the two are compared in tests/test_kernels.py.
"""

import numpy as np
from scipy.linalg import get_blas_funcs

IMPLEMENTATION = "python"

FAMILY_MEXICAN_HAT = 0
FAMILY_SHANNON = 1

# 2 / (sqrt(3) * pi^(1/4))
MEXHAT_NORM = 2.0 / (np.sqrt(3.0) * np.pi ** 0.25)

# below this, sin(pi x)/(pi x) is evaluated by its Taylor series
SINC_SERIES_CUTOFF = 1e-4


def sinc(x):
    """sin(pi x)/(pi x) with the removable singularity handled by series."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    px = np.pi * x
    small = np.abs(x) < SINC_SERIES_CUTOFF
    out = np.empty_like(x)
    ps = px[small]
    ps2 = ps * ps
    out[small] = 1.0 - ps2 / 6.0 + ps2 * ps2 / 120.0
    pb = px[~small]
    out[~small] = np.sin(pb) / pb
    return out


def mexican_hat(x):
    x = np.ascontiguousarray(x, dtype=np.float64)
    x2 = x * x
    return MEXHAT_NORM * (1.0 - x2) * np.exp(-0.5 * x2)


def shannon_mother(x):
    x = np.ascontiguousarray(x, dtype=np.float64)
    return 2.0 * sinc(2.0 * x) - sinc(x)


def basis_matrix(family, max_level, include_father, x):
    """Design matrix of the wavelet basis at points ``x``.

    Column order is canonical: the father column first when present,
    then the dilated mothers level-major (j = 0..max_level,
    k = 0..2^j - 1).
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    mother = mexican_hat if family == FAMILY_MEXICAN_HAT else shannon_mother
    n_detail = (1 << (max_level + 1)) - 1
    cols = []
    if include_father:
        cols.append(sinc(x))
    for j in range(max_level + 1):
        scale = 2.0 ** (0.5 * j)
        two_j = float(1 << j)
        for k in range(1 << j):
            cols.append(scale * mother(two_j * x - k))
    out = np.empty((x.shape[0], n_detail + int(include_father)))
    for q, col in enumerate(cols):
        out[:, q] = col
    return out


def monotone_reduce(omega, w_ref, panel_half, panel_idx, c0, c1):
    """Composite Gauss-Legendre accumulation of c0 + c1 * int_0^x exp(omega).

    omega holds the exponent at the panel nodes (panel-major,
    ``len(w_ref)`` nodes each); panel_half holds each panel's half-width.
    Entry i of the result is c0 + c1 times the sum of the first
    panel_idx[i] panel integrals. Every panel integral is positive, so
    the output never decreases along growing panel_idx.
    """
    k = w_ref.shape[0]
    e = np.exp(omega).reshape(-1, k)
    prefix = np.concatenate(([0.0], np.cumsum(panel_half * (e @ w_ref))))
    return c0 + c1 * prefix[panel_idx]


def pairwise_distances(coords):
    """Euclidean distance matrix; exactly symmetric with a zero diagonal."""
    coords = np.ascontiguousarray(coords, dtype=np.float64)
    n = coords.shape[0]
    out = np.zeros((n, n))
    iu, ju = np.triu_indices(n, k=1)
    d = np.hypot(coords[iu, 0] - coords[ju, 0], coords[iu, 1] - coords[ju, 1])
    out[iu, ju] = d
    out[ju, iu] = d
    return out


def exp_cov_from_dists(dists, nu, theta, nugget):
    """nu * exp(-d/theta) off the diagonal, nu + nugget on it."""
    sigma = nu * np.exp(dists / (-theta))
    np.fill_diagonal(sigma, nu + nugget)
    return sigma


def tri_solve_sq_norms(l_batch, rhs):
    """||L_b^{-1} R||_F^2 for each lower-triangular factor in the batch."""
    l_batch = np.ascontiguousarray(l_batch, dtype=np.float64)
    rhs = np.ascontiguousarray(rhs, dtype=np.float64)
    trsm, = get_blas_funcs(("trsm",), (rhs,))
    out = np.empty(l_batch.shape[0])
    for b in range(l_batch.shape[0]):
        x = trsm(1.0, l_batch[b], rhs, side=0, lower=1, trans_a=0, diag=0)
        out[b] = np.einsum("ij,ij->", x, x)
    return out
