# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled numerical kernels.

Twin of ``_fallback.py``: identical formulas and branch cutoffs, fused
loops instead of numpy temporaries. Keep both files in sync.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, sin, sqrt, fabs, hypot, pow, M_PI
from scipy.linalg.cython_blas cimport dtrsm

cnp.import_array()

IMPLEMENTATION = "compiled"

FAMILY_MEXICAN_HAT = 0
FAMILY_SHANNON = 1

cdef double _MEXHAT_NORM = 2.0 / (sqrt(3.0) * pow(M_PI, 0.25))
cdef double _SINC_CUTOFF = 1e-4

MEXHAT_NORM = _MEXHAT_NORM
SINC_SERIES_CUTOFF = _SINC_CUTOFF


cdef inline double _sinc(double x) nogil:
    cdef double px = M_PI * x
    cdef double px2
    if fabs(x) < _SINC_CUTOFF:
        px2 = px * px
        return 1.0 - px2 / 6.0 + px2 * px2 / 120.0
    return sin(px) / px


cdef inline double _mexhat(double x) nogil:
    cdef double x2 = x * x
    return _MEXHAT_NORM * (1.0 - x2) * exp(-0.5 * x2)


cdef inline double _shannon(double x) nogil:
    return 2.0 * _sinc(2.0 * x) - _sinc(x)


def sinc(x):
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    out = np.empty(xv.shape[0])
    cdef double[::1] ov = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(xv.shape[0]):
            ov[i] = _sinc(xv[i])
    return out


def mexican_hat(x):
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    out = np.empty(xv.shape[0])
    cdef double[::1] ov = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(xv.shape[0]):
            ov[i] = _mexhat(xv[i])
    return out


def shannon_mother(x):
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    out = np.empty(xv.shape[0])
    cdef double[::1] ov = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(xv.shape[0]):
            ov[i] = _shannon(xv[i])
    return out


def basis_matrix(int family, int max_level, bint include_father, x):
    """Design matrix of the wavelet basis; father column first, then
    dilated mothers level-major."""
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0]
    cdef int n_detail = (1 << (max_level + 1)) - 1
    cdef int p = n_detail + (1 if include_father else 0)
    out = np.empty((n, p))
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t i
    cdef int j, k, q
    cdef double scale, two_j, u
    with nogil:
        for i in range(n):
            q = 0
            if include_father:
                ov[i, 0] = _sinc(xv[i])
                q = 1
            for j in range(max_level + 1):
                scale = pow(2.0, 0.5 * j)
                two_j = <double>(1 << j)
                for k in range(1 << j):
                    u = two_j * xv[i] - k
                    if family == 0:
                        ov[i, q] = scale * _mexhat(u)
                    else:
                        ov[i, q] = scale * _shannon(u)
                    q += 1
    return out


def monotone_reduce(omega, w_ref, panel_half, panel_idx,
                    double c0, double c1):
    """Composite Gauss-Legendre accumulation of c0 + c1 * int_0^x exp(omega).

    See the fallback twin for the argument layout.
    """
    cdef double[::1] om = np.ascontiguousarray(omega, dtype=np.float64)
    cdef double[::1] wr = np.ascontiguousarray(w_ref, dtype=np.float64)
    cdef double[::1] hh = np.ascontiguousarray(panel_half, dtype=np.float64)
    cdef long[::1] pi = np.ascontiguousarray(panel_idx, dtype=np.int64)
    cdef Py_ssize_t k = wr.shape[0]
    cdef Py_ssize_t n_panels = hh.shape[0]
    cdef Py_ssize_t n = pi.shape[0]

    prefix_arr = np.empty(n_panels + 1)
    cdef double[::1] prefix = prefix_arr
    out = np.empty(n)
    cdef double[::1] ov = out
    cdef Py_ssize_t p, i, q
    cdef double acc
    with nogil:
        prefix[0] = 0.0
        for p in range(n_panels):
            acc = 0.0
            for q in range(k):
                acc += wr[q] * exp(om[p * k + q])
            prefix[p + 1] = prefix[p] + hh[p] * acc
        for i in range(n):
            ov[i] = c0 + c1 * prefix[pi[i]]
    return out


def pairwise_distances(coords):
    """Euclidean distance matrix; exactly symmetric with a zero diagonal."""
    cdef double[:, ::1] cv = np.ascontiguousarray(coords, dtype=np.float64)
    cdef Py_ssize_t n = cv.shape[0]
    out = np.zeros((n, n))
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t i, j
    cdef double d
    with nogil:
        for i in range(n):
            for j in range(i + 1, n):
                d = hypot(cv[i, 0] - cv[j, 0], cv[i, 1] - cv[j, 1])
                ov[i, j] = d
                ov[j, i] = d
    return out


def exp_cov_from_dists(dists, double nu, double theta, double nugget):
    """nu * exp(-d/theta) off the diagonal, nu + nugget on it."""
    cdef double[:, ::1] dv = np.ascontiguousarray(dists, dtype=np.float64)
    cdef Py_ssize_t n = dv.shape[0]
    out = np.empty((n, n))
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t i, j
    cdef double inv_theta = -1.0 / theta
    with nogil:
        for i in range(n):
            for j in range(n):
                ov[i, j] = nu * exp(dv[i, j] * inv_theta)
            ov[i, i] = nu + nugget
    return out


def tri_solve_sq_norms(l_batch, rhs):
    """||L_b^{-1} R||_F^2 per batch item, via BLAS dtrsm.

    The C-ordered memory of L is a column-major upper triangle, so the
    solve is phrased as op(A) X = B with uplo='U', trans='T'; the RHS is
    transposed into the work buffer so that its column-major view is R.
    """
    cdef double[:, :, ::1] lv = np.ascontiguousarray(l_batch, dtype=np.float64)
    cdef double[:, ::1] rv = np.ascontiguousarray(rhs, dtype=np.float64)
    cdef int n = lv.shape[1]
    cdef int k = rv.shape[1]
    cdef Py_ssize_t nb = lv.shape[0]
    out = np.empty(nb)
    cdef double[::1] ov = out
    work_arr = np.empty((k, n))
    cdef double[:, ::1] work = work_arr
    cdef Py_ssize_t b, i, j
    cdef double acc, one = 1.0
    cdef char side = b'L', uplo = b'U', trans = b'T', diag = b'N'
    with nogil:
        for b in range(nb):
            for i in range(n):
                for j in range(k):
                    work[j, i] = rv[i, j]
            dtrsm(&side, &uplo, &trans, &diag, &n, &k, &one,
                  &lv[b, 0, 0], &n, &work[0, 0], &n)
            acc = 0.0
            for i in range(k):
                for j in range(n):
                    acc += work[i, j] * work[i, j]
            ov[b] = acc
    return out
