"""Numerical kernel dispatch.

Prefers the compiled extension; falls back to the pure-numpy twin when
the extension is missing or ``WAVEDEFORM_PURE_PYTHON=1`` is set. Both
expose the same functions with the same semantics.
"""

import os

if os.environ.get("WAVEDEFORM_PURE_PYTHON"):
    from . import _fallback as impl
else:
    try:
        from . import _core as impl  # type: ignore[attr-defined]
    except ImportError:
        from . import _fallback as impl

IMPLEMENTATION = impl.IMPLEMENTATION
FAMILY_MEXICAN_HAT = impl.FAMILY_MEXICAN_HAT
FAMILY_SHANNON = impl.FAMILY_SHANNON
MEXHAT_NORM = impl.MEXHAT_NORM
SINC_SERIES_CUTOFF = impl.SINC_SERIES_CUTOFF

sinc = impl.sinc
mexican_hat = impl.mexican_hat
shannon_mother = impl.shannon_mother
basis_matrix = impl.basis_matrix
monotone_reduce = impl.monotone_reduce
pairwise_distances = impl.pairwise_distances
exp_cov_from_dists = impl.exp_cov_from_dists
tri_solve_sq_norms = impl.tri_solve_sq_norms
