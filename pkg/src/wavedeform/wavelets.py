"""Analytic wavelet families and finite expansions.

Two continuous families are supported, both given by closed forms:

* Mexican hat: psi(x) = (2 / (sqrt(3) pi^(1/4))) (1 - x^2) exp(-x^2/2).
  There is no father function; expansions use detail terms only.
* Shannon: psi(x) = 2 sinc(2x) - sinc(x), phi(x) = sinc(x), with
  sinc(x) = sin(pi x)/(pi x) and sinc(0) = 1.

Dyadic dilations/translations follow psi_{j,k}(x) = 2^(j/2) psi(2^j x - k).
A finite expansion holds one coefficient per (j, k) with j in [0, J] and
k in [0, 2^j - 1], plus a father coefficient for Shannon. The canonical
flat ordering (used by the optimizer and by file formats) is the father
coefficient first, then detail coefficients level-major.
"""

import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.special import sici

from . import _kernels

MEXHAT_NORM = _kernels.MEXHAT_NORM


class WaveletFamily(str, Enum):
    MEXICAN_HAT = "mexican_hat"
    SHANNON = "shannon"

    @property
    def has_father(self):
        return self is WaveletFamily.SHANNON

    @property
    def kernel_code(self):
        if self is WaveletFamily.MEXICAN_HAT:
            return _kernels.FAMILY_MEXICAN_HAT
        return _kernels.FAMILY_SHANNON


class NoFatherWaveletError(ValueError):
    """Raised when a father-function evaluation is requested for a family
    that has none (Mexican hat)."""


def _eval_pointwise(func, x):
    arr = np.atleast_1d(np.asarray(x, dtype=np.float64))
    out = func(arr.ravel()).reshape(arr.shape)
    if np.isscalar(x) or np.ndim(x) == 0:
        return float(out[()] if out.ndim == 0 else out[0])
    return out


def sinc(x):
    """Normalized sinc, sin(pi x)/(pi x), exact at the removable singularity."""
    return _eval_pointwise(_kernels.sinc, x)


def eval_mother(family, x):
    """Mother wavelet psi of the given family at ``x`` (scalar or array)."""
    family = WaveletFamily(family)
    if family is WaveletFamily.MEXICAN_HAT:
        return _eval_pointwise(_kernels.mexican_hat, x)
    return _eval_pointwise(_kernels.shannon_mother, x)


def eval_father(family, x):
    """Father wavelet phi; only the Shannon family has one."""
    family = WaveletFamily(family)
    if not family.has_father:
        raise NoFatherWaveletError("the Mexican hat family has no father wavelet")
    return _eval_pointwise(_kernels.sinc, x)


def _check_dilation_index(j, k):
    if j < 0 or not (0 <= k <= (1 << j) - 1):
        raise ValueError(
            f"dilation index out of range: need j >= 0 and 0 <= k <= 2^j - 1, got (j={j}, k={k})"
        )


def eval_dilated(family, j, k, x, kind="mother"):
    """2^(j/2) psi(2^j x - k) (or phi for kind='father')."""
    _check_dilation_index(j, k)
    base = eval_mother if kind == "mother" else eval_father
    scale = 2.0 ** (0.5 * j)
    if np.isscalar(x) or np.ndim(x) == 0:
        return scale * base(family, (1 << j) * float(x) - k)
    return scale * base(family, (1 << j) * np.asarray(x, dtype=np.float64) - k)


def n_detail_coeffs(max_level):
    """Number of detail coefficients for levels 0..max_level: 2^(J+1) - 1."""
    return (1 << (max_level + 1)) - 1


def expansion_size(family, max_level):
    """Length of the canonical flat coefficient vector."""
    family = WaveletFamily(family)
    return n_detail_coeffs(max_level) + int(family.has_father)


def basis_matrix(family, max_level, x):
    """Design matrix B with B[i, q] = basis_q(x_i), canonical column order."""
    family = WaveletFamily(family)
    x = np.ascontiguousarray(np.atleast_1d(x), dtype=np.float64)
    return _kernels.basis_matrix(family.kernel_code, max_level, family.has_father, x)


def _mexhat_antideriv(t):
    # d/dt [norm * t * exp(-t^2/2)] = norm * (1 - t^2) exp(-t^2/2)
    return MEXHAT_NORM * t * np.exp(-0.5 * t * t)


def _si(t):
    return sici(t)[0]


def _shannon_mother_antideriv(t):
    # integral of 2 sinc(2u) - sinc(u)
    return (_si(2.0 * np.pi * t) - _si(np.pi * t)) / np.pi


def _sinc_antideriv(t):
    return _si(np.pi * t) / np.pi


def integral_basis_matrix(family, max_level, x):
    """Matrix A with A[i, q] = integral of basis_q over [0, x_i].

    Uses the closed-form antiderivatives (Gaussian form for the Mexican
    hat, sine-integral form for Shannon), so no quadrature error enters:
    int_0^x psi_{j,k} = 2^(-j/2) [Psi(2^j x - k) - Psi(-k)].
    """
    family = WaveletFamily(family)
    x = np.ascontiguousarray(np.atleast_1d(x), dtype=np.float64)
    if family is WaveletFamily.MEXICAN_HAT:
        anti = _mexhat_antideriv
    else:
        anti = _shannon_mother_antideriv
    p = expansion_size(family, max_level)
    out = np.empty((x.shape[0], p))
    q = 0
    if family.has_father:
        out[:, 0] = _sinc_antideriv(x) - _sinc_antideriv(0.0)
        q = 1
    for j in range(max_level + 1):
        scale = 2.0 ** (-0.5 * j)
        two_j = float(1 << j)
        for k in range(1 << j):
            out[:, q] = scale * (anti(two_j * x - k) - anti(-float(k)))
            q += 1
    return out


@dataclass(frozen=True)
class WaveletExpansion:
    """Finite expansion omega(x) = [c0 phi(x)] + sum_{j,k} c_{j,k} psi_{j,k}(x).

    ``coeffs`` is the canonical flat vector: father coefficient first
    (Shannon only), then detail coefficients level-major.
    """

    family: WaveletFamily
    max_level: int
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "family", WaveletFamily(self.family))
        if self.max_level < 0:
            raise ValueError("max_level must be >= 0")
        coeffs = np.array(self.coeffs, dtype=np.float64, copy=True, order="C")
        expected = expansion_size(self.family, self.max_level)
        if coeffs.shape != (expected,):
            raise ValueError(
                f"expected {expected} coefficients for {self.family.value} "
                f"J={self.max_level}, got shape {coeffs.shape}"
            )
        if not np.all(np.isfinite(coeffs)):
            raise ValueError("coefficients must be finite")
        coeffs.flags.writeable = False
        object.__setattr__(self, "coeffs", coeffs)

    @classmethod
    def zeros(cls, family, max_level):
        family = WaveletFamily(family)
        return cls(family, max_level, np.zeros(expansion_size(family, max_level)))

    @classmethod
    def from_levels(cls, family, levels, father_coeff=None):
        """Build from per-level coefficient lists [[level 0], [level 1], ...]."""
        family = WaveletFamily(family)
        flat = []
        if family.has_father:
            flat.append(0.0 if father_coeff is None else float(father_coeff))
        elif father_coeff is not None:
            raise NoFatherWaveletError("Mexican hat expansions take no father coefficient")
        for j, level in enumerate(levels):
            if len(level) != (1 << j):
                raise ValueError(f"level {j} must hold 2^{j} coefficients, got {len(level)}")
            flat.extend(float(c) for c in level)
        return cls(family, len(levels) - 1, np.asarray(flat))

    @property
    def father_coeff(self):
        if not self.family.has_father:
            return None
        return float(self.coeffs[0])

    @property
    def detail_coeffs(self):
        return self.coeffs[1:] if self.family.has_father else self.coeffs

    def level(self, j):
        """Detail coefficients of level j."""
        if not 0 <= j <= self.max_level:
            raise ValueError(f"level {j} outside [0, {self.max_level}]")
        start = (1 << j) - 1
        return self.detail_coeffs[start:start + (1 << j)]

    def __call__(self, x):
        return self.evaluate(x)

    def evaluate(self, x):
        """omega(x); linear in the coefficients."""
        arr = np.atleast_1d(np.asarray(x, dtype=np.float64))
        vals = basis_matrix(self.family, self.max_level, arr.ravel()) @ self.coeffs
        vals = vals.reshape(arr.shape)
        if np.isscalar(x) or np.ndim(x) == 0:
            return float(vals[0])
        return vals

    def antiderivative(self, x):
        """W(x) = integral of omega over [0, x], in closed form."""
        arr = np.atleast_1d(np.asarray(x, dtype=np.float64))
        vals = integral_basis_matrix(self.family, self.max_level, arr.ravel()) @ self.coeffs
        vals = vals.reshape(arr.shape)
        if np.isscalar(x) or np.ndim(x) == 0:
            return float(vals[0])
        return vals

    def to_json_dict(self):
        out = {
            "family": self.family.value,
            "J": self.max_level,
            "c": [[float(c) for c in self.level(j)] for j in range(self.max_level + 1)],
        }
        if self.family.has_father:
            out["c0"] = self.father_coeff
        return out

    @classmethod
    def from_json_dict(cls, obj):
        return cls.from_levels(obj["family"], obj["c"], father_coeff=obj.get("c0"))

    def to_json(self):
        return json.dumps(self.to_json_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls.from_json_dict(json.loads(text))
