"""Strictly monotone maps built from an exponentiated integrand.

A scalar component has the form

    g(x) = C0 + C1 * int_0^x exp(q(u)) du,

where q is either the expansion omega itself (``single`` variant) or its
antiderivative W(u) = int_0^u omega (``double`` variant). Either way the
integrand is positive, so g is strictly increasing regardless of the
coefficients. Four such components combine additively into a planar map

    y1 = g11(x1) + g12(x2),   y2 = g21(x1) + g22(x2),

which is increasing in each input coordinate separately. All maps operate
on the unit interval/square; callers normalize coordinates first.

Integrals use a composite Gauss-Legendre rule on panels cut at the sorted
evaluation points, so each value is a prefix sum of strictly positive
panel integrals: the computed values inherit the monotonicity of the
exact ones, and repeated evaluations are deterministic and smooth in the
coefficients. When omega is a wavelet expansion, the inner integral of
the ``double`` variant is evaluated from the closed-form antiderivatives
instead of a nested rule.
"""

import functools
import json
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .wavelets import WaveletExpansion, basis_matrix, integral_basis_matrix

VARIANT_SINGLE = "single"
VARIANT_DOUBLE = "double"
_VARIANTS = (VARIANT_SINGLE, VARIANT_DOUBLE)


class DomainError(ValueError):
    """Raised when an evaluation point leaves the unit interval/square."""


@functools.lru_cache(maxsize=8)
def _gauss_legendre(n):
    nodes, weights = np.polynomial.legendre.leggauss(n)
    return nodes, weights


@dataclass(frozen=True)
class QuadratureConfig:
    """Composite Gauss-Legendre settings: panel width and nodes per panel."""

    nodes_per_panel: int = 16
    panel_width: float = 0.05

    def __post_init__(self):
        if self.nodes_per_panel < 2:
            raise ValueError("nodes_per_panel must be >= 2")
        if not self.panel_width > 0.0:
            raise ValueError("panel_width must be positive")

    @property
    def reference_rule(self):
        return _gauss_legendre(self.nodes_per_panel)


DEFAULT_QUADRATURE = QuadratureConfig()


class _PanelGrid:
    """Quadrature nodes for prefix integrals int_0^{x_i} at fixed points.

    The sorted points cut [0, max x] into segments, and each segment is
    covered by equal panels no wider than ``panel_width``. Every point's
    integral is then a plain prefix sum of whole panels, so a positive
    integrand yields values that never decrease with x; there is no
    per-point partial panel whose approximation error could outweigh a
    tiny true increment between neighbouring points. Points may come in
    any order; duplicates share a prefix.
    """

    def __init__(self, x, config):
        x = np.ascontiguousarray(x, dtype=np.float64)
        if x.ndim != 1:
            raise ValueError("evaluation points must form a 1-D array")
        ref_nodes, ref_weights = config.reference_rule
        order = np.argsort(x, kind="stable")
        xs = x[order]
        panel_idx = np.zeros(x.shape[0], dtype=np.intp)
        if x.size:
            starts = np.concatenate(([0.0], xs[:-1]))
            widths = xs - starts
            counts = np.zeros(x.shape[0], dtype=np.intp)
            grew = widths > 0.0
            counts[grew] = np.ceil(widths[grew] / config.panel_width).astype(np.intp)
            sub_width = np.divide(widths, counts,
                                  out=np.zeros_like(widths), where=grew)
            first = np.concatenate(([0], np.cumsum(counts[:-1])))
            local = np.arange(int(counts.sum())) - np.repeat(first, counts)
            sub_rep = np.repeat(sub_width, counts)
            centers = np.repeat(starts, counts) + (local + 0.5) * sub_rep
            panel_half = 0.5 * sub_rep
            panel_idx[order] = np.cumsum(counts)
        else:
            centers = panel_half = np.empty(0)

        self.full_nodes = (centers[:, None]
                           + panel_half[:, None] * ref_nodes[None, :]).ravel()
        self.ref_weights = ref_weights
        self.panel_half = panel_half
        self.panel_idx = panel_idx
        self.n_points = x.shape[0]

    def reduce_plain(self, vals):
        """Prefix integrals of a plain integrand (no exponential)."""
        k = self.ref_weights.shape[0]
        panel_sums = self.panel_half * (np.reshape(vals, (-1, k)) @ self.ref_weights)
        prefix = np.concatenate(([0.0], np.cumsum(panel_sums)))
        return prefix[self.panel_idx]


def integrate_prefix(func, x, config=DEFAULT_QUADRATURE):
    """int_0^{x_i} func(u) du for each point, via the shared panel rule.

    ``func`` must accept a 1-D float array and return one of equal shape.
    """
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if np.any(x < 0.0):
        raise DomainError("prefix integrals start at 0; points must be >= 0")
    grid = _PanelGrid(x, config)
    return grid.reduce_plain(np.asarray(func(grid.full_nodes), dtype=np.float64))


def _check_unit_interval(x):
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise DomainError("evaluation points must lie in [0, 1]")


def _omega_callable(omega):
    """Normalize omega to a vectorized callable; scalars mean constants."""
    if isinstance(omega, WaveletExpansion):
        return omega.evaluate
    if callable(omega):
        return lambda t: np.asarray(omega(t), dtype=np.float64)
    const = float(omega)
    return lambda t: np.full_like(t, const)


@dataclass(frozen=True)
class MonotoneFunction:
    """g(x) = c0 + c1 * int_0^x exp(q(u)) du with q = omega or its integral.

    ``omega`` is a WaveletExpansion, a vectorized callable on [0, 1], or a
    plain number (meaning the constant function). c1 must be positive, so
    g is strictly increasing for every choice of omega.
    """

    omega: object
    variant: str = VARIANT_SINGLE
    quadrature: QuadratureConfig = DEFAULT_QUADRATURE
    c0: float = 0.0
    c1: float = 1.0

    def __post_init__(self):
        if self.variant not in _VARIANTS:
            raise ValueError(f"variant must be one of {_VARIANTS}, got {self.variant!r}")
        if not self.c1 > 0.0:
            raise ValueError("c1 must be positive")

    def _integrand_log(self, t):
        """q(t): what gets exponentiated under the outer integral."""
        omega_at = _omega_callable(self.omega)
        if self.variant == VARIANT_SINGLE:
            return omega_at(t)
        if isinstance(self.omega, WaveletExpansion):
            return self.omega.antiderivative(t)
        if not callable(self.omega):
            return float(self.omega) * t
        return integrate_prefix(omega_at, t, self.quadrature)

    def evaluate(self, x):
        arr = np.atleast_1d(np.asarray(x, dtype=np.float64))
        _check_unit_interval(arr)
        flat = arr.ravel()
        grid = _PanelGrid(flat, self.quadrature)
        q = self._integrand_log(grid.full_nodes)
        vals = _kernels.monotone_reduce(
            np.ascontiguousarray(q), np.ascontiguousarray(grid.ref_weights),
            np.ascontiguousarray(grid.panel_half),
            np.ascontiguousarray(grid.panel_idx), self.c0, self.c1,
        ).reshape(arr.shape)
        if np.isscalar(x) or np.ndim(x) == 0:
            return float(vals[0])
        return vals

    __call__ = evaluate

    def derivative(self, x):
        """g'(x) = c1 * exp(q(x)); strictly positive."""
        arr = np.atleast_1d(np.asarray(x, dtype=np.float64))
        _check_unit_interval(arr)
        vals = self.c1 * np.exp(self._integrand_log(arr.ravel())).reshape(arr.shape)
        if np.isscalar(x) or np.ndim(x) == 0:
            return float(vals[0])
        return vals


def _expansion_or_error(component, name):
    if not isinstance(component.omega, WaveletExpansion):
        raise TypeError(f"component {name} does not hold a wavelet expansion")
    return component.omega


@dataclass(frozen=True)
class Deformation:
    """Additive planar map from four strictly increasing components.

    g11 and g12 feed the first output coordinate, g21 and g22 the second;
    the second index names the input axis each component consumes.
    """

    g11: MonotoneFunction
    g12: MonotoneFunction
    g21: MonotoneFunction
    g22: MonotoneFunction

    @classmethod
    def from_expansions(cls, e11, e12, e21, e22, variant=VARIANT_SINGLE,
                        quadrature=DEFAULT_QUADRATURE):
        make = lambda e: MonotoneFunction(e, variant=variant, quadrature=quadrature)
        return cls(make(e11), make(e12), make(e21), make(e22))

    @property
    def components(self):
        return {"g11": self.g11, "g12": self.g12, "g21": self.g21, "g22": self.g22}

    def evaluate(self, points):
        """Map points (n, 2) in the unit square to the deformed plane."""
        pts = np.asarray(points, dtype=np.float64)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError("points must have shape (n, 2)")
        x1, x2 = pts[:, 0], pts[:, 1]
        out = np.column_stack([
            self.g11(x1) + self.g12(x2),
            self.g21(x1) + self.g22(x2),
        ])
        if single:
            return tuple(float(v) for v in out[0])
        return out

    __call__ = evaluate

    def jacobian(self, x):
        """(J, det J) at one point; every entry of J is positive."""
        x1, x2 = float(x[0]), float(x[1])
        jac = np.array([
            [self.g11.derivative(x1), self.g12.derivative(x2)],
            [self.g21.derivative(x1), self.g22.derivative(x2)],
        ])
        det = jac[0, 0] * jac[1, 1] - jac[0, 1] * jac[1, 0]
        return jac, float(det)

    def injectivity_report(self, grid_size):
        """Scan det J on a uniform grid; positivity everywhere certifies
        local injectivity, and a sign change flags a folded map."""
        if grid_size < 2:
            raise ValueError("grid_size must be >= 2")
        t = np.linspace(0.0, 1.0, grid_size)
        d11 = self.g11.derivative(t)
        d21 = self.g21.derivative(t)
        d12 = self.g12.derivative(t)
        d22 = self.g22.derivative(t)
        dets = np.outer(d11, d22) - np.outer(d21, d12)
        min_det = float(dets.min())
        max_det = float(dets.max())
        return {
            "min_det": min_det,
            "max_det": max_det,
            "sign_changes": bool(min_det < 0.0 < max_det),
        }

    def to_json_dict(self):
        ref = self.g11
        out = {
            "variant": ref.variant,
            "quadrature": {
                "nodes_per_panel": ref.quadrature.nodes_per_panel,
                "panel_width": ref.quadrature.panel_width,
            },
        }
        for name, comp in self.components.items():
            out[name] = _expansion_or_error(comp, name).to_json_dict()
        return out

    @classmethod
    def from_json_dict(cls, obj):
        quad = QuadratureConfig(**obj.get("quadrature", {}))
        expansions = [WaveletExpansion.from_json_dict(obj[name])
                      for name in ("g11", "g12", "g21", "g22")]
        return cls.from_expansions(*expansions,
                                   variant=obj.get("variant", VARIANT_SINGLE),
                                   quadrature=quad)

    def to_json(self):
        return json.dumps(self.to_json_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls.from_json_dict(json.loads(text))


class MonotoneEvalPlan:
    """Fixed-point evaluator for one component during fitting.

    The evaluation points and the wavelet layout are frozen up front, so
    the basis can be evaluated once at every quadrature node. After that,
    each coefficient vector costs two small matrix products, an
    exponential, and the panel reduction.
    """

    def __init__(self, family, max_level, points, variant=VARIANT_SINGLE,
                 quadrature=DEFAULT_QUADRATURE, c0=0.0, c1=1.0):
        if variant not in _VARIANTS:
            raise ValueError(f"variant must be one of {_VARIANTS}, got {variant!r}")
        points = np.ascontiguousarray(points, dtype=np.float64)
        _check_unit_interval(points)
        grid = _PanelGrid(points, quadrature)
        design = integral_basis_matrix if variant == VARIANT_DOUBLE else basis_matrix
        self._design = np.ascontiguousarray(design(family, max_level, grid.full_nodes))
        self._ref_weights = np.ascontiguousarray(grid.ref_weights)
        self._panel_half = np.ascontiguousarray(grid.panel_half)
        self._panel_idx = np.ascontiguousarray(grid.panel_idx)
        self.family = family
        self.max_level = max_level
        self.variant = variant
        self.quadrature = quadrature
        self.c0 = float(c0)
        self.c1 = float(c1)
        self.n_points = grid.n_points
        self.n_coeffs = self._design.shape[1]

    def values(self, coeffs):
        """g at the fixed points for one coefficient vector."""
        coeffs = np.ascontiguousarray(coeffs, dtype=np.float64)
        return _kernels.monotone_reduce(
            self._design @ coeffs, self._ref_weights,
            self._panel_half, self._panel_idx, self.c0, self.c1,
        )

    def values_batch(self, coeff_batch):
        """g at the fixed points for a stack of coefficient vectors."""
        coeff_batch = np.ascontiguousarray(coeff_batch, dtype=np.float64)
        m = coeff_batch.shape[0]
        k = self._ref_weights.shape[0]
        e = np.exp(coeff_batch @ self._design.T).reshape(m, -1, k)
        panel_sums = self._panel_half * (e @ self._ref_weights)
        prefix = np.concatenate(
            [np.zeros((m, 1)), np.cumsum(panel_sums, axis=1)], axis=1)
        return self.c0 + self.c1 * prefix[:, self._panel_idx]
