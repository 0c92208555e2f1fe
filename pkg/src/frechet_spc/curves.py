"""Sampled curves on a uniform grid over [0, 1].

Curves are stored as node values and evaluated by linear interpolation.
Arguments outside [0, 1] take the nearest end value (constant extension),
which keeps warped evaluations ``f((t - zeta) / kappa)`` continuous in the
warp parameters. All integrals use the trapezoid rule on the grid, so the
closed-form amplitude fits elsewhere in the package are exact minimisers of
the discrete objective.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DomainError, ShapeError

DEFAULT_GRID_POINTS = 101


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid of ``m`` points from 0 to 1 inclusive."""

    m: int = DEFAULT_GRID_POINTS

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 2:
            raise DomainError(f"grid needs at least 2 points, got {self.m}")
        object.__setattr__(self, "m", int(self.m))

    @classmethod
    def from_points(cls, points) -> "TimeGrid":
        """Validate an explicit point array and return the matching grid."""
        points = np.asarray(points, dtype=float)
        if points.ndim != 1 or points.size < 2:
            raise DomainError("grid points must be a 1-D array of length >= 2")
        grid = cls(points.size)
        if not np.allclose(points, grid.points, rtol=0.0, atol=1e-12 * grid.spacing):
            raise DomainError("grid points must be uniform on [0, 1]")
        return grid

    @cached_property
    def points(self) -> np.ndarray:
        pts = np.linspace(0.0, 1.0, self.m)
        pts.setflags(write=False)
        return pts

    @property
    def spacing(self) -> float:
        return 1.0 / (self.m - 1)

    @cached_property
    def weights(self) -> np.ndarray:
        """Trapezoid quadrature weights; they sum to exactly 1."""
        w = np.full(self.m, self.spacing)
        w[0] = w[-1] = 0.5 * self.spacing
        w.setflags(write=False)
        return w


@dataclass(frozen=True, eq=False)
class SampledCurve:
    """Real-valued function on [0, 1] known through its grid values."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (self.grid.m,):
            raise ShapeError(
                f"expected {self.grid.m} values, got array of shape {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise DomainError("curve values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(cls, func, grid: TimeGrid | None = None) -> "SampledCurve":
        grid = grid or TimeGrid()
        return cls(grid, func(grid.points))

    @classmethod
    def constant(cls, value: float, grid: TimeGrid | None = None) -> "SampledCurve":
        grid = grid or TimeGrid()
        return cls(grid, np.full(grid.m, float(value)))

    @property
    def t(self) -> np.ndarray:
        return self.grid.points

    def __call__(self, t):
        return evaluate(self, t)

    def _other_values(self, other):
        if isinstance(other, SampledCurve):
            _check_same_grid(self, other)
            return other.values
        return other

    def __add__(self, other):
        return SampledCurve(self.grid, self.values + self._other_values(other))

    __radd__ = __add__

    def __sub__(self, other):
        return SampledCurve(self.grid, self.values - self._other_values(other))

    def __rsub__(self, other):
        return SampledCurve(self.grid, self._other_values(other) - self.values)

    def __mul__(self, scalar):
        return SampledCurve(self.grid, self.values * float(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return SampledCurve(self.grid, -self.values)

    def __eq__(self, other):
        if not isinstance(other, SampledCurve):
            return NotImplemented
        return self.grid == other.grid and np.array_equal(self.values, other.values)

    __hash__ = None

    def __repr__(self):
        return f"SampledCurve(m={self.grid.m}, range=[{self.values.min():.4g}, {self.values.max():.4g}])"


def _check_same_grid(f: SampledCurve, g: SampledCurve):
    if f.grid != g.grid:
        raise ShapeError(f"grid mismatch: {f.grid.m} vs {g.grid.m} points")


def evaluate(c: SampledCurve, t):
    """Linear interpolation of ``c`` at ``t`` (scalar or array).

    Points left of 0 get ``values[0]``; points right of 1 get ``values[-1]``.
    """
    t_arr = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t_arr)):
        raise DomainError("evaluation points must be finite")
    out = np.interp(t_arr, c.grid.points, c.values)
    return float(out) if out.ndim == 0 else out


def warp_evaluate(c: SampledCurve, t, kappa: float, zeta: float):
    """Evaluate ``c((t - zeta) / kappa)``."""
    if not kappa > 0:
        raise DomainError(f"kappa must be positive, got {kappa}")
    return evaluate(c, (np.asarray(t, dtype=float) - zeta) / kappa)


def warped_values(values: np.ndarray, grid: TimeGrid, kappa, zeta) -> np.ndarray:
    """Batch version of :func:`warp_evaluate` on the grid itself.

    ``kappa`` and ``zeta`` are 1-D arrays of equal length ``k`` (or
    scalars); the result has shape ``(k, m)``. No validation, for inner loops.
    """
    t = grid.points
    kappa = np.atleast_1d(kappa)
    zeta = np.atleast_1d(zeta)
    args = (t - zeta[:, None]) / kappa[:, None]
    return np.interp(args.ravel(), t, values).reshape(args.shape)


def integrate(c: SampledCurve) -> float:
    """Trapezoid approximation of the integral of ``c`` over [0, 1]."""
    return float(c.grid.weights @ c.values)


def l2_inner(f: SampledCurve, g: SampledCurve) -> float:
    """Trapezoid approximation of the L2 inner product on [0, 1]."""
    _check_same_grid(f, g)
    return float(f.grid.weights @ (f.values * g.values))


def l2_norm(f: SampledCurve) -> float:
    return float(np.sqrt(max(l2_inner(f, f), 0.0)))


def l2_distance(f: SampledCurve, g: SampledCurve) -> float:
    _check_same_grid(f, g)
    d = f.values - g.values
    return float(np.sqrt(max(f.grid.weights @ (d * d), 0.0)))


def sq_distance(f: SampledCurve, g: SampledCurve) -> float:
    """Squared L2 distance, without the round trip through ``sqrt``."""
    _check_same_grid(f, g)
    d = f.values - g.values
    return float(f.grid.weights @ (d * d))


def resample(c: SampledCurve, grid: TimeGrid) -> SampledCurve:
    """Re-express ``c`` on another grid by linear interpolation."""
    if grid == c.grid:
        return c
    return SampledCurve(grid, evaluate(c, grid.points))


def curve_from_samples(values, grid: TimeGrid | None = None) -> SampledCurve:
    """Build a curve from samples equally spaced over [0, 1], then resample.

    A 24-value daily profile maps hour ``k`` to ``t = k / 23``.
    """
    values = np.asarray(values, dtype=float)
    raw = SampledCurve(TimeGrid(values.size), values)
    return resample(raw, grid or TimeGrid())
