"""Shape-invariant deformations ``beta + alpha * f0((t - zeta) / kappa)``.

Registration profiles out the amplitude pair ``(alpha, beta)``: for fixed
phase ``(kappa, zeta)`` the best amplitude is a weighted linear regression
of the target on the warped base curve, so only the phase pair is searched
numerically. The search runs in ``(log kappa, zeta)`` coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .curves import SampledCurve, TimeGrid, _check_same_grid, evaluate, warp_evaluate, warped_values
from .errors import DomainError, IdentifiabilityError
from .optim import (
    POSITIVITY_FLOOR,
    ZETA_BOUNDS,
    BoxSpec,
    grid_zoom_minimize,
    multistart_minimize,
)

DEGENERACY_RTOL = 1e-10


@dataclass(frozen=True)
class SimParams:
    """Deformation ``(alpha, beta, kappa, zeta)``; identity is ``(1, 0, 1, 0)``."""

    alpha: float = 1.0
    beta: float = 0.0
    kappa: float = 1.0
    zeta: float = 0.0

    def __post_init__(self):
        for name in ("alpha", "beta", "kappa", "zeta"):
            v = float(getattr(self, name))
            if not np.isfinite(v):
                raise DomainError(f"{name} must be finite")
            object.__setattr__(self, name, v)
        if self.alpha <= 0:
            raise DomainError(f"alpha must be positive, got {self.alpha}")
        if self.kappa <= 0:
            raise DomainError(f"kappa must be positive, got {self.kappa}")
        if not ZETA_BOUNDS[0] <= self.zeta <= ZETA_BOUNDS[1]:
            raise DomainError(f"zeta must lie in [-1/2, 1/2], got {self.zeta}")

    NAMES = ("alpha", "beta", "kappa", "zeta")

    @classmethod
    def identity(cls) -> "SimParams":
        return cls()

    @classmethod
    def from_array(cls, a) -> "SimParams":
        return cls(*map(float, a))

    def as_array(self) -> np.ndarray:
        return np.array([self.alpha, self.beta, self.kappa, self.zeta])

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.NAMES}


@dataclass(frozen=True)
class RegisterConfig:
    """Settings for the phase search.

    ``engine="zoom"`` scans a grid and refines the best ``restarts`` local
    minima with a shrinking pattern search; ``"nelder-mead"`` and
    ``"annealing"`` hand the scan minima to :func:`multistart_minimize`.
    ``local_only`` skips the scan and refines the identity and the given
    starts only; use it when good warm starts are known.
    """

    kappa_bounds: tuple = (0.5, 2.0)
    zeta_bounds: tuple = ZETA_BOUNDS
    fix_kappa: bool = False
    fix_zeta: bool = False
    engine: str = "zoom"
    restarts: int = 2
    scan_zeta: int = 101
    scan_kappa: int = 21
    xtol: float = 1e-8
    local_only: bool = False
    seed: int = 0
    alpha_floor: float = POSITIVITY_FLOOR

    def __post_init__(self):
        lo, hi = self.kappa_bounds
        if not 0 < lo <= 1 <= hi:
            raise DomainError("kappa bounds must satisfy 0 < lo <= 1 <= hi")
        zlo, zhi = self.zeta_bounds
        if not ZETA_BOUNDS[0] <= zlo <= 0 <= zhi <= ZETA_BOUNDS[1]:
            raise DomainError("zeta bounds must contain 0 and lie in [-1/2, 1/2]")
        if self.engine not in ("zoom", "nelder-mead", "annealing"):
            raise DomainError(f"unknown engine {self.engine!r}")
        if self.restarts < 1:
            raise DomainError("restarts must be >= 1")


@dataclass(frozen=True)
class RegistrationResult:
    params: SimParams
    residual_norm: float
    objective: float
    evaluations: int = field(default=0, compare=False)


def apply_deformation(f0: SampledCurve, p: SimParams) -> SampledCurve:
    """The curve ``t -> beta + alpha * f0((t - zeta) / kappa)`` on f0's grid."""
    if not isinstance(p, SimParams):
        raise DomainError("expected SimParams")
    return SampledCurve(f0.grid, p.beta + p.alpha * warp_evaluate(f0, f0.grid.points, p.kappa, p.zeta))


def invert_deformation(fj: SampledCurve, p: SimParams) -> SampledCurve:
    """The curve ``t -> (fj(kappa * t + zeta) - beta) / alpha``."""
    if not isinstance(p, SimParams):
        raise DomainError("expected SimParams")
    return SampledCurve(fj.grid, (evaluate(fj, p.kappa * fj.grid.points + p.zeta) - p.beta) / p.alpha)


def _degeneracy_tol(f0_values: np.ndarray, weights: np.ndarray) -> float:
    return DEGENERACY_RTOL * float(weights @ (f0_values * f0_values))


def warped_moments(f0_values, grid: TimeGrid, kappa, zeta):
    """Mean and variance (trapezoid) of the warped base, batched."""
    W = warped_values(f0_values, grid, kappa, zeta)
    w = grid.weights
    mean = W @ w
    var = (W * W) @ w - mean * mean
    return W, mean, var


def amplitude_closed_form(fj: SampledCurve, f0: SampledCurve, kappa: float, zeta: float):
    """Least-squares ``(alpha, beta)`` for fixed phase ``(kappa, zeta)``.

    ``alpha = cov(w, fj) / var(w)`` and ``beta = mean(fj) - alpha mean(w)``
    with ``w = f0((t - zeta) / kappa)``; moments are trapezoid integrals.
    Unconstrained: ``alpha`` may come out negative.
    """
    _check_same_grid(fj, f0)
    if not kappa > 0:
        raise DomainError(f"kappa must be positive, got {kappa}")
    grid = f0.grid
    w = grid.weights
    warped = warp_evaluate(f0, grid.points, kappa, zeta)
    m_w = w @ warped
    var = w @ (warped * warped) - m_w * m_w
    if var <= _degeneracy_tol(f0.values, w):
        raise IdentifiabilityError("warped base curve is constant")
    m_f = w @ fj.values
    cov = w @ (warped * fj.values) - m_w * m_f
    alpha = cov / var
    return float(alpha), float(m_f - alpha * m_w)


@lru_cache(maxsize=32)
def _phase_box(kappa_bounds: tuple, zeta_bounds: tuple, free: tuple) -> BoxSpec:
    lo = np.array([np.log(kappa_bounds[0]), zeta_bounds[0]])
    hi = np.array([np.log(kappa_bounds[1]), zeta_bounds[1]])
    return BoxSpec(lo[list(free)], hi[list(free)])


class PhaseSearch:
    """Search over ``(log kappa, zeta)`` for a phase-only objective.

    Subclasses provide ``batch(x)`` (values at a ``(k, d_free)`` array of free
    coordinates) and ``scalar_1d(x)`` (lean single-point version used when
    only one coordinate is free). ``solve`` runs the engine selected in
    ``cfg`` and breaks ties towards the smallest ``|zeta|``, then ``|log kappa|``.
    """

    def __init__(self, cfg: RegisterConfig):
        self.cfg = cfg
        self.free = [i for i, fixed in enumerate((cfg.fix_kappa, cfg.fix_zeta)) if not fixed]

    def full(self, x):
        """Map free coordinates (k, d_free) to ``(log kappa, zeta)`` arrays."""
        x = np.atleast_2d(x)
        if len(self.free) == 2:
            return x
        u = np.zeros((x.shape[0], 2))
        u[:, self.free] = x
        return u

    def batch(self, x):
        raise NotImplementedError

    def scalar_1d(self, x: float) -> float:
        return float(self.batch(np.array([[x]]))[0])

    def scalar(self, x):
        return float(self.batch(x)[0])

    def tie_key(self, x):
        u = self.full(x)[0]
        return (abs(u[1]), abs(u[0]))

    def box(self):
        cfg = self.cfg
        return _phase_box(tuple(cfg.kappa_bounds), tuple(cfg.zeta_bounds), tuple(self.free))

    def solve(self, starts: Sequence[SimParams] = ()):
        """Return ``(log_kappa, zeta, evaluations)`` of the best phase.

        ``starts`` may hold SimParams or ``(log kappa, zeta)`` pairs.
        """
        if not self.free:
            return 0.0, 0.0, 0
        # identity is always a candidate: the result never does worse than no deformation
        rows = [[0.0, 0.0]]
        for p in starts:
            rows.append([np.log(p.kappa), p.zeta] if isinstance(p, SimParams) else list(p))
        anchor = np.array(rows, dtype=float)[:, self.free]
        box = self.box()
        cfg = self.cfg
        scan = [cfg.scan_kappa, cfg.scan_zeta]
        scan = [scan[i] for i in self.free]
        if cfg.engine == "zoom":
            rep = grid_zoom_minimize(
                self.batch, box, scan_points=None if cfg.local_only else scan, starts=anchor,
                candidates=cfg.restarts, xtol=cfg.xtol, tie_key=self.tie_key,
                scalar_objective=self.scalar_1d if len(self.free) == 1 else None,
            )
        else:
            coarse = grid_zoom_minimize(
                self.batch, box, scan_points=scan, candidates=cfg.restarts,
                xtol=np.inf, tie_key=self.tie_key,
            )
            rep = multistart_minimize(
                self.scalar, box, restarts=cfg.restarts, seed=cfg.seed, engine=cfg.engine,
                starts=np.vstack([anchor, coarse.best_point[None, :]]),
                xatol=cfg.xtol, tie_key=self.tie_key,
            )
            rep.evaluations += coarse.evaluations
        u = self.full(rep.best_point)[0]
        return float(u[0]), float(u[1]), rep.evaluations


class _PhaseProblem(PhaseSearch):
    """Reduced (phase-only) least-squares fit of a target by warped f0."""

    def __init__(self, target: np.ndarray, f0: SampledCurve, cfg: RegisterConfig):
        super().__init__(cfg)
        self.f0 = f0
        self.grid = f0.grid
        w = self.grid.weights
        self.target = target
        self.wt = w * target
        self.m_f = float(self.wt.sum())
        self.var_f = float(self.wt @ target) - self.m_f**2
        self.tol = _degeneracy_tol(f0.values, w)

    def amplitude(self, log_kappa, zeta):
        kappa = np.exp(log_kappa)
        t = self.grid.points
        args = (t - zeta[:, None]) / kappa[:, None]
        W = np.interp(args.ravel(), t, self.f0.values).reshape(args.shape)
        w = self.grid.weights
        m_w = W @ w
        var = (W * W) @ w - m_w * m_w
        cov = W @ self.wt - m_w * self.m_f
        degenerate = var <= self.tol
        if degenerate.any():
            var = np.where(degenerate, 1.0, var)
        alpha = np.maximum(cov / var, self.cfg.alpha_floor)
        value = np.maximum(self.var_f - 2.0 * alpha * cov + alpha * alpha * var, 0.0)
        if degenerate.any():
            value = np.where(degenerate, self.var_f, value)
        beta = self.m_f - alpha * m_w
        return value, alpha, beta, degenerate

    def batch(self, x):
        u = self.full(x)
        return self.amplitude(u[:, 0], u[:, 1])[0]

    def scalar_1d(self, x: float) -> float:
        t = self.grid.points
        if self.free == [1]:
            W = np.interp(t - x, t, self.f0.values)
        else:
            W = np.interp(t * np.exp(-x), t, self.f0.values)
        w = self.grid.weights
        m_w = w @ W
        var = w @ (W * W) - m_w * m_w
        if var <= self.tol:
            return self.var_f
        cov = self.wt @ W - m_w * self.m_f
        alpha = max(cov / var, self.cfg.alpha_floor)
        return max(self.var_f - 2.0 * alpha * cov + alpha * alpha * var, 0.0)

    def params_at(self, log_kappa: float, zeta: float) -> SimParams:
        _, alpha, beta, degenerate = self.amplitude(np.array([log_kappa]), np.array([zeta]))
        if degenerate[0]:
            raise IdentifiabilityError("warped base curve is constant")
        kappa = 1.0 if log_kappa == 0.0 else float(np.exp(log_kappa))
        return SimParams(float(alpha[0]), float(beta[0]), kappa, float(zeta))


def _check_base(f0: SampledCurve):
    w = f0.grid.weights
    m = w @ f0.values
    if w @ (f0.values * f0.values) - m * m <= _degeneracy_tol(f0.values, w):
        raise IdentifiabilityError("base curve is constant; deformation not identifiable")


def fit_target(target: SampledCurve, f0: SampledCurve, cfg: RegisterConfig,
               starts: Sequence[SimParams] = ()) -> tuple[SimParams, int]:
    """Best deformation of ``f0`` approximating ``target`` (any curve)."""
    _check_same_grid(target, f0)
    _check_base(f0)
    problem = _PhaseProblem(target.values, f0, cfg)
    log_kappa, zeta, nfev = problem.solve(starts)
    return problem.params_at(log_kappa, zeta), nfev


def register(fj: SampledCurve, f0: SampledCurve, cfg: RegisterConfig | None = None,
             starts: Sequence[SimParams] = ()) -> RegistrationResult:
    """Register ``fj`` as a shape-invariant deformation of ``f0``.

    The identity deformation is always among the starting points, so the
    returned objective never exceeds ``||fj - f0||^2`` (up to rounding).
    """
    cfg = cfg or RegisterConfig()
    params, nfev = fit_target(fj, f0, cfg, starts)
    diff = fj.values - apply_deformation(f0, params).values
    objective = float(fj.grid.weights @ (diff * diff))
    return RegistrationResult(params, float(np.sqrt(objective)), objective, nfev)


def registration_objective(fj: SampledCurve, f0: SampledCurve, p: SimParams) -> float:
    """``||fj - (beta + alpha f0((. - zeta)/kappa))||^2`` for explicit params."""
    diff = fj.values - apply_deformation(f0, p).values
    return float(fj.grid.weights @ (diff * diff))

