"""Phase I: Fréchet mean of in-control curves under the shape-invariant model.

Each training curve ``f_j`` is mapped back to template coordinates by its
inverse deformation ``abar_j * (f_j(kappa_j t + zeta_j) - beta_j)`` with
``abar_j = 1 / alpha_j``. The mean curve is the weighted average of these
inverted curves and the objective is their weighted spread around it:

    V(gamma, xi) = sum_j w_j || inv_j - sum_k w_k inv_k ||^2

with ``gamma = (abar, beta)`` and ``xi = (kappa, zeta)``. ``V`` is minimised
by alternating an amplitude stage (linear least squares per curve against
the current mean) and a phase stage (per-curve search over the warp), each
followed by projection onto the centrality constraints.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .curves import SampledCurve, TimeGrid
from .errors import ConfigurationError, DomainError, IdentifiabilityError, ShapeError
from .optim import POSITIVITY_FLOOR, least_squares_solve, project_amplitude, project_phase
from .sim import PhaseSearch, RegisterConfig, SimParams, register

SIMPLEX_TOL = 1e-12
MONOTONE_RTOL = 1e-9
MAX_HALVINGS = 20


@dataclass(frozen=True)
class FrechetConfig:
    """Settings for :func:`estimate_frechet_mean`.

    ``weights=None`` means equal weights. ``register`` controls both the
    phase stage search and the final re-registration of the training curves.
    """

    weights: tuple | None = None
    tolerance: float = 1e-6
    max_iterations: int = 100
    fix_kappa: bool = False
    register: RegisterConfig = field(default_factory=RegisterConfig)

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ConfigurationError("tolerance must be positive")
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 1:
            raise ConfigurationError("max_iterations must be a positive integer")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            check_weights(w, w.size)
            object.__setattr__(self, "weights", tuple(float(x) for x in w))
        if self.fix_kappa != self.register.fix_kappa:
            object.__setattr__(self, "register", replace(self.register, fix_kappa=self.fix_kappa))

    def weight_vector(self, n: int) -> np.ndarray:
        if self.weights is None:
            return np.full(n, 1.0 / n)
        w = np.asarray(self.weights, dtype=float)
        if w.size != n:
            raise ShapeError(f"{w.size} weights for {n} curves")
        return w


def check_weights(w: np.ndarray, n: int) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.shape != (n,):
        raise ShapeError(f"expected {n} weights, got shape {w.shape}")
    if np.any(~np.isfinite(w)) or np.any(w < 0) or abs(w.sum() - 1.0) > SIMPLEX_TOL:
        raise ConfigurationError("weights must be nonnegative and sum to 1")
    return w


@dataclass(frozen=True, eq=False)
class ParamBank:
    """Deformation parameters of the training set.

    ``gamma = (abar_1..abar_n, beta_1..beta_n)`` with ``abar = 1 / alpha``;
    ``xi = (kappa_1..kappa_n, zeta_1..zeta_n)``.
    """

    gamma: np.ndarray
    xi: np.ndarray

    def __post_init__(self):
        gamma = np.array(self.gamma, dtype=float)
        xi = np.array(self.xi, dtype=float)
        if gamma.ndim != 1 or gamma.size % 2 or xi.shape != gamma.shape:
            raise ShapeError("gamma and xi must be flat vectors of equal even length")
        if not (np.all(np.isfinite(gamma)) and np.all(np.isfinite(xi))):
            raise DomainError("bank entries must be finite")
        n = gamma.size // 2
        if np.any(gamma[:n] <= 0) or np.any(xi[:n] <= 0):
            raise DomainError("scale parameters must be positive")
        for a in (gamma, xi):
            a.setflags(write=False)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "xi", xi)

    @classmethod
    def identity(cls, n: int) -> "ParamBank":
        one = np.concatenate([np.ones(n), np.zeros(n)])
        return cls(one, one.copy())

    @classmethod
    def from_params(cls, params: Sequence[SimParams]) -> "ParamBank":
        a = np.array([p.as_array() for p in params])
        return cls(np.concatenate([1.0 / a[:, 0], a[:, 1]]), np.concatenate([a[:, 2], a[:, 3]]))

    @property
    def n(self) -> int:
        return self.gamma.size // 2

    @property
    def alpha_bar(self):
        return self.gamma[: self.n]

    @property
    def beta(self):
        return self.gamma[self.n:]

    @property
    def kappa(self):
        return self.xi[: self.n]

    @property
    def zeta(self):
        return self.xi[self.n:]

    def params(self, j: int) -> SimParams:
        return SimParams(1.0 / self.alpha_bar[j], self.beta[j], self.kappa[j], self.zeta[j])

    def all_params(self) -> list[SimParams]:
        return [self.params(j) for j in range(self.n)]

    def is_feasible(self, tol: float = 1e-12) -> bool:
        n = self.n
        return bool(
            abs(np.log(self.alpha_bar).sum()) <= tol * n
            and abs(self.beta.sum()) <= tol * max(1.0, np.abs(self.beta).sum())
            and abs(np.log(self.kappa).sum()) <= tol * n
            and abs(self.zeta.sum()) <= tol * n
            and np.all(np.abs(self.zeta) <= 0.5)
        )

    def __eq__(self, other):
        if not isinstance(other, ParamBank):
            return NotImplemented
        return np.array_equal(self.gamma, other.gamma) and np.array_equal(self.xi, other.xi)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class FrechetMeanResult:
    f0: SampledCurve
    bank: ParamBank
    frechet_variance: float
    ic_params: list
    iterations: int
    objective_trace: list
    converged: bool
    curves: list
    weights: np.ndarray
    residual_norms: list = field(default_factory=list)


def _stack(curves: Sequence[SampledCurve]) -> tuple[np.ndarray, TimeGrid]:
    if len(curves) == 0:
        raise ConfigurationError("need at least one curve")
    grid = curves[0].grid
    for c in curves:
        if c.grid != grid:
            raise ShapeError(f"grid mismatch: {c.grid.m} vs {grid.m} points")
    return np.stack([c.values for c in curves]), grid


def _warp_back(F: np.ndarray, grid: TimeGrid, kappa, zeta) -> np.ndarray:
    """Rows ``f_j(kappa_j t + zeta_j)`` on the grid."""
    t = grid.points
    return np.stack([np.interp(k * t + z, t, f) for f, k, z in zip(F, kappa, zeta)])


def _inverted(F, grid, gamma, xi) -> np.ndarray:
    n = F.shape[0]
    H = _warp_back(F, grid, xi[:n], xi[n:])
    return gamma[:n, None] * (H - gamma[n:, None])


def _objective(F, grid, gamma, xi, w) -> float:
    inv = _inverted(F, grid, gamma, xi)
    mean = w @ inv
    d = inv - mean
    return float(w @ ((d * d) @ grid.weights))


def _check_bank(bank: ParamBank, n: int):
    if bank.n != n:
        raise ShapeError(f"bank holds {bank.n} curves, got {n}")


def build_mean_curve(curves: Sequence[SampledCurve], bank: ParamBank, weights=None) -> SampledCurve:
    """Weighted pointwise average of the inverted curves."""
    F, grid = _stack(curves)
    _check_bank(bank, len(curves))
    w = check_weights(np.full(len(curves), 1.0 / len(curves)) if weights is None else weights, len(curves))
    return SampledCurve(grid, w @ _inverted(F, grid, bank.gamma, bank.xi))


def frechet_objective(curves: Sequence[SampledCurve], bank: ParamBank, weights=None) -> float:
    """``sum_j w_j ||inv_j - mean||^2`` for the inverted curves ``inv_j``."""
    F, grid = _stack(curves)
    _check_bank(bank, len(curves))
    w = check_weights(np.full(len(curves), 1.0 / len(curves)) if weights is None else weights, len(curves))
    return _objective(F, grid, bank.gamma, bank.xi, w)


def _amplitude_unconstrained(F, grid, gamma, xi, w) -> np.ndarray:
    n = F.shape[0]
    H = _warp_back(F, grid, xi[:n], xi[n:])
    template = w @ (gamma[:n, None] * (H - gamma[n:, None]))
    sw = np.sqrt(grid.weights)
    out = np.empty(2 * n)
    for k in range(n):
        design = np.column_stack([H[k], -np.ones(grid.m)]) * sw[:, None]
        try:
            abar, c = least_squares_solve(design, template * sw)
        except IdentifiabilityError:
            raise IdentifiabilityError(f"training curve {k} is constant after warping", index=k) from None
        out[k] = abar
        out[n + k] = c / abar if abar != 0 else 0.0
    return out


def amplitude_stage(curves: Sequence[SampledCurve], xi, gamma=None, weights=None, return_unconstrained=False):
    """Refit every ``(abar_k, beta_k)`` to the current mean, then project.

    With the mean held fixed the problem separates into one linear least
    squares per curve in ``(abar_k, abar_k beta_k)``. The offsets are then
    shifted by ``alpha_k c`` with the common ``c`` that zeroes their sum
    (this moves every inverted curve by the same constant and leaves the
    objective unchanged) before the projection.
    """
    F, grid = _stack(curves)
    n = len(curves)
    xi = np.asarray(xi, dtype=float)
    gamma = ParamBank.identity(n).gamma if gamma is None else np.asarray(gamma, dtype=float)
    w = check_weights(np.full(n, 1.0 / n) if weights is None else weights, n)
    raw = _amplitude_unconstrained(F, grid, gamma, xi, w)
    abar = np.maximum(raw[:n], POSITIVITY_FLOOR)
    beta = raw[n:]
    alpha = 1.0 / abar
    beta = beta - alpha * (beta.sum() / alpha.sum())
    out = project_amplitude(np.concatenate([abar, beta]))
    if return_unconstrained:
        return out, raw
    return out


class _InversePhase(PhaseSearch):
    """Per-curve phase search: ``abar (f(kappa t + zeta) - beta)`` against a template."""

    def __init__(self, values, grid, abar, beta, template, cfg):
        super().__init__(cfg)
        self.values, self.grid = values, grid
        self.abar, self.beta, self.template = abar, beta, template

    def batch(self, x):
        u = self.full(x)
        t = self.grid.points
        args = np.exp(u[:, :1]) * t + u[:, 1:]
        H = np.interp(args.ravel(), t, self.values).reshape(args.shape)
        d = self.abar * (H - self.beta) - self.template
        return (d * d) @ self.grid.weights

    def scalar_1d(self, x: float) -> float:
        t = self.grid.points
        args = t + x if self.free == [1] else np.exp(x) * t
        d = self.abar * (np.interp(args, t, self.values) - self.beta) - self.template
        return float(self.grid.weights @ (d * d))


def phase_stage(curves: Sequence[SampledCurve], gamma, xi=None, cfg: RegisterConfig | None = None,
                weights=None) -> np.ndarray:
    """Re-search every ``(kappa_k, zeta_k)`` against the current mean, then project.

    The current phase of each curve is always a starting point, so no block
    step can increase the objective before projection. Shifts are moved by
    ``kappa_k c`` with the common ``c`` that zeroes their sum (a time shift
    of the template) before the projection.
    """
    cfg = cfg or RegisterConfig()
    F, grid = _stack(curves)
    n = len(curves)
    gamma = np.asarray(gamma, dtype=float)
    xi = ParamBank.identity(n).xi if xi is None else np.asarray(xi, dtype=float)
    w = check_weights(np.full(n, 1.0 / n) if weights is None else weights, n)
    template = w @ _inverted(F, grid, gamma, xi)
    kappa, zeta = xi[:n].copy(), xi[n:].copy()
    for k in range(n):
        search = _InversePhase(F[k], grid, gamma[k], gamma[n + k], template, cfg)
        lk, z, _ = search.solve([(np.log(kappa[k]), zeta[k])])
        kappa[k] = 1.0 if lk == 0.0 else np.exp(lk)
        zeta[k] = z
    zeta = zeta - kappa * (zeta.sum() / kappa.sum())
    if cfg.fix_kappa:
        kappa[:] = 1.0
    if cfg.fix_zeta:
        zeta[:] = 0.0
    return project_phase(np.concatenate([kappa, zeta]), bounds=cfg.zeta_bounds)


def _blend(old, new, t):
    """Move ``t`` of the way from ``old`` to ``new``: log space for scales."""
    n = old.size // 2
    scales = np.exp((1 - t) * np.log(old[:n]) + t * np.log(new[:n]))
    offsets = (1 - t) * old[n:] + t * new[n:]
    return np.concatenate([scales, offsets])


def _safeguard(value_at, old, new, v_old):
    """Keep ``new`` unless it raises the objective; then bisect back towards ``old``."""
    v_new = value_at(new)
    limit = v_old + MONOTONE_RTOL * abs(v_old)
    if v_new <= limit:
        return new, v_new
    t = 1.0
    for _ in range(MAX_HALVINGS):
        t *= 0.5
        cand = _blend(old, new, t)
        v = value_at(cand)
        if v <= limit:
            return cand, v
    return old, v_old


def estimate_frechet_mean(curves: Sequence[SampledCurve], cfg: FrechetConfig | None = None) -> FrechetMeanResult:
    """Alternate amplitude and phase stages until both parameter steps drop below tolerance."""
    cfg = cfg or FrechetConfig()
    F, grid = _stack(curves)
    n = len(curves)
    w = check_weights(cfg.weight_vector(n), n)
    for k, f in enumerate(F):
        d = f - grid.weights @ f
        if grid.weights @ (d * d) <= 1e-20 * max(1.0, grid.weights @ (f * f)):
            raise IdentifiabilityError(f"training curve {k} is constant", index=k)

    bank = ParamBank.identity(n)
    gamma, xi = bank.gamma.copy(), bank.xi.copy()
    v = _objective(F, grid, gamma, xi, w)
    trace = [v]
    converged = False
    iterations = 0
    for iterations in range(1, cfg.max_iterations + 1):
        g_new = amplitude_stage(curves, xi, gamma, w)
        g_new, v = _safeguard(lambda g: _objective(F, grid, g, xi, w), gamma, g_new, v)
        x_new = phase_stage(curves, g_new, xi, cfg.register, w)
        x_new, v = _safeguard(lambda x: _objective(F, grid, g_new, x, w), xi, x_new, v)
        step_g = np.linalg.norm(g_new - gamma)
        step_x = np.linalg.norm(x_new - xi)
        gamma, xi = g_new, x_new
        trace.append(v)
        if step_g < cfg.tolerance and step_x < cfg.tolerance:
            converged = True
            break

    bank = ParamBank(gamma, xi)
    f0 = build_mean_curve(curves, bank, w)
    variance = frechet_objective(curves, bank, w)
    ic = [register(c, f0, cfg.register) for c in curves]
    return FrechetMeanResult(
        f0=f0,
        bank=bank,
        frechet_variance=variance,
        ic_params=[r.params for r in ic],
        iterations=iterations,
        objective_trace=trace,
        converged=converged,
        curves=list(curves),
        weights=w,
        residual_norms=[r.residual_norm for r in ic],
    )
