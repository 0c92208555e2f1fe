"""Phase II: EWMA-type charts for curves registered to the in-control mean.

Each new curve is registered to ``f0`` (giving ``theta_j`` and the fitted
curve ``fhat_j``). The EWMA curve ``ftilde_j`` is the model curve closest to
``lam * fhat_j + (1 - lam) * ftilde_{j-1}``; its parameters are
``theta_tilde_j``. The variability chart tracks

    D_j = ||fhat_j - ftilde_{j-1}||^2,   Dtilde_j = lam D_j + (1 - lam) Dtilde_{j-1}

against an upper limit, and every deformation parameter gets a scalar EWMA
chart with two-sided limits.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .curves import SampledCurve, _check_same_grid
from .errors import ConfigurationError, DomainError, FrechetSPCError, IdentifiabilityError
from .frechet import FrechetMeanResult
from .sim import RegisterConfig, SimParams, apply_deformation, fit_target, register

LAMBDA_GRID = (0.05, 0.10, 0.15, 0.20)
VARIABILITY_MODES = ("deviance", "frechet_function")
PARAM_NAMES = SimParams.NAMES
DEGENERATE_RTOL = 1e-20


@dataclass(frozen=True)
class EwmaConfig:
    """Chart settings.

    ``replay_orders`` is the number of shuffled passes over the in-control
    curves used to build the reference distribution of ``Dtilde``.
    ``local_fit`` lets the EWMA fit refine only the better of its two
    natural anchors (the registered and the previous EWMA parameters)
    instead of scanning the whole phase box.
    """

    lam: float = 0.10
    limit_level: float = 0.95
    fix_kappa: bool = False
    variability_mode: str = "deviance"
    raw_deviance: bool = False
    enrich: bool = False
    replay_orders: int = 200
    seed: int = 0
    local_fit: bool = True
    register: RegisterConfig = field(default_factory=RegisterConfig)

    def __post_init__(self):
        if not 0.0 < self.lam < 1.0:
            raise ConfigurationError(f"lambda must lie strictly between 0 and 1, got {self.lam}")
        if not 0.0 < self.limit_level < 1.0:
            raise ConfigurationError(f"limit_level must lie strictly between 0 and 1, got {self.limit_level}")
        if self.variability_mode not in VARIABILITY_MODES:
            raise ConfigurationError(f"variability_mode must be one of {VARIABILITY_MODES}")
        if self.replay_orders < 1:
            raise ConfigurationError("replay_orders must be >= 1")
        if self.fix_kappa != self.register.fix_kappa:
            object.__setattr__(self, "register", replace(self.register, fix_kappa=self.fix_kappa))

    @property
    def fit_register(self) -> RegisterConfig:
        return replace(self.register, local_only=True, restarts=1) if self.local_fit else self.register

    def charted_params(self) -> tuple:
        names = list(PARAM_NAMES)
        if self.fix_kappa:
            names.remove("kappa")
        if self.register.fix_zeta:
            names.remove("zeta")
        return tuple(names)


@dataclass(frozen=True, eq=False)
class EwmaState:
    step: int
    theta_tilde: SimParams
    f_tilde: SampledCurve
    d_tilde: float
    param_ewma: tuple = (1.0, 0.0, 1.0, 0.0)

    def __post_init__(self):
        if not (np.isfinite(self.d_tilde) and self.d_tilde >= 0):
            raise DomainError(f"d_tilde must be finite and nonnegative, got {self.d_tilde}")
        object.__setattr__(self, "param_ewma", tuple(float(x) for x in self.param_ewma))


@dataclass(frozen=True)
class ControlLimits:
    """Upper limit for ``Dtilde`` and ``(lcl, ucl)`` per charted parameter."""

    deviance_ucl: float
    param_limits: dict
    level: float = 0.95

    def __post_init__(self):
        if not self.deviance_ucl > 0:
            raise ConfigurationError(f"deviance_ucl must be positive, got {self.deviance_ucl}")
        for name, (lo, hi) in self.param_limits.items():
            if not lo < hi:
                raise ConfigurationError(f"limits for {name} must satisfy lcl < ucl")


@dataclass(frozen=True)
class ChartPoint:
    step: int
    theta: SimParams
    theta_tilde: SimParams
    D: float
    D_tilde: float
    param_ewma: tuple
    ooc: bool
    ooc_params: dict
    residual_norm: float

    def as_dict(self) -> dict:
        return {
            "step": self.step,
            "theta": self.theta.as_dict(),
            "theta_tilde": self.theta_tilde.as_dict(),
            "D": self.D,
            "D_tilde": self.D_tilde,
            "param_ewma": dict(zip(PARAM_NAMES, self.param_ewma)),
            "ooc": self.ooc,
            "ooc_params": dict(self.ooc_params),
            "residual_norm": self.residual_norm,
        }


def sq_norm(values: np.ndarray, weights: np.ndarray) -> float:
    return float(weights @ (values * values))


def ewma_amplitude_closed_form(f_hat: SampledCurve, f_prev: SampledCurve, f0: SampledCurve,
                               kappa: float, zeta: float, lam: float):
    """``(alpha, beta)`` minimising the two-term EWMA criterion at fixed phase.

    Solves the 2x2 normal equations of
    ``lam ||beta + alpha w - fhat||^2 + (1 - lam) ||beta + alpha w - fprev||^2``
    with ``w = f0((t - zeta) / kappa)``. Kept separate from the runtime path,
    which fits the blended curve instead; tests compare the two.
    """
    _check_same_grid(f_hat, f0)
    _check_same_grid(f_prev, f0)
    q = f0.grid.weights
    w = np.interp((f0.grid.points - zeta) / kappa, f0.grid.points, f0.values)
    A = np.array([[q @ (w * w), q @ w], [q @ w, q.sum()]])
    rhs = lam * np.array([q @ (w * f_hat.values), q @ f_hat.values])
    rhs += (1 - lam) * np.array([q @ (w * f_prev.values), q @ f_prev.values])
    if abs(np.linalg.det(A)) <= 1e-12 * max(1.0, A[0, 0]):
        raise IdentifiabilityError("warped base curve is constant")
    alpha, beta = np.linalg.solve(A, rhs)
    return float(alpha), float(beta)


def ewma_fit_objective(theta: SimParams, f_hat: SampledCurve, f_prev: SampledCurve,
                       f0: SampledCurve, lam: float) -> float:
    fit = apply_deformation(f0, theta).values
    q = f0.grid.weights
    return lam * sq_norm(fit - f_hat.values, q) + (1 - lam) * sq_norm(fit - f_prev.values, q)


def ewma_fit_step(f_hat_j: SampledCurve, state: EwmaState, f0: SampledCurve, cfg: EwmaConfig,
                  theta_j: SimParams | None = None) -> SimParams:
    """Parameters of the model curve closest to the EWMA combination.

    The two-term criterion equals the squared distance to the blended curve
    ``lam fhat_j + (1 - lam) ftilde_{j-1}`` up to a constant, so the fit is a
    registration of that blend; both anchors are starting points and the
    result never does worse than either.
    """
    lam = cfg.lam
    blend = SampledCurve(f0.grid, lam * f_hat_j.values + (1 - lam) * state.f_tilde.values)
    starts = [state.theta_tilde] if theta_j is None else [theta_j, state.theta_tilde]
    params, _ = fit_target(blend, f0, cfg.fit_register, starts)
    return params


def deviance_value(curve: SampledCurve, state: EwmaState, cfg: EwmaConfig,
                   f_tilde_new: SampledCurve | None = None, ic_curves: Sequence[SampledCurve] = (),
                   ic_weights=None) -> float:
    if cfg.variability_mode == "deviance":
        return sq_norm(curve.values - state.f_tilde.values, curve.grid.weights)
    if f_tilde_new is None or not len(ic_curves):
        raise ConfigurationError("frechet_function mode needs the new EWMA curve and the IC curves")
    n = len(ic_curves)
    w = np.full(n, 1.0 / n) if ic_weights is None else np.asarray(ic_weights, dtype=float)
    q = f_tilde_new.grid.weights
    return float(sum(wk * sq_norm(f_tilde_new.values - c.values, q) for wk, c in zip(w, ic_curves)))


def deviance_step(curve: SampledCurve, state: EwmaState, cfg: EwmaConfig, **kwargs):
    """Return ``(D_j, Dtilde_j)``; keyword arguments go to :func:`deviance_value`."""
    d = deviance_value(curve, state, cfg, **kwargs)
    return d, cfg.lam * d + (1 - cfg.lam) * state.d_tilde


def _ewma_params(prev: tuple, theta: SimParams, lam: float) -> tuple:
    return tuple(lam * x + (1 - lam) * p for x, p in zip(theta.as_array(), prev))


def _flags(param_ewma: tuple, limits: ControlLimits) -> dict:
    values = dict(zip(PARAM_NAMES, param_ewma))
    return {k: bool(not lo <= values[k] <= hi) for k, (lo, hi) in limits.param_limits.items()}


def _advance(state, f0, cfg, theta_j, f_hat, raw, ic_curves=(), ic_weights=None):
    """One chart update from an already registered curve."""
    theta_t = ewma_fit_step(f_hat, state, f0, cfg, theta_j)
    f_tilde = apply_deformation(f0, theta_t)
    curve = raw if cfg.raw_deviance else f_hat
    d, d_tilde = deviance_step(curve, state, cfg, f_tilde_new=f_tilde, ic_curves=ic_curves, ic_weights=ic_weights)
    new = EwmaState(state.step + 1, theta_t, f_tilde, d_tilde, _ewma_params(state.param_ewma, theta_j, cfg.lam))
    return new, d


def initial_state(f0: SampledCurve, d_tilde: float) -> EwmaState:
    theta = SimParams()
    return EwmaState(0, theta, apply_deformation(f0, theta), d_tilde, tuple(theta.as_array()))


def initial_deviance(ic: FrechetMeanResult, cfg: EwmaConfig) -> float:
    """Weighted mean squared distance of the IC curves from ``f0``.

    Uses the registered fits in the default mode and the raw curves when
    ``raw_deviance`` is set or in ``frechet_function`` mode, matching what
    ``D_j`` measures later.
    """
    f0, q = ic.f0, ic.f0.grid.weights
    raw = cfg.raw_deviance or cfg.variability_mode == "frechet_function"
    dists = [
        sq_norm((c.values if raw else apply_deformation(f0, p).values) - f0.values, q)
        for c, p in zip(ic.curves, ic.ic_params)
    ]
    return float(np.asarray(ic.weights) @ np.asarray(dists))


def replay_deviance(ic: FrechetMeanResult, cfg: EwmaConfig, d_tilde0: float) -> np.ndarray:
    """``Dtilde`` values from ``cfg.replay_orders`` shuffled passes over the IC curves."""
    f0 = ic.f0
    fhats = [apply_deformation(f0, p) for p in ic.ic_params]
    rng = np.random.default_rng(cfg.seed)
    pooled = []
    # one continuous run through the shuffled passes: a long stream is
    # mostly past its start-up, so restarting every pass would overweight it
    state = initial_state(f0, d_tilde0)
    for _ in range(cfg.replay_orders):
        for k in rng.permutation(len(ic.curves)):
            state, _ = _advance(state, f0, cfg, ic.ic_params[k], fhats[k], ic.curves[k], ic.curves, ic.weights)
            pooled.append(state.d_tilde)
    return np.asarray(pooled)


def parameter_limits(params: Sequence[SimParams], names: Sequence[str], level: float) -> dict:
    """Central ``level`` quantile band of each named parameter; flat ones are skipped."""
    if not len(params):
        raise ConfigurationError("empty parameter databank")
    arr = np.array([p.as_array() for p in params])
    out = {}
    for name in names:
        col = arr[:, PARAM_NAMES.index(name)]
        lo, hi = np.quantile(col, [(1 - level) / 2, (1 + level) / 2])
        if lo < hi:
            out[name] = (float(lo), float(hi))
    return out


def init_state(f0: SampledCurve, ic: FrechetMeanResult, cfg: EwmaConfig):
    """Starting state and control limits from the in-control databank."""
    if not len(ic.curves) or not len(ic.ic_params):
        raise ConfigurationError("empty IC databank")
    _check_same_grid(f0, ic.f0)
    d0 = initial_deviance(ic, cfg)
    pooled = replay_deviance(ic, cfg, d0)
    ucl = float(np.quantile(pooled, cfg.limit_level))
    # rounding alone leaves values near 1e-30; anything at that scale is zero
    if not ucl > DEGENERATE_RTOL * sq_norm(f0.values, f0.grid.weights):
        raise ConfigurationError("IC deviance reference distribution is degenerate (upper limit 0)")
    limits = ControlLimits(ucl, parameter_limits(ic.ic_params, cfg.charted_params(), cfg.limit_level),
                           cfg.limit_level)
    return initial_state(f0, d0), limits


def monitor_curve(fj: SampledCurve, state: EwmaState, f0: SampledCurve, limits: ControlLimits,
                  cfg: EwmaConfig, ic: FrechetMeanResult | None = None):
    """Register ``fj``, update every chart and return ``(new_state, point)``."""
    step = state.step + 1
    try:
        _check_same_grid(fj, f0)
        reg = register(fj, f0, cfg.register, starts=[state.theta_tilde])
        f_hat = apply_deformation(f0, reg.params)
        ic_curves, ic_w = (ic.curves, ic.weights) if ic is not None else ((), None)
        new, d = _advance(state, f0, cfg, reg.params, f_hat, fj, ic_curves, ic_w)
    except FrechetSPCError as exc:
        raise type(exc)(f"step {step}: {exc}") from exc
    point = ChartPoint(
        step=step,
        theta=reg.params,
        theta_tilde=new.theta_tilde,
        D=d,
        D_tilde=new.d_tilde,
        param_ewma=new.param_ewma,
        ooc=bool(new.d_tilde > limits.deviance_ucl),
        ooc_params=_flags(new.param_ewma, limits),
        residual_norm=reg.residual_norm,
    )
    return new, point


class EwmaMonitor:
    """Sequential chart session; optionally grows the parameter databank."""

    def __init__(self, ic: FrechetMeanResult, cfg: EwmaConfig | None = None,
                 state: EwmaState | None = None, limits: ControlLimits | None = None):
        self.ic = ic
        self.cfg = cfg or EwmaConfig()
        if state is None or limits is None:
            state, limits = init_state(ic.f0, ic, self.cfg)
        self.state, self.limits = state, limits
        self.bank = list(ic.ic_params)

    def step(self, fj: SampledCurve) -> ChartPoint:
        ic = self.ic if self.cfg.variability_mode == "frechet_function" else None
        self.state, point = monitor_curve(fj, self.state, self.ic.f0, self.limits, self.cfg, ic)
        if self.cfg.enrich and not point.ooc:
            self.bank.append(point.theta)
            self.limits = replace(
                self.limits,
                param_limits=parameter_limits(self.bank, self.cfg.charted_params(), self.cfg.limit_level),
            )
        return point

    def run(self, curves: Sequence[SampledCurve]) -> list:
        return [self.step(c) for c in curves]
