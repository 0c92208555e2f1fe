"""Synthetic shape-invariant data, shift injection and brute-force oracles."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from .curves import SampledCurve, TimeGrid
from .errors import ConfigurationError
from .optim import ZETA_BOUNDS, project_amplitude, project_phase
from .sim import DEGENERACY_RTOL, RegisterConfig, SimParams, apply_deformation

PARAM_NAMES = SimParams.NAMES
IDENTITY = dict(zip(PARAM_NAMES, SimParams().as_array()))


def _sine(t, amplitude=1.0, offset=2.0):
    return offset + amplitude * np.sin(2 * np.pi * t)


def _sigmoid(t, slope=12.0, centre=0.5, low=1.0, high=3.0):
    return low + (high - low) / (1.0 + np.exp(-slope * (t - centre)))


def _double_peak(t, base=1.0, peak1=2.0, peak2=1.5, loc1=0.35, loc2=0.8, width1=0.07, width2=0.09):
    bump = lambda loc, width: np.exp(-0.5 * ((t - loc) / width) ** 2)
    return base + peak1 * bump(loc1, width1) + peak2 * bump(loc2, width2)


BASE_FAMILIES = {"sine": _sine, "sigmoid": _sigmoid, "double_peak": _double_peak}


def base_curve(name: str = "sine", grid: TimeGrid | None = None, **params) -> SampledCurve:
    """A named analytic base curve on the grid; ``sine`` is ``sin(2 pi t) + 2``."""
    if name not in BASE_FAMILIES:
        raise ConfigurationError(f"base: unknown family {name!r}; choose from {sorted(BASE_FAMILIES)}")
    try:
        return SampledCurve.from_function(lambda t: BASE_FAMILIES[name](t, **params), grid or TimeGrid())
    except TypeError as exc:
        raise ConfigurationError(f"base_params: {exc}") from None


@dataclass(frozen=True)
class ParamLaw:
    """Sampling law of one parameter: ``fixed``, ``uniform`` or ``truncnorm``.

    ``truncnorm`` takes ``mean``, ``sd`` and the bounds ``low``/``high``.
    """

    kind: str = "fixed"
    value: float = 0.0
    low: float = -np.inf
    high: float = np.inf
    mean: float = 0.0
    sd: float = 1.0

    def __post_init__(self):
        if self.kind not in ("fixed", "uniform", "truncnorm"):
            raise ConfigurationError(f"kind: unknown law {self.kind!r}")
        if self.kind == "uniform" and not (np.isfinite(self.low) and np.isfinite(self.high) and self.low <= self.high):
            raise ConfigurationError("uniform law needs finite low <= high")
        if self.kind == "truncnorm" and not (self.sd > 0 and self.low < self.high):
            raise ConfigurationError("truncnorm law needs sd > 0 and low < high")

    @classmethod
    def fixed(cls, value: float) -> "ParamLaw":
        return cls("fixed", value=value)

    @classmethod
    def uniform(cls, low: float, high: float) -> "ParamLaw":
        return cls("uniform", low=low, high=high)

    @classmethod
    def truncnorm(cls, mean: float, sd: float, low: float, high: float) -> "ParamLaw":
        return cls("truncnorm", mean=mean, sd=sd, low=low, high=high)

    def support(self) -> tuple:
        if self.kind == "fixed":
            return self.value, self.value
        return self.low, self.high

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == "fixed":
            # consume the same stream position as the other laws
            rng.random(size)
            return np.full(size, float(self.value))
        u = rng.random(size)
        if self.kind == "uniform":
            return self.low + u * (self.high - self.low)
        a, b = (self.low - self.mean) / self.sd, (self.high - self.mean) / self.sd
        return stats.truncnorm.ppf(u, a, b, loc=self.mean, scale=self.sd)

    def moments(self) -> tuple:
        """Mean and variance of the law."""
        if self.kind == "fixed":
            return float(self.value), 0.0
        if self.kind == "uniform":
            return (self.low + self.high) / 2, (self.high - self.low) ** 2 / 12
        a, b = (self.low - self.mean) / self.sd, (self.high - self.mean) / self.sd
        m, v = stats.truncnorm.stats(a, b, loc=self.mean, scale=self.sd, moments="mv")
        return float(m), float(v)


def _default_laws() -> dict:
    return {k: ParamLaw.fixed(v) for k, v in IDENTITY.items()}


@dataclass(frozen=True)
class SynthSpec:
    """Forward-simulation recipe: base family, parameter laws, noise, seed."""

    base: str = "sine"
    base_params: dict = field(default_factory=dict)
    n: int = 20
    laws: dict = field(default_factory=_default_laws)
    noise_sigma: float = 0.0
    seed: int = 0
    grid_points: int = 101

    def __post_init__(self):
        laws = _default_laws()
        for k, law in dict(self.laws).items():
            if k not in laws:
                raise ConfigurationError(f"laws.{k}: unknown parameter")
            laws[k] = law if isinstance(law, ParamLaw) else _law_from_dict(law, f"laws.{k}")
        object.__setattr__(self, "laws", laws)
        if int(self.n) != self.n or self.n < 1:
            raise ConfigurationError("n: must be a positive integer")
        if not self.noise_sigma >= 0:
            raise ConfigurationError("noise_sigma: must be >= 0")
        for name in ("alpha", "kappa"):
            lo, _ = laws[name].support()
            if not lo > 0:
                raise ConfigurationError(f"laws.{name}: support must be positive")
        lo, hi = laws["zeta"].support()
        if lo < ZETA_BOUNDS[0] or hi > ZETA_BOUNDS[1]:
            raise ConfigurationError("laws.zeta: support must lie in [-0.5, 0.5]")
        base_curve(self.base, TimeGrid(self.grid_points), **self.base_params)

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid(self.grid_points)

    def base_curve(self) -> SampledCurve:
        return base_curve(self.base, self.grid, **self.base_params)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["laws"] = {k: _law_to_dict(v) for k, v in self.laws.items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ConfigurationError(f"{sorted(extra)[0]}: unknown field")
        return cls(**d)


def _law_to_dict(law: ParamLaw) -> dict:
    if law.kind == "fixed":
        return {"kind": "fixed", "value": law.value}
    if law.kind == "uniform":
        return {"kind": "uniform", "low": law.low, "high": law.high}
    return {"kind": "truncnorm", "mean": law.mean, "sd": law.sd, "low": law.low, "high": law.high}


def _law_from_dict(d, path: str) -> ParamLaw:
    if not isinstance(d, dict):
        raise ConfigurationError(f"{path}: expected a table")
    try:
        return ParamLaw(**d)
    except TypeError as exc:
        raise ConfigurationError(f"{path}: {exc}") from None
    except ConfigurationError as exc:
        raise ConfigurationError(f"{path}.{exc}") from None


def sample_params(spec: SynthSpec, rng: np.random.Generator, size: int) -> np.ndarray:
    """``(size, 4)`` array of ``(alpha, beta, kappa, zeta)`` draws."""
    return np.column_stack([spec.laws[k].sample(rng, size) for k in PARAM_NAMES])


def _noise(rng, spec: SynthSpec, size: int) -> np.ndarray:
    return rng.normal(0.0, 1.0, (size, spec.grid_points)) * spec.noise_sigma


def generate_ic_set(spec: SynthSpec):
    """``(curves, true_params, true_base)`` with centred true parameters.

    Draws are projected onto the centrality constraints (geometric mean one
    for alpha and kappa, zero sum for beta and zeta) before the curves are
    formed, so the base curve is the Fréchet mean of the noiseless set.
    """
    rng = np.random.default_rng(spec.seed)
    raw = sample_params(spec, rng, spec.n)
    noise = _noise(rng, spec, spec.n)
    n = spec.n
    gamma = project_amplitude(np.concatenate([1.0 / raw[:, 0], raw[:, 1]]))
    xi = project_phase(np.concatenate([raw[:, 2], raw[:, 3]]))
    params = [SimParams(1.0 / gamma[j], gamma[n + j], xi[j], xi[n + j]) for j in range(n)]
    base = spec.base_curve()
    curves = [SampledCurve(base.grid, apply_deformation(base, p).values + e) for p, e in zip(params, noise)]
    return curves, params, base


@dataclass(frozen=True)
class Shift:
    """Change of the parameter law from step ``at_step`` on (1-based).

    Each sampled coordinate becomes ``x * multipliers[k] + deltas[k]``;
    shifted ``zeta`` is clipped to [-1/2, 1/2].
    """

    at_step: int = 1
    multipliers: dict = field(default_factory=dict)
    deltas: dict = field(default_factory=dict)

    def __post_init__(self):
        if int(self.at_step) != self.at_step or self.at_step < 1:
            raise ConfigurationError("at_step: must be >= 1")
        for k in list(self.multipliers) + list(self.deltas):
            if k not in PARAM_NAMES:
                raise ConfigurationError(f"shift: unknown parameter {k!r}")
        for k in ("alpha", "kappa"):
            if not self.multipliers.get(k, 1.0) > 0:
                raise ConfigurationError(f"shift: {k} multiplier must be positive")

    @property
    def is_identity(self) -> bool:
        return all(v == 1.0 for v in self.multipliers.values()) and all(v == 0.0 for v in self.deltas.values())

    def apply(self, draws: np.ndarray) -> np.ndarray:
        out = draws.copy()
        if self.is_identity:
            return out
        rows = slice(self.at_step - 1, None)
        for i, k in enumerate(PARAM_NAMES):
            out[rows, i] = out[rows, i] * self.multipliers.get(k, 1.0) + self.deltas.get(k, 0.0)
        out[:, 3] = np.clip(out[:, 3], *ZETA_BOUNDS)
        if np.any(out[:, [0, 2]] <= 0):
            raise ConfigurationError("shift produced a non-positive scale parameter")
        return out


def generate_stream(spec: SynthSpec, length: int, shift: Shift | None = None, seed=None):
    """``(curves, params)`` for a monitoring stream of ``length`` curves.

    Random draws do not depend on the shift: the shifted stream differs from
    the in-control one only through the transformed parameters.
    """
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    draws = sample_params(spec, rng, length)
    noise = _noise(rng, spec, length)
    if shift is not None:
        draws = shift.apply(draws)
    base = spec.base_curve()
    params = [SimParams(*row) for row in draws]
    curves = [SampledCurve(base.grid, apply_deformation(base, p).values + e) for p, e in zip(params, noise)]
    return curves, params


def inject_shift(spec: SynthSpec, length: int, shift: Shift, seed=None):
    """Stream whose parameter law changes at ``shift.at_step``."""
    return generate_stream(spec, length, shift, seed)


@dataclass(frozen=True)
class GridSpec:
    """Resolution of the brute-force oracle.

    ``mode="reduced"`` scans ``(kappa, zeta)`` and uses the closed-form
    amplitude; ``mode="full"`` also scans ``alpha`` and ``beta``.
    """

    n_kappa: int = 41
    n_zeta: int = 401
    mode: str = "reduced"
    n_alpha: int = 41
    n_beta: int = 41
    alpha_range: tuple = (0.25, 4.0)
    beta_range: tuple = (-2.0, 2.0)
    register: RegisterConfig = field(default_factory=RegisterConfig)

    def phase_axes(self):
        r = self.register
        lk = np.array([0.0]) if r.fix_kappa else np.linspace(np.log(r.kappa_bounds[0]), np.log(r.kappa_bounds[1]), self.n_kappa)
        z = np.array([0.0]) if r.fix_zeta else np.linspace(r.zeta_bounds[0], r.zeta_bounds[1], self.n_zeta)
        return lk, z


def _pick(values: np.ndarray, log_kappa: np.ndarray, zeta: np.ndarray, tie_tol: float = 1e-12) -> int:
    """Index of the minimum; near-ties go to smallest |zeta|, then |log kappa|."""
    best = values.min()
    near = np.flatnonzero(values <= best + tie_tol * max(abs(best), 1e-300))
    order = np.lexsort((np.abs(log_kappa[near]), np.abs(zeta[near])))
    return int(near[order[0]])


def brute_force_register(fj: SampledCurve, f0: SampledCurve, grid_spec: GridSpec | None = None):
    """Exhaustive-grid registration; the argmin over the grid as SimParams."""
    gs = grid_spec or GridSpec()
    lk_axis, z_axis = gs.phase_axes()
    LK, Z = (a.ravel() for a in np.meshgrid(lk_axis, z_axis, indexing="ij"))
    t, q = f0.grid.points, f0.grid.weights
    f = fj.values
    best = None
    chunk = 512
    for s in range(0, LK.size, chunk):
        lk, z = LK[s:s + chunk], Z[s:s + chunk]
        args = (t - z[:, None]) / np.exp(lk)[:, None]
        W = np.interp(args.ravel(), t, f0.values).reshape(args.shape)
        if gs.mode == "reduced":
            m_w, m_f = W @ q, q @ f
            var = (W * W) @ q - m_w**2
            cov = W @ (q * f) - m_w * m_f
            ok = var > DEGENERACY_RTOL * (q @ (f0.values**2))
            alpha = np.where(ok, np.maximum(cov / np.where(ok, var, 1.0), gs.register.alpha_floor), 1.0)
            beta = m_f - alpha * m_w
            R = f - beta[:, None] - alpha[:, None] * W
            vals = (R * R) @ q
            cand = np.column_stack([alpha, beta, lk, z])
        else:
            A = np.linspace(*gs.alpha_range, gs.n_alpha)
            B = np.linspace(*gs.beta_range, gs.n_beta)
            R = f - B[None, None, :, None] - A[None, :, None, None] * W[:, None, None, :]
            vals4 = (R * R) @ q
            k = vals4.reshape(len(lk), -1).argmin(axis=1)
            ia, ib = np.unravel_index(k, (gs.n_alpha, gs.n_beta))
            vals = vals4.reshape(len(lk), -1)[np.arange(len(lk)), k]
            cand = np.column_stack([A[ia], B[ib], lk, z])
        i = _pick(vals, cand[:, 2], cand[:, 3])
        if best is None or vals[i] < best[0] or (
            vals[i] <= best[0] + 1e-12 * abs(best[0])
            and (abs(cand[i, 3]), abs(cand[i, 2])) < (abs(best[1][3]), abs(best[1][2]))
        ):
            best = (float(vals[i]), cand[i])
    a, b, lk, z = best[1]
    return SimParams(a, b, 1.0 if lk == 0 else float(np.exp(lk)), z)


@dataclass
class RunLengthSummary:
    first_alarm: list
    flag_rate: float
    flag_rates: list
    delays: list
    delay_quantiles: dict

    def as_dict(self) -> dict:
        return asdict(self)


def run_length_experiment(spec: SynthSpec, monitor_cfg, replicates: int, length: int,
                          shift: Shift | None = None, ic=None, limits=None,
                          quantiles: Sequence[float] = (0.1, 0.5, 0.9)) -> RunLengthSummary:
    """Monte Carlo of the chart on seeded synthetic streams.

    Phase I runs once on ``generate_ic_set(spec)`` unless ``ic``/``limits``
    are given. Replicate ``r`` streams from its own child seed. The delay
    is the first alarm at or after the shift step minus that step.
    """
    from .ewma import EwmaMonitor, init_state, initial_deviance, initial_state
    from .frechet import FrechetConfig, estimate_frechet_mean

    if replicates < 1:
        raise ConfigurationError("replicates must be >= 1")
    if ic is None:
        curves, _, _ = generate_ic_set(spec)
        ic = estimate_frechet_mean(curves, FrechetConfig(fix_kappa=monitor_cfg.fix_kappa, register=monitor_cfg.register))
    if limits is None:
        state0, limits = init_state(ic.f0, ic, monitor_cfg)
    else:
        state0 = initial_state(ic.f0, initial_deviance(ic, monitor_cfg))
    children = np.random.SeedSequence(spec.seed).spawn(replicates)
    start = shift.at_step if shift is not None else 1
    first, rates, delays = [], [], []
    for child in children:
        monitor = EwmaMonitor(ic, monitor_cfg, state0, limits)
        stream, _ = generate_stream(spec, length, shift, seed=child)
        flags = [p.ooc for p in monitor.run(stream)]
        hits = [j + 1 for j, f in enumerate(flags) if f]
        first.append(hits[0] if hits else None)
        rates.append(float(np.mean(flags)))
        after = [h for h in hits if h >= start]
        if after:
            delays.append(after[0] - start)
    qs = {str(q): float(np.quantile(delays, q)) for q in quantiles} if delays else {}
    return RunLengthSummary(first, float(np.mean(rates)), rates, delays, qs)
