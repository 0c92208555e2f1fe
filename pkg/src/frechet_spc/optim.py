"""Small optimisation toolkit for the low-dimensional subproblems.

* :func:`least_squares_solve` for the quadratic (amplitude) stage,
* :func:`multistart_minimize` (seeded multi-start simplex or annealing),
* :func:`grid_zoom_minimize`, a vectorised scan followed by a shrinking
  pattern search, used on hot paths where the objective can be evaluated
  in batches,
* projections onto the centrality sets for amplitude and phase parameters.
"""

from __future__ import annotations

import math
import warnings
from functools import lru_cache
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import optimize
from scipy.stats import qmc

from .errors import ConvergenceError, DomainError, IdentifiabilityError, ShapeError

POSITIVITY_FLOOR = 1e-6
ZETA_BOUNDS = (-0.5, 0.5)


@dataclass(frozen=True)
class BoxSpec:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lower.shape != upper.shape or lower.ndim != 1:
            raise ShapeError("box bounds must be 1-D arrays of equal length")
        if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
            raise DomainError("box bounds must be finite")
        if np.any(lower > upper):
            raise DomainError("box lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def clip(self, x) -> np.ndarray:
        return np.clip(x, self.lower, self.upper)

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))

    def sample(self, n: int, seed) -> np.ndarray:
        """``n`` space-filling start points.

        Scrambled Halton points: every prefix is well spread and a longer
        draw extends a shorter one, so more restarts never lose a start.
        """
        if n <= 0:
            return np.empty((0, self.dim))
        sampler = qmc.Halton(d=self.dim, scramble=True, seed=seed)
        unit = sampler.random(n)
        return self.lower + unit * self.width


@dataclass
class OptimReport:
    best_point: np.ndarray
    best_value: float
    evaluations: int
    converged: bool
    starts: np.ndarray = field(default=None, repr=False)
    start_values: np.ndarray = field(default=None, repr=False)


def least_squares_solve(design, target, rtol: float = 1e-10) -> np.ndarray:
    """Minimise ``||design @ x - target||`` via an SVD-based solver.

    Raises :class:`IdentifiabilityError` when the design is rank deficient
    relative to ``rtol`` times its largest singular value.
    """
    A = np.asarray(design, dtype=float)
    b = np.asarray(target, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    if A.ndim != 2 or b.shape[0] != A.shape[0]:
        raise ShapeError(f"design {A.shape} incompatible with target {b.shape}")
    if A.shape[0] < A.shape[1]:
        raise IdentifiabilityError("fewer equations than unknowns")
    s = np.linalg.svd(A, compute_uv=False)
    if s.size == 0 or s[0] == 0.0 or s[-1] <= rtol * s[0]:
        raise IdentifiabilityError("design matrix is rank deficient")
    x, *_ = np.linalg.lstsq(A, b, rcond=None)
    return x


def _is_better(value, point, best_value, best_point, tie_key, tie_tol):
    if best_point is None:
        return True
    scale = max(1.0, abs(best_value))
    if value < best_value - tie_tol * scale:
        return True
    if value <= best_value + tie_tol * scale and tie_key is not None:
        return tie_key(point) < tie_key(best_point)
    return False


def _checked(objective, x):
    value = float(objective(x))
    if not np.isfinite(value):
        raise ConvergenceError(f"objective is not finite at {np.asarray(x).tolist()}", best=x)
    return value


def multistart_minimize(
    objective: Callable[[np.ndarray], float],
    box: BoxSpec,
    restarts: int = 8,
    seed: int = 0,
    engine: str = "nelder-mead",
    starts: Sequence | None = None,
    xatol: float = 1e-10,
    fatol: float = 1e-14,
    maxfev: int | None = None,
    tie_key: Callable[[np.ndarray], float] | None = None,
    tie_tol: float = 1e-12,
) -> OptimReport:
    """Seeded multi-start local search inside ``box``.

    Every start (``starts`` first, then ``restarts`` space-filling points)
    is polished with a bounded Nelder-Mead simplex; with
    ``engine="annealing"`` a dual-annealing run seeded from the best start
    is added. The best result is returned, ties resolved by ``tie_key``.
    """
    if restarts < 1:
        raise DomainError("restarts must be >= 1")
    if engine not in ("nelder-mead", "annealing"):
        raise DomainError(f"unknown engine {engine!r}")
    extra = np.empty((0, box.dim)) if starts is None else np.atleast_2d(np.asarray(starts, float))
    if extra.size and extra.shape[1] != box.dim:
        raise ShapeError("start points do not match box dimension")
    points = np.vstack([box.clip(extra), box.sample(restarts, seed)])

    nfev = 0
    start_values = np.empty(len(points))
    for i, x0 in enumerate(points):
        start_values[i] = _checked(objective, x0)
        nfev += 1

    best_point, best_value, converged = None, np.inf, True
    for x0, v0 in zip(points, start_values):
        if _is_better(v0, x0, best_value, best_point, tie_key, tie_tol):
            best_point, best_value = x0.copy(), v0

    step = np.where(box.width > 0, 0.05 * box.width, 0.0)
    bounds = list(zip(box.lower, box.upper))
    options = {"xatol": xatol, "fatol": fatol}
    if maxfev is not None:
        options["maxfev"] = maxfev
    for x0 in points:
        simplex = [x0]
        for i in range(box.dim):
            v = x0.copy()
            v[i] = x0[i] + step[i] if x0[i] + step[i] <= box.upper[i] else x0[i] - step[i]
            simplex.append(v)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            res = optimize.minimize(
                objective, x0, method="Nelder-Mead", bounds=bounds,
                options={**options, "initial_simplex": np.array(simplex)},
            )
        nfev += res.nfev
        converged &= bool(res.success)
        x = box.clip(res.x)
        value = _checked(objective, x)
        if _is_better(value, x, best_value, best_point, tie_key, tie_tol):
            best_point, best_value = x, value

    if engine == "annealing":
        res = optimize.dual_annealing(
            objective, bounds=bounds, seed=seed, x0=best_point, maxfun=2000 * box.dim
        )
        nfev += res.nfev
        x = box.clip(res.x)
        value = _checked(objective, x)
        if _is_better(value, x, best_value, best_point, tie_key, tie_tol):
            best_point, best_value = x, value
    return OptimReport(best_point, float(best_value), nfev, converged, points, start_values)


def _local_minima_order(values: np.ndarray) -> np.ndarray:
    """Flat indices of grid local minima (8-neighbourhood), best first."""
    if values.ndim == 1:
        padded = np.concatenate([[np.inf], values, [np.inf]])
        idx = np.flatnonzero((values <= padded[:-2]) & (values <= padded[2:]))
        return idx[np.argsort(values[idx], kind="stable")]
    padded = np.pad(values, 1, mode="constant", constant_values=np.inf)
    core = padded[tuple(slice(1, -1) for _ in values.shape)]
    is_min = np.ones(values.shape, dtype=bool)
    for offs in np.ndindex(*(3,) * values.ndim):
        if all(o == 1 for o in offs):
            continue
        sl = tuple(slice(o, o + n) for o, n in zip(offs, values.shape))
        is_min &= core <= padded[sl]
    idx = np.flatnonzero(is_min.ravel())
    return idx[np.argsort(values.ravel()[idx], kind="stable")]


@lru_cache(maxsize=64)
def _scan_grid(lower: tuple, upper: tuple, counts: tuple):
    axes = [
        np.linspace(lo, hi, n) if hi > lo else np.array([lo])
        for lo, hi, n in zip(lower, upper, counts)
    ]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    scan = mesh.reshape(-1, len(axes))
    scan.setflags(write=False)
    return axes, scan, mesh.shape[:-1]


_GOLDEN = 0.5 * (3.0 - math.sqrt(5.0))
_SQRT_EPS = math.sqrt(2.2e-16)


def bounded_brent(f, a: float, b: float, xatol: float = 1e-8, maxfun: int = 500):
    """Brent's bounded scalar minimiser; returns ``(x, f(x), evaluations)``.

    Same iteration as ``scipy.optimize.minimize_scalar(method="bounded")``
    without the per-call bookkeeping, which dominates on this hot path.
    """
    fulc = nfc = xf = a + _GOLDEN * (b - a)
    rat = e = 0.0
    fx = f(xf)
    num = 1
    ffulc = fnfc = fx
    xm = 0.5 * (a + b)
    tol1 = _SQRT_EPS * abs(xf) + xatol / 3.0
    tol2 = 2.0 * tol1
    while abs(xf - xm) > tol2 - 0.5 * (b - a) and num < maxfun:
        golden = True
        if abs(e) > tol1:
            golden = False
            r = (xf - nfc) * (fx - ffulc)
            q = (xf - fulc) * (fx - fnfc)
            p = (xf - fulc) * q - (xf - nfc) * r
            q = 2.0 * (q - r)
            if q > 0.0:
                p = -p
            q = abs(q)
            r, e = e, rat
            if abs(p) < abs(0.5 * q * r) and q * (a - xf) < p < q * (b - xf):
                rat = p / q
                x = xf + rat
                if x - a < tol2 or b - x < tol2:
                    rat = math.copysign(tol1, xm - xf) if xm != xf else tol1
            else:
                golden = True
        if golden:
            e = a - xf if xf >= xm else b - xf
            rat = _GOLDEN * e
        x = xf + (math.copysign(1.0, rat) if rat != 0 else 1.0) * max(abs(rat), tol1)
        fu = f(x)
        num += 1
        if fu <= fx:
            if x >= xf:
                a = xf
            else:
                b = xf
            fulc, ffulc = nfc, fnfc
            nfc, fnfc = xf, fx
            xf, fx = x, fu
        else:
            if x < xf:
                a = x
            else:
                b = x
            if fu <= fnfc or nfc == xf:
                fulc, ffulc = nfc, fnfc
                nfc, fnfc = x, fu
            elif fu <= ffulc or fulc == xf or fulc == nfc:
                fulc, ffulc = x, fu
        xm = 0.5 * (a + b)
        tol1 = _SQRT_EPS * abs(xf) + xatol / 3.0
        tol2 = 2.0 * tol1
    return xf, fx, num


def _brent_refine(f, box, c, cv, h, xtol, max_rounds):
    """Bracket a local minimum by doubling steps, then polish with Brent."""
    lo_box, hi_box = float(box.lower[0]), float(box.upper[0])
    x0, used = float(c[0]), 0

    def value(x):
        v = float(f(x))
        if not np.isfinite(v):
            raise ConvergenceError(f"objective is not finite at {[x]}", best=np.array([x]))
        return v

    for _ in range(max_rounds):
        lo, hi = max(x0 - h, lo_box), min(x0 + h, hi_box)
        f_lo = value(lo) if lo < x0 else np.inf
        f_hi = value(hi) if hi > x0 else np.inf
        used += (lo < x0) + (hi > x0)
        if cv <= f_lo and cv <= f_hi:
            break
        if f_lo < f_hi:
            x0, cv = lo, f_lo
        else:
            x0, cv = hi, f_hi
        h *= 2.0
    else:
        return np.array([x0]), cv, used, False
    if hi - lo > xtol:
        x, v, nfev = bounded_brent(f, lo, hi, xtol)
        used += nfev
        if v < cv:
            x0, cv = x, v
    return np.array([x0]), cv, used, True


def grid_zoom_minimize(
    batch_objective: Callable[[np.ndarray], np.ndarray],
    box: BoxSpec,
    scan_points: int | Sequence[int] = 101,
    starts: Sequence | None = None,
    candidates: int = 3,
    xtol: float = 1e-9,
    zoom_points: int | None = None,
    initial_step=None,
    scalar_objective: Callable[[float], float] | None = None,
    max_levels: int = 200,
    tie_key: Callable[[np.ndarray], float] | None = None,
    tie_tol: float = 1e-12,
) -> OptimReport:
    """Vectorised scan of ``box`` followed by shrinking local pattern search.

    ``batch_objective`` maps an ``(k, d)`` array of points to ``k`` values.
    The ``candidates`` best points among the scan's local minima and the
    explicit starts are refined: a small grid around the current centre is
    evaluated, the centre moves to its best point and the grid shrinks
    whenever that point is interior. Deterministic; no random numbers.

    ``scan_points=None`` skips the scan and refines the starts only, with
    ``initial_step`` (default 1% of the box width) as the first half-width.
    In one dimension a ``scalar_objective`` switches the refinement to
    bounded Brent on ``[c - h, c + h]``, recentred while the minimum sits
    on the bracket edge.
    """
    d = box.dim
    pool = []
    nfev = 0
    if scan_points is not None:
        counts = tuple(int(c) for c in np.broadcast_to(np.asarray(scan_points, dtype=int), (d,)))
        axes, scan, mesh_shape = _scan_grid(tuple(box.lower), tuple(box.upper), counts)
        scan_vals = np.asarray(batch_objective(scan), dtype=float)
        nfev += len(scan)
        if not np.all(np.isfinite(scan_vals)):
            bad = scan[~np.isfinite(scan_vals)][0]
            raise ConvergenceError(f"objective is not finite at {bad.tolist()}", best=bad)
        order = _local_minima_order(scan_vals.reshape(mesh_shape))
        pool = [(float(scan_vals[i]), scan[i]) for i in order[:candidates]]
        spacing = np.array([(a[1] - a[0]) if a.size > 1 else 0.0 for a in axes])
    elif starts is None:
        raise ValueError("without a scan, explicit starts are required")
    else:
        spacing = 0.01 * box.width
    if initial_step is not None:
        spacing = np.broadcast_to(np.asarray(initial_step, dtype=float), (d,)).copy()
    if starts is not None:
        extra = box.clip(np.atleast_2d(np.asarray(starts, float)))
        extra_vals = np.asarray(batch_objective(extra), dtype=float)
        nfev += len(extra)
        pool += [(float(v), x) for v, x in zip(extra_vals, extra) if np.isfinite(v)]
    if not pool:
        raise ConvergenceError("objective is not finite at any start")
    pool.sort(key=lambda vx: vx[0])
    centres = []
    for v, x in pool:
        if not any(np.array_equal(x, c) for _, c in centres):
            centres.append((v, x))
        if len(centres) == candidates:
            break

    p = zoom_points or (21 if d == 1 else 7)
    offsets_1d = np.linspace(-1.0, 1.0, p)
    offsets = np.stack(np.meshgrid(*([offsets_1d] * d), indexing="ij"), axis=-1).reshape(-1, d)
    edge = np.any(np.abs(offsets) == 1.0, axis=1)

    best_point, best_value = None, np.inf
    for v, x in pool:
        if _is_better(v, x, best_value, best_point, tie_key, tie_tol):
            best_point, best_value = x.copy(), v
    converged = True
    for cv, c in centres:
        if d == 1 and scalar_objective is not None:
            c, cv, used, ok = _brent_refine(scalar_objective, box, c, cv, spacing[0], xtol, max_levels)
            nfev += used
            converged &= ok
        else:
            h = spacing.copy()
            for _ in range(max_levels):
                if np.all(h <= xtol):
                    break
                pts = box.clip(c + offsets * h)
                vals = np.asarray(batch_objective(pts), dtype=float)
                nfev += len(pts)
                k = int(np.argmin(vals))
                if vals[k] < cv:
                    c, cv = pts[k], float(vals[k])
                    at_wall = np.any((pts[k] == box.lower) | (pts[k] == box.upper))
                    if edge[k] and not at_wall:
                        continue
                h = h * (2.0 / (p - 1))
            else:
                converged = False
        if _is_better(cv, c, best_value, best_point, tie_key, tie_tol):
            best_point, best_value = c.copy(), cv
    return OptimReport(best_point, float(best_value), int(nfev), converged)


def project_amplitude(gamma, floor: float = POSITIVITY_FLOOR, return_info: bool = False):
    """Map ``(abar_1..abar_n, beta_1..beta_n)`` onto the amplitude set.

    Scales get geometric mean one (log-space centring after flooring at
    ``floor``); offsets get zero sum (mean centring).
    """
    gamma = np.asarray(gamma, dtype=float)
    if gamma.ndim != 1 or gamma.size % 2:
        raise ShapeError("gamma must be a flat vector of even length")
    n = gamma.size // 2
    scales, offsets = gamma[:n], gamma[n:]
    if not np.all(np.isfinite(gamma)):
        raise DomainError("gamma must be finite")
    clamped = np.flatnonzero(scales <= 0)
    scales = _log_centre(np.maximum(scales, floor))
    offsets = offsets - offsets.mean()
    out = np.concatenate([scales, offsets])
    if return_info:
        return out, {"clamped": clamped.tolist()}
    return out


def project_phase(xi, floor: float = POSITIVITY_FLOOR, bounds=ZETA_BOUNDS, return_info: bool = False):
    """Map ``(kappa_1..kappa_n, zeta_1..zeta_n)`` onto the phase set.

    Scales get geometric mean one; shifts get the Euclidean projection onto
    ``{sum(zeta) = 0, lo <= zeta <= hi}``, i.e. ``clip(zeta - nu)`` with the
    scalar ``nu`` found by bisection.
    """
    xi = np.asarray(xi, dtype=float)
    if xi.ndim != 1 or xi.size % 2:
        raise ShapeError("xi must be a flat vector of even length")
    if not np.all(np.isfinite(xi)):
        raise DomainError("xi must be finite")
    n = xi.size // 2
    scales, shifts = xi[:n], xi[n:]
    clamped = np.flatnonzero(scales <= 0)
    scales = _log_centre(np.maximum(scales, floor))
    shifts = centre_in_box(shifts, *bounds)
    out = np.concatenate([scales, shifts])
    if return_info:
        return out, {"clamped": clamped.tolist()}
    return out


def _log_centre(x: np.ndarray) -> np.ndarray:
    logs = np.log(x)
    return np.exp(logs - logs.mean())


def centre_in_box(z: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Euclidean projection of ``z`` onto ``{sum = 0} x [lo, hi]^n``."""
    z = np.asarray(z, dtype=float)
    if not lo <= 0.0 <= hi:
        raise DomainError("zero-sum centring needs lo <= 0 <= hi")
    shifted = z - z.mean()
    if np.all((shifted >= lo) & (shifted <= hi)):
        return shifted
    # sum(clip(z - nu)) is non-increasing in nu; bracket and bisect
    a, b = z.min() - hi, z.max() - lo
    for _ in range(200):
        mid = 0.5 * (a + b)
        if np.clip(z - mid, lo, hi).sum() > 0.0:
            a = mid
        else:
            b = mid
        if b - a <= 1e-16 * max(1.0, abs(mid)):
            break
    out = np.clip(z - 0.5 * (a + b), lo, hi)
    # remove the bisection residue on the free coordinates
    free = (out > lo) & (out < hi)
    if free.any():
        out[free] -= out.sum() / free.sum()
        out = np.clip(out, lo, hi)
    return out
