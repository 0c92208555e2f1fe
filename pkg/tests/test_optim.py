import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import optimize

from oracles import zeta_projection_qp

from frechet_spc.errors import DomainError, IdentifiabilityError
from frechet_spc.optim import (BoxSpec, bounded_brent, grid_zoom_minimize, least_squares_solve,
                               multistart_minimize, project_amplitude, project_phase)


def test_least_squares_examples(rng):
    b = rng.normal(size=4)
    assert np.allclose(least_squares_solve(np.eye(4), b), b)
    t = np.linspace(0, 1, 30)
    coef = least_squares_solve(np.column_stack([t, np.ones_like(t)]), 2 * t + 1)
    assert np.allclose(coef, [2, 1], atol=1e-10)


def test_least_squares_matches_normal_equations(rng):
    A = rng.normal(size=(50, 5))
    y = rng.normal(size=50)
    x = least_squares_solve(A, y)
    assert np.allclose(x, np.linalg.solve(A.T @ A, A.T @ y), atol=1e-8)
    r = y - A @ x
    assert np.max(np.abs(A.T @ r)) <= 1e-8 * np.linalg.norm(A) * np.linalg.norm(y)


def test_least_squares_rank_deficient():
    A = np.column_stack([np.ones(5), 2 * np.ones(5)])
    with pytest.raises(IdentifiabilityError):
        least_squares_solve(A, np.arange(5.0))


def test_box_validation():
    with pytest.raises(DomainError):
        BoxSpec([1.0], [0.0])


def test_multistart_convex_bowl():
    c = np.array([0.3, -0.7])
    rep = multistart_minimize(lambda x: float(np.sum((x - c) ** 2)), BoxSpec([-2, -2], [2, 2]), restarts=3)
    assert np.allclose(rep.best_point, c, atol=1e-6)
    assert rep.best_value <= np.min(rep.start_values)


def _double_well(x):
    # basins near x = -1 (deeper) and x = +1
    return float((x[0] ** 2 - 1) ** 2 - 0.3 * np.exp(-10 * (x[0] + 1) ** 2) + x[1] ** 2)


def test_multistart_finds_global_basin():
    box = BoxSpec([-2, -1], [2, 1])
    rep = multistart_minimize(_double_well, box, restarts=16, seed=4)
    dense = np.linspace(-2, 2, 400001)
    global_min = np.min((dense**2 - 1) ** 2 - 0.3 * np.exp(-10 * (dense + 1) ** 2))
    assert rep.best_value <= global_min + 1e-6
    assert rep.best_point[0] < 0


def test_multistart_deterministic_and_monotone():
    box = BoxSpec([-2, -1], [2, 1])
    a = multistart_minimize(_double_well, box, restarts=5, seed=9)
    b = multistart_minimize(_double_well, box, restarts=5, seed=9)
    assert np.array_equal(a.best_point, b.best_point) and a.best_value == b.best_value
    assert a.evaluations == b.evaluations
    values = [multistart_minimize(_double_well, box, restarts=r, seed=9).best_value for r in (1, 2, 4, 8)]
    assert all(v2 <= v1 + 1e-15 for v1, v2 in zip(values, values[1:]))


def test_multistart_annealing_engine():
    rep = multistart_minimize(_double_well, BoxSpec([-2, -1], [2, 1]), restarts=2, seed=1, engine="annealing")
    assert rep.best_point[0] < 0


def test_multistart_nonfinite_objective():
    with pytest.raises(Exception):
        multistart_minimize(lambda x: np.nan, BoxSpec([0.0], [1.0]), restarts=1)


def test_bounded_brent_matches_scipy():
    f = lambda x: (x - 0.3) ** 2 + 0.1 * np.sin(8 * x)
    x, fx, _ = bounded_brent(f, -1.0, 2.0, xatol=1e-8)
    ref = optimize.minimize_scalar(f, bounds=(-1.0, 2.0), method="bounded", options={"xatol": 1e-8})
    assert x == pytest.approx(ref.x, abs=1e-12)
    assert fx == pytest.approx(ref.fun, abs=1e-15)


def test_grid_zoom_minimize_two_dims():
    c = np.array([0.123, -0.321])
    batch = lambda P: np.sum((P - c) ** 2, axis=1)
    rep = grid_zoom_minimize(batch, BoxSpec([-1, -1], [1, 1]), scan_points=(21, 21))
    assert np.allclose(rep.best_point, c, atol=1e-7)
    assert isinstance(rep.evaluations, int)


# ---- projections

def test_project_amplitude_examples():
    assert np.allclose(project_amplitude([2, 2, 1, 3]), [1, 1, -1, 1], atol=1e-15)
    feasible = np.array([2.0, 0.5, 0.3, -0.3])
    assert np.allclose(project_amplitude(feasible), feasible, atol=1e-15)


def test_project_amplitude_flags_clamped():
    out, info = project_amplitude([-1.0, 1.0, 0.0, 0.0], return_info=True)
    assert info["clamped"] == [0]
    assert np.all(out[:2] > 0)


def test_project_phase_examples():
    assert np.allclose(project_phase([4, 1, 0.2, 0]), [2, 0.5, 0.1, -0.1], atol=1e-15)
    feasible = np.array([0.8, 1.25, 0.4, -0.4])
    assert np.allclose(project_phase(feasible), feasible, atol=1e-15)


def test_project_phase_matches_qp_oracle(rng):
    # (0.6, 0) projects to (0.3, -0.3): centring alone is already feasible
    assert np.allclose(project_phase([1, 1, 0.6, 0.0])[2:], [0.3, -0.3], atol=1e-15)
    for _ in range(30):
        n = int(rng.integers(2, 7))
        z = rng.uniform(-1.5, 1.5, n)
        got = project_phase(np.concatenate([np.ones(n), z]))[n:]
        assert np.allclose(got, zeta_projection_qp(z), atol=1e-7)


def test_project_phase_clips_heavy_mass():
    out = project_phase([1, 1, 1, 2.0, 0.4, 0.4])[3:]
    assert np.all(out <= 0.5) and np.all(out >= -0.5)
    assert abs(out.sum()) <= 1e-12
    assert out[0] == 0.5


vec = st.integers(1, 8).flatmap(lambda n: st.tuples(
    st.lists(st.floats(1e-3, 1e3), min_size=n, max_size=n),
    st.lists(st.floats(-3, 3), min_size=n, max_size=n)))


@given(vec)
@settings(max_examples=100, deadline=None)
def test_projections_feasible_and_idempotent(parts):
    scales, offs = (np.array(p) for p in parts)
    x = np.concatenate([scales, offs])
    for proj in (project_amplitude, project_phase):
        p = proj(x)
        n = len(scales)
        assert abs(np.mean(np.log(p[:n]))) <= 1e-12
        assert abs(p[n:].sum()) <= 1e-12
        assert np.allclose(proj(p), p, rtol=0, atol=1e-12)
    z = project_phase(x)[n:]
    assert np.all(np.abs(z) <= 0.5)


@given(vec, vec)
@settings(max_examples=100, deadline=None)
def test_offset_projection_nonexpansive(parts, anchor_parts):
    n = len(parts[0])
    z = np.array(parts[1])
    a = np.resize(np.array(anchor_parts[1]), n)
    anchor = project_phase(np.concatenate([np.ones(n), a]))[n:]
    got = project_phase(np.concatenate([np.ones(n), z]))[n:]
    assert np.linalg.norm(got - anchor) <= np.linalg.norm(z - anchor) + 1e-12
    # scales: nonexpansive in log coordinates
    s = np.array(parts[0])
    sa = project_phase(np.concatenate([np.resize(np.array(anchor_parts[0]), n), np.zeros(n)]))[:n]
    ps = project_phase(np.concatenate([s, np.zeros(n)]))[:n]
    assert np.linalg.norm(np.log(ps) - np.log(sa)) <= np.linalg.norm(np.log(s) - np.log(sa)) + 1e-10
