import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from frechet_spc.curves import (SampledCurve, TimeGrid, curve_from_samples, evaluate, integrate, l2_distance,
                                l2_inner, l2_norm, resample, warp_evaluate)
from frechet_spc.errors import DomainError, ShapeError

from conftest import identity_curve


def test_grid_invariants():
    g = TimeGrid(7)
    assert g.points[0] == 0.0 and g.points[-1] == 1.0
    assert np.all(np.diff(g.points) > 0)
    assert np.isclose(g.weights.sum(), 1.0)
    with pytest.raises(DomainError):
        TimeGrid(1)
    with pytest.raises(DomainError):
        TimeGrid.from_points([0.0, 0.3, 1.0])


def test_curve_validation():
    g = TimeGrid(5)
    with pytest.raises(ShapeError):
        SampledCurve(g, np.zeros(4))
    with pytest.raises(DomainError):
        SampledCurve(g, [0, 1, np.nan, 0, 0])


@pytest.mark.parametrize("t, expected", [(0.45, 0.45), (-0.3, 0.0), (1.7, 1.0), (0.0, 0.0), (1.0, 1.0)])
def test_evaluate_identity(t, expected):
    assert evaluate(identity_curve(), t) == pytest.approx(expected, abs=1e-15)


def test_evaluate_rejects_nonfinite():
    with pytest.raises(DomainError):
        evaluate(identity_curve(), np.inf)


@pytest.mark.parametrize("t, kappa, zeta, expected", [(0.5, 1, 0, 0.5), (0.5, 0.5, 0.25, 0.5), (0.1, 1, 0.5, 0.0)])
def test_warp_evaluate(t, kappa, zeta, expected):
    assert warp_evaluate(identity_curve(), t, kappa, zeta) == pytest.approx(expected, abs=1e-15)


def test_warp_evaluate_rejects_bad_kappa():
    with pytest.raises(DomainError):
        warp_evaluate(identity_curve(), 0.5, 0.0, 0.0)


def test_identity_warp_is_exact(sine):
    t = sine.grid.points
    assert np.array_equal(warp_evaluate(sine, t, 1.0, 0.0), evaluate(sine, t))


def test_inner_products(grid):
    one, zero = SampledCurve.constant(1.0, grid), SampledCurve.constant(0.0, grid)
    ident = SampledCurve(grid, grid.points)
    assert l2_inner(one, one) == pytest.approx(1.0, abs=1e-14)
    assert l2_inner(zero, ident) == 0.0
    assert abs(l2_inner(ident, ident) - 1 / 3) <= 1e-4
    assert l2_distance(zero, one) == pytest.approx(1.0, abs=1e-14)
    assert l2_distance(ident, ident) == 0.0
    assert abs(l2_distance(zero, ident) - 1 / np.sqrt(3)) <= 1e-4


def test_grid_mismatch_raises():
    with pytest.raises(ShapeError):
        l2_inner(identity_curve(11), identity_curve(12))


def test_quadrature_is_second_order():
    errs = []
    for m in (11, 21, 41, 81):
        c = SampledCurve.from_function(np.exp, TimeGrid(m))
        errs.append(abs(integrate(c) - (np.e - 1)))
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all(ratios > 3.5)


def test_resample_examples():
    fine = resample(identity_curve(11), TimeGrid(101))
    assert np.max(np.abs(fine.values - fine.grid.points)) <= 1e-15
    const = resample(SampledCurve.constant(2.5, TimeGrid(24)), TimeGrid(37))
    assert np.all(const.values == 2.5)


def test_resample_sine_interpolation_bound():
    coarse = SampledCurve.from_function(lambda t: np.sin(2 * np.pi * t), TimeGrid(24))
    fine = resample(coarse, TimeGrid(101))
    h = 1 / 23
    bound = (2 * np.pi) ** 2 * h * h / 8
    assert np.max(np.abs(fine.values - np.sin(2 * np.pi * fine.grid.points))) <= bound


def test_curve_from_samples_maps_hours():
    c = curve_from_samples(np.arange(24.0), TimeGrid(24))
    assert np.allclose(c.values, np.arange(24.0))
    c101 = curve_from_samples(np.arange(24.0), TimeGrid(101))
    assert np.allclose(c101.values, 23 * c101.grid.points)


vectors = st.lists(st.floats(-10, 10), min_size=21, max_size=21)


@given(vectors, vectors, vectors)
@settings(max_examples=60, deadline=None)
def test_triangle_inequality(a, b, c):
    g = TimeGrid(21)
    f, h, k = (SampledCurve(g, v) for v in (a, b, c))
    assert l2_distance(f, k) <= l2_distance(f, h) + l2_distance(h, k) + 1e-12
    assert l2_distance(f, h) == pytest.approx(l2_distance(h, f), abs=0)
    assert l2_norm(f) >= 0
