import numpy as np
import pytest

from frechet_spc.curves import SampledCurve, l2_norm
from frechet_spc.errors import ConfigurationError, IdentifiabilityError, ShapeError
from frechet_spc.frechet import (FrechetConfig, ParamBank, amplitude_stage, build_mean_curve,
                                 estimate_frechet_mean, frechet_objective, phase_stage)
from frechet_spc.sim import RegisterConfig, SimParams, apply_deformation
from frechet_spc.synth import ParamLaw, SynthSpec, generate_ic_set


def _shifted(sine, zetas):
    return [apply_deformation(sine, SimParams(zeta=z)) for z in zetas]


def test_config_validation():
    with pytest.raises(ConfigurationError):
        FrechetConfig(weights=(0.5, 0.6))
    with pytest.raises(ConfigurationError):
        FrechetConfig(tolerance=0)
    assert FrechetConfig(fix_kappa=True).register.fix_kappa


def test_objective_trivial_cases(sine):
    assert frechet_objective([sine], ParamBank.identity(1)) == 0.0
    assert frechet_objective([sine, sine], ParamBank.identity(2)) == 0.0


def test_objective_offset_pair(sine):
    curves = [sine, sine + 2.0]
    bank = ParamBank.identity(2)
    mean = build_mean_curve(curves, bank)
    assert np.allclose(mean.values, sine.values + 1.0)
    # each curve sits at distance 1 from f + 1; weights 1/2 each
    assert frechet_objective(curves, bank) == pytest.approx(1.0, abs=1e-12)


def test_objective_shape_mismatch(sine):
    with pytest.raises(ShapeError):
        frechet_objective([sine, sine], ParamBank.identity(3))


def test_build_mean_single_curve(sine):
    assert build_mean_curve([sine], ParamBank.identity(1)) == sine


def test_amplitude_stage_equal_curves(sine):
    gamma = amplitude_stage([sine] * 3, ParamBank.identity(3).xi)
    assert np.allclose(gamma, [1, 1, 1, 0, 0, 0], atol=1e-12)


def test_amplitude_stage_scaled_pair(grid):
    f = SampledCurve.from_function(lambda t: np.sin(2 * np.pi * t), grid)
    gamma = amplitude_stage([f, f * 3.0], ParamBank.identity(2).xi)
    assert np.allclose(gamma[:2], [np.sqrt(3), 1 / np.sqrt(3)], atol=1e-8)
    assert np.allclose(gamma[2:], 0, atol=1e-12)


def test_amplitude_stage_does_not_increase_objective(rng, sine):
    curves = [sine * a + b for a, b in zip(rng.uniform(0.5, 1.5, 5), rng.normal(0, 0.3, 5))]
    bank = ParamBank.identity(5)
    before = frechet_objective(curves, bank)
    gamma, unconstrained = amplitude_stage(curves, bank.xi, return_unconstrained=True)
    assert frechet_objective(curves, ParamBank(unconstrained, bank.xi)) <= before + 1e-12


def test_amplitude_stage_names_constant_curve(sine, grid):
    with pytest.raises(IdentifiabilityError) as exc:
        amplitude_stage([sine, SampledCurve.constant(1.0, grid)], ParamBank.identity(2).xi)
    assert exc.value.index == 1


def test_phase_stage_equal_curves(sine):
    cfg = RegisterConfig(fix_kappa=True)
    xi = phase_stage([sine] * 3, ParamBank.identity(3).gamma, cfg=cfg)
    assert np.allclose(xi, [1, 1, 1, 0, 0, 0], atol=1e-6)


def test_phase_stage_pure_shift(sine):
    zetas = np.array([0.06, -0.02, 0.0, -0.04])
    curves = _shifted(sine, zetas)
    cfg = RegisterConfig(fix_kappa=True)
    xi = phase_stage(curves, ParamBank.identity(4).gamma, cfg=cfg)
    assert np.allclose(xi[4:], zetas, atol=5e-3)
    assert np.array_equal(xi, phase_stage(curves, ParamBank.identity(4).gamma, cfg=cfg))


def test_estimate_single_curve(sine):
    res = estimate_frechet_mean([sine])
    assert res.f0 == sine
    assert res.frechet_variance == 0.0
    assert res.ic_params[0].as_array() == pytest.approx([1, 0, 1, 0], abs=1e-8)


def test_estimate_rejects_constant_curve(sine, grid):
    with pytest.raises(IdentifiabilityError):
        estimate_frechet_mean([sine, SampledCurve.constant(2.0, grid)])


def _small_set(seed=1, n=8):
    laws = {"alpha": ParamLaw.uniform(0.8, 1.25), "beta": ParamLaw.uniform(-0.3, 0.3),
            "zeta": ParamLaw.uniform(-0.05, 0.05)}
    return generate_ic_set(SynthSpec(n=n, laws=laws, seed=seed))


def test_estimate_recovers_base_and_bank_invariants():
    curves, _, base = _small_set()
    res = estimate_frechet_mean(curves, FrechetConfig(fix_kappa=True))
    inner = (base.grid.points >= 0.1) & (base.grid.points <= 0.9)
    assert np.max(np.abs(res.f0.values - base.values)[inner]) <= 2e-2
    assert res.bank.is_feasible()
    assert res.frechet_variance == frechet_objective(curves, res.bank)
    assert all(np.isfinite(res.objective_trace))
    assert all(b <= a + 1e-9 * max(1.0, abs(a)) for a, b in zip(res.objective_trace, res.objective_trace[1:]))
    assert np.mean(res.residual_norms) <= np.mean([l2_norm(c - res.f0) for c in curves]) + 1e-12


def test_estimate_reports_nonconvergence():
    curves, _, _ = _small_set()
    res = estimate_frechet_mean(curves, FrechetConfig(fix_kappa=True, max_iterations=1))
    assert not res.converged and res.iterations == 1
    assert len(res.objective_trace) == 2


def test_shift_and_scale_equivariance():
    curves, _, _ = _small_set(seed=2, n=5)
    cfg = FrechetConfig(fix_kappa=True)
    ref = estimate_frechet_mean(curves, cfg)
    shifted = estimate_frechet_mean([c + 1.5 for c in curves], cfg)
    # sum(beta) = 0 with geometric-mean-one scales: the template absorbs
    # c / mean(alpha), which is c only when all scales are equal
    alpha = 1.0 / ref.bank.alpha_bar
    assert np.allclose(shifted.f0.values, ref.f0.values + 1.5 / alpha.mean(), atol=1e-6)
    assert np.allclose(shifted.bank.alpha_bar, ref.bank.alpha_bar, atol=1e-6)
    assert np.allclose(shifted.bank.zeta, ref.bank.zeta, atol=1e-6)
    scaled = estimate_frechet_mean([c * 2.0 for c in curves], cfg)
    assert np.allclose(scaled.f0.values, 2.0 * ref.f0.values, atol=1e-6)
    assert np.allclose(scaled.bank.alpha_bar, ref.bank.alpha_bar, atol=1e-6)
