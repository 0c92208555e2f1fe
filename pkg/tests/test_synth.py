import numpy as np
import pytest

from frechet_spc.errors import ConfigurationError
from frechet_spc.ewma import ControlLimits, EwmaConfig
from frechet_spc.frechet import FrechetConfig, estimate_frechet_mean
from frechet_spc.sim import RegisterConfig, SimParams, apply_deformation, register, registration_objective
from frechet_spc.synth import (GridSpec, ParamLaw, Shift, SynthSpec, base_curve, brute_force_register,
                               generate_ic_set, generate_stream, inject_shift, run_length_experiment, sample_params)

LAWS = {"alpha": ParamLaw.truncnorm(1, 0.1, 0.5, 1.5), "beta": ParamLaw.uniform(-0.3, 0.3),
        "zeta": ParamLaw.truncnorm(0, 0.03, -0.15, 0.15)}


@pytest.mark.parametrize("name", ["sine", "sigmoid", "double_peak"])
def test_base_families(name):
    c = base_curve(name)
    assert c.grid.m == 101 and np.ptp(c.values) > 0.5
    with pytest.raises(ConfigurationError):
        base_curve("nope")


def test_spec_validation_paths():
    with pytest.raises(ConfigurationError, match="laws.alpha"):
        SynthSpec(laws={"alpha": {"kind": "uniform", "low": -1, "high": 1}})
    with pytest.raises(ConfigurationError, match="laws.gamma"):
        SynthSpec(laws={"gamma": {"kind": "fixed"}})
    with pytest.raises(ConfigurationError, match="laws.beta"):
        SynthSpec(laws={"beta": {"kind": "truncnorm", "sd": -1, "low": 0, "high": 1}})
    with pytest.raises(ConfigurationError, match="noise_sigma"):
        SynthSpec(noise_sigma=-1)
    with pytest.raises(ConfigurationError, match="bogus"):
        SynthSpec.from_dict({"bogus": 1})


def test_spec_round_trip():
    spec = SynthSpec(n=7, laws=LAWS, noise_sigma=0.1, seed=3)
    assert SynthSpec.from_dict(spec.to_dict()) == spec


def test_degenerate_spec_copies_base():
    curves, params, base = generate_ic_set(SynthSpec(n=4))
    assert all(c == base for c in curves)
    assert all(p == SimParams() for p in params)


def test_ic_set_deterministic_and_central():
    spec = SynthSpec(n=30, laws=LAWS, noise_sigma=0.05, seed=8)
    a, pa, _ = generate_ic_set(spec)
    b, pb, _ = generate_ic_set(spec)
    assert all(x == y for x, y in zip(a, b)) and pa == pb
    alpha = np.array([p.alpha for p in pa])
    assert abs(np.mean(np.log(alpha))) <= 1e-12
    assert abs(sum(p.beta for p in pa)) <= 1e-12 and abs(sum(p.zeta for p in pa)) <= 1e-12


def test_zeta_moments_match_law():
    spec = SynthSpec(n=10_000, laws=LAWS, seed=2)
    draws = sample_params(spec, np.random.default_rng(spec.seed), spec.n)[:, 3]
    mean, var = LAWS["zeta"].moments()
    se = np.sqrt(var / spec.n)
    assert abs(draws.mean() - mean) <= 3 * se
    # variance SE via the fourth central moment of the sample
    se_var = np.sqrt((np.mean((draws - draws.mean()) ** 4) - var**2) / spec.n)
    assert abs(draws.var() - var) <= 3 * se_var
    _, params, _ = generate_ic_set(spec)
    z = np.array([p.zeta for p in params])
    assert abs(z.var() - var) <= 3 * se_var


def test_identity_shift_is_bit_identical():
    spec = SynthSpec(laws=LAWS, noise_sigma=0.05, seed=4)
    plain, pp = generate_stream(spec, 50)
    shifted, ps = inject_shift(spec, 50, Shift(at_step=10))
    assert pp == ps and all(np.array_equal(a.values, b.values) for a, b in zip(plain, shifted))


def test_alpha_multiplier_moment():
    spec = SynthSpec(laws=LAWS, seed=6)
    _, params = inject_shift(spec, 4000, Shift(at_step=100, multipliers={"alpha": 1.6}))
    after = np.array([p.alpha for p in params[99:]])
    mean, var = LAWS["alpha"].moments()
    assert abs(after.mean() - 1.6 * mean) <= 3 * 1.6 * np.sqrt(var / after.size)
    before = np.array([p.alpha for p in params[:99]])
    assert before.max() <= 1.5


def test_zeta_delta_from_step_one():
    spec = SynthSpec(laws=LAWS, seed=6)
    _, base = generate_stream(spec, 20)
    _, moved = inject_shift(spec, 20, Shift(at_step=1, deltas={"zeta": 0.2}))
    assert np.allclose([m.zeta - b.zeta for m, b in zip(moved, base)], 0.2)


def test_shift_validation():
    with pytest.raises(ConfigurationError):
        Shift(at_step=0)
    with pytest.raises(ConfigurationError):
        Shift(multipliers={"alpha": -1})
    with pytest.raises(ConfigurationError):
        Shift(deltas={"omega": 1})


def test_brute_force_identity(sine):
    gs = GridSpec()
    p = brute_force_register(sine, sine, gs)
    cell = (gs.register.zeta_bounds[1] - gs.register.zeta_bounds[0]) / (gs.n_zeta - 1)
    assert abs(p.zeta) <= cell and abs(np.log(p.kappa)) <= np.log(2) / (gs.n_kappa - 1) * 2
    assert p.alpha == pytest.approx(1, abs=1e-6)


def test_brute_force_vs_register(sine, rng):
    gs = GridSpec(n_kappa=41, n_zeta=201)
    for _ in range(5):
        truth = SimParams(rng.uniform(0.7, 1.4), rng.normal(0, 0.3), float(np.exp(rng.uniform(-0.3, 0.3))),
                          rng.uniform(-0.2, 0.2))
        fj = apply_deformation(sine, truth)
        oracle = registration_objective(fj, sine, brute_force_register(fj, sine, gs))
        assert register(fj, sine).objective <= oracle + 1e-10


def test_brute_force_reduced_matches_full(sine):
    reg = RegisterConfig(fix_kappa=True)
    truth = SimParams(1.25, 0.5, 1.0, 0.05)  # on both lattices
    fj = apply_deformation(sine, truth)
    reduced = brute_force_register(fj, sine, GridSpec(n_zeta=101, register=reg))
    full = brute_force_register(fj, sine, GridSpec(n_zeta=101, mode="full", n_alpha=31, n_beta=17,
                                                   alpha_range=(0.5, 2.0), beta_range=(-1, 1), register=reg))
    assert reduced.as_array() == pytest.approx(truth.as_array(), abs=1e-9)
    assert full.as_array() == pytest.approx(truth.as_array(), abs=1e-9)


@pytest.fixture(scope="module")
def small_ic():
    spec = SynthSpec(n=15, laws=LAWS, noise_sigma=0.05, seed=1)
    curves, _, _ = generate_ic_set(spec)
    return spec, estimate_frechet_mean(curves, FrechetConfig(fix_kappa=True))


def test_infinite_limits_never_alarm(small_ic):
    spec, ic = small_ic
    res = run_length_experiment(spec, EwmaConfig(fix_kappa=True, replay_orders=3), 2, 20, ic=ic,
                                limits=ControlLimits(np.inf, {}))
    assert res.flag_rate == 0.0 and res.first_alarm == [None, None]


def test_run_length_deterministic(small_ic):
    spec, ic = small_ic
    cfg = EwmaConfig(fix_kappa=True, replay_orders=3, lam=0.2)
    shift = Shift(at_step=5, multipliers={"alpha": 3.0})
    a = run_length_experiment(spec, cfg, 3, 20, shift=shift, ic=ic)
    b = run_length_experiment(spec, cfg, 3, 20, shift=shift, ic=ic)
    assert a.as_dict() == b.as_dict()
    assert len(a.delays) == 3 and max(a.delays) <= 5
    with pytest.raises(ConfigurationError):
        run_length_experiment(spec, cfg, 0, 20, ic=ic)
