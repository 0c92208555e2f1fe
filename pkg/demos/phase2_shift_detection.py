"""Phase II: charting a stream with an amplitude shift.

The first 30 curves come from the in-control law; from step 31 the
amplitude scale is multiplied by 1.6. The deviance chart and the alpha
chart should react while the zeta chart stays quiet.
"""

from frechet_spc.ewma import EwmaConfig, EwmaMonitor
from frechet_spc.frechet import FrechetConfig, estimate_frechet_mean
from frechet_spc.synth import ParamLaw, Shift, SynthSpec, generate_ic_set, inject_shift

spec = SynthSpec(
    n=60,
    laws={
        "alpha": ParamLaw.truncnorm(1.0, 0.1, 0.5, 1.5),
        "beta": ParamLaw.truncnorm(0.0, 0.2, -1.0, 1.0),
        "zeta": ParamLaw.truncnorm(0.0, 0.03, -0.15, 0.15),
    },
    noise_sigma=0.05,
    seed=21,
)
curves, _, _ = generate_ic_set(spec)
ic = estimate_frechet_mean(curves, FrechetConfig(fix_kappa=True))

cfg = EwmaConfig(lam=0.1, fix_kappa=True, replay_orders=50, seed=1)
monitor = EwmaMonitor(ic, cfg)
print("deviance UCL %.4f" % monitor.limits.deviance_ucl)

stream, params = inject_shift(spec, 60, Shift(at_step=31, multipliers={"alpha": 1.6}), seed=99)
print(" step   alpha_j   Dtilde   ooc  flagged parameters")
for point in monitor.run(stream):
    flagged = ",".join(k for k, v in point.ooc_params.items() if v)
    if point.step % 5 == 0 or point.ooc:
        print("%5d  %8.3f  %7.4f  %4s  %s" % (point.step, point.theta.alpha, point.D_tilde,
                                              "*" if point.ooc else "", flagged))
