"""Independent reference computations shared by the test modules."""

import numpy as np

from frechet_spc.curves import SampledCurve


def random_smooth_curve(rng, grid, terms=4, offset=2.0):
    """Random low-order Fourier curve; never constant."""
    t = grid.points
    v = np.full_like(t, offset) + np.sin(2 * np.pi * t + rng.uniform(0, 2 * np.pi))
    for k in range(1, terms + 1):
        v += rng.normal(0, 0.5 / k) * np.sin(2 * np.pi * k * t + rng.uniform(0, 2 * np.pi))
    return SampledCurve(grid, v)


def amplitude_grid_minimum(fj, warped, weights, alpha_range=(0.1, 5.0), beta_range=(-5.0, 5.0), step=1e-3):
    """Exact minimum of the fitting objective over the dense (alpha, beta) lattice.

    For each lattice alpha the objective is a parabola in beta, so its
    minimum over lattice betas sits at one of the two lattice nodes that
    bracket the continuous minimiser. Checking those two nodes per alpha
    gives the same value as evaluating the whole lattice.
    """
    q = weights
    alphas = np.round(np.arange(alpha_range[0], alpha_range[1] + step / 2, step), 12)
    b0 = beta_range[0]
    nb = int(round((beta_range[1] - b0) / step))
    m_w, m_f = q @ warped, q @ fj
    s1 = q.sum()
    best_beta = (m_f - alphas * m_w) / s1
    k = np.clip(np.floor((best_beta - b0) / step), 0, nb)
    cands = np.stack([k, np.minimum(k + 1, nb)])
    betas = b0 + cands * step
    R = fj[None, None, :] - betas[:, :, None] - alphas[None, :, None] * warped[None, None, :]
    return float(np.min((R * R) @ q))


def zeta_projection_qp(z, lo=-0.5, hi=0.5):
    from scipy import optimize

    n = len(z)
    res = optimize.minimize(lambda x: np.sum((x - z) ** 2), np.zeros(n), jac=lambda x: 2 * (x - z),
                            method="SLSQP", bounds=[(lo, hi)] * n,
                            constraints=[{"type": "eq", "fun": np.sum, "jac": lambda x: np.ones(n)}],
                            options={"ftol": 1e-15, "maxiter": 500})
    return res.x
