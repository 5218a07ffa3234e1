import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stratheat.noise import NoiseField, TimeGrid, assemble_noise, brownian_maker, wong_zakai_maker
from stratheat.solver import (SolverBlowUp, SolverConfig, VectorField, constant_field,
                              integrate_ito_corrected, integrate_pathwise, ito_ensemble,
                              nonlinearity_apply, sine_field, tanh_field, vector_field, zero_field)
from stratheat.spectral import (CovarianceSpec, Grid1D, SpectralField, eigenvalues,
                                quadratic_variation_density, synthesize)


def _cfg(K=8, M=32, N=128, T=0.25, c=0.5, psi=None, cov=None, substeps=1):
    cov = cov or CovarianceSpec("power", 3.0, 0.12, K)
    psi = psi if psi is not None else SpectralField.mode(1, K)
    return SolverConfig(cov, Grid1D(M), TimeGrid(T, N), psi, 0.55, c, substeps)


def test_zero_field_is_semigroup():
    cfg = _cfg(K=32, M=128, N=1024, psi=SpectralField(np.linspace(1, -1, 32)))
    W = assemble_noise(cfg.cov, brownian_maker(), cfg.grid, 0)
    for solve in (integrate_ito_corrected, integrate_pathwise):
        Y = solve(cfg, W, zero_field())
        exact = np.exp(-np.outer(cfg.grid.times, eigenvalues(32))) * cfg.psi.coeffs
        assert np.abs(Y.coeffs - exact).max() <= 1e-12


@pytest.mark.parametrize("kappa", [0.3, -1.7])
def test_constant_field_correction_vanishes_bitwise(kappa):
    W = assemble_noise(_cfg().cov, brownian_maker(), _cfg().grid, 1)
    a = integrate_ito_corrected(_cfg(c=0.0), W, constant_field(kappa)).coeffs
    b = integrate_ito_corrected(_cfg(c=0.5), W, constant_field(kappa)).coeffs
    np.testing.assert_array_equal(a, b)


def test_sine_correction_changes_solution():
    W = assemble_noise(_cfg().cov, brownian_maker(), _cfg().grid, 1)
    a = integrate_ito_corrected(_cfg(c=0.0), W, sine_field()).coeffs
    b = integrate_ito_corrected(_cfg(c=0.5), W, sine_field()).coeffs
    assert np.abs(a - b).max() > 1e-3


def _gauss(nq=32):
    x, w = np.polynomial.legendre.leggauss(nq)
    return 0.5 * (x + 1), 0.5 * w


def test_single_mode_mean_matches_scalar_sde_oracle():
    """K = 1, f = smoothly clipped identity: mean of a_1(T) against a fine-step
    Euler-Maruyama solution of the projected scalar equation."""
    vf = tanh_field(10.0)
    cov = CovarianceSpec.single_mode(K=1)
    P, N, T, refine = 2000, 128, 0.25, 16
    rng = np.random.default_rng(123)
    dB_fine = rng.standard_normal((P, N * refine)) * np.sqrt(T / (N * refine))
    dB = dB_fine.reshape(P, N, refine).sum(-1)

    g = Grid1D(64)
    qv = quadratic_variation_density(cov, g)
    aT = ito_ensemble(np.ones((P, 1)), dB[:, :, None], T / N, vf, g, qv, 0.5, save="final")[:, -1, 0]

    # projected coefficients by Gauss-Legendre quadrature (independent of the DST path)
    x, w = _gauss()
    e1 = np.sqrt(2) * np.sin(np.pi * x)
    P_fun = 0.5 * e1**2

    def F(a):
        return (vf.f(a[:, None] * e1) * e1) @ w

    def G(a):
        y = a[:, None] * e1
        return (vf.df(y) * vf.f(y) * P_fun * e1) @ w

    a = np.ones(P)
    h = T / (N * refine)
    for i in range(N * refine):
        a = a + (-np.pi**2 * a + G(a)) * h + F(a) * dB_fine[:, i]
    assert aT.mean() == pytest.approx(a.mean(), rel=0.02)


def test_pathwise_linear_noise_closed_form():
    K, N, T = 8, 1000, 0.25
    cov = CovarianceSpec("power", 3.0, 0.12, K)
    grid = TimeGrid(T, N)
    w = np.linspace(1.0, -0.5, K)
    modes = np.outer(w / cov.sqrt_lambdas, grid.times)
    W = NoiseField(cov, grid, modes)
    psi = SpectralField(np.r_[1.0, 0.3, np.zeros(K - 2)])
    cfg = SolverConfig(cov, Grid1D(64), grid, psi)
    # f == 1: the forcing is the field w itself
    Y = integrate_pathwise(cfg, W, constant_field(1.0))
    lam = eigenvalues(K)
    t = grid.times[:, None]
    exact = np.exp(-lam * t) * psi.coeffs + w * (1 - np.exp(-lam * t)) / lam
    assert np.abs(Y.coeffs - exact).max() <= 1e-6


def test_pathwise_zero_noise():
    cfg = _cfg()
    W = NoiseField(cfg.cov, cfg.grid, np.zeros((cfg.K, cfg.grid.N + 1)))
    Y = integrate_pathwise(cfg, W, sine_field())
    exact = np.exp(-np.outer(cfg.grid.times, eigenvalues(cfg.K))) * cfg.psi.coeffs
    assert np.abs(Y.coeffs - exact).max() <= 1e-13


def test_pathwise_substeps_converge():
    cfg1, cfg4 = _cfg(N=64), _cfg(N=64, substeps=4)
    W = assemble_noise(cfg1.cov, wong_zakai_maker(16), cfg1.grid, 2)
    cfg16 = _cfg(N=64, substeps=16)
    y1, y4, y16 = (integrate_pathwise(c, W, sine_field()).coeffs[-1] for c in (cfg1, cfg4, cfg16))
    assert np.linalg.norm(y4 - y16) < np.linalg.norm(y1 - y16)


def test_nonlinearity_identity():
    g = Grid1D(64)
    ident = VectorField(lambda y: y, np.ones_like, np.zeros_like, name="id")
    phi = SpectralField(np.random.default_rng(4).standard_normal(16))
    np.testing.assert_allclose(nonlinearity_apply(phi, ident, g).coeffs, phi.coeffs, atol=1e-10)


def test_nonlinearity_constant_sine_series():
    M, K, kappa = 255, 8, 0.8
    g = Grid1D(M)
    out = nonlinearity_apply(np.zeros(K), constant_field(kappa), g).coeffs
    k = np.arange(1, K + 1)
    # exact discrete transform of a constant, then the continuum sine series
    discrete = np.where(k % 2 == 1, kappa * np.sqrt(2) / (M + 1) / np.tan(k * np.pi / (2 * (M + 1))), 0.0)
    np.testing.assert_allclose(out, discrete, atol=1e-12)
    series = np.where(k % 2 == 1, kappa * 2 * np.sqrt(2) / (k * np.pi), 0.0)
    np.testing.assert_allclose(out, series, rtol=1e-3, atol=1e-15)


@given(st.integers(0, 2**32 - 1), st.floats(0.1, 20.0))
@settings(max_examples=25, deadline=None)
def test_nonlinearity_pointwise_bound(seed, scale):
    M = 31
    g = Grid1D(M)
    phi = scale * np.random.default_rng(seed).standard_normal(M)
    for vf in (sine_field(), tanh_field(3.0)):
        # with K = M the projection keeps every nodal value
        vals = synthesize(nonlinearity_apply(phi, vf, g), g)
        assert np.abs(vals).max() <= vf.bounds[0] * (1 + 1e-12)


def test_blowup_guard():
    cfg = _cfg(N=64, T=1.0)
    W = assemble_noise(cfg.cov, brownian_maker(), cfg.grid, 0)
    big = VectorField(lambda y: 1e4 * y, lambda y: np.full_like(y, 1e4), np.zeros_like, name="big")
    with pytest.raises(SolverBlowUp):
        integrate_ito_corrected(cfg, W, big)


def test_rejects_mismatched_noise():
    cfg = _cfg()
    W = assemble_noise(cfg.cov, brownian_maker(), TimeGrid(0.25, 64), 0)
    with pytest.raises(ValueError):
        integrate_ito_corrected(cfg, W, sine_field())
    with pytest.raises(ValueError):
        SolverConfig(cfg.cov, Grid1D(4), cfg.grid, cfg.psi)
    with pytest.raises(ValueError):
        _cfg().__class__(cfg.cov, cfg.g, cfg.grid, SpectralField.mode(1, 3))
    with pytest.raises(ValueError):
        SolverConfig(cfg.cov, cfg.g, cfg.grid, cfg.psi, gamma=0.7).validate_gamma()


def test_vector_field_registry():
    assert vector_field("sin").name == "sin"
    with pytest.raises(ValueError):
        vector_field("cubic")
    with pytest.raises(ValueError):
        sine_field().evaluator("f'''")


def test_solver_deterministic():
    cfg = _cfg()
    W = assemble_noise(cfg.cov, brownian_maker(), cfg.grid, 9)
    a = integrate_ito_corrected(cfg, W, sine_field()).coeffs
    b = integrate_ito_corrected(cfg, W, sine_field()).coeffs
    np.testing.assert_array_equal(a, b)


def _brownian_ensemble(cfg_exp, N, paths):
    from stratheat.experiments import mode_values, to_coefficients
    cov = cfg_exp.covariance()
    grid = cfg_exp.time_grid(N)
    modes = mode_values(brownian_maker(), grid, cfg_exp.seed, list(paths), cov.K)
    return cov, grid, np.diff(to_coefficients(modes, cov), axis=1)


def _ensemble(cfg_exp, dW, dt, c, save="final"):
    from stratheat.spectral import quadratic_variation_density as qvd
    g = cfg_exp.grid1d()
    A0 = np.tile(cfg_exp.initial().coeffs, (dW.shape[0], 1))
    return ito_ensemble(A0, dW, dt, sine_field(), g, qvd(cfg_exp.covariance(), g), c, save)


def test_drift_factor_sensitivity_exceeds_5_se():
    from stratheat.config import ExperimentConfig
    cfg = ExperimentConfig()
    _, grid, dW = _brownian_ensemble(cfg, cfg.N, range(200))
    gap = (_ensemble(cfg, dW, grid.dt, 0.5) - _ensemble(cfg, dW, grid.dt, 0.0))[:, -1, 0]
    se = gap.std(ddof=1) / np.sqrt(gap.size)
    assert abs(gap.mean()) > 5 * se


def test_mean_square_bounded():
    from stratheat.config import ExperimentConfig
    cfg = ExperimentConfig()
    _, grid, dW = _brownian_ensemble(cfg, 256, range(200))
    Y = _ensemble(cfg, dW, grid.dt, 0.5, save="all")
    ms = np.mean(np.sum(Y**2, axis=2), axis=0)
    assert np.all(np.isfinite(ms))
    # |f| <= 1 bounds the stochastic convolution by the trace of the covariance
    assert ms.max() <= 2 * (np.sum(cfg.initial().coeffs ** 2) + grid.T * cfg.covariance().lambdas.sum())


def test_step_halving_self_convergence():
    from stratheat.config import ExperimentConfig
    cfg = ExperimentConfig()
    fine = 1024
    _, _, dW = _brownian_ensemble(cfg, fine, range(64))
    finals = {}
    for n in (128, 256, 512, 1024):
        coarse = dW.reshape(dW.shape[0], n, fine // n, -1).sum(axis=2)
        finals[n] = _ensemble(cfg, coarse, cfg.T / n, 0.5)[:, -1]
    err = [np.mean(np.linalg.norm(finals[n] - finals[2 * n], axis=1)) for n in (128, 256, 512)]
    assert err[0] > err[1] > err[2]
