import numpy as np
import pytest

from burgers_lab.forcing import (
    NoisePath,
    StochasticConvolution,
    build_basis,
    convolution_step,
    member_seed,
    sample_noise,
    stationary_mode_variance,
)
from burgers_lab.spectral import NormTag, SpectralState, norm


def test_basis_l2_norms_analytic():
    # one full arch of sin^2 over [a, b] integrates to (b-a)/2
    basis = build_basis(1.0, 2.0, 1.0, 1.0, 128)
    assert abs(norm(basis.e1, NormTag.l2()) - np.sqrt(0.5)) < 1e-4
    assert abs(norm(basis.e2, NormTag.l2()) - np.sqrt(0.5)) < 1e-4


def test_basis_peak_value():
    basis = build_basis(1.0, 2.0, 2.5, 1.0, 256)
    x_mid = 1.5
    k = np.arange(1, 257)
    val = np.sin(k * x_mid) @ basis.e1.coeffs
    assert abs(val - 2.5) < 3 * basis.trunc_error + 1e-6


def test_basis_vanishes_outside_interval():
    basis = build_basis(1.0, 2.0, 1.0, 1.0, 256)
    assert basis.trunc_error < 0.05
    x = np.array([0.3, 0.7, 2.4, 3.0])
    k = np.arange(1, 257)
    sines = np.sin(np.outer(x, k))
    assert np.max(np.abs(sines @ basis.e1.coeffs)) <= basis.trunc_error + 1e-12
    assert np.max(np.abs(sines @ basis.e2.coeffs)) <= basis.trunc_error + 1e-12


def test_basis_rejects_bad_arguments():
    with pytest.raises(ValueError):
        build_basis(2.0, 1.0, 1.0, 1.0, 64)
    with pytest.raises(ValueError):
        build_basis(1.0, 2.0, 0.0, 1.0, 64)
    with pytest.raises(ValueError):
        build_basis(-0.5, 2.0, 1.0, 1.0, 64)


def test_sample_noise_empty():
    path = sample_noise(7, 1e-3, 0)
    assert path.increments.shape == (2, 0)


def test_sample_noise_deterministic():
    a = sample_noise(42, 1e-3, 5000)
    b = sample_noise(42, 1e-3, 5000)
    assert np.array_equal(a.increments, b.increments)
    c = sample_noise(43, 1e-3, 5000)
    assert not np.array_equal(a.increments, c.increments)


def test_sample_noise_statistics():
    # 1e6 pooled increments: CLT bound on the mean, 1% on the variance
    dt = 1e-3
    path = sample_noise(2024, dt, 500_000)
    inc = path.increments.ravel()
    assert inc.size == 1_000_000
    assert abs(inc.mean()) <= 4.0 * np.sqrt(dt / inc.size)
    assert abs(inc.var() / dt - 1.0) <= 0.01


def test_sample_noise_rows_independent():
    path = sample_noise(5, 1e-3, 200_000)
    a, b = path.increments
    corr = np.corrcoef(a, b)[0, 1]
    assert abs(corr) <= 4.0 / np.sqrt(path.n_steps)


def test_sample_noise_rejects_bad_dt():
    with pytest.raises(ValueError):
        sample_noise(1, 0.0, 10)


def test_member_seed_order_independent():
    s1 = member_seed(99, 3)
    s2 = member_seed(99, 4)
    assert s1 != s2
    assert s1 == member_seed(99, 3)


def test_convolution_zero_increment():
    basis = build_basis(1.0, 2.0, 1.0, 1.0, 32)
    z = StochasticConvolution.initial(32, 0.5)
    out = convolution_step(z, basis, (0.0, 0.0), 1e-3)
    assert np.all(out.current.coeffs == 0.0)
    assert out.t == pytest.approx(1e-3)


def test_convolution_single_step_linearity():
    # one step from zero: the increment enters through e1 undamped
    basis = build_basis(1.0, 2.0, 1.0, 1.0, 32)
    z = StochasticConvolution.initial(32, 0.5)
    w = 0.37
    out = convolution_step(z, basis, (w, 0.0), 1e-3)
    assert np.allclose(out.current.coeffs, w * basis.e1.coeffs, atol=1e-15)


def test_convolution_initial_condition():
    z = StochasticConvolution.initial(16, 1.0)
    assert np.all(z.current.coeffs == 0.0)
    assert z.t == 0.0


@pytest.mark.slow
def test_convolution_stationary_variance():
    # discrete OU stationary variance per mode, Monte Carlo within 5%
    n, nu, dt = 128, 0.5, 1e-3
    basis = build_basis(1.0, 2.0, 1.0, 1.0, n)
    n_paths, n_steps = 1000, 10_000
    k = np.arange(1, n + 1, dtype=float)
    decay = np.exp(-nu * k**2 * dt)
    e = basis.coeff_matrix()
    rng = np.random.default_rng(31415)
    z = np.zeros((n_paths, n))
    second_moment = np.zeros(n)
    count = 0
    for step in range(n_steps):
        dW = rng.normal(0.0, np.sqrt(dt), (2, n_paths))
        z = decay * z + np.outer(dW[0], e[0]) + np.outer(dW[1], e[1])
        if step >= n_steps // 2:
            second_moment += np.mean(z**2, axis=0)
            count += 1
    mc = second_moment / count
    exact = stationary_mode_variance(basis, nu, dt)
    for mode in (1, 2, 4, 8, 16):
        assert abs(mc[mode - 1] / exact[mode - 1] - 1.0) <= 0.05


@pytest.mark.slow
def test_convolution_is_gaussian_per_mode():
    # skewness of the ensemble at fixed t within +-0.1 at 1e4 samples
    n, nu, dt = 64, 0.5, 1e-3
    basis = build_basis(1.0, 2.0, 1.0, 1.0, n)
    k = np.arange(1, n + 1, dtype=float)
    decay = np.exp(-nu * k**2 * dt)
    e = basis.coeff_matrix()
    rng = np.random.default_rng(2718)
    z = np.zeros((10_000, n))
    for _ in range(100):
        dW = rng.normal(0.0, np.sqrt(dt), (2, 10_000))
        z = decay * z + np.outer(dW[0], e[0]) + np.outer(dW[1], e[1])
    for mode in (1, 2, 3, 5, 8):
        col = z[:, mode - 1]
        sk = np.mean((col - col.mean()) ** 3) / col.std() ** 3
        assert abs(sk) <= 0.1


@pytest.mark.slow
def test_convolution_moment_bounds_time_uniform():
    # time-uniform moments: E(||z(t)||_1^2 + int_t^{t+1} ||z||_2^2) and the
    # sup over unit windows of the H^1.5 norm agree between t=5 and t=50
    from burgers_lab.dynamics import SimConfig
    from burgers_lab.engine import evolve_convolution
    from burgers_lab.spectral import sobolev_norm_sq

    config = SimConfig.default(nu=0.5, n_modes=128, dt=2e-3)
    n_members = 400
    dt = config.dt
    sup15 = {5.0: np.zeros(n_members), 50.0: np.zeros(n_members)}
    int_h2 = {5.0: np.zeros(n_members), 50.0: np.zeros(n_members)}

    def track(t, z):
        for t0 in (5.0, 50.0):
            if t0 < t <= t0 + 1.0:
                sup15[t0][:] = np.maximum(sup15[t0], sobolev_norm_sq(z, 1.5))
                int_h2[t0] += dt * sobolev_norm_sq(z, 2.0)
        return None

    snaps, _ = evolve_convolution(n_members, [5.0, 50.0, 51.0], config,
                                  master_seed=777, per_step_fn=track)
    q5 = sobolev_norm_sq(snaps[0], 1.0) + int_h2[5.0]
    q50 = sobolev_norm_sq(snaps[1], 1.0) + int_h2[50.0]
    assert q50.mean() <= 2.0 * q5.mean()
    assert q5.mean() <= 2.0 * q50.mean()

    sup_norm = {t0: np.sqrt(sup15[t0]) for t0 in (5.0, 50.0)}
    for k_pow in (2, 4):
        a = sup_norm[5.0] ** k_pow
        b = sup_norm[50.0] ** k_pow
        se = np.sqrt(a.var(ddof=1) / n_members + b.var(ddof=1) / n_members)
        assert abs(a.mean() - b.mean()) <= 4.0 * se + 0.1 * max(a.mean(), b.mean())
