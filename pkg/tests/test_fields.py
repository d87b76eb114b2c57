import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from wasep import experiments
from wasep.dynamics import Observable, evolve
from wasep.fields import (Bump, FrameShift, Fourier, discrete_ops, dynkin_accumulate,
                          dynkin_observables, energy_functional, energy_observable,
                          field_eval, lattice_weight)
from wasep.lattice import Configuration, ModelParams
from wasep.local import BlockFunction
from wasep.statics import sample_bernoulli


def test_fourier_norms_are_analytic():
    F = Fourier.sin(1)
    assert F.norm2() == pytest.approx(0.5)
    assert F.grad_norm2() == pytest.approx(2 * math.pi ** 2)
    u = np.linspace(0, 1, 4097)[:-1]
    assert F.grad_norm2() == pytest.approx(np.mean(F.deriv(u) ** 2), rel=1e-12)
    assert np.allclose(F(u + 1.0), F(u), atol=1e-12)


def test_bump_is_periodic_and_smooth():
    B = Bump(0.1, 0.3)
    u = np.linspace(0, 1, 2001)
    assert np.allclose(B(u + 1.0), B(u))
    h = 1e-5
    assert np.allclose((B(u + h) - B(u - h)) / (2 * h), B.deriv(u), atol=1e-4)


def test_frame_velocity_vanishes_at_half_filling():
    assert FrameShift.of(ModelParams(1.0, 256, 0.5)).velocity == 0.0
    p = ModelParams(1.0, 256, 0.25)
    assert FrameShift.of(p).velocity == pytest.approx(16 * 0.5)


def test_field_of_full_config_and_constant():
    n, rho, c = 64, 0.3, 2.5
    val = field_eval(Configuration.full(n), Fourier.constant(c), 0.0, ModelParams(0.0, n, rho))
    assert val == pytest.approx(c * math.sqrt(n) * (1 - rho), rel=1e-12)


def test_field_stationary_moments():
    n, rho, R = 256, 0.5, 3000
    p = ModelParams(0.0, n, rho)
    F = Fourier.sin(1)
    rng = np.random.default_rng(0)
    Y = np.array([field_eval(sample_bernoulli(rho, n, seed=rng), F, 0.0, p) for _ in range(R)])
    assert abs(Y.mean()) < 3 * Y.std(ddof=1) / math.sqrt(R)
    target = 0.25 * F.norm2()
    se = target * math.sqrt(2 / (R - 1))
    assert abs(Y.var(ddof=1) - target) < 4 * se


@given(st.integers(0, 2 ** 32 - 1))
def test_translation_covariance(seed):
    n = 32
    p = ModelParams(0.0, n, 0.5)
    F = Fourier.sin(1)
    cfg = sample_bernoulli(0.5, n, seed=seed)
    shifted = cfg.shifted(1)
    moved = lambda u: F(u + 1.0 / n)  # noqa: E731
    assert field_eval(shifted, F, 0.0, p) == pytest.approx(field_eval(cfg, moved, 0.0, p),
                                                            abs=1e-12)


def test_discrete_ops_on_linear_arc():
    n = 64
    slope = 3.0
    lin = lambda u: slope * u  # noqa: E731
    x = np.arange(5, 40)
    grad, lap = discrete_ops(lin, x, n)
    assert np.allclose(grad, slope, atol=1e-11)
    assert np.allclose(lap, 0.0, atol=1e-8)


@given(st.floats(0, 1), st.integers(8, 200))
def test_gradients_telescope(s, n):
    p = ModelParams(1.0, n, 0.3)
    grad, _ = discrete_ops(Fourier({1: 1.0, 2: -1j}), np.arange(n), n, s, p.velocity)
    assert abs(grad.sum()) < 1e-9 * n


def test_laplacian_error_order():
    F = Fourier.sin(1)
    ns = np.array([16, 32, 64, 128, 256])
    err = []
    for n in ns:
        x = np.arange(n)
        _, lap = discrete_ops(F, x, n)
        err.append(np.max(np.abs(lap - F.deriv2(x / n))))
    fit = experiments.fit_power_law(ns, err)
    assert fit.slope == pytest.approx(-2.0, abs=0.05)


def test_lattice_weight_matches_direct_evaluation():
    n = 48
    p = ModelParams(1.0, n, 0.2)
    F = Fourier({1: -1j, 3: 1.0})
    for s in (0.0, 0.013):
        x = np.arange(n)
        grad, lap = discrete_ops(F, x, n, s, p.velocity)
        val = FrameShift.of(p).apply(F, s)(x / n)
        assert np.allclose(lattice_weight(F, n, n, p.velocity, "grad").value(s), grad, atol=1e-9)
        assert np.allclose(lattice_weight(F, n, n, p.velocity, "lap").value(s), lap, atol=1e-6)
        assert np.allclose(lattice_weight(F, n, n, p.velocity, "value").value(s), val, atol=1e-12)


@pytest.mark.parametrize("frozen", [Configuration.empty, Configuration.full])
def test_frozen_ledger(frozen):
    n = 32
    p = ModelParams(1.0, n, 0.25)
    F = Fourier({1: -1j, 2: 1.0})
    cp = [0.0, 0.01, 0.02]
    init = frozen(n)
    tr = evolve(init, p, dynkin_observables(F, p), 0.02, np.random.default_rng(0), cp)
    led = dynkin_accumulate(tr, F, p)
    assert np.allclose(led.I, 0.0, atol=1e-12)
    assert np.allclose(led.B, 0.0, atol=1e-12)
    direct = [field_eval(init, F, t, p) for t in cp]
    assert np.allclose(led.Yt, direct, atol=1e-12)
    assert np.max(np.abs(led.identity_residual())) < 1e-12


def test_decomposition_identity_along_random_dynamics():
    n = 64
    p = ModelParams(1.0, n, 0.3)
    F = Fourier.sin(1)
    tr = evolve(sample_bernoulli(0.3, n, seed=1), p, dynkin_observables(F, p),
                0.05, np.random.default_rng(3), [0.0, 0.01, 0.03])
    led = dynkin_accumulate(tr, F, p)
    assert np.max(np.abs(led.identity_residual())) < 1e-10
    # compensator regroupings agree
    assert np.allclose(led.compensator, led.I + led.B + led.R, atol=1e-10)


def test_unregistered_pair_is_signalled():
    n = 32
    p = ModelParams(0.0, n, 0.5)
    F = Fourier.sin(1)
    tr = evolve(sample_bernoulli(0.5, n, seed=0), p, dynkin_observables(F, p), 0.01,
                np.random.default_rng(0), [0.0])
    with pytest.raises(KeyError):
        dynkin_accumulate(tr, F, p, energy_eps=[0.25])
    with pytest.raises(KeyError):
        energy_functional(tr, F, 0.25, None, p)
    with pytest.raises(KeyError):
        dynkin_accumulate(tr, F, p, tag="G")


def test_martingale_mean_and_isometry():
    res = experiments.qv_check([64], Fourier.sin(1), 0.05, 600, rho=0.5, a=1.0, seed=5)
    row = res.rows[0]
    assert abs(row["z_mean_M"]) < 3
    assert abs(row["z_m2_minus_qv"]) < 3
    assert row["max_identity_residual"] < 1e-10


def test_energy_rejects_small_blocks():
    p = ModelParams(0.0, 32, 0.5)
    with pytest.raises(ValueError):
        energy_observable(Fourier.sin(1), p, 1 / 32)


def test_energy_of_constant_is_zero():
    n = 64
    p = ModelParams(1.0, n, 0.5)
    F = Fourier.constant(1.0)
    obs = {"F/A@0.125": energy_observable(F, p, 0.125)}
    tr = evolve(sample_bernoulli(0.5, n, seed=2), p, obs, 0.05, np.random.default_rng(1))
    assert energy_functional(tr, F, 0.125, None, p) == 0.0


def test_energy_of_frozen_config():
    n, eps, t = 64, 0.125, 0.03
    p = ModelParams(0.0, n, 0.3)
    F = Fourier.sin(1)
    cfg = Configuration.full(n)
    tr = evolve(cfg, p, {"F/A@0.125": energy_observable(F, p, eps)}, t,
                np.random.default_rng(0))
    L = int(eps * n)
    grad, _ = discrete_ops(F, np.arange(n), n)
    block = BlockFunction.centered_square(L, 0.3).lattice_values(cfg.to_array())
    assert energy_functional(tr, F, eps, None, p) == pytest.approx(t * np.dot(grad, block),
                                                                   abs=1e-12)


def test_energy_integrand_matches_block_averages():
    n, eps, rho = 64, 0.125, 0.4
    p = ModelParams(0.0, n, rho)
    F = Fourier.sin(1)
    cfg = sample_bernoulli(rho, n, seed=9)
    tr = evolve(cfg, p, {"A": energy_observable(F, p, eps)}, 0.0, np.random.default_rng(0),
                [0.0])
    L = int(eps * n)
    eta = cfg.to_array().astype(float)
    avg = np.array([eta[(x + np.arange(L)) % n].mean() for x in range(n)])
    grad, _ = discrete_ops(F, np.arange(n), n)
    sq = np.sqrt(n)
    # n^{-1} (Y(i_eps))^2 = (block average - rho)^2
    direct = np.sum((sq * (avg - rho)) ** 2 / n * grad)
    assert tr.instant["A"][0] == pytest.approx(direct, abs=1e-10)
