import math

import numpy as np
import pytest

from wasep import experiments, spectral
from wasep.experiments import (WeightFunction, bg2_estimate, c_m_scan, fit_power_law,
                               kipnis_bound_check, kipnis_image_check, lemma_scan, qv_check)
from wasep.fields import Fourier
from wasep.lattice import ModelParams
from wasep.local import BlockFunction, LocalFunction
from wasep.statics import cond_exp_centered_pair


# -- fitting ------------------------------------------------------------------

def test_fit_exact_power():
    x = np.array([1, 2, 4, 8, 16.0])
    fit = fit_power_law(x, 3 * x ** 2)
    assert fit.slope == pytest.approx(2.0, abs=1e-12)
    assert fit.stderr < 1e-10
    assert math.exp(fit.intercept) == pytest.approx(3.0)


def test_fit_flat():
    assert fit_power_law([1, 2, 4, 8], [5, 5, 5, 5]).slope == pytest.approx(0.0, abs=1e-12)


def test_fit_noisy_synthetic():
    rng = np.random.default_rng(0)
    x = 2.0 ** np.arange(2, 9)
    y = x ** 1.5 * (1 + 0.05 * rng.uniform(-1, 1, x.size))
    fit = fit_power_law(x, y, 0.05 * y)
    assert 1.35 <= fit.slope <= 1.65


@pytest.mark.parametrize("x,y", [([2.0], [1.0]), ([1, 2, 4], [1, 2, 3]),
                                 ([1, 2, 4, 8], [1, 0, 3, 4]), ([2, 2, 2, 2], [1, 2, 3, 4])])
def test_fit_refuses_bad_input(x, y):
    with pytest.raises(ValueError):
        fit_power_law(x, y)


def test_weight_norm_converges():
    F = Fourier.sin(1)
    errs = []
    for n in (64, 128, 256):
        h = WeightFunction.gradient_of(F, ModelParams(0.0, n, 0.5))
        errs.append(abs(h.norm2_n() - F.grad_norm2()))
    assert errs[-1] < 1e-3 * F.grad_norm2()
    assert errs[0] > errs[1] > errs[2]


# -- scans --------------------------------------------------------------------

def test_renorm_ratio_bounded():
    res = lemma_scan("renorm", 2, [4, 8, 16, 32], 256, 0.05, 40, seed=1)
    assert res.claims["bounded_ratio"]
    assert res.claims["monotone_in_t"]
    for r in res.rows:
        assert abs(r["z_mean"]) < 4


def test_renorm_equal_boxes_vanish():
    res = lemma_scan("L_renorm", 2, [(8, 8), (8, 16)], 64, 0.05, 10, seed=0)
    zero = [r for r in res.rows if r["L"] == 8][0]
    assert zero["estimate"] == 0.0
    assert [r for r in res.rows if r["L"] == 16][0]["estimate"] > 0


def test_two_blocks_minkowski():
    res = lemma_scan("two_blocks", 2, [4, 8, 16], 64, 0.05, 40, seed=2, ell0=2)
    assert res.claims["minkowski"]
    for r in res.rows:
        assert r["telescoping_residual"] < 1e-9


@pytest.mark.parametrize("kind,grid", [("renorm", [40]), ("L_renorm", [(8, 4)]),
                                       ("two_blocks", [6]), ("one_block", [1])])
def test_lemma_grid_validation(kind, grid):
    with pytest.raises(ValueError):
        lemma_scan(kind, 2, grid, 128, 0.1, 4)


def test_c_m_single_point_has_no_fit():
    res = c_m_scan([2], [8], 64, 0.05, 8, seed=0)
    assert len(res.rows) == 1 and not res.fits
    assert res.rows[0]["c_m"] == 8


def test_c_m_scan_matches_exact_pair_sector():
    n, t, R = 64, 0.1, 400
    ells = [4, 8]
    res = c_m_scan([2], ells, n, t, R, seed=3)
    q = 2 * math.pi / n
    x = np.arange(n)
    h = n * (np.sin(q * (x + 1)) - np.sin(q * x))
    H = -1j * n * (np.exp(1j * q) - 1)
    for r in res.rows:
        exact = spectral.pair_sector_second_moment(r["ell"], n, t, 0.5, H)[0]
        exact_norm = n * exact / (t * np.mean(h * h))
        assert abs(r["normalized"] - exact_norm) < 4 * r["normalized_stderr"]


def test_bg2_whole_ring_box():
    n, rho = 16, 0.5
    # the conditional expectation on the whole ring only sees the conserved count
    blk = BlockFunction.cond_exp_fm(n, 2, rho)
    for k in range(n + 1):
        assert blk.table[k] == pytest.approx(cond_exp_centered_pair(k, n, rho), abs=1e-12)
    res = bg2_estimate(ModelParams(0.0, n, rho), Fourier.sin(1), [1.0], 0.05, 200, seed=1)
    row = res.rows[0]
    assert row["L"] == n and row["estimate"] > 0 and abs(row["z_mean"]) < 4


def test_qv_symmetric_and_asymmetric_agree():
    F = Fourier.sin(1)
    r0 = qv_check([128], F, 0.05, 300, a=0.0, seed=1).rows[0]
    r1 = qv_check([128], F, 0.05, 300, a=1.0, seed=2).rows[0]
    se = math.hypot(r0["stderr"], r1["stderr"])
    assert abs(r0["qv_over_t"] - r1["qv_over_t"]) < 4 * se
    assert r0["qv_over_t"] == pytest.approx(math.pi ** 2 / 2, rel=0.1)


def test_qv_of_constant_is_zero():
    r = qv_check([32], Fourier.constant(1.0), 0.05, 20, seed=0).rows[0]
    assert r["qv_over_t"] == 0.0 and r["target"] == 0.0


# -- small-ring Kipnis-Varadhan bound -----------------------------------------

def test_kipnis_image_check():
    p = ModelParams(1.0, 8, 0.5)
    g = np.random.default_rng(0).normal(size=2 ** 8)
    out = kipnis_image_check(g, p, [0.01, 0.1, 1.0])
    assert out["solved"] == pytest.approx(out["known"], rel=1e-8)
    assert out["holds_explicit"]


def test_kipnis_zero_statistic():
    p = ModelParams(0.0, 8, 0.5)
    out = kipnis_bound_check(LocalFunction.constant(0.0), np.ones(8), p, [0.1, 1.0])
    for r in out["rows"]:
        assert r["exact_lhs"] == 0.0 and r["bound"] == 0.0


def test_kipnis_linear_growth_at_large_t():
    p = ModelParams(1.0, 8, 0.5)
    stat = LocalFunction.product(2, 0.5) - BlockFunction.cond_exp_fm(4, 2, 0.5)
    h = np.cos(2 * np.pi * np.arange(8) / 8)
    out = kipnis_bound_check(stat, h, p, [2.0 ** j for j in range(-6, 4)])
    assert out["holds_explicit"]
    assert out["large_t_slope"] <= 1.2


def test_replica_caps():
    with pytest.raises(ValueError):
        experiments.run_replicas(ModelParams(0.0, 2048, 0.5), {}, 0.01, 2, seed=0)
    with pytest.raises(ValueError):
        experiments.run_replicas(ModelParams(0.0, 16, 0.5), {}, 0.01, 20_000, seed=0)
