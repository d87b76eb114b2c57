import math

import numpy as np
import pytest
import scipy.linalg

from wasep import experiments, spectral
from wasep.dynamics import (KernelPlan, Observable, RngPolicy, SimState, evolve,
                            stationarity_check, step)
from wasep.lattice import Configuration, ModelParams
from wasep.local import BlockFunction, LocalFunction
from wasep.statics import sample_bernoulli
from wasep.weights import LatticeWeight


def test_frozen_configurations_never_move():
    for init in (Configuration.empty(10), Configuration.full(10)):
        p = ModelParams(1.0, 10, 0.5)
        obs = {"one": Observable(LocalFunction.constant(1.0)),
               "occ": Observable(LocalFunction.occupation(), LatticeWeight.site(3, 10))}
        tr = evolve(init, p, obs, 0.37, np.random.default_rng(0))
        assert tr.n_events == 0 and tr.final == init
        assert tr.value("one") == 0.37
        assert tr.value("occ") == init[3] * 0.37


def test_constant_accumulates_time_exactly():
    p = ModelParams(0.5, 32, 0.4)
    init = sample_bernoulli(0.4, 32, seed=2)
    obs = {"one": Observable(LocalFunction.constant(1.0))}
    tr = evolve(init, p, obs, 0.25, np.random.default_rng(1), checkpoints=[0.0, 0.1])
    assert tr.n_events > 0
    assert np.allclose(tr.accumulators["one"], [0.0, 0.1, 0.25], rtol=0, atol=1e-15)


def test_plain_callables_are_rejected():
    with pytest.raises(TypeError):
        Observable(lambda eta: 1.0)


def test_unregistered_observable_lookup():
    p = ModelParams(0.0, 8, 0.5)
    tr = evolve(sample_bernoulli(0.5, 8, seed=0), p, {}, 0.1, np.random.default_rng(0))
    with pytest.raises(KeyError):
        tr.value("missing")


def test_conservation_and_instant_values():
    p = ModelParams(1.0, 40, 0.3)
    init = sample_bernoulli(0.3, 40, seed=4)
    w = LatticeWeight.real(np.sin(np.arange(40)))
    stat = LocalFunction.product(2, 0.3) - BlockFunction.cond_exp_fm(5, 2, 0.3)
    tr = evolve(init, p, {"V": Observable(stat, w)}, 0.05, np.random.default_rng(9))
    assert tr.final.count() == init.count()
    direct = float(np.dot(w.value(0.0), stat.lattice_values(tr.final.to_array())))
    assert tr.instant["V"][-1] == pytest.approx(direct, abs=1e-12)


def test_same_seed_same_trajectory():
    p = ModelParams(1.0, 64, 0.5)
    init = sample_bernoulli(0.5, 64, seed=1)
    obs = {"pair": Observable(LocalFunction.product(2, 0.5))}
    a = evolve(init, p, obs, 0.05, RngPolicy(7, 0).generator(3))
    b = evolve(init, p, obs, 0.05, RngPolicy(7, 0).generator(3))
    assert a.final == b.final and a.value("pair") == b.value("pair")
    c = evolve(init, p, obs, 0.05, RngPolicy(7, 0).generator(4))
    assert c.final != a.final


def test_results_independent_of_worker_count():
    p = ModelParams(0.0, 32, 0.5)
    obs = {"pair": Observable(LocalFunction.product(2, 0.5))}
    one = experiments.run_replicas(p, obs, 0.02, 6, seed=3, workers=1)
    two = experiments.run_replicas(p, obs, 0.02, 6, seed=3, workers=2)
    assert np.array_equal(one.acc["pair"], two.acc["pair"])


def test_two_site_swap_rate():
    # right jumps across bond 0 happen at rate n^2 p_n = n^2/2 while it reads (1, 0)
    n = 20
    p = ModelParams(0.0, n, 0.5, N=2)
    # on two sites bond 0 reads (1, 0) exactly when eta(0) = 1
    plan = KernelPlan({"ten": Observable(LocalFunction.occupation())}, 2)
    init = np.array([1, 0], dtype=np.uint8)
    _, acc, _, _, fr, _ = plan.run(init, p, np.random.default_rng(5), np.array([20.0]))
    rate = fr[0] / acc["ten"][-1]
    sigma = math.sqrt(fr[0]) / acc["ten"][-1]
    assert abs(rate - 0.5 * n * n) < 3 * sigma


def test_single_particle_drift():
    out = experiments.single_particle_drift(64, 1.0, 0.05, 400, seed=11)
    assert out["expected"] == pytest.approx(64 ** 1.5 * 0.05, rel=1e-12)
    assert abs(out["z"]) < 3


def test_ergodic_average_of_centered_pair():
    p = ModelParams(0.0, 64, 0.5)
    obs = {"g": Observable(LocalFunction.product(2, 0.5), LatticeWeight.uniform(64, 1 / 64))}
    d = experiments.run_replicas(p, obs, 0.5, 40, seed=2)
    X = d.acc["g"][:, -1] / 0.5
    assert abs(X.mean()) < 3 * X.std(ddof=1) / math.sqrt(X.size)


@pytest.mark.parametrize("a", [0.0, 1.0])
def test_stationarity(a):
    out = stationarity_check(ModelParams(a, 64, 0.3), 0.05, 300, seed=1)
    for key in ("z_single", "z_pair", "z_nn"):
        assert abs(out[key]) < 4
    assert out["conserved"]
    assert out["bond_rate"] == pytest.approx(out["bond_rate_expected"], rel=0.03)
    if a == 0:
        assert abs(out["z_flux_asymmetry"]) < 3


def _exact_occupation(params, init_bits, t):
    N = params.N
    A = spectral.ring_generator(N, params, "L") * params.n ** 2
    idx = int(sum(b << i for i, b in enumerate(init_bits)))
    P = scipy.linalg.expm(A * t)[idx]
    occ0 = spectral.ring_bits(N)[:, 0]
    return float(P @ occ0)


def test_kernel_and_uniformized_step_match_exact_law():
    params = ModelParams(1.0, 6, 0.5)
    init_bits = [1, 1, 0, 1, 0, 0]
    t = 0.04
    exact = _exact_occupation(params, init_bits, t)
    init = Configuration.from_array(np.array(init_bits, dtype=np.uint8))
    R = 3000
    rng = np.random.default_rng(8)
    plan = KernelPlan({}, 6)
    k_vals = np.array([plan.run(init.to_array(), params, rng, np.array([t]))[0][0]
                       for _ in range(R)], dtype=float)
    s_vals = np.zeros(R)
    for r in range(R):
        st = SimState(init)
        while True:
            new, dt = step(st, params, rng)
            if new.time > t:
                break
            st = new
        s_vals[r] = st.config[0]
    for vals in (k_vals, s_vals):
        se = math.sqrt(exact * (1 - exact) / R)
        assert abs(vals.mean() - exact) < 4 * se


def test_monte_carlo_second_moment_matches_exact_small_ring():
    params = ModelParams(1.0, 8, 0.4)
    stat = LocalFunction.product(2, 0.4) - BlockFunction.cond_exp_fm(3, 2, 0.4)
    h = np.cos(2 * np.pi * np.arange(8) / 8)
    out = experiments.kipnis_bound_check(stat, h, params, [0.01, 0.05], replicas=1500, seed=4)
    for row in out["rows"]:
        assert abs(row["z_mc_vs_exact"]) < 4


@pytest.mark.parametrize("N,init_bits", [(2, [1, 0]), (3, [1, 1, 0]), (4, [1, 0, 1, 0]),
                                         (5, [1, 1, 0, 0, 0])])
def test_kernel_law_on_tiny_rings(N, init_bits):
    params = ModelParams(1.0, 4, 0.5, N)
    t = 0.03
    A = spectral.ring_generator(N, params, "L") * params.n ** 2
    idx = int(sum(b << i for i, b in enumerate(init_bits)))
    exact = scipy.linalg.expm(A * t)[idx]
    plan = KernelPlan({}, N)
    rng = np.random.default_rng(N)
    R = 4000
    counts = np.zeros(1 << N)
    for _ in range(R):
        eta = plan.run(np.array(init_bits, dtype=np.uint8), params, rng, np.array([t]))[0]
        counts[int(sum(int(b) << i for i, b in enumerate(eta)))] += 1
    freq = counts / R
    se = np.sqrt(exact * (1 - exact) / R) + 1e-3
    assert np.all(np.abs(freq - exact) < 4.5 * se)
