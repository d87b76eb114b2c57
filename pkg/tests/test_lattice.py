import numpy as np
import pytest
from hypothesis import given, strategies as st

from wasep.lattice import (Configuration, ModelParams, apply_generator, block_average,
                           current_decomposition, swap)
from wasep.statics import bernoulli_weight, sample_bernoulli

bits = st.lists(st.integers(0, 1), min_size=2, max_size=150)


def cfg(*b):
    return Configuration.from_array(np.array(b, dtype=np.uint8))


def test_swap_exchanges_distinct_endpoints():
    assert swap(cfg(1, 0, 0), 0) == cfg(0, 1, 0)


def test_swap_equal_endpoints_is_fixed_point():
    assert swap(cfg(1, 1, 0), 0) == cfg(1, 1, 0)


def test_swap_wraps_around_ring():
    assert swap(cfg(1, 0, 0, 0), 3) == cfg(0, 0, 0, 1)


@given(bits, st.integers(0, 400))
def test_swap_is_involution(b, x):
    c = Configuration.from_array(np.array(b, dtype=np.uint8))
    assert swap(swap(c, x), x) == c


@given(bits)
def test_bit_packing_round_trip(b):
    arr = np.array(b, dtype=np.uint8)
    c = Configuration.from_array(arr)
    assert np.array_equal(c.to_array(), arr)
    assert c.count() == int(arr.sum())
    assert all(c[x] == arr[x] for x in range(arr.size))


def test_block_average_examples():
    assert block_average(cfg(1, 0, 1, 0), 0, 2) == 0.5
    full = Configuration.full(7)
    assert all(block_average(full, x, L) == 1.0 for x in range(7) for L in range(1, 8))
    assert block_average(cfg(1, 1, 0, 0), 3, 2) == 0.5


def test_block_average_rejects_bad_length():
    with pytest.raises(ValueError):
        block_average(cfg(1, 0), 0, 3)


def test_current_decomposition_values():
    p = ModelParams(a=1.0, n=100, rho=0.5)
    j, jS, jA = current_decomposition(cfg(1, 0, 0), 0, p)
    assert (jS, jA) == (0.5, 0.5)
    assert j == pytest.approx(0.55, abs=1e-15)
    j, jS, jA = current_decomposition(cfg(0, 1, 0), 0, p)
    assert (jS, jA) == (-0.5, 0.5)
    assert j == pytest.approx(-0.45, abs=1e-15)
    for pair in ((0, 0), (1, 1)):
        assert current_decomposition(cfg(*pair, 0), 0, p) == (0.0, 0.0, 0.0)


@given(bits, st.floats(0.0, 3.0))
def test_current_is_symmetric_plus_weak_asymmetric(b, a):
    p = ModelParams(a=a, n=16, rho=0.3)
    c = Configuration.from_array(np.array(b, dtype=np.uint8))
    for x in range(min(len(b), 5)):
        j, jS, jA = current_decomposition(c, x, p)
        assert j == pytest.approx(jS + jA / np.sqrt(p.n), abs=1e-14)


@given(st.lists(st.integers(0, 1), min_size=3, max_size=14), st.integers(0, 13))
def test_generator_on_occupation_is_current_divergence(b, x0):
    p = ModelParams(a=1.3, n=25, rho=0.4)
    c = Configuration.from_array(np.array(b, dtype=np.uint8))
    x0 %= c.N
    lhs = apply_generator(lambda e: e[x0], c, p)
    rhs = current_decomposition(c, x0 - 1, p)[0] - current_decomposition(c, x0, p)[0]
    assert lhs == pytest.approx(rhs, abs=1e-14)


@given(st.lists(st.integers(0, 1), min_size=2, max_size=14))
def test_generator_kills_constants_and_particle_number(b):
    p = ModelParams(a=0.7, n=9, rho=0.5)
    c = Configuration.from_array(np.array(b, dtype=np.uint8))
    assert apply_generator(lambda e: 3.0, c, p) == 0.0
    assert apply_generator(lambda e: e.count(), c, p) == pytest.approx(0.0, abs=1e-14)


def test_model_params_validation():
    with pytest.raises(ValueError):
        ModelParams(a=5.0, n=4, rho=0.5)  # p_n would exceed 1
    with pytest.raises(ValueError):
        ModelParams(a=0.0, n=4, rho=1.5)
    p = ModelParams(a=1.0, n=100, rho=0.5)
    assert p.p == pytest.approx(0.55) and p.q == pytest.approx(0.45)
    assert p.velocity == 0.0


def test_bernoulli_lln():
    c = sample_bernoulli(0.5, 10 ** 6, seed=1)
    sigma = 0.5 / np.sqrt(10 ** 6)
    assert abs(c.count() / 10 ** 6 - 0.5) < 4 * sigma


def test_bernoulli_weights_on_three_sites():
    rho = 0.3
    total = 0.0
    for i in range(8):
        b = [(i >> s) & 1 for s in range(3)]
        w = bernoulli_weight(b, rho)
        k = sum(b)
        assert w == pytest.approx(rho ** k * (1 - rho) ** (3 - k), rel=1e-15)
        total += w
    assert total == pytest.approx(1.0, rel=1e-15)


def test_bernoulli_sampling_is_deterministic():
    assert sample_bernoulli(0.37, 1000, seed=5) == sample_bernoulli(0.37, 1000, seed=5)
    assert sample_bernoulli(0.37, 1000, seed=5) != sample_bernoulli(0.37, 1000, seed=6)
