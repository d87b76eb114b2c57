"""Equilibrium measures and canonical-ensemble conditional expectations.

Closed forms are evaluated in floating point.  Every closed form has an
exact-arithmetic twin (``exact=True`` or the ``canonical_*`` enumerators)
used as an independent oracle in the test-suite and the ``exact-suite``
command.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .lattice import Configuration, block_average
from .local import LocalFunction, exact_table

EXHAUSTIVE_CAP = 26
DEGREE_WINDOW_CAP = 20


class SizeCapError(ValueError):
    """Requested exhaustive enumeration exceeds the configured cap."""


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_bernoulli(rho: float, N: int, seed=None) -> Configuration:
    """Draw a configuration from the product Bernoulli(rho) measure on N sites."""
    if not 0.0 < rho < 1.0:
        raise ValueError("rho must lie in (0, 1)")
    rng = _as_rng(seed)
    return Configuration.from_array((rng.random(N) < rho).astype(np.uint8))


def bernoulli_weight(config_bits: Sequence[int], rho) -> float:
    k = sum(config_bits)
    return rho ** k * (1 - rho) ** (len(config_bits) - k)


def falling_moment(k: int, L: int, j: int, exact: bool = False):
    """``E[eta(y_1)...eta(y_j) | k particles in L sites]`` for distinct sites."""
    num = 1
    den = 1
    for i in range(j):
        num *= k - i
        den *= L - i
    if exact:
        return Fraction(num, den)
    return num / den


def _check_kL(k: int, L: int):
    if not 0 <= k <= L:
        raise ValueError(f"particle count k={k} must lie in [0, L={L}]")


def cond_exp_pair(k: int, L: int) -> float:
    """``E[eta(x) eta(x+1) | k particles in the box of length L]``."""
    if L < 2:
        raise ValueError("box length must be at least 2")
    _check_kL(k, L)
    return k * (k - 1) / (L * (L - 1))


def cond_exp_centered_pair(k: int, L: int, rho: float) -> float:
    if L < 2:
        raise ValueError("box length must be at least 2")
    _check_kL(k, L)
    u = Fraction(k, L)
    r = rho if isinstance(rho, Fraction) else Fraction(rho)
    return float((u - r) ** 2 - u * (1 - u) / (L - 1))


def cond_exp_fm(k: int, L: int, m: int, rho, exact: bool = False):
    """Canonical expectation of ``prod_{i<m} (eta(y_i) - rho)`` over m distinct sites.

    Binomial expansion of the centred product against the falling-factorial
    moments of the uniform measure on ``C(L, k)`` configurations, evaluated in
    rational arithmetic at the exact value of ``rho``.
    """
    if m > L:
        raise ValueError(f"m={m} exceeds box length L={L}")
    if m < 0:
        raise ValueError("m must be nonnegative")
    _check_kL(k, L)
    r = rho if isinstance(rho, Fraction) else Fraction(rho)
    val = sum(math.comb(m, j) * (-r) ** (m - j) * falling_moment(k, L, j, True)
              for j in range(m + 1))
    # the alternating sum cancels badly in floating point; round once at the end
    return val if exact else float(val)


def f_m(config: Configuration, x: int, m: int, rho: float) -> float:
    out = 1.0
    for i in range(m):
        out *= config[x + i] - rho
    return out


def _box_count(config: Configuration, x: int, L: int) -> int:
    return int(round(block_average(config, x, L) * L))


def v_statistic(config: Configuration, x: int, ell: int, m: int, rho: float) -> float:
    """``f_m - E[f_m | count in box of length ell]`` at site x."""
    if not (m <= ell <= config.N):
        raise ValueError("require m <= ell <= N")
    return f_m(config, x, m, rho) - cond_exp_fm(_box_count(config, x, ell), ell, m, rho)


def v_tilde(config: Configuration, x: int, ell: int, L: int, m: int, rho: float) -> float:
    """Difference of the block projections of ``f_m`` on nested boxes ``ell <= L``."""
    if not (m <= ell <= L <= config.N):
        raise ValueError("require m <= ell <= L <= N")
    return (cond_exp_fm(_box_count(config, x, ell), ell, m, rho)
            - cond_exp_fm(_box_count(config, x, L), L, m, rho))


# -- enumeration oracles ---------------------------------------------------

def canonical_configs(L: int, k: int) -> np.ndarray:
    """All ``C(L, k)`` configurations of k particles in L sites, as rows."""
    _check_kL(k, L)
    rows = np.zeros((math.comb(L, k), L), dtype=np.uint8)
    for i, occ in enumerate(itertools.combinations(range(L), k)):
        rows[i, list(occ)] = 1
    return rows


def canonical_average(fn: Callable[[tuple], object], L: int, k: int) -> Fraction:
    """Exact uniform average of ``fn`` over the canonical ensemble (L, k)."""
    total = Fraction(0)
    count = 0
    for occ in itertools.combinations(range(L), k):
        bits = [0] * L
        for i in occ:
            bits[i] = 1
        v = fn(tuple(bits))
        total += v if isinstance(v, Fraction) else Fraction(v)
        count += 1
    return total / count


def centered_product_exact(bits: Sequence[int], m: int, rho) -> Fraction:
    r = rho if isinstance(rho, Fraction) else Fraction(rho)
    out = Fraction(1)
    for i in range(m):
        out *= bits[i] - r
    return out


def bernoulli_average(fn: Callable[[tuple], object], N: int, rho) -> Fraction:
    """Exact expectation of ``fn`` under Bernoulli(rho) on N sites."""
    r = rho if isinstance(rho, Fraction) else Fraction(rho)
    total = Fraction(0)
    for bits in itertools.product((0, 1), repeat=N):
        k = sum(bits)
        v = fn(bits)
        total += (v if isinstance(v, Fraction) else Fraction(v)) * r ** k * (1 - r) ** (N - k)
    return total


# -- variances -------------------------------------------------------------

@lru_cache(maxsize=None)
def _binom_pmf(L: int, rho: float) -> np.ndarray:
    k = np.arange(L + 1)
    comb = np.array([math.comb(L, int(i)) for i in k], dtype=np.float64)
    return comb * rho ** k * (1.0 - rho) ** (L - k)


def _cond_table(L: int, m: int, rho: float) -> np.ndarray:
    return np.array([cond_exp_fm(k, L, m, rho) for k in range(L + 1)])


def _variance_closed(kind: str, m: int, ell: int, L: int | None, rho: float) -> float:
    if kind == "V":
        # Var(f - E[f|k]) = E[f^2] - E[E[f|k]^2] since the projection is orthogonal
        g = _cond_table(ell, m, rho)
        chi = rho * (1 - rho)
        return chi ** m - float(np.dot(_binom_pmf(ell, rho), g * g))
    g_small = _cond_table(ell, m, rho)
    g_big = _cond_table(L, m, rho)
    p_small = _binom_pmf(ell, rho)
    p_rest = _binom_pmf(L - ell, rho)
    diff = g_small[:, None] - g_big[np.arange(ell + 1)[:, None] + np.arange(L - ell + 1)[None, :]]
    w = p_small[:, None] * p_rest[None, :]
    mean = float(np.sum(w * diff))
    return float(np.sum(w * diff * diff)) - mean * mean


def _variance_exhaustive(kind: str, m: int, ell: int, L: int | None, rho: float) -> float:
    size = ell if kind == "V" else L
    size = max(size, m)
    if size > EXHAUSTIVE_CAP:
        raise SizeCapError(f"exhaustive enumeration over 2**{size} configurations "
                           f"exceeds the cap 2**{EXHAUSTIVE_CAP}")
    # integer multiplicities of (first-m pattern, count in ell, count in rest)
    mult = np.zeros((1 << m, ell + 1, size - ell + 1), dtype=np.int64)
    chunk = 1 << min(size, 20)
    low_mask = (1 << ell) - 1
    for start in range(0, 1 << size, chunk):
        idx = np.arange(start, min(start + chunk, 1 << size), dtype=np.int64)
        pat = idx & ((1 << m) - 1)
        k_small = _popcount(idx & low_mask)
        k_rest = _popcount(idx >> ell)
        np.add.at(mult, (pat, k_small, k_rest), 1)
    pats = np.array([[(p >> i) & 1 for i in range(m)] for p in range(1 << m)], dtype=float)
    f_vals = np.prod(pats - rho, axis=1) if m else np.ones(1)
    g_small = _cond_table(ell, m, rho)
    total = 0.0
    total_sq = 0.0
    for p in range(1 << m):
        for ks in range(ell + 1):
            for kr in range(size - ell + 1):
                c = mult[p, ks, kr]
                if not c:
                    continue
                k = ks + kr
                w = c * rho ** k * (1 - rho) ** (size - k)
                if kind == "V":
                    val = f_vals[p] - g_small[ks]
                else:
                    val = g_small[ks] - cond_exp_fm(k, L, m, rho)
                total += w * val
                total_sq += w * val * val
    return total_sq - total * total


def _popcount(a: np.ndarray) -> np.ndarray:
    a = a.astype(np.uint64)
    return np.unpackbits(a.view(np.uint8)).reshape(a.size, 64).sum(axis=1)


def variance_exact(kind: str, m: int, ell: int, rho: float, L: int | None = None,
                   mode: str = "closed") -> float:
    """Exact ``Var_rho`` of ``V^m_ell`` (kind "V") or ``Vtilde^m_{ell,L}`` (kind "Vtilde").

    ``mode="closed"`` sums over the binomial laws of the nested block counts;
    ``mode="exhaustive"`` enumerates all configurations of the box.
    """
    if kind not in ("V", "Vtilde"):
        raise ValueError("kind must be 'V' or 'Vtilde'")
    if kind == "Vtilde":
        if L is None:
            L = 2 * ell
        if not m <= ell <= L:
            raise ValueError("require m <= ell <= L")
    elif m > ell:
        raise ValueError("require m <= ell")
    if mode == "closed":
        return _variance_closed(kind, m, ell, L, rho)
    if mode == "exhaustive":
        return _variance_exhaustive(kind, m, ell, L, rho)
    raise ValueError("mode must be 'closed' or 'exhaustive'")


# -- degree and psi-decomposition -----------------------------------------

def _as_local(fn, width: int | None) -> tuple[list, int]:
    if isinstance(fn, LocalFunction):
        return [Fraction(float(v)) for v in fn.table], fn.width
    if width is None:
        raise ValueError("width is required for a plain callable")
    return exact_table(fn, width), width


def mean_polynomial(fn, width: int | None = None) -> list[Fraction]:
    """Power-basis coefficients of ``sigma -> E_sigma[fn]``, computed exactly."""
    table, w = _as_local(fn, width)
    if w > DEGREE_WINDOW_CAP:
        raise SizeCapError(f"window of {w} sites exceeds the enumeration cap "
                           f"{DEGREE_WINDOW_CAP}")
    coeffs = [Fraction(0)] * (w + 1)
    for idx, val in enumerate(table):
        if not val:
            continue
        j = bin(idx).count("1")
        # sigma^j (1 - sigma)^(w - j)
        for i in range(w - j + 1):
            coeffs[j + i] += val * math.comb(w - j, i) * (-1) ** i
    return coeffs


def taylor_at(coeffs: Sequence[Fraction], rho) -> list[Fraction]:
    """Coefficients ``a_j`` with ``p(sigma) = sum_j a_j (sigma - rho)**j``."""
    r = rho if isinstance(rho, Fraction) else Fraction(rho)
    d = len(coeffs)
    out = [Fraction(0)] * d
    for i, c in enumerate(coeffs):
        if not c:
            continue
        for j in range(i + 1):
            out[j] += c * math.comb(i, j) * r ** (i - j)
    return out


def degree(fn, rho, width: int | None = None, atol: float = 1e-12):
    """Order of the first nonvanishing derivative of ``E_sigma[fn]`` at ``rho``.

    Returns ``math.inf`` when the mean polynomial vanishes identically.
    Coefficients are exact rationals of the (already rounded) table values, so
    ``atol`` only absorbs rounding present in the inputs; pass ``atol=0`` for
    tables built from exact rationals.
    """
    a = taylor_at(mean_polynomial(fn, width), rho)
    scale = max([abs(float(c)) for c in a] + [1.0])
    for j, c in enumerate(a):
        if abs(float(c)) > atol * scale:
            return j
    return math.inf


def derivative_at(fn, rho, order: int, width: int | None = None) -> Fraction:
    a = taylor_at(mean_polynomial(fn, width), rho)
    if order >= len(a):
        return Fraction(0)
    return a[order] * math.factorial(order)


def psi_decompose(fn, m: int, rho, width: int | None = None, atol: float = 1e-12):
    """Split ``fn = coef * f_m + psi`` with ``psi`` of degree at least ``m + 1``.

    ``coef`` is the m-th derivative of the mean at ``rho`` divided by ``m!``.
    """
    table, w = _as_local(fn, width)
    a = taylor_at(mean_polynomial(fn, width), rho)
    coef = a[m] if m < len(a) else Fraction(0)
    w_out = max(w, m)
    base = LocalFunction(w, [float(v) for v in table]).padded(w_out)
    psi = base - float(coef) * LocalFunction.product(m, float(rho)).padded(w_out)
    psi.name = "psi"
    d = degree(psi, rho, atol=atol)
    if d < m + 1:
        raise ArithmeticError(f"residual has degree {d} < {m + 1}; inconsistent input "
                              f"degree m={m}")
    return float(coef), psi


def c_m(ell: int, m: int) -> float:
    if ell < 2 or m < 1:
        raise ValueError("require ell >= 2 and m >= 1")
    if m == 1:
        return float(ell * ell)
    if m == 2:
        return float(ell)
    if m == 3:
        return math.log(ell) ** 2
    return 1.0
