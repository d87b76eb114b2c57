"""Exact finite-box and small-ring linear algebra for the symmetric exclusion generator."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .lattice import ModelParams

BOX_CAP = 14
RING_CAP = 14


class DegenerateSectorError(ValueError):
    """Sector with a single configuration: no spectral gap is defined."""


@dataclass
class BoxGenerator:
    """Symmetric exclusion generator on ``ell`` sites restricted to ``k`` particles.

    ``states[i]`` is a bitmask (bit x = eta(x)); ``matrix`` acts on column
    vectors indexed like ``states``.  ``partners[b][i]`` is the index of the
    configuration obtained by exchanging sites b and b+1.
    """

    ell: int
    k: int
    states: np.ndarray
    matrix: np.ndarray
    partners: list
    movable: list

    @property
    def size(self) -> int:
        return self.states.size

    def bits(self) -> np.ndarray:
        return ((self.states[:, None] >> np.arange(self.ell)) & 1).astype(np.uint8)


def _sector_states(ell: int, k: int) -> np.ndarray:
    return np.array(sorted(sum(1 << i for i in occ)
                           for occ in itertools.combinations(range(ell), k)), dtype=np.int64)


def build_generator(ell: int, k: int) -> BoxGenerator:
    if not 1 <= ell <= BOX_CAP:
        raise ValueError(f"box length {ell} outside [1, {BOX_CAP}]")
    if not 0 <= k <= ell:
        raise ValueError("particle count outside [0, ell]")
    states = _sector_states(ell, k)
    index = {int(s): i for i, s in enumerate(states)}
    size = states.size
    S = np.zeros((size, size))
    partners, movable = [], []
    for b in range(ell - 1):
        mask = (1 << b) | (1 << (b + 1))
        bit0 = (states >> b) & 1
        bit1 = (states >> (b + 1)) & 1
        can = bit0 != bit1
        part = np.arange(size)
        for i in np.nonzero(can)[0]:
            j = index[int(states[i] ^ mask)]
            part[i] = j
            S[i, j] += 0.5
            S[i, i] -= 0.5
        partners.append(part)
        movable.append(can)
    return BoxGenerator(ell, k, states, S, partners, movable)


def quadratic_form(g: np.ndarray, gen: BoxGenerator) -> float:
    """``<g, -S g>`` under the uniform measure on the sector."""
    g = np.asarray(g, dtype=np.float64)
    return float(-g @ gen.matrix @ g) / gen.size


def dirichlet_form(g: np.ndarray, gen: BoxGenerator) -> float:
    """Bond-sum form ``1/4 sum_b E[(eta_b - eta_{b+1})^2 (g(eta^b) - g(eta))^2]``."""
    g = np.asarray(g, dtype=np.float64)
    total = 0.0
    for part, can in zip(gen.partners, gen.movable):
        d = g[part] - g
        total += float(np.sum(can * d * d))
    return 0.25 * total / gen.size


def _mean_zero_check(V: np.ndarray, weights: np.ndarray, tol: float = 1e-10,
                     floor: float = 1e-15):
    scale = float(np.max(np.abs(V))) if V.size else 0.0
    mean = float(np.dot(weights, V))
    if abs(mean) > tol * scale + floor:
        raise ValueError(f"function is not mean zero on the sector (mean={mean:.3e})")


def h_minus_one(V: np.ndarray, gen: BoxGenerator) -> float:
    """``<V, (-S)^{-1} V>`` on the sector; V must be mean zero."""
    V = np.asarray(V, dtype=np.float64)
    size = gen.size
    _mean_zero_check(V, np.full(size, 1.0 / size))
    if size == 1:
        return 0.0
    # adding the projector on constants makes -S invertible without changing
    # the solution on the mean-zero subspace
    A = -gen.matrix + np.full((size, size), 1.0 / size)
    x = scipy.linalg.solve(A, V, assume_a="pos")
    return float(V @ x) / size


def spectral_gap(ell: int, k: int) -> float:
    gen = build_generator(ell, k)
    if gen.size < 2:
        raise DegenerateSectorError(f"sector (ell={ell}, k={k}) has a single configuration")
    ev = np.sort(scipy.linalg.eigvalsh(-gen.matrix))
    return float(ev[1])


def generator_spectrum(ell: int, k: int) -> np.ndarray:
    return np.sort(scipy.linalg.eigvalsh(build_generator(ell, k).matrix))


# -- full ring -------------------------------------------------------------

def ring_bits(N: int) -> np.ndarray:
    """Occupations of all ``2**N`` ring configurations, shape (2**N, N)."""
    if not 1 <= N <= RING_CAP:
        raise ValueError(f"ring size {N} outside [1, {RING_CAP}]")
    idx = np.arange(1 << N)
    return ((idx[:, None] >> np.arange(N)) & 1).astype(np.uint8)


def ring_measure(N: int, rho: float) -> np.ndarray:
    k = ring_bits(N).sum(axis=1)
    return rho ** k * (1.0 - rho) ** (N - k)


def _ring_rates(N: int, params: ModelParams, kind: str):
    if kind == "L":
        right, left = params.p, params.q
    elif kind == "Lstar":
        right, left = params.q, params.p
    elif kind == "S":
        right = left = 0.5
    else:
        raise ValueError("kind must be 'L', 'Lstar' or 'S'")
    return right, left


def ring_generator(N: int, params: ModelParams, kind: str = "L") -> np.ndarray:
    """Dense matrix of ``L_n`` (or its adjoint / symmetric part) on all ``2**N`` states.

    Entry ``[i, j]`` is the jump rate from state i to state j; rows sum to zero.
    """
    if N > 10:
        raise ValueError("dense full-ring generator limited to N <= 10")
    right, left = _ring_rates(N, params, kind)
    size = 1 << N
    A = np.zeros((size, size))
    idx = np.arange(size)
    for b in range(N):
        c = (b + 1) % N
        eb = (idx >> b) & 1
        ec = (idx >> c) & 1
        j = idx ^ ((1 << b) | (1 << c))
        rate = np.where((eb == 1) & (ec == 0), right, 0.0) + np.where((eb == 0) & (ec == 1), left, 0.0)
        A[idx, j] += rate
        A[idx, idx] -= rate
    return A


def ring_dirichlet(g: np.ndarray, N: int, rho: float, bonds=None) -> float:
    """``1/4 sum_b E_rho[(eta_b - eta_{b+1})^2 (g(eta^b) - g(eta))^2]`` over the given bonds."""
    g = np.asarray(g, dtype=np.float64)
    w = ring_measure(N, rho)
    idx = np.arange(1 << N)
    total = 0.0
    for b in (range(N) if bonds is None else bonds):
        c = (b + 1) % N
        can = ((idx >> b) & 1) != ((idx >> c) & 1)
        d = g[idx ^ ((1 << b) | (1 << c))] - g
        total += float(np.sum(w * can * d * d))
    return 0.25 * total


def box_dirichlet_sum(g: np.ndarray, N: int, ell: int, rho: float) -> float:
    """``sum_x <g, -S_{x,ell} g>`` over all boxes of ``ell`` sites on the ring."""
    return sum(ring_dirichlet(g, N, rho, bonds=[(x + i) % N for i in range(ell - 1)])
               for x in range(N))


def _sector_index(N: int):
    counts = ring_bits(N).sum(axis=1)
    return [np.nonzero(counts == k)[0] for k in range(N + 1)]


def _sector_matrix(N: int, states: np.ndarray, right: float, left: float) -> np.ndarray:
    pos = {int(s): i for i, s in enumerate(states)}
    size = states.size
    A = np.zeros((size, size))
    for b in range(N):
        c = (b + 1) % N
        mask = (1 << b) | (1 << c)
        for i, s in enumerate(states):
            eb = (s >> b) & 1
            ec = (s >> c) & 1
            if eb == ec:
                continue
            rate = right if eb == 1 else left
            A[i, pos[int(s ^ mask)]] += rate
            A[i, i] -= rate
    return A


def ring_h_minus_one(V: np.ndarray, N: int, params: ModelParams, speed: float = 1.0) -> float:
    """``<V, (-speed * S)^{-1} V>_rho`` on the ring, sector by sector.

    V (values on all ``2**N`` states) must have zero mean on every
    fixed-particle-number sector.
    """
    V = np.asarray(V, dtype=np.float64)
    total = 0.0
    for k, states in enumerate(_sector_index(N)):
        size = states.size
        pk = math.comb(N, k) * params.rho ** k * (1 - params.rho) ** (N - k)
        v = V[states]
        _mean_zero_check(v, np.full(size, 1.0 / size))
        if size == 1:
            continue
        S = speed * _sector_matrix(N, states, 0.5, 0.5)
        x = scipy.linalg.solve(-S + np.full((size, size), 1.0 / size), v, assume_a="pos")
        total += pk * float(v @ x) / size
    return total


def time_integral_second_moment(V: np.ndarray, N: int, params: ModelParams, t,
                                speed: float | None = None) -> np.ndarray:
    """Exact ``E_rho[(int_0^t V(eta_s) ds)^2]`` for the stationary ring process.

    Uses ``E[(int V)^2] = 2 int_0^t (t-s) <V, e^{sA} V> ds`` with the block
    matrix-exponential identity for the inner integral, sector by sector.
    ``speed`` multiplies the generator (default ``n**2``).
    """
    V = np.asarray(V, dtype=np.float64)
    ts = np.atleast_1d(np.asarray(t, dtype=np.float64))
    speed = float(params.n) ** 2 if speed is None else speed
    out = np.zeros(ts.size)
    for k, states in enumerate(_sector_index(N)):
        size = states.size
        pk = math.comb(N, k) * params.rho ** k * (1 - params.rho) ** (N - k)
        v = V[states]
        if not np.any(v):
            continue
        A = speed * _sector_matrix(N, states, params.p, params.q)
        big = np.zeros((3 * size, 3 * size))
        big[:size, :size] = A
        big[:size, size:2 * size] = np.eye(size)
        big[size:2 * size, 2 * size:] = np.eye(size)
        for i, ti in enumerate(ts):
            E = scipy.linalg.expm(big * ti)
            K = E[:size, 2 * size:]
            out[i] += pk * 2.0 * float(v @ (K @ v)) / size
    return out


# -- two-point sector of the symmetric process ------------------------------------

def _canonical_pair(x: int, r: int, n: int) -> tuple[int, int]:
    """Representative ``(x, r)``, ``1 <= r <= n/2``, of the pair ``{x, x+r}``."""
    x, r = x % n, r % n
    if r > n // 2:
        x, r = (x + r) % n, n - r
    return x, r


def pair_sector_matrix(n: int, k: int = 1, speed: float | None = None) -> np.ndarray:
    """Symmetric generator on centered products ``prod_{y in A}(eta(y)-rho)``, ``|A| = 2``,
    restricted to total momentum ``q = 2 pi k / n``.

    At a = 0 the dynamics is stirring at rate ``speed/2`` per bond, and these
    products evolve as two stirring particles.  A momentum-q function is
    ``e^{iqx} phi(r)`` on pairs ``{x, x+r}``; for odd k, ``phi(n/2) = 0``, so the
    matrix acts on ``phi(1..n/2-1)`` and is Hermitian.
    """
    if n % 2 or k % 2 == 0 or n < 6:
        raise ValueError("need even n >= 6 and odd momentum index k")
    speed = float(n) ** 2 if speed is None else speed
    gamma = speed / 2.0
    q = 2.0 * math.pi * k / n
    R = n // 2
    M = np.zeros((R - 1, R - 1), dtype=np.complex128)
    for r in range(1, R):
        # moves of the left particle (-1 / +1) and of the right one (+1 / -1)
        moves = [(-1, r + 1), (0, r + 1)]
        if r > 1:
            moves += [(1, r - 1), (0, r - 1)]
        for dx, r2 in moves:
            x2, rr = _canonical_pair(dx, r2, n)
            M[r - 1, r - 1] -= gamma
            if rr < R:
                M[r - 1, rr - 1] += gamma * complex(math.cos(q * x2), math.sin(q * x2))
    return M


def pair_box_profile(ell: int, n: int, k: int = 1) -> np.ndarray:
    """``phi`` of ``sum_x e^{iqx} [f_2(tau_x eta) - E[f_2 | eta^ell](tau_x eta)]``.

    The block conditional expectation of the centred pair is the average of
    centred products over the unordered pairs of the box, a pure two-point
    function for every density.
    """
    if not 2 <= ell <= n // 2:
        raise ValueError("need 2 <= ell <= n/2")
    q = 2.0 * math.pi * k / n
    phi = np.zeros(n // 2 - 1, dtype=np.complex128)
    phi[0] += 1.0
    w = 2.0 / (ell * (ell - 1))
    for r in range(1, ell):
        y = np.arange(ell - r)
        phi[r - 1] -= w * np.exp(-1j * q * y).sum()
    return phi


def block_square_profile(L: int, n: int, k: int = 1) -> np.ndarray:
    """``phi`` of ``sum_x e^{iqx} (etabar^L(x))^2`` without its constant part.

    ``(etabar^L)^2 = L^-2 sum_y etabar(y)^2 + 2 L^-2 sum_{y<z} etabar(y) etabar(z)``;
    the diagonal is constant at rho = 1/2 and drops out against weights that
    sum to zero, leaving the two-point part.
    """
    if not 2 <= L <= n // 2:
        raise ValueError("need 2 <= L <= n/2")
    q = 2.0 * math.pi * k / n
    phi = np.zeros(n // 2 - 1, dtype=np.complex128)
    for r in range(1, L):
        phi[r - 1] += 2.0 / L ** 2 * np.exp(-1j * q * np.arange(L - r)).sum()
    return phi


def pair_profile_second_moment(phi: np.ndarray, n: int, t, rho: float, H: complex,
                               k: int = 1, speed: float | None = None) -> np.ndarray:
    """Exact ``E[(int_0^t sum_x h(x) G(tau_x eta_s) ds)^2]`` at a = 0 for a two-point ``G``.

    ``G`` is given by its momentum profile ``phi`` on pair distances
    ``1..n/2-1``, ``h(x) = Re(H e^{iqx})``, and the process starts from the
    product measure.  Uses the eigenbasis of :func:`pair_sector_matrix` and
    ``int_0^t (t-s) e^{s lam} ds = (e^{lam t} - 1 - lam t)/lam^2``.
    """
    ts = np.atleast_1d(np.asarray(t, dtype=np.float64))
    M = pair_sector_matrix(n, k, speed)
    lam, Q = np.linalg.eigh(M)
    c2 = np.abs(Q.conj().T @ phi) ** 2
    chi = rho * (1.0 - rho)
    out = np.zeros(ts.size)
    for i, ti in enumerate(ts):
        kern = (np.expm1(lam * ti) - lam * ti) / lam ** 2
        # <v, K v> over pairs: n translates times half |H|^2 for the real part
        out[i] = 2.0 * chi ** 2 * 0.5 * abs(H) ** 2 * n * float(np.sum(c2 * kern))
    return out


def pair_sector_second_moment(ell: int, n: int, t, rho: float, H: complex, k: int = 1,
                              speed: float | None = None) -> np.ndarray:
    """Exact ``E[(int_0^t sum_x h(x) {f_2 - E[f_2 | eta^ell]}(tau_x eta_s) ds)^2]`` at a = 0."""
    return pair_profile_second_moment(pair_box_profile(ell, n, k), n, t, rho, H, k, speed)
