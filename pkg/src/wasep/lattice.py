"""Ring configurations, model parameters, currents and the generator action."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

WORD = 64


class Configuration:
    """Occupation variables on a ring of ``N`` sites, bit-packed in uint64 words.

    Instances are treated as values: :meth:`swap` returns a new configuration.
    Site ``x`` is stored in bit ``x % 64`` of word ``x // 64``.
    """

    __slots__ = ("words", "N")

    def __init__(self, words: np.ndarray, N: int):
        if N < 1:
            raise ValueError("ring size must be positive")
        nwords = (N + WORD - 1) // WORD
        words = np.asarray(words, dtype=np.uint64)
        if words.shape != (nwords,):
            raise ValueError(f"expected {nwords} words for N={N}, got shape {words.shape}")
        self.words = words
        self.N = int(N)

    @classmethod
    def from_array(cls, sites) -> "Configuration":
        bits = np.asarray(sites)
        if bits.ndim != 1:
            raise ValueError("sites must be one-dimensional")
        if not np.all((bits == 0) | (bits == 1)):
            raise ValueError("occupation variables must be 0 or 1")
        N = bits.size
        nwords = (N + WORD - 1) // WORD
        padded = np.zeros(nwords * WORD, dtype=np.uint8)
        padded[:N] = bits
        packed = np.packbits(padded, bitorder="little")
        return cls(packed.view("<u8").astype(np.uint64), N)

    @classmethod
    def empty(cls, N: int) -> "Configuration":
        return cls.from_array(np.zeros(N, dtype=np.uint8))

    @classmethod
    def full(cls, N: int) -> "Configuration":
        return cls.from_array(np.ones(N, dtype=np.uint8))

    def to_array(self) -> np.ndarray:
        raw = np.unpackbits(self.words.astype("<u8").view(np.uint8), bitorder="little")
        return raw[: self.N].astype(np.uint8)

    def __getitem__(self, x: int) -> int:
        x %= self.N
        return int((int(self.words[x >> 6]) >> (x & 63)) & 1)

    def __len__(self) -> int:
        return self.N

    def count(self) -> int:
        return int(sum(int(w).bit_count() for w in self.words))

    def swap(self, x: int) -> "Configuration":
        x %= self.N
        y = (x + 1) % self.N
        if self[x] == self[y]:
            return self
        words = self.words.copy()
        words[x >> 6] ^= np.uint64(1 << (x & 63))
        words[y >> 6] ^= np.uint64(1 << (y & 63))
        return Configuration(words, self.N)

    def shifted(self, k: int) -> "Configuration":
        """Translate by ``k`` sites: the result has ``eta'(x) = eta(x - k)``."""
        return Configuration.from_array(np.roll(self.to_array(), k))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Configuration):
            return NotImplemented
        return self.N == other.N and bool(np.array_equal(self.words, other.words))

    def __hash__(self) -> int:
        return hash((self.N, self.words.tobytes()))

    def __repr__(self) -> str:
        if self.N <= 64:
            return f"Configuration({''.join(map(str, self.to_array()))})"
        return f"Configuration(N={self.N}, particles={self.count()})"


@dataclass(frozen=True)
class SBECoefficients:
    A: float
    B: float
    C: float
    v: float


@dataclass(frozen=True)
class ModelParams:
    """WASEP parameters.

    ``a`` is the asymmetry strength, ``n`` the scaling parameter, ``N`` the
    ring size (defaults to ``n``) and ``rho`` the equilibrium density.
    """

    a: float
    n: int
    rho: float
    N: int = field(default=0)

    def __post_init__(self):
        if self.N == 0:
            object.__setattr__(self, "N", int(self.n))
        if self.n < 1:
            raise ValueError("n must be a positive integer")
        if self.N < 2:
            raise ValueError("ring size N must be at least 2")
        if not 0.0 < self.rho < 1.0:
            raise ValueError("rho must lie in (0, 1)")
        if self.a < 0:
            raise ValueError("asymmetry a must be nonnegative")
        if self.a > math.sqrt(self.n):
            raise ValueError("a / sqrt(n) must not exceed 1 (p_n would exceed 1)")

    @property
    def p(self) -> float:
        return 0.5 + self.a / (2.0 * math.sqrt(self.n))

    @property
    def q(self) -> float:
        return 1.0 - self.p

    @property
    def chi(self) -> float:
        return self.rho * (1.0 - self.rho)

    @property
    def diffusivity(self) -> float:
        return self.rho / 2.0

    @property
    def velocity(self) -> float:
        """Frame velocity in macroscopic space per unit macroscopic time."""
        return math.sqrt(self.n) * self.a * (1.0 - 2.0 * self.rho)

    @property
    def sbe(self) -> SBECoefficients:
        return SBECoefficients(A=0.5, B=-self.a, C=self.chi, v=self.velocity)


def chi(u):
    return u * (1.0 - u)


def swap(config: Configuration, x: int) -> Configuration:
    return config.swap(x)


def block_average(config: Configuration, x: int, L: int) -> float:
    if not 1 <= L <= config.N:
        raise ValueError(f"window length {L} must lie in [1, N={config.N}]")
    return sum(config[x + i] for i in range(L)) / L


def current_decomposition(config: Configuration, x: int, params: ModelParams):
    """Return ``(j, jS, jA)`` on bond ``(x, x+1)`` with ``j = jS + jA / sqrt(n)``."""
    e0 = config[x]
    e1 = config[x + 1]
    jS = 0.5 * (e0 - e1)
    jA = 0.5 * params.a * (e0 - e1) ** 2
    j = params.p * e0 * (1 - e1) - params.q * e1 * (1 - e0)
    return j, jS, jA


def bond_rate(config: Configuration, x: int, params: ModelParams) -> float:
    e0 = config[x]
    e1 = config[x + 1]
    return params.p * e0 * (1 - e1) + params.q * e1 * (1 - e0)


def apply_generator(f: Callable[[Configuration], float], config: Configuration,
                    params: ModelParams) -> float:
    """Action of ``L_n`` on ``f`` at ``config`` (no ``n**2`` speed-up factor)."""
    f0 = f(config)
    total = 0.0
    for x in range(config.N):
        r = bond_rate(config, x, params)
        if r:
            total += r * (f(config.swap(x)) - f0)
    return total
