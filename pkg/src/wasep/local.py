"""Translation-invariant local functions with tabulated values.

A :class:`LocalFunction` of width ``w`` is stored as a table over the ``2**w``
occupation patterns of the window ``x, ..., x+w-1`` (bit ``i`` of the pattern
index is ``eta(x+i)``).  A :class:`BlockFunction` depends on the window only
through its particle count.  Both carry enough structure for the simulation
kernel to update their lattice sums in O(1) after a nearest-neighbour swap.
"""

from __future__ import annotations

from fractions import Fraction
from numbers import Real
from typing import Callable, Sequence

import numpy as np

MAX_LOCAL_WIDTH = 16


def _patterns(width: int) -> np.ndarray:
    """Array of shape (2**width, width) with the bits of every pattern."""
    idx = np.arange(1 << width)
    return ((idx[:, None] >> np.arange(width)) & 1).astype(np.uint8)


class LocalFunction:
    def __init__(self, width: int, table, name: str = "local"):
        if not 0 <= width <= MAX_LOCAL_WIDTH:
            raise ValueError(f"width must lie in [0, {MAX_LOCAL_WIDTH}]")
        table = np.asarray(table, dtype=np.float64)
        if table.shape != (1 << width,):
            raise ValueError(f"table must have {1 << width} entries")
        self.width = width
        self.table = table
        self.name = name

    @classmethod
    def from_callable(cls, fn: Callable[[tuple], float], width: int,
                      name: str = "local") -> "LocalFunction":
        pats = _patterns(width)
        return cls(width, [float(fn(tuple(int(b) for b in p))) for p in pats], name)

    @classmethod
    def constant(cls, c: float = 1.0) -> "LocalFunction":
        return cls(0, [c], name=f"const({c})")

    @classmethod
    def product(cls, m: int, center: float) -> "LocalFunction":
        """``prod_{i<m} (eta(x+i) - center)``."""
        pats = _patterns(m).astype(np.float64)
        return cls(m, np.prod(pats - center, axis=1), name=f"f{m}")

    @classmethod
    def occupation(cls) -> "LocalFunction":
        return cls(1, [0.0, 1.0], name="eta")

    @classmethod
    def gradient(cls) -> "LocalFunction":
        """``eta(x) - eta(x+1)``."""
        return cls(2, [0.0, 1.0, -1.0, 0.0], name="grad")

    @classmethod
    def diff_sq(cls) -> "LocalFunction":
        """``(eta(x) - eta(x+1))**2``."""
        return cls(2, [0.0, 1.0, 1.0, 0.0], name="diffsq")

    def padded(self, width: int) -> "LocalFunction":
        if width < self.width:
            raise ValueError("cannot shrink a local function")
        idx = np.arange(1 << width) & ((1 << self.width) - 1)
        return LocalFunction(width, self.table[idx], self.name)

    def __call__(self, bits: Sequence[int]) -> float:
        idx = 0
        for i, b in enumerate(bits[: self.width]):
            idx |= int(b) << i
        return float(self.table[idx])

    def at(self, config, x: int) -> float:
        return self([config[x + i] for i in range(self.width)])

    def lattice_values(self, sites: np.ndarray) -> np.ndarray:
        """Values ``g(tau_x eta)`` for every ``x`` on the ring ``sites``."""
        idx = np.zeros(sites.size, dtype=np.int64)
        for i in range(self.width):
            idx |= np.roll(sites, -i).astype(np.int64) << i
        return self.table[idx]

    def _binary(self, other, op):
        if isinstance(other, LocalFunction):
            w = max(self.width, other.width)
            return LocalFunction(w, op(self.padded(w).table, other.padded(w).table),
                                 name=f"({self.name},{other.name})")
        if isinstance(other, Real):
            return LocalFunction(self.width, op(self.table, float(other)), self.name)
        return NotImplemented

    def __add__(self, other):
        if isinstance(other, (BlockFunction, Statistic)):
            return Statistic.of(self) + other
        return self._binary(other, np.add)

    def __radd__(self, other):
        return self.__add__(other)

    def __sub__(self, other):
        if isinstance(other, (BlockFunction, Statistic)):
            return Statistic.of(self) - other
        return self._binary(other, np.subtract)

    def __rsub__(self, other):
        return (-self) + other

    def __neg__(self):
        return LocalFunction(self.width, -self.table, self.name)

    def __mul__(self, other):
        if isinstance(other, Real):
            return LocalFunction(self.width, self.table * float(other), self.name)
        if isinstance(other, LocalFunction):
            return self._binary(other, np.multiply)
        return NotImplemented

    __rmul__ = __mul__

    def __repr__(self):
        return f"LocalFunction({self.name}, width={self.width})"


class BlockFunction:
    """``table[k]`` where ``k`` is the particle count in ``x, ..., x+L-1``."""

    def __init__(self, L: int, table, name: str = "block"):
        table = np.asarray(table, dtype=np.float64)
        if L < 1:
            raise ValueError("block length must be positive")
        if table.shape != (L + 1,):
            raise ValueError(f"table must have L+1 = {L + 1} entries")
        self.L = L
        self.table = table
        self.name = name

    @classmethod
    def cond_exp_fm(cls, L: int, m: int, rho: float) -> "BlockFunction":
        from .statics import cond_exp_fm

        return cls(L, [cond_exp_fm(k, L, m, rho) for k in range(L + 1)],
                   name=f"E[f{m}|{L}]")

    @classmethod
    def centered_square(cls, L: int, rho: float) -> "BlockFunction":
        k = np.arange(L + 1)
        return cls(L, (k / L - rho) ** 2, name=f"sq{L}")

    def at(self, config, x: int) -> float:
        return float(self.table[sum(config[x + i] for i in range(self.L))])

    def lattice_values(self, sites: np.ndarray) -> np.ndarray:
        N = sites.size
        ext = np.concatenate([sites, sites[: self.L]]).astype(np.int64)
        csum = np.concatenate([[0], np.cumsum(ext)])
        counts = csum[self.L: self.L + N] - csum[:N]
        return self.table[counts]

    def __mul__(self, other):
        if isinstance(other, Real):
            return BlockFunction(self.L, self.table * float(other), self.name)
        return NotImplemented

    __rmul__ = __mul__

    def __neg__(self):
        return BlockFunction(self.L, -self.table, self.name)

    def __add__(self, other):
        return Statistic.of(self) + other

    def __sub__(self, other):
        return Statistic.of(self) - other

    def __repr__(self):
        return f"BlockFunction({self.name}, L={self.L})"


class Statistic:
    """Finite linear combination of local and block functions."""

    def __init__(self, terms):
        self.terms = [(float(c), f) for c, f in terms]

    @classmethod
    def of(cls, obj) -> "Statistic":
        if isinstance(obj, Statistic):
            return obj
        if isinstance(obj, (LocalFunction, BlockFunction)):
            return cls([(1.0, obj)])
        if isinstance(obj, Real):
            return cls([(1.0, LocalFunction.constant(float(obj)))])
        raise TypeError(f"{obj!r} has no incremental update rule; use LocalFunction "
                        "or BlockFunction")

    def __add__(self, other):
        return Statistic(self.terms + Statistic.of(other).terms)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-1.0) * Statistic.of(other)

    def __neg__(self):
        return (-1.0) * self

    def __mul__(self, c):
        if not isinstance(c, Real):
            return NotImplemented
        return Statistic([(c * k, f) for k, f in self.terms])

    __rmul__ = __mul__

    def at(self, config, x: int) -> float:
        return sum(c * f.at(config, x) for c, f in self.terms)

    def lattice_values(self, sites: np.ndarray) -> np.ndarray:
        return sum(c * f.lattice_values(sites) for c, f in self.terms)

    def __repr__(self):
        return " + ".join(f"{c:g}*{f!r}" for c, f in self.terms)


def window_patterns(width: int):
    """Iterate over all 0/1 tuples of the given width in table order."""
    for idx in range(1 << width):
        yield tuple((idx >> i) & 1 for i in range(width))


def exact_table(fn: Callable[[tuple], object], width: int):
    """Table of exact values (Fraction where possible) for a callable."""
    out = []
    for bits in window_patterns(width):
        v = fn(bits)
        out.append(v if isinstance(v, Fraction) else Fraction(v))
    return out


__all__ = [
    "LocalFunction",
    "BlockFunction",
    "Statistic",
    "window_patterns",
    "exact_table",
    "MAX_LOCAL_WIDTH",
]
