"""Time-dependent lattice weights with an exact finite Fourier-in-time form.

A :class:`LatticeWeight` is ``w_s(x) = sum_j Re[exp(-1j*omega_j*s) * c_j[x]]``.
Static weights have one component with ``omega = 0``; a Fourier test function
viewed in the moving frame contributes one component per spatial mode.
"""

from __future__ import annotations

from numbers import Real

import numpy as np


class LatticeWeight:
    def __init__(self, components):
        merged: dict[float, np.ndarray] = {}
        for w, om in components:
            w = np.asarray(w, dtype=np.complex128)
            om = float(om)
            if om in merged:
                merged[om] = merged[om] + w
            else:
                merged[om] = w.copy()
        sizes = {w.size for w in merged.values()}
        if len(sizes) > 1:
            raise ValueError("all components must have the same length")
        self.components = [(w, om) for om, w in merged.items()]

    @classmethod
    def real(cls, h) -> "LatticeWeight":
        return cls([(np.asarray(h, dtype=np.float64), 0.0)])

    @classmethod
    def site(cls, x: int, N: int) -> "LatticeWeight":
        h = np.zeros(N)
        h[x % N] = 1.0
        return cls.real(h)

    @classmethod
    def uniform(cls, N: int, value: float = 1.0) -> "LatticeWeight":
        return cls.real(np.full(N, value))

    @property
    def N(self) -> int:
        return self.components[0][0].size if self.components else 0

    @property
    def is_static(self) -> bool:
        return all(om == 0.0 for _, om in self.components)

    def value(self, s: float = 0.0) -> np.ndarray:
        out = np.zeros(self.N)
        for w, om in self.components:
            out += (np.exp(-1j * om * s) * w).real
        return out

    def __add__(self, other: "LatticeWeight") -> "LatticeWeight":
        if not isinstance(other, LatticeWeight):
            return NotImplemented
        return LatticeWeight(self.components + other.components)

    def __sub__(self, other: "LatticeWeight") -> "LatticeWeight":
        return self + (-1.0) * other

    def __neg__(self):
        return (-1.0) * self

    def __mul__(self, other):
        if isinstance(other, Real):
            return LatticeWeight([(w * float(other), om) for w, om in self.components])
        if isinstance(other, LatticeWeight):
            comps = []
            for a, alpha in self.components:
                for b, beta in other.components:
                    comps.append((0.5 * a * b, alpha + beta))
                    comps.append((0.5 * a * np.conj(b), alpha - beta))
            return LatticeWeight(comps).canonical()
        return NotImplemented

    def __rmul__(self, other):
        if isinstance(other, Real):
            return self * other
        return NotImplemented

    def canonical(self) -> "LatticeWeight":
        """Fold negative frequencies onto positive ones and drop zero components."""
        comps = []
        for w, om in self.components:
            if om < 0:
                w, om = np.conj(w), -om
            if om == 0.0:
                w = w.real.astype(np.complex128)
            comps.append((w, om))
        out = LatticeWeight(comps)
        out.components = [(w, om) for w, om in out.components if np.any(w != 0)]
        if not out.components:
            out.components = [(np.zeros(self.N, dtype=np.complex128), 0.0)]
        return out

    def roll(self, k: int) -> "LatticeWeight":
        """Weights moved ``k`` sites to the right: ``w'(x) = w(x - k)``."""
        return LatticeWeight([(np.roll(w, k), om) for w, om in self.components])

    def norm2_n(self, n: int, s: float = 0.0) -> float:
        """``(1/n) sum_x w_s(x)**2``."""
        v = self.value(s)
        return float(np.dot(v, v)) / n

    def __repr__(self):
        oms = ", ".join(f"{om:g}" for _, om in self.components)
        return f"LatticeWeight(N={self.N}, omegas=[{oms}])"
