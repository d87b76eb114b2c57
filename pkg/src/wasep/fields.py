"""Density fluctuation field in the characteristic frame and its Dynkin decomposition.

Test functions live on the unit circle.  For a Fourier test function every
lattice weight of the form ``op(T_s F)(x/n)`` is a finite sum of modes
``Re[c * exp(2j*pi*k*x/n) * exp(-1j*omega_k*s)]`` with ``omega_k = 2*pi*k*v``,
so the event kernel integrates it exactly in time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy import integrate

from .dynamics import Observable, Trajectory
from .lattice import Configuration, ModelParams
from .local import BlockFunction, LocalFunction
from .weights import LatticeWeight

OPS = ("value", "deriv", "grad", "lap")


class TestFunction:
    """Smooth 1-periodic function ``F(u)`` with analytic derivatives."""

    __test__ = False  # not a pytest class

    def __call__(self, u):
        raise NotImplementedError

    def deriv(self, u):
        raise NotImplementedError

    def deriv2(self, u):
        raise NotImplementedError

    def norm2(self) -> float:
        """``||F||_2^2`` on the unit circle."""
        return integrate.quad(lambda u: float(self(u)) ** 2, 0.0, 1.0, limit=200)[0]

    def grad_norm2(self) -> float:
        """``||F'||_2^2`` on the unit circle."""
        return integrate.quad(lambda u: float(self.deriv(u)) ** 2, 0.0, 1.0, limit=200)[0]

    @property
    def is_constant(self) -> bool:
        return False


class Fourier(TestFunction):
    """``F(u) = sum_k Re[c_k exp(2 pi i k u)]`` over finitely many ``k >= 0``."""

    def __init__(self, coeffs: Mapping[int, complex]):
        clean = {}
        for k, c in coeffs.items():
            k = int(k)
            if k < 0:
                raise ValueError("use nonnegative frequencies; fold conjugates onto k >= 0")
            c = complex(c)
            if k == 0:
                c = complex(c.real)
            if c != 0:
                clean[k] = clean.get(k, 0) + c
        self.coeffs = dict(sorted(clean.items()))

    @classmethod
    def sin(cls, k: int = 1, amplitude: float = 1.0) -> "Fourier":
        return cls({k: -1j * amplitude})

    @classmethod
    def cos(cls, k: int = 1, amplitude: float = 1.0) -> "Fourier":
        return cls({k: amplitude})

    @classmethod
    def mode(cls, k: int, kind: str = "sin") -> "Fourier":
        """Orthonormal mode ``sqrt(2) sin(2 pi k u)`` or ``sqrt(2) cos(2 pi k u)``."""
        if kind == "sin":
            return cls.sin(k, math.sqrt(2.0))
        if kind == "cos":
            return cls.cos(k, math.sqrt(2.0))
        raise ValueError("kind must be 'sin' or 'cos'")

    @classmethod
    def constant(cls, c: float) -> "Fourier":
        return cls({0: c})

    def _eval(self, u, power: int):
        u = np.asarray(u, dtype=np.float64)
        out = np.zeros(u.shape)
        for k, c in self.coeffs.items():
            out += (c * (2j * math.pi * k) ** power * np.exp(2j * math.pi * k * u)).real
        return out if out.ndim else float(out)

    def __call__(self, u):
        return self._eval(u, 0)

    def deriv(self, u):
        return self._eval(u, 1)

    def deriv2(self, u):
        return self._eval(u, 2)

    def norm2(self) -> float:
        return sum(c.real ** 2 if k == 0 else 0.5 * abs(c) ** 2 for k, c in self.coeffs.items())

    def grad_norm2(self) -> float:
        return sum(0.5 * abs(c) ** 2 * (2 * math.pi * k) ** 2
                   for k, c in self.coeffs.items() if k)

    @property
    def is_constant(self) -> bool:
        return all(k == 0 for k in self.coeffs)

    def multiplier(self, k: int, n: int, op: str) -> complex:
        """Symbol of ``op`` acting on ``exp(2 pi i k x/n)`` at lattice points."""
        th = 2.0 * math.pi * k / n
        if op == "value":
            return 1.0
        if op == "deriv":
            return 2j * math.pi * k
        if op == "grad":
            return n * (complex(math.cos(th), math.sin(th)) - 1.0)
        if op == "lap":
            return n * n * (2.0 * math.cos(th) - 2.0)
        raise ValueError(f"op must be one of {OPS}")

    def __repr__(self):
        return f"Fourier({self.coeffs})"


class Bump(TestFunction):
    """Periodized smooth bump ``exp(1 - 1/(1 - (d/w)^2))`` of half-width w around c.

    Bumps have no finite Fourier representation, so they are only available in
    the static frame (velocity 0).
    """

    def __init__(self, center: float = 0.5, width: float = 0.25, height: float = 1.0):
        if not 0 < width <= 0.5:
            raise ValueError("width must be in (0, 1/2]")
        self.center = float(center) % 1.0
        self.width = float(width)
        self.height = float(height)

    def _z(self, u):
        d = (np.asarray(u, dtype=np.float64) - self.center + 0.5) % 1.0 - 0.5
        return d / self.width

    def __call__(self, u):
        z = self._z(u)
        inside = np.abs(z) < 1
        zz = np.where(inside, z, 0.0)
        out = np.where(inside, self.height * np.exp(1.0 - 1.0 / (1.0 - zz * zz)), 0.0)
        return out if out.ndim else float(out)

    def deriv(self, u):
        z = self._z(u)
        inside = np.abs(z) < 1
        zz = np.where(inside, z, 0.0)
        g = np.exp(1.0 - 1.0 / (1.0 - zz * zz))
        out = np.where(inside, self.height * g * (-2.0 * zz / (1.0 - zz * zz) ** 2) / self.width,
                       0.0)
        return out if out.ndim else float(out)

    def deriv2(self, u):
        z = self._z(u)
        inside = np.abs(z) < 1
        zz = np.where(inside, z, 0.0)
        s = 1.0 - zz * zz
        g = np.exp(1.0 - 1.0 / s)
        # d/dz of -2z/s^2 * g
        d1 = -2.0 * zz / s ** 2
        dd1 = -2.0 / s ** 2 - 8.0 * zz * zz / s ** 3
        out = np.where(inside, self.height * g * (d1 * d1 + dd1) / self.width ** 2, 0.0)
        return out if out.ndim else float(out)

    def __repr__(self):
        return f"Bump(center={self.center}, width={self.width}, height={self.height})"


@dataclass(frozen=True)
class FrameShift:
    """Characteristic frame: ``T_t F(u) = F(u - v t mod 1)``."""

    velocity: float

    @classmethod
    def of(cls, params: ModelParams) -> "FrameShift":
        return cls(params.velocity)

    def apply(self, F: TestFunction, t: float):
        v = self.velocity
        return lambda u: F((np.asarray(u, dtype=np.float64) - v * t) % 1.0)

    def shift(self, t: float) -> float:
        return (self.velocity * t) % 1.0


def _check_ring(n: int, N: int):
    if N % n:
        raise ValueError(f"ring size N={N} must be a multiple of n={n} for periodic test functions")


def lattice_weight(F: TestFunction, n: int, N: int | None = None, velocity: float = 0.0,
                   op: str = "value") -> LatticeWeight:
    """Weights ``x -> op(T_s F)(x/n)`` on ``N`` sites as a time-dependent LatticeWeight.

    ``op`` is ``value`` (F), ``deriv`` (F'), ``grad`` (forward difference
    ``n(F(x+1)-F(x))``) or ``lap`` (``n^2(F(x+1)+F(x-1)-2F(x))``).
    """
    N = n if N is None else N
    _check_ring(n, N)
    if op not in OPS:
        raise ValueError(f"op must be one of {OPS}")
    x = np.arange(N)
    if isinstance(F, Fourier):
        comps = []
        for k, c in F.coeffs.items():
            w = c * F.multiplier(k, n, op) * np.exp(2j * math.pi * k * x / n)
            comps.append((w, 2.0 * math.pi * k * velocity))
        if not comps:
            comps = [(np.zeros(N), 0.0)]
        return LatticeWeight(comps).canonical()
    if velocity != 0.0:
        raise ValueError(f"{type(F).__name__} test functions require a static frame (v = 0)")
    u = x / n
    if op == "value":
        h = F(u)
    elif op == "deriv":
        h = F.deriv(u)
    elif op == "grad":
        h = n * (F((x + 1) / n) - F(u))
    else:
        h = n * n * (F((x + 1) / n) + F((x - 1) / n) - 2.0 * F(u))
    return LatticeWeight.real(h)


def discrete_ops(F: TestFunction, x, n: int, t: float = 0.0, velocity: float = 0.0):
    """``(grad_n T_t F(x/n), lap_n T_t F(x/n))`` at integer sites x, periodic in u."""
    x = np.asarray(x, dtype=np.float64)
    G = FrameShift(velocity).apply(F, t)
    f0 = G(x / n)
    fp = G((x + 1) / n)
    fm = G((x - 1) / n)
    return n * (fp - f0), n * n * (fp + fm - 2.0 * f0)


def field_eval(config: Configuration, F: TestFunction, t: float, params: ModelParams) -> float:
    """``Y_t(F) = n^{-1/2} sum_x T_t F(x/n) (eta(x) - rho)``."""
    n = params.n
    _check_ring(n, config.N)
    x = np.arange(config.N)
    vals = FrameShift.of(params).apply(F, t)(x / n)
    eta = config.to_array().astype(np.float64)
    return float(np.dot(vals, eta - params.rho)) / math.sqrt(n)


# -- Dynkin decomposition ----------------------------------------------------

@dataclass
class DynkinLedger:
    """Per-checkpoint values of the decomposition terms for one trajectory."""

    times: np.ndarray
    Y0: float
    Yt: np.ndarray
    I: np.ndarray
    B: np.ndarray
    R: np.ndarray
    compensator: np.ndarray
    M: np.ndarray
    QV: np.ndarray
    A: dict

    def identity_residual(self) -> np.ndarray:
        """``Y_t - Y_0 - (I + B + R + M)``; zero up to accumulator rounding."""
        return self.Yt - self.Y0 - (self.I + self.B + self.R + self.M)


def _occupation_centered(rho: float) -> LocalFunction:
    return LocalFunction(1, [-rho, 1.0 - rho], name="etabar")


def _pair_centered(rho: float) -> LocalFunction:
    return LocalFunction.product(2, rho)


def dynkin_observables(F: TestFunction, params: ModelParams, tag: str = "F",
                       energy_eps=()) -> dict:
    """Observables whose time integrals build the decomposition of ``Y_t(F)``.

    Names are prefixed with ``tag``; ``energy_eps`` registers ``A^eps`` terms.
    """
    n, N, a, rho = params.n, params.N, params.a, params.rho
    v = params.velocity
    sq = math.sqrt(n)

    def W(op):
        return lattice_weight(F, n, N, v, op)

    grad, lap, deriv, value = W("grad"), W("lap"), W("deriv"), W("value")
    occ = _occupation_centered(rho)
    grad_loc = LocalFunction.gradient()
    diffsq = LocalFunction.diff_sq()
    grad2 = grad * grad
    obs = {
        f"{tag}/Y": Observable(occ, (1.0 / sq) * value),
        # compensator pieces read off the generator directly
        f"{tag}/C_sym": Observable(grad_loc, (0.5 * sq) * grad),
        f"{tag}/C_asym": Observable(diffsq, (0.5 * a) * grad),
        f"{tag}/C_frame": Observable(occ, (-a * (1.0 - 2.0 * rho)) * deriv),
        # the same compensator regrouped
        f"{tag}/I": Observable(occ, (0.5 / sq) * lap),
        f"{tag}/B": Observable(_pair_centered(rho), (-a) * grad),
        f"{tag}/R_lap": Observable(occ, (a / n * (rho - 0.5)) * lap),
        f"{tag}/R_taylor": Observable(occ, (a * (1.0 - 2.0 * rho)) * (grad - deriv)),
        f"{tag}/QV": Observable(diffsq + (a / sq) * grad_loc, (0.5 / n) * grad2),
    }
    for eps in energy_eps:
        obs[f"{tag}/A@{eps!r}"] = energy_observable(F, params, eps)
    return obs


def energy_block(eps: float, n: int) -> int:
    L = int(round(eps * n))
    if abs(L - eps * n) > 1e-9:
        raise ValueError(f"eps*n = {eps * n} is not an integer")
    if L < 2:
        raise ValueError(f"eps*n = {L} < 2")
    return L


def energy_observable(F: TestFunction, params: ModelParams, eps: float) -> Observable:
    """``A^eps``: squared centered block averages over ``x..x+eps*n-1`` weighted by ``grad_n T_s F``."""
    L = energy_block(eps, params.n)
    if L > params.N:
        raise ValueError("energy block longer than the ring")
    w = lattice_weight(F, params.n, params.N, params.velocity, "grad")
    return Observable(BlockFunction.centered_square(L, params.rho), w)


def _get(traj: Trajectory, name: str, what: str = "acc") -> np.ndarray:
    src = traj.accumulators if what == "acc" else traj.instant
    if name not in src:
        raise KeyError(f"unregistered observable {name!r}: pass it to evolve() first")
    return np.asarray(src[name])


def dynkin_accumulate(traj: Trajectory, F: TestFunction, params: ModelParams, tag: str = "F",
                      energy_eps=()) -> DynkinLedger:
    """Assemble the decomposition from a trajectory run with :func:`dynkin_observables`.

    The first checkpoint must be 0 so that ``Y_0`` is recorded.
    """
    if traj.checkpoints[0] != 0.0:
        raise ValueError("trajectory must include checkpoint 0")
    g = lambda k: _get(traj, f"{tag}/{k}")  # noqa: E731
    Ys = _get(traj, f"{tag}/Y", "inst")
    comp = g("C_sym") + g("C_asym") + g("C_frame")
    A = {}
    for eps in energy_eps:
        key = f"{tag}/A@{eps!r}"
        if key not in traj.accumulators:
            raise KeyError(f"unregistered (F, eps) pair: {tag}, eps={eps}")
        A[eps] = np.asarray(traj.accumulators[key])
    return DynkinLedger(
        times=traj.checkpoints, Y0=float(Ys[0]), Yt=Ys, I=g("I"), B=g("B"),
        R=g("R_lap") + g("R_taylor"), compensator=comp, M=Ys - Ys[0] - comp,
        QV=g("QV"), A=A)


def energy_functional(traj: Trajectory, F: TestFunction, eps: float, t: float | None,
                      params: ModelParams, tag: str = "F") -> float:
    """Value of ``A_t^eps(F)`` from a trajectory that registered it."""
    energy_block(eps, params.n)
    key = f"{tag}/A@{eps!r}"
    if key not in traj.accumulators:
        raise KeyError(f"unregistered (F, eps) pair: {tag}, eps={eps}")
    return traj.value(key, t)
