"""Event-driven simulation of the speeded-up WASEP with exact time integrals."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import _kernel
from .lattice import Configuration, ModelParams
from .local import BlockFunction, LocalFunction, Statistic
from .statics import sample_bernoulli
from .weights import LatticeWeight


@dataclass(frozen=True)
class RngPolicy:
    """Per-replica random streams derived from ``(seed, point, replica)``.

    Streams for distinct spawn keys are statistically independent; the same
    key always reproduces the same stream.
    """

    seed: int
    point: int = 0

    def generator(self, replica: int) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.point, replica))
        return np.random.Generator(np.random.PCG64(ss))


@dataclass
class Observable:
    """Time integral ``int_0^t sum_x w_s(x) g_x(eta_s) ds`` of a weighted statistic."""

    statistic: object
    weight: LatticeWeight | None = None

    def __post_init__(self):
        if callable(self.statistic) and not isinstance(
                self.statistic, (LocalFunction, BlockFunction, Statistic)):
            raise TypeError("observable has no incremental update rule: wrap it as a "
                            "LocalFunction (tabulated window) or BlockFunction")
        self.statistic = Statistic.of(self.statistic)


@dataclass
class SimState:
    config: Configuration
    time: float = 0.0


def step(state: SimState, params: ModelParams, rng: np.random.Generator):
    """One uniformized proposal at total rate ``N * n**2``.

    A bond is drawn uniformly and a direction with probabilities ``p_n, q_n``;
    the jump is suppressed when the target site is occupied.  Returns the new
    state and the elapsed macroscopic time.
    """
    N = state.config.N
    dt = rng.exponential(1.0 / (N * params.n ** 2))
    x = int(rng.integers(N))
    right = rng.random() < params.p
    c = state.config
    if right:
        moved = c[x] == 1 and c[x + 1] == 0
    else:
        moved = c[x + 1] == 1 and c[x] == 0
    new = c.swap(x) if moved else c
    return SimState(new, state.time + dt), dt


def _reduce_families(fams, terms, gkey, term_map):
    """Drop families that are linear combinations of others in the same group.

    Within a group every family reads the same per-site state, so a table that
    is a constant plus a combination of other tables can be integrated through
    them.  Independent families are kept unchanged; the constant parts become
    closed-form terms ``(name, c * sum_x w(x), omega)``.
    """
    groups: dict = {}
    for i, f in enumerate(fams):
        groups.setdefault(gkey(f), []).append(i)
    express = {}  # dependent family -> (constant, [(kept family, coefficient)])
    for members in groups.values():
        kept: list = []
        for i in members:
            tab = fams[i].table
            if kept:
                B = np.array([fams[j].table - fams[j].table[0] for j in kept]).T
                coef, *_ = np.linalg.lstsq(B, tab - tab[0], rcond=None)
                scale = max(float(np.max(np.abs(tab - tab[0]))), 1e-300)
                if np.max(np.abs(B @ coef - (tab - tab[0]))) <= 1e-13 * scale:
                    const = tab[0] - sum(c * fams[j].table[0] for j, c in zip(kept, coef))
                    express[i] = (const, [(j, c) for j, c in zip(kept, coef) if c != 0.0])
                    continue
            kept.append(i)
    if not express:
        return fams, terms, []
    keep = [i for i in range(len(fams)) if i not in express]
    new_index = {old: new for new, old in enumerate(keep)}
    new_terms, consts = [], []
    owner = {t: name for name, idxs in term_map.items() for t in idxs}
    for name in term_map:
        term_map[name] = []
    for t, (fi, w, om) in enumerate(terms):
        name = owner[t]
        if fi in express:
            const, combo = express[fi]
            if const != 0.0:
                consts.append((name, const * complex(np.sum(w)), om))
            parts = [(j, c * w) for j, c in combo]
        else:
            parts = [(fi, w)]
        for j, wj in parts:
            term_map[name].append(len(new_terms))
            new_terms.append((new_index[j], wj, om))
    return [fams[i] for i in keep], new_terms, consts


class KernelPlan:
    """Observables lowered to the flat arrays consumed by the JIT kernel."""

    def __init__(self, observables: Mapping[str, Observable], N: int):
        if N < 2:
            raise ValueError("ring must have at least two sites")
        self.N = N
        fam_keys: dict = {}
        fams: list = []
        terms: list = []  # (family index, weight array, omega)
        self.term_map: dict[str, list[int]] = {}
        for name, obs in observables.items():
            if not isinstance(obs, Observable):
                obs = Observable(obs)
            weight = obs.weight if obs.weight is not None else LatticeWeight.site(0, N)
            if weight.N != N:
                raise ValueError(f"observable {name!r}: weight length {weight.N} != N={N}")
            idxs = []
            for coef, fam in obs.statistic.terms:
                if isinstance(fam, LocalFunction):
                    if fam.width + 1 > N:
                        raise ValueError(f"local window {fam.width} too wide for N={N}")
                    key = (0, fam.width, fam.table.tobytes())
                elif isinstance(fam, BlockFunction):
                    if fam.L > N:
                        raise ValueError(f"block length {fam.L} exceeds N={N}")
                    key = (1, fam.L, fam.table.tobytes())
                else:
                    raise TypeError(f"{fam!r} has no incremental update rule")
                if key not in fam_keys:
                    fam_keys[key] = len(fams)
                    fams.append(fam)
                fi = fam_keys[key]
                for w, om in weight.components:
                    idxs.append(len(terms))
                    terms.append((fi, coef * w, om))
            self.term_map[name] = idxs

        def gkey(f):
            return (0, f.width) if isinstance(f, LocalFunction) else (1, f.L)

        fams, terms, self.const_terms = _reduce_families(fams, terms, gkey, self.term_map)

        # order families by (kind, size) so that each group is contiguous

        order = sorted(range(len(fams)), key=lambda i: gkey(fams[i]))
        remap = {old: new for new, old in enumerate(order)}
        fams = [fams[i] for i in order]
        terms = [(remap[fi], w, om) for fi, w, om in terms]
        F = len(fams)
        groups = []
        for f in fams:
            if not groups or groups[-1] != gkey(f):
                groups.append(gkey(f))
        self.grp_kind = np.array([g[0] for g in groups], dtype=np.int64)
        self.grp_size = np.array([g[1] for g in groups], dtype=np.int64)
        counts = np.bincount([groups.index(gkey(f)) for f in fams], minlength=len(groups))
        self.grp_fam_ptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        width = max([f.table.size for f in fams] + [1])
        self.fam_table = np.zeros((F, width))
        for i, f in enumerate(fams):
            self.fam_table[i, : f.table.size] = f.table
        omegas = sorted({om for _, _, om in terms})
        om_index = {om: i for i, om in enumerate(omegas)}
        self.omegas = np.array(omegas if omegas else [0.0])
        # one integration slot per (family, frequency) pair
        slots = sorted({(fi, om_index[om]) for fi, _, om in terms})
        slot_index = {key: i for i, key in enumerate(slots)}
        self.slot_k = np.array([k for _, k in slots], dtype=np.int64)
        counts = np.bincount([fi for fi, _ in slots], minlength=F)
        self.fam_slot_ptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        T = len(terms)
        self.term_w = np.zeros((T, N), dtype=np.complex128)
        self.term_slot = np.zeros(T, dtype=np.int64)
        for t, (fi, w, om) in enumerate(terms):
            self.term_w[t] = w
            self.term_slot[t] = slot_index[(fi, om_index[om])]

    def run(self, sites: np.ndarray, params: ModelParams, rng: np.random.Generator,
            checkpoints: np.ndarray):
        eta = np.ascontiguousarray(sites, dtype=np.uint8).copy()
        flux_r = np.zeros(self.N, dtype=np.int64)
        flux_l = np.zeros(self.N, dtype=np.int64)
        J, Z, n_events = _kernel.run_kernel(
            eta, float(params.n) ** 2, params.p, rng, checkpoints,
            self.grp_kind, self.grp_size, self.grp_fam_ptr, self.fam_table, self.fam_slot_ptr,
            self.slot_k,
            self.omegas, self.term_slot, self.term_w, flux_r, flux_l)
        acc = {k: J[:, v].real.sum(axis=1) for k, v in self.term_map.items()}
        inst = {k: Z[:, v].real.sum(axis=1) for k, v in self.term_map.items()}
        for name, c, om in self.const_terms:
            if om == 0.0:
                acc[name] = acc[name] + (c * checkpoints).real
                inst[name] = inst[name] + c.real
            else:
                ph = np.exp(-1j * om * checkpoints)
                acc[name] = acc[name] + (c * (1.0 - ph) / (1j * om)).real
                inst[name] = inst[name] + (c * ph).real
        return eta, acc, inst, n_events, flux_r, flux_l


@dataclass
class Trajectory:
    initial: Configuration
    params: ModelParams
    checkpoints: np.ndarray
    final: Configuration | None = None
    accumulators: dict = field(default_factory=dict)
    instant: dict = field(default_factory=dict)
    n_events: int = 0
    flux_right: np.ndarray | None = None
    flux_left: np.ndarray | None = None

    @property
    def t_max(self) -> float:
        return float(self.checkpoints[-1])

    def value(self, name: str, t: float | None = None) -> float:
        if name not in self.accumulators:
            raise KeyError(f"observable {name!r} was not registered before evolve()")
        return float(self.accumulators[name][self._index(t)])

    def _index(self, t: float | None) -> int:
        if t is None:
            return self.checkpoints.size - 1
        hits = np.nonzero(np.isclose(self.checkpoints, t, rtol=0, atol=1e-12))[0]
        if not hits.size:
            raise KeyError(f"time {t} is not a checkpoint")
        return int(hits[0])


def _checkpoints(t_max: float, checkpoints) -> np.ndarray:
    if checkpoints is None:
        cp = np.array([float(t_max)])
    else:
        cp = np.asarray(sorted(float(c) for c in checkpoints))
        if cp[-1] < t_max:
            cp = np.append(cp, float(t_max))
    if cp[0] < 0:
        raise ValueError("checkpoints must be nonnegative")
    return cp


def evolve(initial: Configuration, params: ModelParams, observables: Mapping[str, Observable],
           t_max: float, rng: np.random.Generator, checkpoints=None,
           plan: KernelPlan | None = None) -> Trajectory:
    """Run the dynamics from ``initial`` up to ``t_max`` integrating all observables."""
    if initial.N != params.N:
        raise ValueError("configuration size does not match params.N")
    cp = _checkpoints(t_max, checkpoints)
    plan = plan or KernelPlan(observables, params.N)
    eta, acc, inst, n_events, fr, fl = plan.run(initial.to_array(), params, rng, cp)
    return Trajectory(initial=initial, params=params, checkpoints=cp,
                      final=Configuration.from_array(eta), accumulators=acc, instant=inst,
                      n_events=int(n_events), flux_right=fr, flux_left=fl)


def stationarity_check(params: ModelParams, t: float, replicas: int, seed: int = 0,
                       x0: int = 0, gap: int = 5, point: int = 0) -> dict:
    """Compare moments at time t, started from the product measure, with Bernoulli moments.

    Returns z-scores for ``E[eta_t(x0)]``, ``E[eta_t(x0) eta_t(x0+gap)]`` and the
    site-averaged nearest-neighbour pair, plus bond-flux statistics.
    """
    N = params.N
    rho = params.rho
    policy = RngPolicy(seed, point)
    plan = KernelPlan({}, N)
    cp = np.array([float(t)])
    single, pair, nn = np.zeros(replicas), np.zeros(replicas), np.zeros(replicas)
    jumps_r = 0
    jumps_l = 0
    conserved = True
    for r in range(replicas):
        rng = policy.generator(r)
        init = sample_bernoulli(rho, N, rng)
        eta, _, _, _, fr, fl = plan.run(init.to_array(), params, rng, cp)
        conserved &= int(eta.sum()) == init.count()
        single[r] = eta[x0 % N]
        pair[r] = eta[x0 % N] * eta[(x0 + gap) % N]
        nn[r] = float(np.mean(eta * np.roll(eta, -1)))
        jumps_r += int(fr.sum())
        jumps_l += int(fl.sum())

    def z(sample, target, var):
        return (float(sample.mean()) - target) / math.sqrt(var / replicas)

    total_jumps = jumps_r + jumps_l
    bond_rate = total_jumps / (replicas * N * t)
    expected_rate = params.n ** 2 * params.chi
    # drift of the net flux per bond and time: n^2 (p - q) chi
    net_expected = params.n ** 2 * (params.p - params.q) * params.chi * replicas * N * t
    return {
        "replicas": replicas,
        "t": t,
        "mean_single": float(single.mean()),
        "z_single": z(single, rho, rho * (1 - rho)),
        "mean_pair": float(pair.mean()),
        "z_pair": z(pair, rho ** 2, rho ** 2 * (1 - rho ** 2)),
        "mean_nn": float(nn.mean()),
        "z_nn": (float(nn.mean()) - rho ** 2) / (float(nn.std(ddof=1)) / math.sqrt(replicas)),
        "jumps_right": jumps_r,
        "jumps_left": jumps_l,
        "z_flux_asymmetry": (jumps_r - jumps_l - net_expected) / math.sqrt(max(total_jumps, 1)),
        "bond_rate": bond_rate,
        "bond_rate_expected": expected_rate,
        "conserved": bool(conserved),
    }
