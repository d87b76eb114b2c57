"""Exact oracle batteries for the statics and spectral layers.

Each battery returns a list of :class:`Check` rows; they back the
``exact-suite`` and ``spectral-suite`` commands.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import spectral, statics
from .lattice import ModelParams
from .local import LocalFunction

RHOS = (Fraction(1, 5), Fraction(1, 2), Fraction(4, 5))
REL_TOL = 1e-12
ABS_FLOOR = 1e-15


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    measured: float
    threshold: str
    detail: str = ""

    def as_row(self) -> dict:
        return {"check": self.name, "passed": self.passed, "measured": self.measured,
                "threshold": self.threshold, "detail": self.detail}


def rel_err(a: float, b: float) -> float:
    return abs(a - b) / max(abs(b), ABS_FLOOR)


def _count_multiplicities(L: int, k: int, ell: int) -> np.ndarray:
    """How many (L, k) canonical configurations have j particles in the first ell sites."""
    cfg = statics.canonical_configs(L, k)
    return np.bincount(cfg[:, :ell].sum(axis=1), minlength=ell + 1)


# -- statics ------------------------------------------------------------------

def cond_exp_battery(L_max: int = 12, rhos=RHOS) -> list[Check]:
    """Closed forms against canonical enumeration for pairs and centered pairs."""
    worst_pair = worst_centered = worst_fm = 0.0
    where = ""
    for L in range(2, L_max + 1):
        for k in range(L + 1):
            cfg = statics.canonical_configs(L, k)
            size = cfg.shape[0]
            pair = Fraction(int(np.sum(cfg[:, 0] * cfg[:, 1])), size)
            worst_pair = max(worst_pair, rel_err(statics.cond_exp_pair(k, L), float(pair)))
            for r in rhos:
                # enumerate at the binary value the float closed forms receive
                rb = Fraction(float(r))
                cen = sum((Fraction(int(a)) - rb) * (Fraction(int(b)) - rb)
                          for a, b in zip(cfg[:, 0], cfg[:, 1])) / size
                e = rel_err(statics.cond_exp_centered_pair(k, L, float(r)), float(cen))
                if e > worst_centered:
                    worst_centered, where = e, f"L={L},k={k},rho={r}"
                for m in range(1, min(4, L) + 1):
                    # group by the first-m pattern to keep enumeration exact and cheap
                    pats, counts = np.unique(cfg[:, :m], axis=0, return_counts=True)
                    ex = sum(int(c) * math.prod(Fraction(int(b)) - rb for b in p)
                             for p, c in zip(pats, counts)) / size
                    worst_fm = max(worst_fm, rel_err(statics.cond_exp_fm(k, L, m, float(r)),
                                                     float(ex)))
    sixth = statics.cond_exp_pair(2, 4)
    return [
        Check("cond_exp_pair vs enumeration", worst_pair <= REL_TOL, worst_pair, "<= 1e-12 rel"),
        Check("cond_exp_centered_pair vs enumeration", worst_centered <= REL_TOL, worst_centered,
              "<= 1e-12 rel", where),
        Check("cond_exp_fm (m<=4) vs enumeration", worst_fm <= REL_TOL, worst_fm, "<= 1e-12 rel"),
        Check("cond_exp_pair(2, 4) = 1/6", rel_err(sixth, 1 / 6) <= REL_TOL, sixth, "1/6"),
    ]


def projection_tower_battery(L_max: int = 10, m_max: int = 4, rhos=RHOS) -> list[Check]:
    """Exact projection ``E[V^m_ell | k] = 0`` and tower property over nested boxes."""
    proj_bad = tower_bad = 0
    proj_n = tower_n = 0
    for r in rhos:
        for ell in range(1, L_max + 1):
            for m in range(1, min(m_max, ell) + 1):
                for k in range(ell + 1):
                    cfg = statics.canonical_configs(ell, k)
                    pats, counts = np.unique(cfg[:, :m], axis=0, return_counts=True)
                    avg = sum(int(c) * math.prod(Fraction(int(b)) - r for b in p)
                              for p, c in zip(pats, counts)) / cfg.shape[0]
                    proj_n += 1
                    if avg - statics.cond_exp_fm(k, ell, m, r, exact=True) != 0:
                        proj_bad += 1
        for L in range(1, L_max + 1):
            for k in range(L + 1):
                for ell in range(1, L + 1):
                    mult = _count_multiplicities(L, k, ell)
                    total = int(mult.sum())
                    for m in range(1, min(m_max, ell) + 1):
                        avg = sum(int(c) * statics.cond_exp_fm(j, ell, m, r, exact=True)
                                  for j, c in enumerate(mult) if c) / total
                        tower_n += 1
                        if avg != statics.cond_exp_fm(k, L, m, r, exact=True):
                            tower_bad += 1
    return [
        Check("projection E[V^m_ell | k] = 0 (exact)", proj_bad == 0, proj_bad,
              "0 failures", f"{proj_n} cases"),
        Check("tower property over nested boxes (exact)", tower_bad == 0, tower_bad,
              "0 failures", f"{tower_n} cases"),
    ]


def variance_slopes(ms=(1, 2, 3), ells=(4, 8, 16, 32, 64), rho: float = 0.5) -> dict:
    out = {}
    for m in ms:
        var = [statics.variance_exact("Vtilde", m, ell, rho) for ell in ells]
        slope = float(np.polyfit(np.log(ells), np.log(var), 1)[0])
        out[m] = (slope, var)
    return out


def variance_battery(ms=(1, 2, 3), ells=(4, 8, 16, 32, 64), rho: float = 0.5,
                     tol: float = 0.15) -> list[Check]:
    checks = []
    for m, (slope, _) in variance_slopes(ms, ells, rho).items():
        checks.append(Check(f"Var[Vtilde^{m}_(l,2l)] slope = -{m}", abs(slope + m) <= tol, slope,
                            f"-{m} +- {tol}"))
    # closed form against exhaustive enumeration where the latter is affordable
    worst = 0.0
    for m in ms:
        for ell in (m, 4, 6, 8):
            if ell < m:
                continue
            a = statics.variance_exact("Vtilde", m, ell, rho)
            b = statics.variance_exact("Vtilde", m, ell, rho, mode="exhaustive")
            worst = max(worst, rel_err(a, b))
            a = statics.variance_exact("V", m, ell, rho)
            b = statics.variance_exact("V", m, ell, rho, mode="exhaustive")
            worst = max(worst, rel_err(a, b))
    checks.append(Check("variance closed form vs exhaustive", worst <= 1e-10, worst,
                        "<= 1e-10 rel"))
    return checks


def degree_battery(rho=Fraction(1, 2)) -> list[Check]:
    """Degrees of known local functions and the psi-decomposition degree gain."""
    r = float(rho)
    f = {m: LocalFunction.product(m, r) for m in range(1, 5)}
    cases = [
        ("f_1", f[1], 1), ("f_2", f[2], 2), ("f_3", f[3], 3), ("f_4", f[4], 4),
        ("eta(x)eta(x+1) - rho^2", LocalFunction(2, [-r * r, -r * r, -r * r, 1 - r * r]), 1),
        ("3 f_2 + f_3", 3 * f[2].padded(3) + f[3], 2),
        ("f_2 - 2 f_3", f[2].padded(3) - 2 * f[3], 2),
        ("gradient", LocalFunction.gradient(), math.inf),
        ("f_1(x) f_1(x+2)", LocalFunction(3, [float((b0 - r) * (b2 - r)) for b0, _, b2 in
                                              (((i >> 0) & 1, (i >> 1) & 1, (i >> 2) & 1)
                                               for i in range(8))]), 2),
        ("f_4 + 0.5 f_3", f[4] + 0.5 * f[3].padded(4), 3),
    ]
    bad_deg = []
    bad_psi = []
    for name, fn, expected in cases:
        d = statics.degree(fn, rho)
        if d != expected:
            bad_deg.append(f"{name}: {d} != {expected}")
        if math.isfinite(d):
            coef, psi = statics.psi_decompose(fn, d, rho)
            if statics.degree(psi, rho) < d + 1:
                bad_psi.append(name)
            w = psi.width
            recon = fn.padded(w).table - coef * LocalFunction.product(d, r).padded(w).table
            if np.max(np.abs(recon - psi.table)) > 1e-12:
                bad_psi.append(name + " (identity)")
    return [
        Check("degree of constructed local functions", not bad_deg, len(bad_deg), "0 failures",
              "; ".join(bad_deg)),
        Check("psi-decomposition raises degree", not bad_psi, len(bad_psi), "0 failures",
              "; ".join(bad_psi)),
    ]


def exact_suite(quick: bool = False) -> list[Check]:
    checks = cond_exp_battery(8 if quick else 12)
    checks += projection_tower_battery(6 if quick else 10)
    checks += variance_battery()
    checks += degree_battery()
    return checks


# -- spectral -----------------------------------------------------------------

def v_ell_on_sector(gen: spectral.BoxGenerator, m: int, rho: float) -> np.ndarray:
    """``f_m - E[f_m | k]`` on the sector configurations."""
    bits = gen.bits().astype(np.float64)
    f = np.prod(bits[:, :m] - rho, axis=1)
    return f - statics.cond_exp_fm(gen.k, gen.ell, m, rho)


def h_minus_one_battery(ell_max: int = 12, rhos=(0.3, 0.5), m: int = 2) -> list[Check]:
    worst = 0.0
    cases = 0
    for rho in rhos:
        for ell in range(max(m, 2), ell_max + 1):
            h1_total = 0.0
            var_total = 0.0
            for k in range(ell + 1):
                gen = spectral.build_generator(ell, k)
                V = v_ell_on_sector(gen, m, rho)
                h1 = spectral.h_minus_one(V, gen)
                var = float(np.mean(V * V))
                pk = math.comb(ell, k) * rho ** k * (1 - rho) ** (ell - k)
                h1_total += pk * h1
                var_total += pk * var
                cases += 1
                if var > 0:
                    worst = max(worst, h1 / (ell ** 2 * var))
                elif h1 > 1e-14:
                    worst = math.inf
            if var_total > 0:
                worst = max(worst, h1_total / (ell ** 2 * var_total))
    return [Check("H-1 norm <= ell^2 Var (per sector and averaged)", worst <= 1.0, worst,
                  "ratio <= 1", f"{cases} sectors")]


def gap_slope(ells=range(4, 15)) -> tuple[float, list]:
    ells = list(ells)
    gaps = [spectral.spectral_gap(ell, ell // 2) for ell in ells]
    return float(np.polyfit(np.log(ells), np.log(gaps), 1)[0]), gaps


def dirichlet_battery(ell_max: int = 10, seed: int = 0) -> list[Check]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for ell in range(2, ell_max + 1):
        for k in range(ell + 1):
            gen = spectral.build_generator(ell, k)
            g = rng.normal(size=gen.size)
            worst = max(worst, rel_err(spectral.dirichlet_form(g, gen),
                                       spectral.quadratic_form(g, gen)))
    return [Check("Dirichlet form = -<g, S g>", worst <= REL_TOL, worst, "<= 1e-12 rel")]


def ring_identity_battery(seed: int = 0) -> list[Check]:
    rng = np.random.default_rng(seed)
    worst_adj = worst_sym = 0.0
    for N in range(2, 7):
        for a, rho in ((1.0, 0.3), (0.5, 0.5)):
            p = ModelParams(a, max(N, 4), rho, N)
            w = spectral.ring_measure(N, rho)
            L = spectral.ring_generator(N, p, "L")
            Ls = spectral.ring_generator(N, p, "Lstar")
            S = spectral.ring_generator(N, p, "S")
            # L2(nu) adjoint of a rate matrix: L*[j, i] = w_i L[i, j] / w_j
            adj = (L.T * w[None, :]) / w[:, None]
            worst_adj = max(worst_adj, float(np.max(np.abs(adj - Ls))))
            g = rng.normal(size=1 << N)
            worst_sym = max(worst_sym, rel_err(float(w @ (g * (L @ g))),
                                               float(w @ (g * (S @ g)))))
    # Young inequality and box additivity on small rings
    young_bad = 0
    add_worst = 0.0
    for N in (6, 8, 10):
        p = ModelParams(0.0, N, 0.4)
        w = spectral.ring_measure(N, p.rho)
        for _ in range(3):
            f = rng.normal(size=1 << N)
            for states in spectral._sector_index(N):
                sw = w[states] / w[states].sum()
                f[states] -= float(sw @ f[states])
            g = rng.normal(size=1 << N)
            fm1 = spectral.ring_h_minus_one(f, N, p)
            g1 = spectral.ring_dirichlet(g, N, p.rho)
            for A in (0.1, 1.0, 10.0):
                if 2 * float(w @ (f * g)) > fm1 / A + A * g1 + 1e-10:
                    young_bad += 1
            for ell in (2, 3, 4):
                lhs = spectral.box_dirichlet_sum(g, N, ell, p.rho)
                add_worst = max(add_worst, lhs / (ell * g1))
    return [
        Check("adjoint of L equals the displayed L*", worst_adj <= 1e-12, worst_adj, "<= 1e-12"),
        Check("<g,-L g> = <g,-S g>", worst_sym <= REL_TOL, worst_sym, "<= 1e-12 rel"),
        Check("H-1 Young inequality", young_bad == 0, young_bad, "0 failures"),
        Check("sum_x <g,-S_(x,l) g> <= l <g,-S g>", add_worst <= 1 + 1e-12, add_worst,
              "ratio <= 1"),
    ]


def spectral_suite(quick: bool = False) -> list[Check]:
    checks = h_minus_one_battery(8 if quick else 12)
    slope, _ = gap_slope(range(4, 11 if quick else 15))
    checks.append(Check("spectral gap slope vs ell (half filling)", abs(slope + 2) <= 0.2, slope,
                        "-2 +- 0.2"))
    checks += dirichlet_battery(8 if quick else 10)
    checks += ring_identity_battery()
    return checks
