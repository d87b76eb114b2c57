"""Acceptance criteria, each run at its stated tolerance.

Every test prints one ``PASS``/``FAIL`` line before asserting, so
``pytest tests/test_acceptance.py -v -s`` gives the full table.  The Monte
Carlo criteria use the per-kind config defaults, i.e. exactly what the CLI
runs.
"""

import math
import time

import numpy as np
import pytest

from wasep import spectral, suites
from wasep.cli import execute
from wasep.config import default_config

pytestmark = pytest.mark.slow


@pytest.fixture
def verdict(capsys):
    t0 = time.perf_counter()

    def emit(num, title, ok, detail, limit_s):
        wall = time.perf_counter() - t0
        ok = bool(ok) and wall < limit_s
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'}  criterion {num:>2}  {title}: {detail} "
                  f"[{wall:.1f} s, limit {limit_s:.0f} s]")
        return ok

    return emit


def _checks_line(checks):
    return "; ".join(f"{c.name}={c.measured:.4g}" for c in checks)


def _run(kind):
    return execute(default_config(kind))


def _exact_pair(ell, n, t=0.1):
    """Exact a = 0 value of ``E[(int sum_x h {f_2 - E[f_2|eta^ell]})^2] / (t ||h||^2_{2,n})``."""
    q = 2 * math.pi / n
    x = np.arange(n)
    h = n * (np.sin(q * (x + 1)) - np.sin(q * x))
    H = -1j * n * (np.exp(1j * q) - 1)
    return spectral.pair_sector_second_moment(ell, n, t, 0.5, H)[0] / (t * np.mean(h * h))


def test_criterion_01_conditional_expectations(verdict):
    checks = suites.cond_exp_battery(12)
    ok = all(c.passed for c in checks)
    assert verdict(1, "exact conditional expectations", ok, _checks_line(checks), 10)


def test_criterion_02_projection_tower(verdict):
    checks = suites.projection_tower_battery(10, 4)
    ok = all(c.passed for c in checks)
    assert verdict(2, "projection/tower invariants", ok, _checks_line(checks), 60)


def test_criterion_03_variance_decay(verdict):
    ells = tuple(range(4, 65))
    slopes = suites.variance_slopes((1, 2, 3), (4, 8, 16, 32, 64))
    dense = suites.variance_slopes((1, 2, 3), ells)
    ok = all(abs(s + m) <= 0.15 for m, (s, _) in slopes.items())
    detail = ", ".join(f"m={m}: {s:.3f} (all-integer grid {dense[m][0]:.3f})"
                       for m, (s, _) in slopes.items())
    assert verdict(3, "variance decay slopes = -m +- 0.15", ok, detail, 60)


def test_criterion_04_spectral(verdict):
    checks = suites.h_minus_one_battery(12)
    slope, _ = suites.gap_slope(range(4, 15))
    checks += suites.dirichlet_battery(10)
    ok = all(c.passed for c in checks) and abs(slope + 2) <= 0.2
    detail = _checks_line(checks) + f"; gap slope={slope:.3f}"
    assert verdict(4, "H-1 inequality, gap slope, Dirichlet identity", ok, detail, 120)


def test_criterion_05_dynamics_calibration(verdict):
    res = _run("simulate")
    vals = {r["quantity"]: r["value"] for r in res.rows}
    stat_ok = all(abs(vals[k]) <= 4 for k in vals if k.startswith("z_stationarity"))
    drift_ok = abs(vals["z_drift"]) <= 3
    ok = stat_ok and drift_ok and vals["conserved"] == 1.0
    detail = (f"stationarity z = {[round(vals[k], 2) for k in sorted(vals) if 'stationarity' in k]}, "
              f"drift {vals['drift_velocity']:.1f} vs {256 ** 1.5:.1f} (z={vals['z_drift']:.2f}), "
              f"conserved={bool(vals['conserved'])}")
    assert verdict(5, "stationarity, drift a n^1.5 at n=256, conservation", ok, detail, 300)


def test_criterion_06_martingale_qv(verdict):
    res = _run("qv")
    r = res.rows[-1]
    target = math.pi ** 2 / 2
    ok = (r["n"] == 512 and r["replicas"] >= 2000
          and 0.9 * target <= r["m2_over_t"] <= 1.1 * target
          and abs(r["z_m2_minus_qv"]) <= 3 and r["max_identity_residual"] < 1e-8)
    detail = (f"E[M^2]/t={r['m2_over_t']:.4f}+-{r['m2_stderr']:.4f} (target {target:.4f}), "
              f"E[M^2]-E[QV] at z={r['z_m2_minus_qv']:.2f}")
    assert verdict(6, "martingale second moment and isometry", ok, detail, 1800)


def test_criterion_07_second_order_bg(verdict):
    res = _run("bg2")
    ser = sorted([r for r in res.rows if r["eps"] == 0.125], key=lambda r: r["n"])
    vals = [r["normalized"] for r in ser]
    mono = [r["n"] for r in ser] == [128, 256, 512] and all(b < a for a, b in zip(vals, vals[1:]))
    fit = res.fits["eps_slope"]
    ok = mono and abs(fit["slope"] - 1.0) <= 0.3
    exact = [_exact_pair(n // 8, n) for n in (128, 256, 512)]
    detail = (f"normalized at eps=1/8 over n=128,256,512: "
              f"{', '.join(f'{v:.4g}' for v in vals)} (exact {', '.join(f'{v:.4g}' for v in exact)}); "
              f"eps-slope {fit['slope']:.3f}+-{fit['stderr']:.3f}")
    assert verdict(7, "second-order Boltzmann-Gibbs decay", ok, detail, 1800)


def test_criterion_08_c_m_pattern(verdict):
    res = _run("cm-scan")
    s = {m: res.fits[f"m={m}"]["slope"] for m in (1, 2, 4)}
    e = {m: res.fits[f"m={m}"]["stderr"] for m in (1, 2, 4)}
    ok = abs(s[1] - 2) <= 0.4 and abs(s[2] - 1) <= 0.3 and s[4] <= 0.3
    ells = [r["ell"] for r in res.rows if r["m"] == 2 and r["ell"] > 2]
    exact2 = [512 * _exact_pair(ell, 512) for ell in ells]
    detail = ", ".join(f"m={m}: {s[m]:.3f}+-{e[m]:.3f}" for m in (1, 2, 4))
    detail += f" (exact m=2 slope {np.polyfit(np.log(ells), np.log(exact2), 1)[0]:.3f})"
    assert verdict(8, "c_m(ell) exponents (2+-0.4, 1+-0.3, <=0.3)", ok, detail, 2700)


def test_criterion_09_energy(verdict):
    res = _run("energy")
    fit = res.fits["eps_slope"]
    ok = abs(fit["slope"] - 1.0) <= 0.3
    detail = f"eps-slope {fit['slope']:.3f}+-{fit['stderr']:.3f} at n=512"
    assert verdict(9, "energy condition eps-slope 1 +- 0.3", ok, detail, 1200)


def test_criterion_10_remainder(verdict):
    res = _run("remainder")
    fit = res.fits["n_slope"]
    ns = [r["n"] for r in res.rows]
    ok = fit["slope"] < 0 and min(ns) == 128 and max(ns) == 512
    detail = f"n-slope {fit['slope']:.3f}+-{fit['stderr']:.3f} over n={ns}"
    assert verdict(10, "remainder decays in n", ok, detail, 1200)
