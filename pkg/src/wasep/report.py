"""Result persistence and claim evaluation.

A run directory holds, per experiment, ``<stem>.csv`` (one row per grid point),
``<stem>.json`` (flags, config hash, provenance, fits, claims) and
``<stem>_plot.py``, a standalone matplotlib script that reads the CSV.  The
``report`` path never trusts stored claims: it refits every slope from the CSV
rows and compares with the thresholds below.
"""

from __future__ import annotations

import csv
import io
import json
import math
import subprocess
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .experiments import ScanResult, fit_power_law

# (low, high) bounds on fitted slopes; None means unbounded on that side
SLOPE_TARGETS = {
    "cm": {1: (1.6, 2.4), 2: (0.7, 1.3), 4: (None, 0.3)},
    "bg2": (0.7, 1.3),
    "energy": (0.7, 1.3),
    "remainder": (None, 0.0),
}
QV_REL_TOL = 0.10
QV_SIGMAS = 3.0
STATIONARITY_SIGMAS = 4.0
DRIFT_SIGMAS = 3.0


# -- writing ------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def result_columns(res: ScanResult) -> list:
    cols = list(res.columns)
    extra = sorted({k for r in res.rows for k in r} - set(cols))
    return cols + extra


def csv_text(res: ScanResult) -> str:
    cols = result_columns(res)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in res.rows:
        w.writerow([_fmt(r.get(c, "")) for c in cols])
    return buf.getvalue()


def git_provenance(path: Path | None = None) -> str:
    """``<commit>[-dirty]`` of the source tree, or ``unknown`` outside git."""
    cwd = path or Path(__file__).resolve().parent
    try:
        head = subprocess.run(["git", "rev-parse", "--short", "HEAD"], cwd=cwd,
                              capture_output=True, text=True, timeout=10)
        if head.returncode != 0:
            return "unknown"
        dirty = subprocess.run(["git", "status", "--porcelain", "--untracked-files=no"],
                               cwd=cwd, capture_output=True, text=True, timeout=10)
        return head.stdout.strip() + ("-dirty" if dirty.stdout.strip() else "")
    except (OSError, subprocess.SubprocessError):
        return "unknown"


PLOT_SPECS = {
    "bg2": ("eps", "normalized", "normalized_stderr", True, "n", None),
    "cm": ("ell", "normalized", "normalized_stderr", True, "m", None),
    "qv": ("n", "qv_over_t", "stderr", False, None, "target"),
    "energy": ("eps", "estimate", "stderr", True, None, None),
    "remainder": ("n", "estimate", "stderr", True, None, None),
    "lemma": ("ell", "estimate", "stderr", True, None, None),
    "kipnis": ("t", "exact_lhs", None, True, None, None),
}


def plot_script(kind: str, csv_name: str, png_name: str) -> str | None:
    base = kind.split(":")[0]
    if base not in PLOT_SPECS:
        return None
    x, y, err, loglog, group, hline = PLOT_SPECS[base]
    return f'''"""Plot {csv_name}; run with python from this directory."""
import csv
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = Path(__file__).resolve().parent
with open(here / {csv_name!r}, newline="", encoding="utf-8") as fh:
    rows = list(csv.DictReader(fh))

X, Y, ERR, GROUP, HLINE = {x!r}, {y!r}, {err!r}, {group!r}, {hline!r}
series = {{}}
for r in rows:
    series.setdefault(r[GROUP] if GROUP else "", []).append(r)

fig, ax = plt.subplots(figsize=(5, 3.6))
for label, rs in sorted(series.items()):
    rs = [r for r in rs if float(r[Y]) > 0] if {loglog!r} else rs
    rs.sort(key=lambda r: float(r[X]))
    xs = [float(r[X]) for r in rs]
    ys = [float(r[Y]) for r in rs]
    es = [float(r[ERR]) for r in rs] if ERR else None
    ax.errorbar(xs, ys, yerr=es, marker="o", ms=4, capsize=2,
                label=f"{{GROUP}}={{label}}" if GROUP else None)
if HLINE and rows:
    ax.axhline(float(rows[0][HLINE]), color="k", ls="--", lw=0.8, label="target")
if {loglog!r}:
    ax.set_xscale("log")
    ax.set_yscale("log")
ax.set_xlabel(X)
ax.set_ylabel(Y)
if GROUP or HLINE:
    ax.legend(frameon=False)
fig.tight_layout()
fig.savefig(here / {png_name!r}, dpi=120)
'''


def render_plot(script: Path) -> bool:
    """Run a generated plot script when matplotlib is available."""
    try:
        import matplotlib  # noqa: F401
    except ImportError:
        return False
    import runpy

    runpy.run_path(str(script), run_name="__main__")
    import matplotlib.pyplot as plt

    plt.close("all")
    return True


def write_result(res: ScanResult, out_dir, stem: str, summary: dict,
                 render: bool = True) -> dict:
    """Write CSV, JSON summary and plot script; return the paths written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{stem}.csv"
    csv_path.write_text(csv_text(res), encoding="utf-8")
    paths = {"csv": csv_path}
    script = plot_script(res.kind, csv_path.name, f"{stem}.png")
    if script is not None:
        sp = out / f"{stem}_plot.py"
        sp.write_text(script, encoding="utf-8")
        paths["plot_script"] = sp
        if render and res.rows and render_plot(sp):
            paths["png"] = out / f"{stem}.png"
    doc = dict(summary)
    doc.update({"kind": res.kind, "csv": csv_path.name, "columns": result_columns(res),
                "fits": res.fits, "claims": res.claims, "meta": res.meta,
                "provenance": git_provenance()})
    js = out / f"{stem}.json"
    js.write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    paths["json"] = js
    return paths


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, Path):
        return str(obj)
    return obj


# -- reading and claims -------------------------------------------------------

@dataclass(frozen=True)
class Claim:
    experiment: str
    claim: str
    measured: str
    threshold: str
    passed: bool

    def line(self) -> str:
        return (f"{'PASS' if self.passed else 'FAIL'}  {self.experiment:<22} {self.claim:<34} "
                f"measured={self.measured:<24} threshold={self.threshold}")


class NoResultsError(RuntimeError):
    pass


def load_rows(csv_path) -> list:
    with open(csv_path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for r in rows:
        conv = {}
        for k, v in r.items():
            if v in ("true", "false"):
                conv[k] = v == "true"
                continue
            try:
                conv[k] = float(v)
            except (TypeError, ValueError):
                conv[k] = v
        out.append(conv)
    return out


def _in_range(x: float, lo, hi) -> bool:
    return (lo is None or x >= lo) and (hi is None or x <= hi)


def _range_text(lo, hi) -> str:
    if lo is None:
        return f"< {hi}" if hi == 0 else f"<= {hi}"
    return f"[{lo}, {hi}]"


def _slope(rows, x, y, err):
    rows = [r for r in rows if r[y] > 0]
    if len(rows) < 4:
        return None
    rows.sort(key=lambda r: r[x])
    return fit_power_law([r[x] for r in rows], [r[y] for r in rows],
                         [r[err] for r in rows] if err else None)


def _slope_claim(exp, name, fit, lo, hi) -> Claim:
    if fit is None:
        return Claim(exp, name, "too few points", _range_text(lo, hi), False)
    strict = lo is None and hi == 0
    ok = fit.slope < hi if strict else _in_range(fit.slope, lo, hi)
    return Claim(exp, name, f"{fit.slope:.3f}+-{fit.stderr:.3f}", _range_text(lo, hi), bool(ok))


def evaluate(kind: str, rows: list, summary: dict, exp: str) -> list:
    """Recompute the claims of one experiment from its CSV rows."""
    base = kind.split(":")[0]
    meta = summary.get("meta", {})
    claims = []
    if base in ("exact-suite", "spectral-suite"):
        for r in rows:
            claims.append(Claim(exp, str(r["check"])[:34], f"{r['measured']:.3g}"
                                if isinstance(r["measured"], float) else str(r["measured"]),
                                str(r["threshold"]), bool(r["passed"])))
    elif base == "cm":
        for m, (lo, hi) in SLOPE_TARGETS["cm"].items():
            sel = [r for r in rows if r["m"] == m and r["ell"] > m]
            if sel:
                claims.append(_slope_claim(exp, f"ell-slope m={m}",
                                           _slope(sel, "ell", "normalized", "normalized_stderr"),
                                           lo, hi))
    elif base == "bg2":
        eps_n = meta.get("eps_n")
        n_eps = meta.get("n_eps")
        ser = sorted([r for r in rows if r["eps"] == eps_n], key=lambda r: r["n"])
        vals = [r["normalized"] for r in ser]
        claims.append(Claim(exp, f"decreasing in n at eps={eps_n}",
                            ",".join(f"{v:.3g}" for v in vals), "strictly decreasing",
                            len(vals) >= 2 and all(b < a for a, b in zip(vals, vals[1:]))))
        grid = set(meta.get("eps_grid", []))
        sel = [r for r in rows if r["n"] == n_eps and r["eps"] in grid]
        lo, hi = SLOPE_TARGETS["bg2"]
        claims.append(_slope_claim(exp, f"eps-slope at n={n_eps}",
                                   _slope(sel, "eps", "normalized", "normalized_stderr"), lo, hi))
    elif base == "energy":
        lo, hi = SLOPE_TARGETS["energy"]
        claims.append(_slope_claim(exp, "eps-slope", _slope(rows, "eps", "estimate", "stderr"),
                                   lo, hi))
    elif base == "remainder":
        lo, hi = SLOPE_TARGETS["remainder"]
        claims.append(_slope_claim(exp, "n-slope", _slope(rows, "n", "estimate", "stderr"),
                                   lo, hi))
    elif base == "qv":
        last = max(rows, key=lambda r: r["n"])
        ratio = last["m2_over_t"] / last["target"]
        claims.append(Claim(exp, f"E[M^2]/t / target (n={last['n']:g})", f"{ratio:.4f}",
                            f"[{1 - QV_REL_TOL}, {1 + QV_REL_TOL}]",
                            abs(ratio - 1) <= QV_REL_TOL))
        claims.append(Claim(exp, "E[M^2] - E[QV] in sigmas", f"{last['z_m2_minus_qv']:.2f}",
                            f"|z| <= {QV_SIGMAS}", abs(last["z_m2_minus_qv"]) <= QV_SIGMAS))
    elif base == "lemma":
        ratios = [r["ratio"] for r in rows]
        C = 3.0 * ratios[0]
        claims.append(Claim(exp, "ratio bounded by 3 x first point", f"{max(ratios):.3g}",
                            f"<= {C:.3g}", bool(all(x <= C for x in ratios))))
        claims.append(Claim(exp, "nondecreasing in t", "", "within 3 sigma", bool(all(
            r["half_t_estimate"] <= r["estimate"] + 3 * r["stderr"] for r in rows))))
    elif base == "simulate":
        for r in rows:
            q = r["quantity"]
            if q.startswith("z_stationarity"):
                claims.append(Claim(exp, q, f"{r['value']:.2f}", f"|z| <= {STATIONARITY_SIGMAS}",
                                    abs(r["value"]) <= STATIONARITY_SIGMAS))
            elif q == "z_drift":
                claims.append(Claim(exp, q, f"{r['value']:.2f}", f"|z| <= {DRIFT_SIGMAS}",
                                    abs(r["value"]) <= DRIFT_SIGMAS))
            elif q == "conserved":
                claims.append(Claim(exp, q, str(bool(r["value"])), "exact", bool(r["value"])))
    elif base == "kipnis":
        ok = all(r["exact_lhs"] <= r["bound"] * (1 + 1e-9) + 1e-15 for r in rows)
        claims.append(Claim(exp, "E[(int V)^2] <= C t ||V||_-1^2",
                            f"{max(r['ratio'] for r in rows):.3g}",
                            f"C = {meta.get('explicit_constant', '?')}", bool(ok)))
    else:
        raise ValueError(f"{exp}: unknown experiment kind {kind!r}")
    return claims


def collect(paths) -> list:
    """Claims for every summary JSON found under the given files/directories."""
    summaries = []
    for p in map(Path, paths):
        if p.is_dir():
            summaries += sorted(p.rglob("*.json"))
        elif p.suffix == ".json":
            summaries.append(p)
        elif p.exists():
            summaries.append(p.with_suffix(".json"))
        else:
            raise FileNotFoundError(f"{p}: no such file or directory")
    if not summaries:
        raise NoResultsError(f"no results found in {', '.join(map(str, paths))}")
    claims = []
    for js in summaries:
        try:
            summary = json.loads(js.read_text(encoding="utf-8"))
            csv_path = js.parent / summary["csv"]
            rows = load_rows(csv_path)
        except (OSError, ValueError, KeyError) as exc:
            raise ValueError(f"{js}: unreadable result ({exc})") from exc
        if not rows:
            raise ValueError(f"{csv_path}: no rows")
        try:
            claims += evaluate(summary["kind"], rows, summary, js.stem)
        except (KeyError, TypeError) as exc:
            raise ValueError(f"{csv_path}: corrupt or incomplete columns ({exc})") from exc
    return claims
