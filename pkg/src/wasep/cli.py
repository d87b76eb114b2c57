"""Command line entry point.

Every experiment command exists both at top level (``wasep qv``) and under
``wasep run`` (``wasep run qv``).  Settings come from the per-kind defaults,
then the YAML file given by ``--config``, then explicit flags.  Each run writes
``<kind>.csv``, ``<kind>.json`` and, for plottable kinds, ``<kind>_plot.py``
(plus ``<kind>.png`` when matplotlib is installed) into ``--out``.
"""

from __future__ import annotations

import sys
import time

import click

from . import experiments as ex
from . import report as rep
from . import suites
from .config import KINDS, ExperimentConfig, default_config
from .dynamics import stationarity_check
from .experiments import ScanResult
from .fields import Fourier, lattice_weight
from .lattice import ModelParams
from .local import BlockFunction, LocalFunction

F_DEFAULT = Fourier.sin(1)


class ConsistencyError(click.ClickException):
    exit_code = 3


# -- experiment runners: ExperimentConfig -> ScanResult -------------------------

def _suite(checks, kind: str) -> ScanResult:
    res = ScanResult(kind, ["check", "passed", "measured", "threshold", "detail"])
    res.rows = [c.as_row() for c in checks]
    res.claims = {"all_passed": all(c.passed for c in checks)}
    return res


def _simulate(cfg: ExperimentConfig, workers) -> ScanResult:
    m = cfg.model
    res = ScanResult("simulate", ["n", "quantity", "value", "expected"])
    ok = True
    for i, n in enumerate(m.n):
        params = ModelParams(m.a, n, m.rho, n * m.N_factor)
        st = stationarity_check(params, cfg.t, cfg.replicas, cfg.seed, point=2 * i)
        dr = ex.single_particle_drift(n, m.a, cfg.t, cfg.replicas, cfg.seed + 1,
                                      N=n * m.N_factor)
        ok &= st["conserved"]
        res.rows += [
            {"n": n, "quantity": "z_stationarity_single", "value": st["z_single"], "expected": 0.0},
            {"n": n, "quantity": "z_stationarity_pair", "value": st["z_pair"], "expected": 0.0},
            {"n": n, "quantity": "z_stationarity_nn", "value": st["z_nn"], "expected": 0.0},
            {"n": n, "quantity": "bond_rate", "value": st["bond_rate"],
             "expected": st["bond_rate_expected"]},
            {"n": n, "quantity": "drift_velocity", "value": dr["velocity"],
             "expected": dr["expected_velocity"]},
            {"n": n, "quantity": "z_drift", "value": dr["z"], "expected": 0.0},
            {"n": n, "quantity": "conserved", "value": float(st["conserved"]), "expected": 1.0},
        ]
    res.claims = {"conserved": bool(ok)}
    return res


def _kipnis(cfg: ExperimentConfig, workers) -> ScanResult:
    m, s = cfg.model, cfg.statistic
    res = ScanResult("kipnis", ["N", "m", "ell", "t", "exact_lhs", "h_minus_one", "bound",
                                "ratio", "mc_lhs", "mc_stderr", "z_mc_vs_exact"])
    explicit = None
    ok = True
    for n in m.n:
        N = n * m.N_factor
        params = ModelParams(m.a, n, m.rho, N)
        h = lattice_weight(F_DEFAULT, n, N, params.velocity, "grad").value(0.0)
        for mm in s.m:
            for ell in s.ell:
                stat = LocalFunction.product(mm, m.rho) - BlockFunction.cond_exp_fm(ell, mm, m.rho)
                t_grid = [cfg.t * 2.0 ** -j for j in range(8)]
                out = ex.kipnis_bound_check(stat, h, params, t_grid, cfg.replicas, cfg.seed,
                                            workers)
                explicit = out["explicit_constant"]
                ok &= out["holds_explicit"]
                for r in out["rows"]:
                    res.rows.append({"N": N, "m": mm, "ell": ell, **r})
    res.claims = {"holds_explicit": bool(ok)}
    res.meta = {"explicit_constant": explicit, "F": repr(F_DEFAULT)}
    return res


def _merge(parts, kind) -> ScanResult:
    res = ScanResult(kind, parts[0].columns)
    for p in parts:
        res.rows += p.rows
        res.fits.update(p.fits)
        res.claims.update(p.claims)
        res.meta.update(p.meta)
    return res


def execute(cfg: ExperimentConfig, workers=None) -> ScanResult:
    """Run one validated configuration."""
    m, s = cfg.model, cfg.statistic
    k = cfg.kind
    if k == "exact-suite":
        return _suite(suites.exact_suite(cfg.quick) + suites.spectral_suite(cfg.quick), k)
    if k == "spectral-suite":
        return _suite(suites.spectral_suite(cfg.quick), k)
    if k == "simulate":
        return _simulate(cfg, workers)
    if k == "bg2":
        n_eps = max(m.n)
        return ex.bg2_scan(m.n, s.eps_n, s.eps, n_eps, cfg.t, cfg.replicas, m.a, m.rho,
                           seed=cfg.seed, workers=workers)
    if k == "lemma-scan":
        parts = []
        for n in m.n:
            for mm in s.m:
                grid = [(e, L) for e in s.ell for L in s.L] if s.lemma == "L_renorm" else s.ell
                parts.append(ex.lemma_scan(s.lemma, mm, grid, n, cfg.t, cfg.replicas, m.a, m.rho,
                                           seed=cfg.seed, workers=workers, ell0=s.ell0))
        return _merge(parts, parts[0].kind)
    if k == "cm-scan":
        parts = [ex.c_m_scan(s.m, s.ell, n, cfg.t, cfg.replicas, m.a, m.rho, seed=cfg.seed,
                             workers=workers) for n in m.n]
        return _merge(parts, "cm")
    if k == "qv":
        return ex.qv_check(m.n, F_DEFAULT, cfg.t, cfg.replicas, m.rho, m.a, cfg.seed, workers)
    if k == "energy":
        parts = [ex.energy_scan(n, s.eps, F_DEFAULT, cfg.t, cfg.replicas, m.rho, m.a, cfg.seed,
                                workers) for n in m.n]
        return _merge(parts, "energy")
    if k == "remainder":
        return ex.remainder_scan(m.n, F_DEFAULT, cfg.t, cfg.replicas, m.rho, m.a, cfg.seed,
                                 workers)
    if k == "kipnis":
        return _kipnis(cfg, workers)
    raise click.UsageError(f"unknown kind {k!r}")


def _consistency(res: ScanResult) -> list:
    """Internal failures that make a run invalid (not scientific claims)."""
    bad = []
    if res.meta.get("conserved") is False or res.claims.get("conserved") is False:
        bad.append("particle number not conserved")
    for r in res.rows:
        if r.get("max_identity_residual", 0.0) > 1e-8:
            bad.append(f"Dynkin identity residual {r['max_identity_residual']:.3g}")
            break
    return bad


# -- click plumbing -------------------------------------------------------------

GRID_FLAGS = {
    "n": "model.n", "a": "model.a", "rho": "model.rho", "n_factor": "model.N_factor",
    "m": "statistic.m", "ell": "statistic.ell", "big_l": "statistic.L", "eps": "statistic.eps",
    "eps_n": "statistic.eps_n", "lemma": "statistic.lemma", "ell0": "statistic.ell0",
    "t": "t", "replicas": "replicas", "seed": "seed", "out": "out", "quick": "quick",
}


def _options(f):
    opts = [
        click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
                     help="YAML experiment config; flags override its keys."),
        click.option("--seed", type=int, help="Master seed."),
        click.option("--replicas", type=int, help="Replicas per grid point."),
        click.option("--out", type=click.Path(file_okay=False), help="Output directory."),
        click.option("--t", "t", type=float, help="Macroscopic time horizon."),
        click.option("--n", help="Comma-separated scaling parameters n."),
        click.option("--a", type=float, help="Asymmetry strength."),
        click.option("--rho", type=float, help="Density."),
        click.option("--n-factor", type=int, help="Ring size N = n_factor * n."),
        click.option("--m", help="Comma-separated degrees m."),
        click.option("--ell", help="Comma-separated box sizes."),
        click.option("--L", "big_l", help="Comma-separated outer box sizes."),
        click.option("--eps", help="Comma-separated eps grid."),
        click.option("--eps-n", type=float, help="eps for the n-scan (bg2)."),
        click.option("--lemma", type=click.Choice(ex.LEMMA_KINDS), help="Lemma for lemma-scan."),
        click.option("--ell0", type=int, help="Base box for two_blocks."),
        click.option("--quick", is_flag=True, default=None, help="Reduced suites."),
        click.option("--no-render", is_flag=True, help="Write plot scripts without running them."),
    ]
    for o in reversed(opts):
        f = o(f)
    return f


def _make_command(kind: str):
    @click.command(name=kind, help=f"Run the {kind} experiment.")
    @_options
    @click.pass_context
    def cmd(ctx, config_path, no_render, **flags):
        try:
            cfg = ExperimentConfig.load(config_path) if config_path else default_config(kind)
            if cfg.kind != kind:
                raise ValueError(f"config kind {cfg.kind!r} does not match command {kind!r}")
            cfg.override(**{GRID_FLAGS[k]: v for k, v in flags.items()})
            cfg.validate()
        except (ValueError, TypeError) as exc:
            raise click.UsageError(str(exc)) from exc
        workers = ex.worker_count()
        t0 = time.perf_counter()
        try:
            res = execute(cfg, workers)
        except ValueError as exc:
            raise click.ClickException(str(exc)) from exc
        wall = time.perf_counter() - t0
        summary = {"flags": {**{k: v for k, v in flags.items()}, "config": config_path,
                             "no_render": no_render},
                   "argv": sys.argv[1:], "config": cfg.to_dict(), "config_sha256": cfg.sha256(),
                   "seed": cfg.seed, "workers": workers, "wall_clock_s": round(wall, 3)}
        paths = rep.write_result(res, cfg.out, kind, summary, render=not no_render)
        _print_result(res)
        for name, p in paths.items():
            click.echo(f"wrote {name}: {p}")
        bad = _consistency(res)
        if bad:
            raise ConsistencyError("; ".join(bad))
        if kind in ("exact-suite", "spectral-suite") and not res.claims["all_passed"]:
            ctx.exit(1)

    return cmd


def _print_result(res: ScanResult) -> None:
    if res.kind in ("exact-suite", "spectral-suite"):
        for r in res.rows:
            mark = "PASS" if r["passed"] else "FAIL"
            click.echo(f"{mark}  {r['check']:<58} measured={r['measured']:<12.6g} "
                       f"threshold={r['threshold']}")
        return
    click.echo(f"{res.kind}: {len(res.rows)} rows")
    for name, fit in sorted(res.fits.items()):
        click.echo(f"  fit {name}: slope {fit['slope']:.4f} +- {fit['stderr']:.4f} "
                   f"({fit['points']} points)")
    for name, val in sorted(res.claims.items()):
        click.echo(f"  {name}: {val}")


@click.group()
@click.version_option(package_name="artifact")
def main():
    """Fluctuation experiments for the weakly asymmetric exclusion process."""


@main.group()
def run():
    """Run an experiment (same commands as the top level)."""


for _kind in KINDS:
    main.add_command(_make_command(_kind))
    run.add_command(_make_command(_kind))


@main.command(name="report")
@click.argument("paths", nargs=-1, type=click.Path())
def report_cmd(paths):
    """Recompute claims from result files or directories (default: results)."""
    paths = paths or ("results",)
    try:
        claims = rep.collect(paths)
    except rep.NoResultsError as exc:
        raise click.ClickException(f"no results: {exc}") from exc
    except (ValueError, FileNotFoundError) as exc:
        raise click.ClickException(str(exc)) from exc
    for c in claims:
        click.echo(c.line())
    failed = sum(not c.passed for c in claims)
    click.echo(f"{len(claims) - failed} passed, {failed} failed")
    if failed:
        sys.exit(1)


if __name__ == "__main__":
    main()
