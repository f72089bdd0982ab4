"""Command-line front end.

Every command resolves its settings from (in order of precedence) explicit
flags, the optional TOML config file, and built-in defaults, then writes a
run manifest next to its outputs so the run can be reconstructed from the
manifest plus the input files.  The master seed falls back to the
``NC_BAYES_SEED`` environment variable when neither flag nor config set one.

Exit codes: 0 on success, 2 on validation errors, 3 on numerical failures.
"""
from __future__ import annotations

import functools
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import click
import numpy as np
import tomli

from .errors import NumericalError
from .expfam import Rectangle
from .experiments import (
    ExperimentPlan,
    TABLE_IDS,
    _aggregate,
    _limit_blas,
    _rep_entry,
)
from .experiments import reproduce as run_plan
from .gibbs import GibbsConfig
from .hscore import HBayesConfig, run_hbayes
from .manifest import RunManifest, write_draws_csv
from .noise import NoiseAdaptConfig
from .pg import pg1_mean, pg1_var, sample_pg1_batch
from .rng import as_generator
from .torus import (
    detect_edges_ci,
    detect_edges_median,
    fit_torus_ncbayes,
    load_phase_csv,
    write_dot,
    write_edge_csv,
    write_interval_csv,
)
from .tvdensity import (
    TVModelSpec,
    TVNoise,
    kmeans_knots,
    load_crime_csv,
    median_knot_bandwidth,
    posterior_density_grid,
    run_tv_gibbs,
    write_density_grid_csv,
)

PRIOR_NAMES = {
    "hs": "horseshoe",
    "ghs": "grouped",
    "rghs": "regularized-grouped",
    "gaussian": "gaussian",
}

_TV_NOISE_FLAG = {"n1": "common-box", "n2": "per-time-box", "adaptive": "adaptive"}


def guarded(fn):
    """Map library exceptions onto the documented exit codes."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ValueError as e:
            click.echo(f"error: {e}", err=True)
            sys.exit(2)
        except NumericalError as e:
            click.echo(f"numerical failure: {e}", err=True)
            sys.exit(3)

    return wrapper


def _load_config(path) -> dict:
    if path is None:
        return {}
    with open(path, "rb") as fh:
        return tomli.load(fh)


def _section(cfg: dict, dotted: str) -> dict:
    node = cfg
    for part in dotted.split("."):
        nxt = node.get(part)
        if not isinstance(nxt, dict):
            return {}
        node = nxt
    return node


def _resolve(cfg: dict, dotted: str, key: str, flag, default):
    """Flag wins, then the command's config section, then top-level keys."""
    if flag is not None:
        return flag
    sec = _section(cfg, dotted)
    if key in sec and not isinstance(sec[key], dict):
        return sec[key]
    if key in cfg and not isinstance(cfg[key], dict):
        return cfg[key]
    return default


def _master_seed(cfg: dict, dotted: str, flag) -> int:
    seed = _resolve(cfg, dotted, "seed", flag, None)
    if seed is None:
        seed = os.environ.get("NC_BAYES_SEED", 0)
    return int(seed)


def _outdir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emit_manifest(out: Path, manifest: RunManifest) -> None:
    path = out / "manifest.json"
    manifest.write(path)
    click.echo(f"wrote {path}")


def _run_replications(table: str, seeds: list[int], settings: dict, jobs: int):
    packed = [(table, s, settings) for s in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(jobs, initializer=_limit_blas) as ex:
            results = list(ex.map(_rep_entry, packed))
    else:
        results = [_rep_entry(p) for p in packed]
    oks = [p for st, p in results if st == "ok"]
    failures = [
        {"replication": i, "error": p}
        for i, (st, p) in enumerate(results)
        if st == "error"
    ]
    if not oks:
        raise NumericalError(
            f"all {len(seeds)} replications failed; first error: {failures[0]['error']}"
        )
    return oks, failures


def _write_metrics(out: Path, payload: dict) -> Path:
    from .manifest import _jsonable

    path = out / "metrics.json"
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")
    return path


@click.group()
@click.option(
    "--config",
    "config_path",
    type=click.Path(exists=True, dir_okay=False),
    default=None,
    help="TOML config file; explicit flags override its values.",
)
@click.pass_context
def main(ctx, config_path):
    """Noise-contrastive Bayes for unnormalized models."""
    ctx.obj = _load_config(config_path)


# ------------------------------------------------------------- pg-selftest

@main.command("pg-selftest")
@click.option("--draws", type=int, default=None, help="Draws per tilt value.")
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_path", type=click.Path(file_okay=False), default=None)
@click.pass_obj
@guarded
def pg_selftest(cfg, draws, seed, out_path):
    """Compare sampler moments against the exact mean and variance."""
    draws = int(_resolve(cfg, "pg-selftest", "draws", draws, 100_000))
    seed = _master_seed(cfg, "pg-selftest", seed)
    if draws < 2:
        raise ValueError("need at least two draws")
    manifest = RunManifest(command="pg-selftest", config={"draws": draws}, seed=seed)
    gen = as_generator(seed)
    cases = []
    t0 = time.perf_counter()
    with manifest.stage("sampling"):
        for c in (0.0, 0.5, 2.0, 5.0):
            x = sample_pg1_batch(np.full(draws, c), gen)
            mean, var = float(x.mean()), float(x.var(ddof=1))
            se_mean = float(x.std(ddof=1)) / np.sqrt(draws)
            dev2 = (x - mean) ** 2
            se_var = float(dev2.std(ddof=1)) / np.sqrt(draws)
            z_mean = (mean - pg1_mean(c)) / se_mean
            z_var = (var - pg1_var(c)) / se_var
            cases.append(
                {
                    "c": c,
                    "mean": mean,
                    "mean_exact": float(pg1_mean(c)),
                    "z_mean": float(z_mean),
                    "var": var,
                    "var_exact": float(pg1_var(c)),
                    "z_var": float(z_var),
                    "passed": bool(abs(z_mean) <= 4 and abs(z_var) <= 4),
                }
            )
    report = {
        "draws": draws,
        "seed": seed,
        "cases": cases,
        "passed": all(c["passed"] for c in cases),
        "seconds": round(time.perf_counter() - t0, 3),
    }
    click.echo(json.dumps(report, indent=2))
    if out_path is not None:
        out = _outdir(out_path)
        path = out / "pg_selftest.json"
        path.write_text(json.dumps(report, indent=2) + "\n")
        manifest.add_output(path)
        manifest.note(passed=report["passed"])
        _emit_manifest(out, manifest)
    if not report["passed"]:
        raise NumericalError("sampler moments outside four standard errors")


# ---------------------------------------------------------------------- tv

@main.group()
def tv():
    """Time-varying density estimation."""


@tv.command("simulate")
@click.option("--scenario", type=click.Choice(["1", "2"]), default=None)
@click.option("--reps", type=int, default=None)
@click.option("--noise", type=click.Choice(sorted(_TV_NOISE_FLAG)), default=None)
@click.option("--t", "T", type=int, default=None, help="Number of time points.")
@click.option("--n-per-time", type=int, default=None)
@click.option("--m-per-time", type=int, default=None)
@click.option("--knots", type=int, default=None)
@click.option("--iterations", type=int, default=None)
@click.option("--burn-in", type=int, default=None)
@click.option("--eval-points", type=int, default=None)
@click.option("--jobs", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_path", type=click.Path(file_okay=False), default=None)
@click.pass_obj
@guarded
def tv_simulate(cfg, scenario, reps, noise, T, n_per_time, m_per_time, knots,
                iterations, burn_in, eval_points, jobs, seed, out_path):
    """Replicate a synthetic scenario and report ABE / CP / AL."""
    sec = "tv.simulate"
    scenario = int(_resolve(cfg, sec, "scenario", scenario, 1))
    reps = int(_resolve(cfg, sec, "reps", reps, 20))
    noise = _resolve(cfg, sec, "noise", noise, "n1")
    jobs = int(_resolve(cfg, sec, "jobs", jobs, 1))
    seed = _master_seed(cfg, sec, seed)
    out = _outdir(_resolve(cfg, sec, "out", out_path, "out"))
    if noise not in _TV_NOISE_FLAG:
        raise ValueError(f"noise must be one of {sorted(_TV_NOISE_FLAG)}")
    settings = {
        "T": int(_resolve(cfg, sec, "t", T, 10)),
        "n_t": int(_resolve(cfg, sec, "n_per_time", n_per_time, 100)),
        "m_t": int(_resolve(cfg, sec, "m_per_time", m_per_time, 100)),
        "L": int(_resolve(cfg, sec, "knots", knots, 30)),
        "iterations": int(_resolve(cfg, sec, "iterations", iterations, 5000)),
        "burn_in": int(_resolve(cfg, sec, "burn_in", burn_in, 2000)),
        "eval_points": int(_resolve(cfg, sec, "eval_points", eval_points, 500)),
        "level": 0.95,
        "scenarios": (scenario,),
        "noises": ("an" if noise == "adaptive" else noise,),
    }
    plan = ExperimentPlan(table="1", reps=reps, master_seed=seed, jobs=jobs)
    manifest = RunManifest(
        command="tv simulate",
        config={**settings, "reps": reps, "jobs": jobs, "noise": noise},
        seed=seed,
    )
    with manifest.stage("replications"):
        oks, failures = _run_replications("1", plan.rep_seeds(), settings, jobs)
    agg = _aggregate(oks)
    payload = {
        "command": "tv simulate",
        "scenario": scenario,
        "noise": noise,
        "replications": reps,
        "failures": failures,
        "aggregate": agg,
        "per_replication": oks,
    }
    with manifest.stage("write"):
        manifest.add_output(_write_metrics(out, payload))
        manifest.note(failed_replications=len(failures))
        _emit_manifest(out, manifest)
    click.echo(json.dumps(agg, indent=2, sort_keys=True))


@tv.command("fit")
@click.option("--input", "input_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--noise", type=click.Choice(sorted(_TV_NOISE_FLAG)), default=None)
@click.option("--m-per-time", type=int, default=None)
@click.option("--knots", type=int, default=None)
@click.option("--iterations", type=int, default=None)
@click.option("--burn-in", type=int, default=None)
@click.option("--grid", type=int, default=None, help="Grid cells per axis.")
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_path", type=click.Path(file_okay=False), default=None)
@click.pass_obj
@guarded
def tv_fit(cfg, input_path, noise, m_per_time, knots, iterations, burn_in,
           grid, seed, out_path):
    """Fit monthly incident locations and emit a posterior density grid."""
    sec = "tv.fit"
    noise = _resolve(cfg, sec, "noise", noise, "adaptive")
    m_t = _resolve(cfg, sec, "m_per_time", m_per_time, None)
    L = int(_resolve(cfg, sec, "knots", knots, 30))
    iters = int(_resolve(cfg, sec, "iterations", iterations, 5000))
    burn = int(_resolve(cfg, sec, "burn_in", burn_in, 2000))
    nxy = int(_resolve(cfg, sec, "grid", grid, 50))
    seed = _master_seed(cfg, sec, seed)
    out = _outdir(_resolve(cfg, sec, "out", out_path, "out"))
    if noise not in _TV_NOISE_FLAG:
        raise ValueError(f"noise must be one of {sorted(_TV_NOISE_FLAG)}")

    manifest = RunManifest(
        command="tv fit",
        config={
            "noise": noise,
            "m_per_time": m_t,
            "knots": L,
            "iterations": iters,
            "burn_in": burn,
            "grid": nxy,
        },
        seed=seed,
    )
    manifest.add_input(input_path)
    with manifest.stage("load"):
        data, rejected = load_crime_csv(input_path)
        manifest.note(rejected_rows=rejected)
    with manifest.stage("setup"):
        pooled = np.vstack(data)
        knots_xy = kmeans_knots(pooled, L, seed=seed)
        spec = TVModelSpec(knots=knots_xy, bandwidth=median_knot_bandwidth(knots_xy))
        tv_noise = TVNoise(
            mode=_TV_NOISE_FLAG[noise],
            m=None if m_t is None else int(m_t),
        )
    with manifest.stage("sampling"):
        draws = run_tv_gibbs(
            data, tv_noise, spec, GibbsConfig(iterations=iters, burn_in=burn, seed=seed)
        )
    with manifest.stage("write"):
        box = Rectangle.around(pooled)
        grid_out = posterior_density_grid(draws, box, nx=nxy, ny=nxy)
        grid_path = out / "density_grid.csv"
        write_density_grid_csv(grid_path, grid_out)
        manifest.add_output(grid_path)
        summary = {
            "observations_per_month": [int(len(d)) for d in data],
            "rejected_rows": rejected,
            "lambda_posterior_mean": float(np.mean(draws.lam)),
            "kept_draws": int(draws.theta.shape[0]),
        }
        fit_path = out / "fit.json"
        fit_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        manifest.add_output(fit_path)
        manifest.note_draws(draws)
        _emit_manifest(out, manifest)
    click.echo(json.dumps(summary, indent=2, sort_keys=True))


# ------------------------------------------------------------------- torus

@main.group()
def torus():
    """Torus-graph structure learning."""


def _torus_outputs(out, manifest, draws, rule, threshold, level, labels):
    """Shared artifact set for the fit commands: draws, edges, DOT, intervals."""
    draws_path = out / "draws.csv"
    write_draws_csv(draws_path, draws)
    manifest.add_output(draws_path)
    if rule == "median":
        report = detect_edges_median(draws, threshold)
    else:
        report = detect_edges_ci(draws, level)
    edge_path = out / "edges.csv"
    write_edge_csv(edge_path, report, labels=labels)
    manifest.add_output(edge_path)
    dot_path = out / "graph.dot"
    write_dot(dot_path, report, labels=labels)
    manifest.add_output(dot_path)
    iv_path = out / "intervals.csv"
    write_interval_csv(iv_path, draws, report, level=0.5, labels=labels)
    manifest.add_output(iv_path)
    manifest.note_draws(draws)
    manifest.note(edges_detected=int(report.decisions.sum()))
    return report


@torus.command("simulate")
@click.option("--scenario", type=click.Choice(["chain", "cycle5", "er30"]), default=None)
@click.option("--reps", type=int, default=None)
@click.option("--prior", type=click.Choice(sorted(PRIOR_NAMES)), default=None)
@click.option("--noise-update", type=click.Choice(["on", "off"]), default=None)
@click.option("--n", type=int, default=None, help="Observations per replication.")
@click.option("--d", type=int, default=None, help="Nodes (chain scenario).")
@click.option("--iterations", type=int, default=None)
@click.option("--burn-in", type=int, default=None)
@click.option("--threshold", type=float, default=None)
@click.option("--level", type=float, default=None)
@click.option("--graph-seed", type=int, default=None, help="er30 graph draw.")
@click.option("--jobs", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_path", type=click.Path(file_okay=False), default=None)
@click.pass_obj
@guarded
def torus_simulate(cfg, scenario, reps, prior, noise_update, n, d, iterations,
                   burn_in, threshold, level, graph_seed, jobs, seed, out_path):
    """Replicate a synthetic graph recovery and report edge metrics."""
    sec = "torus.simulate"
    scenario = _resolve(cfg, sec, "scenario", scenario, "chain")
    reps = int(_resolve(cfg, sec, "reps", reps, 20))
    prior = _resolve(cfg, sec, "prior", prior, "rghs")
    noise_update = _resolve(cfg, sec, "noise_update", noise_update, "off")
    jobs = int(_resolve(cfg, sec, "jobs", jobs, 1))
    seed = _master_seed(cfg, sec, seed)
    out = _outdir(_resolve(cfg, sec, "out", out_path, "out"))
    if prior not in PRIOR_NAMES:
        raise ValueError(f"prior must be one of {sorted(PRIOR_NAMES)}")
    if noise_update not in ("on", "off"):
        raise ValueError("noise-update must be on or off")
    row = "nc-on" if noise_update == "on" else "nc-off"
    settings = {
        "iterations": int(_resolve(cfg, sec, "iterations", iterations, 3000)),
        "burn_in": int(_resolve(cfg, sec, "burn_in", burn_in, 1000)),
        "m": None,
        "threshold": float(_resolve(cfg, sec, "threshold", threshold, 0.100)),
        "level": float(_resolve(cfg, sec, "level", level, 0.90)),
        "rows": (row,),
        "prior": PRIOR_NAMES[prior],
        "hb_prior": "grouped",
        "scenario": scenario,
    }
    if scenario == "chain":
        settings.update(
            d=int(_resolve(cfg, sec, "d", d, 12)),
            n=int(_resolve(cfg, sec, "n", n, 200)),
        )
    elif scenario == "cycle5":
        settings.update(n=int(_resolve(cfg, sec, "n", n, 1000)))
    else:
        settings.update(
            n=int(_resolve(cfg, sec, "n", n, 1000)),
            er_burn=2000,
            graph_seed=int(_resolve(cfg, sec, "graph_seed", graph_seed, 0)),
        )
    plan = ExperimentPlan(table="2", reps=reps, master_seed=seed, jobs=jobs)
    manifest = RunManifest(
        command="torus simulate",
        config={**settings, "reps": reps, "jobs": jobs, "prior_flag": prior},
        seed=seed,
    )
    with manifest.stage("replications"):
        oks, failures = _run_replications("torus", plan.rep_seeds(), settings, jobs)
    agg = _aggregate(oks)
    payload = {
        "command": "torus simulate",
        "scenario": scenario,
        "prior": PRIOR_NAMES[prior],
        "noise_update": noise_update,
        "replications": reps,
        "failures": failures,
        "aggregate": agg,
        "per_replication": oks,
    }
    with manifest.stage("write"):
        manifest.add_output(_write_metrics(out, payload))
        manifest.note(failed_replications=len(failures))
        _emit_manifest(out, manifest)
    click.echo(json.dumps(agg, indent=2, sort_keys=True))


@torus.command("fit")
@click.option("--input", "input_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--prior", type=click.Choice(sorted(PRIOR_NAMES)), default=None)
@click.option("--noise-update", type=click.Choice(["on", "off", "burnin"]), default=None)
@click.option("--tau-fixed", is_flag=True, default=None)
@click.option("--m", type=int, default=None, help="Noise draws; defaults to n.")
@click.option("--iterations", type=int, default=None)
@click.option("--burn-in", type=int, default=None)
@click.option("--rule", type=click.Choice(["median", "ci"]), default=None)
@click.option("--threshold", type=float, default=None)
@click.option("--level", type=float, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_path", type=click.Path(file_okay=False), default=None)
@click.pass_obj
@guarded
def torus_fit(cfg, input_path, prior, noise_update, tau_fixed, m, iterations,
              burn_in, rule, threshold, level, seed, out_path):
    """Fit recorded phase angles and emit the detected graph."""
    sec = "torus.fit"
    prior = _resolve(cfg, sec, "prior", prior, "rghs")
    noise_update = _resolve(cfg, sec, "noise_update", noise_update, "burnin")
    tau_fixed = bool(_resolve(cfg, sec, "tau_fixed", tau_fixed, False))
    m = _resolve(cfg, sec, "m", m, None)
    iters = int(_resolve(cfg, sec, "iterations", iterations, 3000))
    burn = int(_resolve(cfg, sec, "burn_in", burn_in, 1000))
    rule = _resolve(cfg, sec, "rule", rule, "median")
    threshold = float(_resolve(cfg, sec, "threshold", threshold, 0.100))
    level = float(_resolve(cfg, sec, "level", level, 0.90))
    seed = _master_seed(cfg, sec, seed)
    out = _outdir(_resolve(cfg, sec, "out", out_path, "out"))
    if prior not in PRIOR_NAMES:
        raise ValueError(f"prior must be one of {sorted(PRIOR_NAMES)}")

    manifest = RunManifest(
        command="torus fit",
        config={
            "prior": PRIOR_NAMES[prior],
            "noise_update": noise_update,
            "tau_fixed": tau_fixed,
            "m": m,
            "iterations": iters,
            "burn_in": burn,
            "rule": rule,
            "threshold": threshold,
            "level": level,
        },
        seed=seed,
    )
    manifest.add_input(input_path)
    with manifest.stage("load"):
        X, channels = load_phase_csv(input_path)
    with manifest.stage("sampling"):
        draws, _trace = fit_torus_ncbayes(
            X,
            prior_mode=PRIOR_NAMES[prior],
            cfg=GibbsConfig(iterations=iters, burn_in=burn, seed=seed),
            m=None if m is None else int(m),
            noise_update=noise_update,
            tau_fixed=tau_fixed,
        )
    with manifest.stage("write"):
        report = _torus_outputs(out, manifest, draws, rule, threshold, level, channels)
        _emit_manifest(out, manifest)
    click.echo(
        json.dumps(
            {
                "n": int(X.shape[0]),
                "d": int(X.shape[1]),
                "edges_detected": int(report.decisions.sum()),
                "rule": report.rule,
            },
            indent=2,
        )
    )


@torus.command("fit-hbayes")
@click.option("--input", "input_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--w", type=float, default=None, help="Loss scale.")
@click.option("--prior", type=click.Choice(sorted(PRIOR_NAMES)), default=None)
@click.option("--iterations", type=int, default=None)
@click.option("--burn-in", type=int, default=None)
@click.option("--rule", type=click.Choice(["median", "ci"]), default=None)
@click.option("--threshold", type=float, default=None)
@click.option("--level", type=float, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_path", type=click.Path(file_okay=False), default=None)
@click.pass_obj
@guarded
def torus_fit_hbayes(cfg, input_path, w, prior, iterations, burn_in, rule,
                     threshold, level, seed, out_path):
    """Score-matching comparator fit on recorded phase angles."""
    sec = "torus.fit-hbayes"
    w = float(_resolve(cfg, sec, "w", w, 1.0))
    prior = _resolve(cfg, sec, "prior", prior, "ghs")
    iters = int(_resolve(cfg, sec, "iterations", iterations, 3000))
    burn = int(_resolve(cfg, sec, "burn_in", burn_in, 1000))
    rule = _resolve(cfg, sec, "rule", rule, "median")
    threshold = float(_resolve(cfg, sec, "threshold", threshold, 0.100))
    level = float(_resolve(cfg, sec, "level", level, 0.90))
    seed = _master_seed(cfg, sec, seed)
    out = _outdir(_resolve(cfg, sec, "out", out_path, "out"))
    if prior not in PRIOR_NAMES:
        raise ValueError(f"prior must be one of {sorted(PRIOR_NAMES)}")

    manifest = RunManifest(
        command="torus fit-hbayes",
        config={
            "w": w,
            "prior": PRIOR_NAMES[prior],
            "iterations": iters,
            "burn_in": burn,
            "rule": rule,
            "threshold": threshold,
            "level": level,
        },
        seed=seed,
    )
    manifest.add_input(input_path)
    with manifest.stage("load"):
        X, channels = load_phase_csv(input_path)
    with manifest.stage("sampling"):
        draws, _trace = run_hbayes(
            X,
            HBayesConfig(w=w, prior_mode=PRIOR_NAMES[prior]),
            GibbsConfig(iterations=iters, burn_in=burn, seed=seed),
        )
    with manifest.stage("write"):
        report = _torus_outputs(out, manifest, draws, rule, threshold, level, channels)
        _emit_manifest(out, manifest)
    click.echo(
        json.dumps(
            {
                "n": int(X.shape[0]),
                "d": int(X.shape[1]),
                "w": w,
                "edges_detected": int(report.decisions.sum()),
                "rule": report.rule,
            },
            indent=2,
        )
    )


# --------------------------------------------------------------- reproduce

def _parse_override(text: str):
    key, _, raw = text.partition("=")
    if not _:
        raise ValueError(f"override {text!r} is not key=value")
    try:
        return key.strip(), json.loads(raw)
    except json.JSONDecodeError:
        return key.strip(), raw.strip()


@main.command("reproduce")
@click.option("--table", type=click.Choice(TABLE_IDS), required=True)
@click.option("--reps", type=int, default=None)
@click.option("--jobs", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--set", "set_overrides", multiple=True,
              help="Desk-scale override key=value (JSON values allowed).")
@click.option("--out", "out_path", type=click.Path(file_okay=False), default=None)
@click.pass_obj
@guarded
def reproduce_cmd(cfg, table, reps, jobs, seed, set_overrides, out_path):
    """Rerun one result table end to end and write metrics plus the CSV."""
    sec = "reproduce"
    reps = int(_resolve(cfg, sec, "reps", reps, 20))
    jobs = int(_resolve(cfg, sec, "jobs", jobs, 1))
    seed = _master_seed(cfg, sec, seed)
    out = _outdir(_resolve(cfg, sec, "out", out_path, "out"))
    overrides = {
        k: v
        for k, v in _section(cfg, sec).items()
        if k not in ("reps", "jobs", "seed", "out") and not isinstance(v, dict)
    }
    for text in set_overrides:
        k, v = _parse_override(text)
        overrides[k] = v
    plan = ExperimentPlan(
        table=table, reps=reps, master_seed=seed, jobs=jobs, overrides=overrides
    )
    manifest = RunManifest(
        command="reproduce",
        config={"table": table, "reps": reps, "jobs": jobs, "overrides": overrides},
        seed=seed,
    )
    with manifest.stage("run"):
        payload = run_plan(plan, out)
    for path in payload["outputs"]:
        manifest.add_output(path)
    manifest.note(
        failed_replications=len(payload["failures"]),
        checks_passed=payload["passed"],
    )
    _emit_manifest(out, manifest)
    click.echo(
        json.dumps(
            {"table": table, "checks": payload["checks"], "passed": payload["passed"]},
            indent=2,
        )
    )


if __name__ == "__main__":
    main()
