"""Batch command line: ``run``, ``validate`` and ``presets``.

Exit codes: 0 success, 1 configuration error, 2 when any run ends in a
numerical failure.
"""

from __future__ import annotations

import csv
import json
import os
import statistics
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import click
import numpy as np

from .demand_calculus import diagnostics
from .model_zoo import PRESETS, Scenario, load_scenario
from .newton_krylov import Status, TrustRegionConfig
from .solvers import InitStrategy, Method, SolverConfig, SolverRun, solve

RESULT_COLUMNS = [
    "index",
    "method",
    "init",
    "seed",
    "S",
    "iterations",
    "wall_time",
    "status",
    "FO",
    "SO",
    "fo_norm",
    "dev_min",
    "dev_median",
    "dev_max",
    "live",
    "p_final",
    "message",
]
WALL_TIME_COLUMNS = ("wall_time",)
TRACE_COLUMNS = ["iteration", "residual_norm", "fo_norm", "delta", "krylov_dim", "step_norm", "accepted"]


class ConfigError(ValueError):
    pass


def parse_int_list(text: str) -> list[int]:
    """``"1..10"``, ``"1,3,5"`` or a mix such as ``"1..3,7"``."""
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            a, b = part.split("..", 1)
            lo, hi = int(a), int(b)
            if hi < lo:
                raise ConfigError(f"empty range {part!r}")
            out.extend(range(lo, hi + 1))
        else:
            out.append(int(part))
    if not out:
        raise ConfigError("need at least one value")
    return out


@dataclass(frozen=True)
class RunConfig:
    scenario: str
    methods: tuple
    inits: tuple
    seeds: tuple
    S_values: tuple
    solver: SolverConfig
    out_dir: Path
    reference: Method = Method.ZETA_FPI
    workers: int = 1

    def __post_init__(self):
        if not self.methods:
            raise ConfigError("at least one method is required")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if any(S < 1 for S in self.S_values):
            raise ConfigError("S must be positive")

    def jobs(self) -> list[tuple]:
        return [(m, i, seed, S) for m in self.methods for i in self.inits for seed in self.seeds for S in self.S_values]


def _init_seed(seed: int) -> int:
    return int(np.random.SeedSequence([seed, 20_24]).generate_state(1)[0])


def execute(config: RunConfig, scenario: Scenario | None = None) -> list[tuple[tuple, SolverRun]]:
    scenario = scenario or load_scenario(config.scenario)
    jobs = config.jobs()
    sample_cache = {}
    for _, _, seed, S in jobs:
        if (seed, S) not in sample_cache:
            sample_cache[(seed, S)] = scenario.samples(S=S, seed=seed)

    def one(job):
        method, init, seed, S = job
        p0 = init.generate(scenario.market, _init_seed(seed))
        return solve(method, scenario.market, scenario.model, sample_cache[(seed, S)], p0, config.solver)

    if config.workers <= 1:
        runs = [one(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            runs = list(pool.map(one, jobs))
    return list(zip(jobs, runs))


def _fmt(x: float) -> str:
    return repr(float(x))


def result_rows(results: list[tuple[tuple, SolverRun]], reference: Method) -> list[dict]:
    ref = {(init.label, seed, S): run for (m, init, seed, S), run in results if m is reference}
    rows = []
    for idx, ((method, init, seed, S), run) in enumerate(results):
        base = ref.get((init.label, seed, S))
        dev = ["", "", ""]
        if base is not None:
            d = np.abs(run.p_final - base.p_final)
            dev = [_fmt(d.min()), _fmt(np.median(d)), _fmt(d.max())]
        rows.append(
            {
                "index": idx,
                "method": method.value,
                "init": init.label,
                "seed": seed,
                "S": S,
                "iterations": run.iterations,
                "wall_time": f"{run.wall_time:.6f}",
                "status": run.status.value,
                "FO": "S" if run.fo_pass else "F",
                "SO": "S" if run.so_pass else "F",
                "fo_norm": _fmt(run.fo_norm),
                "dev_min": dev[0],
                "dev_median": dev[1],
                "dev_max": dev[2],
                "live": ";".join(str(j + 1) for j in run.live_set),
                "p_final": ";".join(_fmt(x) for x in run.p_final),
                "message": run.message,
            }
        )
    return rows


def summarize(rows: list[dict], reference: Method) -> dict:
    out = {"reference": reference.value, "runs": len(rows), "methods": {}}
    for method in dict.fromkeys(r["method"] for r in rows):
        mine = [r for r in rows if r["method"] == method]
        its = [int(r["iterations"]) for r in mine]
        devs = [float(r["dev_max"]) for r in mine if r["dev_max"] != ""]

        def spread(xs):
            return {"min": min(xs), "median": statistics.median(xs), "max": max(xs)} if xs else None

        out["methods"][method] = {
            "runs": len(mine),
            "converged": sum(r["status"] == Status.CONVERGED.value for r in mine),
            "fo_pass": sum(r["FO"] == "S" for r in mine),
            "so_pass": sum(r["SO"] == "S" for r in mine),
            "iterations": spread(its),
            "max_deviation": spread(devs),
        }
    return out


def write_outputs(out_dir: Path, results, reference: Method) -> list[dict]:
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = result_rows(results, reference)
    with open(out_dir / "results.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=RESULT_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    (out_dir / "summary.json").write_text(json.dumps(summarize(rows, reference), indent=2) + "\n")
    traces = out_dir / "traces"
    traces.mkdir(exist_ok=True)
    for idx, (_, run) in enumerate(results):
        with open(traces / f"run-{idx}.csv", "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=TRACE_COLUMNS, lineterminator="\n")
            writer.writeheader()
            writer.writerows(t.as_row() for t in run.trace)
    return rows


def worker_count(flag: int | None) -> int:
    if flag is not None:
        return max(1, flag)
    env = os.environ.get("BERTRAND_EQ_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError("BERTRAND_EQ_THREADS must be an integer") from None
    return os.cpu_count() or 1


@click.group()
def cli():
    """Compute Bertrand-Nash equilibrium prices under Mixed Logit demand."""


@cli.command()
@click.option("--scenario", required=True, help="Preset name or scenario JSON path.")
@click.option("--methods", default="zeta-fpi", show_default=True, help="Comma-separated methods.")
@click.option("--init", "inits", default="costs", show_default=True, help="Comma-separated: costs, cost-box, box:LO:HI.")
@click.option("--seeds", default="1", show_default=True, help="Seeds, e.g. 1..10 or 1,4,9.")
@click.option("--S", "S_values", default=None, help="Comma-separated sample sizes (default: the scenario's).")
@click.option("--eps-T", "eps_T", type=float, default=1e-6, show_default=True)
@click.option("--eps-P", "eps_P", type=float, default=1e-10, show_default=True)
@click.option("--jacobian", type=click.Choice(["analytic", "fd1", "fd2", "fd4"]), default="analytic", show_default=True)
@click.option("--max-iter", type=int, default=None)
@click.option("--delta0", type=float, default=None, help="Initial trust radius.")
@click.option("--gmres-tol", type=float, default=1e-4, show_default=True)
@click.option("--max-krylov", type=int, default=None)
@click.option("--reference", default="zeta-fpi", show_default=True)
@click.option("--out", "out_dir", default="bertrand-out", show_default=True, type=click.Path(file_okay=False))
@click.option("--threads", type=int, default=None, help="Worker threads (default: env BERTRAND_EQ_THREADS, else cores).")
def run(scenario, methods, inits, seeds, S_values, eps_T, eps_P, jacobian, max_iter, delta0, gmres_tol, max_krylov, reference, out_dir, threads):
    """Run every (method x init x seed x S) combination and write result tables."""
    try:
        sc = load_scenario(scenario)
        method_list = tuple(Method.parse(m) for m in methods.split(",") if m.strip())
        init_list = tuple(InitStrategy.parse(i) for i in inits.split(",") if i.strip())
        tr = TrustRegionConfig(delta0=delta0, gmres_tol=gmres_tol, max_krylov=max_krylov)
        solver = SolverConfig(eps_T=eps_T, eps_P=eps_P, max_iter=max_iter, jacobian=jacobian, trust_region=tr)
        config = RunConfig(
            scenario=scenario,
            methods=method_list,
            inits=init_list,
            seeds=tuple(parse_int_list(seeds)),
            S_values=tuple(parse_int_list(S_values)) if S_values else (sc.S,),
            solver=solver,
            out_dir=Path(out_dir),
            reference=Method.parse(reference),
            workers=worker_count(threads),
        )
    except ValueError as err:
        raise ConfigError(str(err)) from err
    results = execute(config, sc)
    rows = write_outputs(config.out_dir, results, config.reference)
    failed = sum(r["status"] == Status.NUMERICAL_FAILURE.value for r in rows)
    click.echo(f"{len(rows)} runs written to {config.out_dir}; {failed} numerical failures")
    if failed:
        sys.exit(2)


def _probe_prices(sc: Scenario, n: int = 8) -> list[np.ndarray]:
    """Costs plus a uniform markup, and costs with one product's price raised."""
    c = sc.market.costs
    scale = max(1.0, float(np.max(c)))
    grid = np.geomspace(0.01, 10.0, n)
    probes = [c + t * scale for t in grid]
    for k in range(sc.market.J):
        probes.extend(c + t * scale * np.eye(1, sc.market.J, k).ravel() for t in grid)
    return probes


@cli.command()
@click.argument("scenario")
def validate(scenario):
    """Check a scenario's market, model parameters and markup boundedness."""
    try:
        sc = load_scenario(scenario)
    except (ValueError, TypeError, KeyError, json.JSONDecodeError) as err:
        raise ConfigError(str(err)) from err
    samples = sc.samples(S=min(sc.S, 200))
    click.echo(f"scenario {sc.name}: J={sc.market.J}, F={sc.market.F}, model={sc.model.name}")
    probes = _probe_prices(sc)
    report = diagnostics(sc.model, samples, sc.market, probes)
    click.echo(f"  max ||Lam^-1 P||_inf over {report.probes} probes: {report.max_lam_inv_P:.6g}")
    click.echo(f"  max ||Omega||_inf over probes: {report.max_omega_norm:.6g}")
    if not sc.model.has_outside_good:
        low = diagnostics(sc.model, samples, sc.market, probes[:1]).max_lam_inv_P
        click.echo(
            "  warning: no outside good, so ||Lam^-1 P|| has no price-independent bound and eta is "
            f"unbounded as prices grow (||Lam^-1 P||_inf rises from {low:.4g} to {report.max_lam_inv_P:.4g} on the probes)"
        )
    elif report.max_omega_norm >= 1.0:
        click.echo("  warning: ||Omega||_inf >= 1 at some probe")
    click.echo("OK")


@cli.command()
def presets():
    """List built-in scenarios."""
    for name in PRESETS:
        sc = PRESETS[name]()
        click.echo(f"{name:26s} J={sc.market.J:<3d} F={sc.market.F:<2d} model={sc.model.name}")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, prog_name="bertrand-eq", standalone_mode=False)
    except (click.UsageError, ConfigError) as err:
        click.echo(f"error: {err}", err=True)
        return 1
    except click.exceptions.Abort:
        return 1
    except SystemExit as exc:
        return int(exc.code or 0)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
