"""Command line entry point: ``covertlink <experiment>``, ``covertlink eval``, ``covertlink optimize``."""
from __future__ import annotations

import dataclasses
import json
import sys

import click
import numpy as np

from . import scenario as sc
from .covert_metrics import covert_rate, detection_error_probability, warden_best_response
from .optimize import NoFeasiblePoint, PowerAllocation, feasibility_check, jtpa_allocate, ppa_allocate
from .sinr_stats import sinr_cdf, sinr_pdf

EXIT_SCHEMA = 2
EXIT_NUMERIC = 3


def _load(path):
    try:
        with open(path) as fh:
            return sc.load_scenario(fh.read())
    except OSError as exc:
        raise click.ClickException(str(exc))
    except sc.ScenarioError as exc:
        click.echo(f"scenario error: {exc}", err=True)
        sys.exit(EXIT_SCHEMA)


def _guard(fn):
    try:
        return fn()
    except (ArithmeticError, RuntimeError, NoFeasiblePoint) as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        sys.exit(EXIT_NUMERIC)


@click.group()
def main():
    """Covert UAV downlink analysis and power allocation."""


def _experiment_command(name):
    @click.option("--scenario", "scenario_path", required=True, type=click.Path(dir_okay=False))
    @click.option("--out", required=True, type=click.Path(file_okay=False))
    @click.option("--seed", type=int, default=None)
    @click.option("--samples", type=int, default=None)
    @click.option("--tol", type=float, default=None)
    def cmd(scenario_path, out, seed, samples, tol):
        s = _load(scenario_path)
        paths = _guard(lambda: sc.run_experiment(name, s, out, seed=seed, samples=samples, tol=tol))
        for p in paths:
            click.echo(str(p))

    cmd.__doc__ = f"Write the {name} CSV files."
    return main.command(name)(cmd)


for _name in sc.EXPERIMENTS:
    _experiment_command(_name)


def _allocation(s, p_a, p_j):
    pa = np.full(s.k, s.p_total / s.k) if p_a is None else np.array(json.loads(p_a), dtype=float)
    pj = np.full(s.k, s.j_total / s.k) if p_j is None else np.array(json.loads(p_j), dtype=float)
    return PowerAllocation(pa, pj)


@main.command("eval")
@click.argument("quantity", type=click.Choice(["cdf", "pdf", "dep", "rate"]))
@click.option("--scenario", "scenario_path", required=True, type=click.Path(dir_okay=False))
@click.option("--user", type=int, default=1, help="1-based user index")
@click.option("--gamma", type=float, default=None)
@click.option("--epsilon", type=float, default=None, help="warden threshold; optimal if omitted")
@click.option("--p-a", default=None, help="JSON list of transmit powers (W); equal split if omitted")
@click.option("--p-j", default=None, help="JSON list of jamming powers (W); equal split if omitted")
def eval_cmd(quantity, scenario_path, user, gamma, epsilon, p_a, p_j):
    """Evaluate one statistic at the given (or equal-split) allocation."""
    s = _load(scenario_path)
    k = user - 1
    if not 0 <= k < s.k:
        raise click.BadParameter(f"user must be in 1..{s.k}")
    alloc = _allocation(s, p_a, p_j)
    if quantity in ("cdf", "pdf"):
        if gamma is None:
            raise click.UsageError("--gamma is required for cdf/pdf")
        ch = sc.user_channel(s, k, alloc)
        fn = sinr_cdf if quantity == "cdf" else sinr_pdf
        click.echo(repr(float(_guard(lambda: fn(ch, gamma)))))
    elif quantity == "rate":
        ch = sc.user_channel(s, k, alloc)
        click.echo(repr(float(_guard(lambda: covert_rate(ch)))))
    else:
        w = sc.warden_channel(s, k, alloc)
        if epsilon is None:
            r = _guard(lambda: warden_best_response(w, fast=False))
            click.echo(f"epsilon={r.epsilon!r} xi={r.xi!r}")
        else:
            click.echo(repr(float(_guard(lambda: detection_error_probability(w, epsilon)))))


@main.command("optimize")
@click.argument("method", type=click.Choice(["ppa", "jtpa"]))
@click.option("--scenario", "scenario_path", required=True, type=click.Path(dir_okay=False))
@click.option("--rho", type=float, default=None)
@click.option("--max-rounds", type=int, default=None)
@click.option("--seed", type=int, default=None)
def optimize_cmd(method, scenario_path, rho, max_rounds, seed):
    """Run PPA or JTPA and print the allocation as JSON."""
    s = _load(scenario_path)
    g = sc.build_game(s)
    cfg = s.policy.pso if seed is None else dataclasses.replace(s.policy.pso, seed=seed)
    if method == "ppa":
        res = _guard(lambda: ppa_allocate(g, cfg))
    else:
        res = _guard(lambda: jtpa_allocate(g, cfg, rho=s.policy.rho if rho is None else rho,
                                           max_rounds=s.policy.max_rounds if max_rounds is None else max_rounds))
    rep = feasibility_check(g, res.allocation, grid=True)
    click.echo(json.dumps({
        "p_a": res.allocation.p_a.tolist(),
        "p_j": res.allocation.p_j.tolist(),
        "log_utility": res.value,
        "rates": rep.rates.tolist(),
        "xi": rep.xi.tolist(),
        "converged": res.converged,
        "round_trace": [float(v) for v in res.round_trace],
    }, indent=2))


if __name__ == "__main__":
    main()
