from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from .crypto import ChebyParams
from .errors import ConfigError
from .selftest import oracle_suite, semigroup_suite
from .sim.bench import PHASES, bench_phase, fuzz
from .sim.config import PRIMES, ScenarioConfig
from .sim.report import render_cost_report
from .sim.scenario import run_scenario


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose: bool) -> None:
    """Simulate authenticated handshakes and address assignment between vehicles and RSUs."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(message)s")


@main.command()
@click.option("--scenario", "scenario_path", type=click.Path(exists=True, dir_okay=False), required=True,
              help="Scenario JSON file.")
@click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=None, help="Overrides the scenario seed.")
@click.option("--report", "report_path", type=click.Path(dir_okay=False), default=None,
              help="Write the report here instead of stdout.")
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default="json", show_default=True)
@click.option("--cost", is_flag=True, help="Also print the per-phase operation counts to stderr.")
def run(scenario_path, seed, report_path, fmt, cost):
    """Run a scenario; exit 0 only if every adversary was blocked and every honest session completed."""
    try:
        config = ScenarioConfig.from_json(scenario_path)
        if seed is not None:
            config.seed = seed
        config.validate()
    except ConfigError as exc:
        raise click.UsageError(str(exc)) from None
    report = run_scenario(config)
    text = report.render(fmt)
    if report_path:
        Path(report_path).write_text(text if text.endswith("\n") else text + "\n")
    else:
        click.echo(text)
    s = report.summary
    click.echo(
        f"sessions {s['sessions']['completed']}/{s['sessions']['attempted']} completed, "
        f"adversaries blocked: {s['all_adversaries_blocked']}, ok: {report.ok}",
        err=True,
    )
    if cost:
        click.echo(render_cost_report(s["cost"]), err=True)
    sys.exit(0 if report.ok else 1)


@main.command(name="fuzz")
@click.option("--trials", type=click.IntRange(1), default=1000, show_default=True)
@click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=0, show_default=True)
@click.option("--prime", type=click.Choice(PRIMES), default="default", show_default=True)
def fuzz_cmd(trials, seed, prime):
    """Flip one random bit of one random message per trial."""
    report = fuzz(trials, seed, prime)
    flips = report.summary["adversaries"]["bitflip"]
    typed = sum(v for k, v in flips["outcomes"].items() if k and k != "Incomplete")
    for kind, n in flips["outcomes"].items():
        click.echo(f"{kind or 'none'}: {n}")
    click.echo(f"trials {flips['attempts']}, completed {flips['succeeded']}, typed errors {typed}")
    sys.exit(0 if flips["succeeded"] == 0 and typed == flips["attempts"] else 1)


@main.command()
@click.option("--phase", type=click.Choice(PHASES), required=True)
@click.option("--iters", type=click.IntRange(1), default=100, show_default=True)
@click.option("--prime", type=click.Choice(PRIMES), default="default", show_default=True)
@click.option("--json", "as_json", is_flag=True, help="Emit JSON.")
def bench(phase, iters, prime, as_json):
    """Time one protocol phase and count its operations."""
    result = bench_phase(phase, iters, prime)
    if as_json:
        click.echo(json.dumps(result, indent=2, sort_keys=True))
        return
    click.echo(f"{phase}: {iters} iterations, {result['ms_per_iter']:.3f} ms each ({prime} prime)")
    click.echo(render_cost_report(result["cost"]))


@main.command()
@click.option("--n-max", type=click.IntRange(1), default=300, show_default=True,
              help="Largest degree in the composition check.")
def selftest(n_max):
    """Check the fast Chebyshev evaluator against the plain recurrence (p = 251)."""
    results = [semigroup_suite(n_max=n_max), oracle_suite(ChebyParams.test())]
    for r in results:
        click.echo(r.line())
    sys.exit(0 if all(r.ok for r in results) else 1)


if __name__ == "__main__":
    main()
