"""Command-line entry point: ``olfc run|batch|certify|dispatch``."""
from __future__ import annotations

import json
import sys
import warnings

import click

from . import scenario as sc

EXIT_OK, EXIT_INVALID, EXIT_DIVERGED = 0, 1, 2


def _fail(exc: Exception) -> None:
    click.echo(f"error: {exc}", err=True)
    sys.exit(EXIT_INVALID)


@click.group()
def main():
    """Optimal load-frequency control simulations."""


@main.command()
@click.argument("scenario")
@click.option("--out", "out_dir", default="runs", show_default=True, type=click.Path(file_okay=False))
@click.option("--dt", type=float, help="Override the integrator step.")
@click.option("--horizon", type=float, help="Override the simulated horizon in seconds.")
@click.option("--strict", is_flag=True, help="Treat assumption warnings as errors.")
@click.option("--certify-only", is_flag=True, help="Validate and certify without simulating.")
@click.option("--expect-stable", is_flag=True, help="Exit with status 2 if the run diverges.")
def run(scenario, out_dir, dt, horizon, strict, certify_only, expect_stable):
    """Simulate one scenario file (or bundled scenario name)."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sc.ScenarioWarning)
        try:
            report = sc.run(scenario, out_dir, dt=dt, horizon=horizon, strict=strict,
                            certify_only=certify_only)
        except (sc.ScenarioError, FileNotFoundError) as exc:
            _fail(exc)
    for note in report["notices"]:
        click.echo(f"notice: {note}", err=True)
    if certify_only:
        click.echo(json.dumps(report["certify"]["all_hold"]))
        return
    m = report["metrics"]
    if report["diverged"]:
        status = f"diverged at t={report['divergence_time']:g}"
    else:
        status = f"ok  settling={m['settling_time']}  dispatch_error={m['dispatch_error']:.3e}"
    click.echo(f"{report['scenario']}: {status}  report={report['files']['report']}")
    if expect_stable and report["diverged"]:
        sys.exit(EXIT_DIVERGED)


@main.command()
@click.argument("scenarios", nargs=-1, required=True)
@click.option("--out", "out_dir", default="runs", show_default=True, type=click.Path(file_okay=False))
@click.option("--parallelism", "-j", default=1, show_default=True, type=click.IntRange(min=1))
@click.option("--dt", type=float)
@click.option("--horizon", type=float)
@click.option("--strict", is_flag=True)
@click.option("--expect-stable", is_flag=True)
def batch(scenarios, out_dir, parallelism, dt, horizon, strict, expect_stable):
    """Run several scenarios independently and write summary.csv."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sc.ScenarioWarning)
        reports = sc.batch(scenarios, out_dir, parallelism, dt=dt, horizon=horizon, strict=strict)
    errors = diverged = False
    for r in reports:
        if "error" in r:
            click.echo(f"{r['scenario']}: error {r['error']}")
            errors = True
        else:
            click.echo(f"{r['scenario']}: {'diverged' if r['diverged'] else 'ok'}")
            diverged |= r["diverged"]
    code = EXIT_DIVERGED if expect_stable and diverged else EXIT_INVALID if errors else EXIT_OK
    sys.exit(code)


@main.command()
@click.argument("scenario")
@click.option("--json", "as_json", is_flag=True, help="Print the full certificate report as JSON.")
def certify(scenario, as_json):
    """Droop certificate per generator under both readings of a tabulated K."""
    try:
        report = sc.certify(scenario)
    except (sc.ScenarioError, FileNotFoundError) as exc:
        _fail(exc)
    if as_json:
        click.echo(json.dumps(report, indent=2))
        return
    click.echo(f"{report['scenario']} (default reading: {report['default_reading']})")
    for u in report["units"]:
        if u["order"] != 2:
            click.echo(f"  bus {u['bus']}: first-order unit, no certificate needed")
            continue
        for reading, cert in u["readings"].items():
            lo, hi = cert["interval"] if cert["interval"] else (float("nan"), float("nan"))
            verdict = "PASS" if cert["holds"] else "FAIL"
            click.echo(f"  bus {u['bus']} reading={reading:<5} K_inv={cert['K_inv']:.4g} "
                       f"interval=({lo:.4f}, {hi:.4f}) {verdict}")


@main.command()
@click.argument("scenario")
def dispatch(scenario):
    """Closed-form economic dispatch per schedule segment with the brute-force cross-check."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sc.ScenarioWarning)
        try:
            s = sc.load_scenario(scenario)
        except (sc.ScenarioError, FileNotFoundError) as exc:
            _fail(exc)
    click.echo(json.dumps(sc.dispatch_summary(s), indent=2))


if __name__ == "__main__":
    main()
