#!/usr/bin/env python3
"""
Main application module.
Command line entry point for chain analysis, heavy-traffic sweeps and verification.
"""

import json
from typing import Optional

import click
import numpy as np
import pandas as pd
from loguru import logger

from config.logging_config import setup_logging
from src.errors import ConfigInvalid, HeavyTrafficError, InvariantViolation, IoError, UnstableRun
from src.harness.config import default_config, load_config, parse_config
from src.harness.sweep import SweepResult, run_sweep, write_csv
from src.harness.verify import verify as run_verify
from src.markov.autocov import autocovariance
from src.markov.chain import load_chain, stationary_distribution
from src.markov.mixing import fit_mixing_envelope, mixing_profile

EXIT_INVARIANT = 1
EXIT_CONFIG = 2


def _exit_code(exc: HeavyTrafficError) -> int:
    if isinstance(exc, (InvariantViolation, UnstableRun)):
        return EXIT_INVARIANT
    return EXIT_CONFIG


def _abort(ctx: click.Context, exc: HeavyTrafficError):
    click.echo(f"Error: {exc}", err=True)
    ctx.exit(_exit_code(exc))


@click.group()
@click.option('--log-level', default=None, help='Overrides HTQ_LOG_LEVEL')
@click.option('--log-file', default=None, help='Overrides HTQ_LOG_FILE; empty disables the file sink')
@click.pass_context
def cli(ctx, log_level, log_file):
    """
    Heavy-traffic analysis of queues with Markov-modulated arrivals.
    """
    setup_logging(level=log_level, log_file=log_file)
    ctx.ensure_object(dict)


@cli.command('analyze-chain')
@click.argument('chain_file', type=click.Path())
@click.option('--lags', default=20, show_default=True, type=click.IntRange(min=0), help='Largest lag in the gamma table')
@click.option('--horizon', default=100, show_default=True, type=click.IntRange(min=3),
              help='Steps in the mixing profile, at least 3 for the envelope fit')
@click.option('--gamma-csv', default=None, help='Write (t, gamma_t) rows here')
@click.option('--profile-csv', default=None, help='Write (m, tv, envelope) rows here')
@click.pass_context
def analyze_chain(ctx, chain_file, lags, horizon, gamma_csv, profile_csv):
    """Print pi, lambda, gamma(t), sigma^2 and the fitted (C, alpha) of a chain."""
    try:
        chain = load_chain(chain_file)
        stationary = stationary_distribution(chain)
        profile = mixing_profile(chain, horizon)
        envelope = fit_mixing_envelope(profile)
        summary = autocovariance(chain, t_max=lags, envelope=envelope)
    except HeavyTrafficError as exc:
        _abort(ctx, exc)
        return

    click.echo("pi:")
    for state, p in zip(chain.states, stationary.probabilities):
        click.echo(f"  {state}: {p:.12g}")
    click.echo(f"lambda: {stationary.mean_emission:.12g}")
    click.echo(f"sigma^2: {summary.sigma_sq:.12g} (truncated at lag {summary.truncation_lag}, tail <= {summary.truncation_tail:.2g})")
    if envelope.exact_mixing:
        click.echo("envelope: exact mixing in one step")
    else:
        click.echo(f"envelope: C={envelope.c_const:.6g}, alpha={envelope.alpha:.6g}")

    gamma = pd.DataFrame({"t": np.arange(lags + 1), "gamma_t": summary.gamma})
    click.echo(gamma.to_string(index=False))

    try:
        if gamma_csv:
            write_csv(gamma, gamma_csv)
        if profile_csv:
            steps = np.arange(1, horizon + 1)
            write_csv(pd.DataFrame({"m": steps, "tv": profile,
                                    "envelope": [envelope.bound(int(m)) for m in steps]}), profile_csv)
    except IoError as exc:
        _abort(ctx, exc)


def _print_summary(result: SweepResult):
    click.echo(result.frame().to_string(index=False, na_rep="NA"))
    last = min(result.records, key=lambda r: r.epsilon)
    click.echo(f"ratio at eps={last.epsilon}: {last.ratio:.4f}")
    click.echo(f"extrapolated ratio (eps -> 0): {result.extrapolated_ratio:.4f}")
    if not result.monotone:
        click.echo("note: gap to the prediction did not shrink monotonically along the grid", err=True)


def _sweep(ctx: click.Context, model: str, config_file: Optional[str], out: Optional[str], print_config: bool):
    if print_config:
        click.echo(json.dumps(default_config(model), indent=2))
        return
    try:
        config = load_config(config_file) if config_file else parse_config({"model": model})
        if config.model != model:
            raise ConfigInvalid([f"model: expected {model!r}, got {config.model!r}"])
        result = run_sweep(config, out=out)
    except HeavyTrafficError as exc:
        logger.error(f"{model} sweep failed: {exc}")
        _abort(ctx, exc)
        return
    _print_summary(result)


@cli.command('ssq-sweep')
@click.option('--config', 'config_file', default=None, type=click.Path(), help='JSON experiment configuration')
@click.option('--out', default=None, help='CSV output path (overrides the config)')
@click.option('--print-config', is_flag=True, help='Print the default configuration and exit')
@click.pass_context
def ssq_sweep(ctx, config_file, out, print_config):
    """Single-server heavy-traffic sweep."""
    _sweep(ctx, "ssq", config_file, out, print_config)


@cli.command('switch-sweep')
@click.option('--config', 'config_file', default=None, type=click.Path(), help='JSON experiment configuration')
@click.option('--out', default=None, help='CSV output path (overrides the config)')
@click.option('--print-config', is_flag=True, help='Print the default configuration and exit')
@click.pass_context
def switch_sweep(ctx, config_file, out, print_config):
    """Input-queued switch heavy-traffic sweep."""
    _sweep(ctx, "switch", config_file, out, print_config)


@cli.command()
@click.option('--full', is_flag=True, help='Add the simulation checks')
@click.option('--seed', default=0, show_default=True, help='Root seed of the randomised checks')
@click.pass_context
def verify(ctx, full, seed):
    """Run the invariant suite and report each check."""
    report = run_verify("full" if full else "fast", seed=seed)
    for line in report.lines():
        click.echo(line)
    if not report.passed:
        click.echo(f"{len(report.failures)} check(s) failed: {', '.join(report.failures)}", err=True)
        ctx.exit(EXIT_INVARIANT)
    click.echo(f"all {len(report.results)} checks passed")


if __name__ == '__main__':
    cli(obj={})
