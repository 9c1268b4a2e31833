# tsms_cli.py
# Command line entry point: simulate | estimate | experiment | rates | probe
import json
import sys

import click
import numpy as np

from criteria import CriterionSpec, population_identity_check
from dataset_io import (dataset_frame, experiment_spec_from_config, load_dataset_csv, parse_config_file,
                        write_dataset_csv, write_experiment_outputs, write_json)
from dgp import (Dataset, ErrorSpec, LinkSpec, MultiDataset, default_theta0, simulate_binary,
                 simulate_multi_index)
from experiments import (empirical_process_probe, first_stage_process_probe, h0_gradient_bound,
                         run_rate_experiment, smoothing_envelope_probe)
from geometry import Direction
from helper_functions import (DatasetFormatError, Stopwatch, TSMSError, ValidationError, format_float, log,
                              make_rng)
from optimizer import OptimizerConfig, estimate
from rates import first_stage_optimal_bandwidth, optimal_bandwidth, regime_table

BANDWIDTH_RULE_NAMES = ('theorem1-optimal', 'first-stage-optimal')


def _float_list(text, name):
    try:
        values = [float(v) for v in text.split(',') if v.strip()]
    except ValueError:
        raise ValidationError(f"--{name} must be a comma-separated list of numbers, got '{text}'")
    if not values:
        raise ValidationError(f"--{name} is empty")
    return values


def _theta0(text, d):
    if text is None:
        return default_theta0(d)
    values = _float_list(text, 'theta0')
    if len(values) != d:
        raise ValidationError(f"--theta0 has {len(values)} entries, expected d={d}")
    return Direction.from_vector(values)


def _resolve_bandwidth(value, data, estimator):
    """ A rule name or a positive number; None for MS. """
    if estimator == 'ms':
        return None
    D = data.J * data.d if isinstance(data, MultiDataset) else data.d
    if value == 'theorem1-optimal':
        return optimal_bandwidth(D, data.n, 2)
    if value == 'first-stage-optimal':
        return first_stage_optimal_bandwidth(D, data.n)
    try:
        b = float(value)
    except ValueError:
        raise ValidationError(f"--bandwidth must be one of {BANDWIDTH_RULE_NAMES} or a positive number, got '{value}'")
    if not b > 0:
        raise ValidationError(f"--bandwidth must be > 0, got {value}")
    return b


def _echo_json(payload):
    click.echo(json.dumps(payload, sort_keys=True))


@click.group()
def cli():
    """ Two-stage maximum score estimation and Monte Carlo checks. """


# --- simulate ---
@cli.command()
@click.option('--n', 'n', type=int, required=True)
@click.option('--d', 'd', type=int, default=2, show_default=True)
@click.option('--seed', type=int, default=0, show_default=True)
@click.option('--error', 'error_family', default='logistic', show_default=True,
              type=click.Choice(['logistic', 'gaussian', 'heteroskedastic-logistic', 'degenerate']))
@click.option('--error-scale', type=float, default=1.0, show_default=True)
@click.option('--error-slope', default=None, help="Comma-separated slope vector (heteroskedastic family).")
@click.option('--J', 'J', type=int, default=1, show_default=True, help="J >= 2 writes multi-index data.")
@click.option('--noise-sd', type=float, default=0.25, show_default=True)
@click.option('--link-scale', type=float, default=1.0, show_default=True)
@click.option('--theta0', default=None, help="Comma-separated direction (default (1,...,1)/sqrt(d)).")
@click.option('--output', type=click.Path(dir_okay=False, writable=True), default=None)
def simulate(n, d, seed, error_family, error_scale, error_slope, J, noise_sd, link_scale, theta0, output):
    """ Write a simulated dataset as CSV. """
    if n < 1:
        raise ValidationError(f"--n must be >= 1, got {n}")
    theta = _theta0(theta0, d)
    rng = make_rng(seed)
    if J >= 2:
        data = simulate_multi_index(n, J, d, theta, LinkSpec(link_scale), noise_sd, rng)
    else:
        slope = tuple(_float_list(error_slope, 'error-slope')) if error_slope else ()
        data = simulate_binary(n, d, theta, ErrorSpec(error_family, error_scale, slope), rng)
    if output:
        write_dataset_csv(data, output)
        log('INFO', f"wrote {data.n} rows to {output}")
    else:
        click.echo(dataset_frame(data).to_csv(index=False, float_format='%.17g', lineterminator='\n'), nl=False)


# --- estimate ---
@cli.command('estimate')
@click.option('--data', 'data_path', type=click.Path(exists=True, dir_okay=False), required=True)
@click.option('--estimator', type=click.Choice(['ms', 'sms', 'tsms', 'tsms-mmi']), default='tsms', show_default=True)
@click.option('--bandwidth', default='theorem1-optimal', show_default=True,
              help="theorem1-optimal, first-stage-optimal, or a positive number.")
@click.option('--split-sample', is_flag=True, help="Fit the first stage on the first half only.")
@click.option('--seed', type=int, default=0, show_default=True)
@click.option('--resolution', type=int, default=None, help="Override the optimizer grid resolution.")
def estimate_command(data_path, estimator, bandwidth, split_sample, seed, resolution):
    """ Estimate θ from a CSV dataset and print the result as JSON. """
    data = load_dataset_csv(data_path)
    if estimator in ('ms', 'sms', 'tsms') and not isinstance(data, Dataset):
        raise ValidationError(f"{estimator} needs a single-index dataset (header y,x1,...,xd)")
    b = _resolve_bandwidth(bandwidth, data, estimator)
    spec = CriterionSpec(estimator, bandwidth=b, split_sample=split_sample)
    cfg = OptimizerConfig.default_for(data.d, **({'resolution': resolution} if resolution else {}))
    result = estimate(data, spec, cfg, make_rng(seed))
    _echo_json({'estimator': estimator, 'n': data.n, 'bandwidth': b, **result.to_dict()})


# --- experiment ---
@cli.command()
@click.option('--config', 'config_path', type=click.Path(exists=True, dir_okay=False), required=True)
@click.option('--json-out', type=click.Path(dir_okay=False, writable=True), required=True)
@click.option('--csv-out', type=click.Path(dir_okay=False, writable=True), required=True)
@click.option('--workers', type=int, default=None, help="Worker processes (default TSMS_THREADS).")
@click.option('--store', is_flag=True, help="Also save the run to DATABASE_URL.")
def experiment(config_path, json_out, csv_out, workers, store):
    """ Run a Monte Carlo experiment described by a key = value config file. """
    spec = experiment_spec_from_config(parse_config_file(config_path))
    result = run_rate_experiment(spec, workers)
    write_experiment_outputs(result, json_out, csv_out)
    summary = {'estimator': spec.estimator, 'slope': result.slope, 'slope_stderr': result.slope_stderr,
               'failures': len(result.failures)}
    if store:
        from results_store import store_experiment_result
        summary['run_id'] = store_experiment_result(result)
    _echo_json(summary)


# --- rates ---
@cli.command()
@click.option('--d', 'd', type=int, required=True)
@click.option('--p', 'p', type=int, default=2, show_default=True)
@click.option('--n', 'n', type=int, required=True)
@click.option('--json', 'as_json', is_flag=True)
def rates(d, p, n, as_json):
    """ Print the regime, rate exponents and bandwidths for (d, p, n). """
    table = regime_table(d, p, n)
    if as_json:
        _echo_json(table)
        return
    for key, value in table.items():
        if isinstance(value, float):
            value = format_float(value)
        click.echo(f"{key}={value}")


# --- probe ---
@cli.command()
@click.option('--kind', type=click.Choice(['envelope', 'process', 'first-stage', 'gradient', 'identity']),
              required=True)
@click.option('--d', 'd', type=int, default=2, show_default=True)
@click.option('--seed', type=int, default=0, show_default=True)
@click.option('--error', 'error_family', default='logistic', show_default=True,
              type=click.Choice(['logistic', 'gaussian']))
@click.option('--error-scale', type=float, default=1.0, show_default=True)
@click.option('--theta0', default=None)
@click.option('--n', 'n', type=int, default=2000, show_default=True)
@click.option('--deltas', default='0.4,0.2,0.1,0.05', show_default=True)
@click.option('--reps', type=int, default=100, show_default=True)
@click.option('--m', 'm', type=int, default=200_000, show_default=True)
@click.option('--weight', type=click.Choice(['h0', 'unit']), default='h0', show_default=True)
@click.option('--bandwidth', type=float, default=None)
@click.option('--data', 'data_path', type=click.Path(exists=True, dir_okay=False), default=None,
              help="Dataset for the identity check (default: 20 simulated points).")
@click.option('--theta', default=None, help="Direction for the identity check.")
@click.option('--output', type=click.Path(dir_okay=False, writable=True), default=None)
def probe(kind, d, seed, error_family, error_scale, theta0, n, deltas, reps, m, weight, bandwidth, data_path,
          theta, output):
    """ Run one of the diagnostic probes and print its report as JSON. """
    watch = Stopwatch()
    if bandwidth is not None and not bandwidth > 0:
        raise ValidationError(f"--bandwidth must be > 0, got {bandwidth}")
    err = ErrorSpec(error_family, error_scale)
    t0 = _theta0(theta0, d)
    rng = make_rng(seed)
    delta_list = _float_list(deltas, 'deltas')
    if kind == 'envelope':
        report = smoothing_envelope_probe(t0, err, delta_list, m, rng)
        report['gradient_bound'] = h0_gradient_bound(t0, err)
    elif kind == 'process':
        report = empirical_process_probe(t0, err, n, delta_list, reps, rng, weight=weight)
    elif kind == 'first-stage':
        report = first_stage_process_probe(t0, err, n, delta_list, reps, rng, bandwidth=bandwidth)
    elif kind == 'gradient':
        report = {'gradient_bound': h0_gradient_bound(t0, err)}
    else:
        data = load_dataset_csv(data_path) if data_path else simulate_binary(20, 2, default_theta0(2), err, rng)
        if not isinstance(data, Dataset):
            raise DatasetFormatError("identity check needs a single-index dataset")
        direction = _theta0(theta, data.d) if theta else default_theta0(data.d)
        b = 0.3 if bandwidth is None else bandwidth
        lhs, rhs = population_identity_check(data, b, direction)
        report = {'lhs': lhs, 'rhs': rhs, 'difference': abs(lhs - rhs), 'bandwidth': b}
    report['kind'] = kind
    report['elapsed_seconds'] = watch.elapsed()
    if output:
        write_json(report, output)
    _echo_json(report)


# --- Entry point ---
def _one_line(message):
    return ' '.join(str(message).split())


def run_cli(argv=None):
    """ Runs the command group and maps failures to exit codes (2 validation, 1 runtime). """
    try:
        result = cli.main(args=argv, prog_name='tsms', standalone_mode=False)
        return result if isinstance(result, int) else 0
    except click.exceptions.UsageError as e:
        if e.ctx is not None:
            click.echo(e.ctx.get_usage(), err=True)
        click.echo(f"usage-error: {_one_line(e.format_message())}", err=True)
        return 2
    except click.exceptions.Abort:
        click.echo("runtime-error: aborted", err=True)
        return 1
    except click.ClickException as e:
        click.echo(f"validation-error: {_one_line(e.format_message())}", err=True)
        return 2
    except ValidationError as e:
        click.echo(f"validation-error: {_one_line(e)}", err=True)
        return 2
    except TSMSError as e:
        click.echo(f"runtime-error: {_one_line(e)}", err=True)
        return 1
    except (OSError, np.linalg.LinAlgError) as e:
        click.echo(f"runtime-error: {_one_line(e)}", err=True)
        return 1
    except Exception as e:
        click.echo(f"runtime-error: {type(e).__name__}: {_one_line(e)}", err=True)
        return 1


if __name__ == "__main__":
    sys.exit(run_cli())
