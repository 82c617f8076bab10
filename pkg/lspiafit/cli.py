"""Command-line interface for lspiafit."""

import argparse
import logging
import sys

import numpy as np

from . import __version__
from .config import CLAMPED_UNIFORM, RunConfig, load_config
from .errors import ConfigError, LspiaError, ParseError, SingularAssemblyError, VerificationError
from .fitting import DataSet, assemble, parameterize
from .lspia import CONVERGED, MAX_ITERS, STAGNATED, compute_dvd, fit, initial_control_points
from .oracle import pinv_solution, projector_check, spectral_report
from .pointio import (
    load_points,
    output_path,
    write_control_points,
    write_points,
    write_report,
    write_summary,
    write_trace,
)
from .report import fit_summary_table, show, spectral_table
from .synthetic import FIELDS, KINDS, synthesize
from .validators import point_format, validate_input_file, validate_output_prefix

# Exit codes
EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_MAX_ITERS = 2
EXIT_STAGNATED = 3
EXIT_SINGULAR = 4
EXIT_IO = 5
EXIT_CONFIG = 6

TERMINATION_EXIT_CODES = {
    CONVERGED: EXIT_OK,
    MAX_ITERS: EXIT_MAX_ITERS,
    STAGNATED: EXIT_STAGNATED,
}


def setup_logging(verbose=False, quiet=False, level=None):
    """
    Configure logging based on verbosity flags.

    Args:
        verbose: If True, set logging level to DEBUG
        quiet: If True, set logging level to WARNING
        level: Level name used when neither flag is given (default INFO)
    """
    if verbose:
        level = logging.DEBUG
    elif quiet:
        level = logging.WARNING
    else:
        level = getattr(logging, level or 'INFO')

    logging.basicConfig(
        level=level,
        format='%(levelname)s: %(message)s',
        stream=sys.stderr,
        force=True
    )


def _int_list(text):
    try:
        return [int(v) for v in text.split(',') if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected N[,N,N], got '{text}'")


def _alpha(text):
    if text == 'auto':
        return text
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'auto' or a number, got '{text}'")


def _hole(text):
    try:
        pairs = [part.split(':') for part in text.split(',') if part.strip()]
        return [[float(lo), float(hi)] for lo, hi in pairs]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO:HI[,LO:HI,...], got '{text}'")


def _overrides(args):
    """Collect flag values keyed like the configuration file."""
    names = [
        'basis_dim', 'degree', 'controls', 'param', 'variant', 'alpha', 'max_iters', 'tol_delta',
        'tol_residual_change', 'stall_window', 'empty_group', 'start', 'input', 'input_format',
        'out_prefix', 'seed', 'dense_limit', 'zero_tol', 'tol', 'workers',
    ]
    overrides = {name: getattr(args, name, None) for name in names}
    for flag in ('with_pinv', 'non_interactive'):
        if getattr(args, flag, False):
            overrides[flag] = True
    if getattr(args, 'no_timing', False):
        overrides['trace_timing'] = False
    synth = {
        'kind': getattr(args, 'synth', None),
        'samples': getattr(args, 'samples', None),
        'hole': getattr(args, 'hole', None),
        'cluster_multiplicity': getattr(args, 'multiplicity', None),
        'noise': getattr(args, 'noise', None),
        'field': getattr(args, 'field', None),
        'scatter': True if getattr(args, 'scatter', False) else None,
    }
    if any(v is not None for v in synth.values()):
        overrides['synth'] = synth
    return overrides


def load_data(config: RunConfig) -> DataSet:
    """
    Load or synthesize the run's data and give it parameters.

    Raises:
        OSError: If the input file is missing or unreadable
        ParseError: If the input file is malformed
        ConfigError: If the parameterization does not suit the data
    """
    logger = logging.getLogger(__name__)

    if config.synth is not None:
        data = synthesize(config.synth)
    else:
        is_valid, error_msg = validate_input_file(config.input)
        if not is_valid:
            raise FileNotFoundError(error_msg)
        data = load_points(config.input, config.input_format or point_format(config.input))

    mode = config.param_mode(data.has_params)
    space = config.basis_space()
    logger.debug(f"Parameterizing {data.size} points ({mode})")
    return parameterize(data, mode, space)


def _check_output(config: RunConfig):
    is_valid, error_msg = validate_output_prefix(config.out_prefix)
    if not is_valid:
        raise NotADirectoryError(error_msg)


def _problem_info(problem):
    space = problem.space
    return {
        'basis_dim': space.dim,
        'controls': list(space.counts),
        'degrees': list(space.degrees),
        'size': space.size,
        'samples': problem.data.size,
        'frozen': [int(i) for i in np.flatnonzero(problem.frozen)],
    }


def run_fit(config: RunConfig) -> int:
    """
    Fit control points and write <prefix>.ctrl.csv, <prefix>.trace.csv and <prefix>.summary.json.

    Returns:
        int: Exit code reflecting the termination reason
    """
    logger = logging.getLogger(__name__)
    _check_output(config)

    data = load_data(config)
    problem = assemble(config.basis_space(), data, config.solver.empty_group_policy, config.workers)
    P0 = initial_control_points(problem, config.start)
    result = fit(problem, P0=P0, config=config.solver, non_interactive=config.non_interactive)

    residual = compute_dvd(problem.collocation, problem.Q, result.P_final)
    normal = float(np.max(np.abs(problem.collocation.tdot(residual)), initial=0.0))
    summary = {
        'termination': result.termination,
        'iterations_used': result.iterations_used,
        'final_residual': result.final_residual,
        'final_delta': result.trace[-1].delta_norm,
        'normal_residual': normal,
        'rms_error': result.rms_error,
        'max_error': result.max_error,
        'variant': result.variant,
        'alpha': result.alpha,
        'wall_time': result.wall_time if config.solver.trace_timing else None,
        'start': config.start,
        'problem': _problem_info(problem),
    }

    write_control_points(output_path(config.out_prefix, 'ctrl.csv'), result.P_final)
    write_trace(output_path(config.out_prefix, 'trace.csv'), result.trace)
    write_summary(output_path(config.out_prefix, 'summary.json'), summary)

    show(fit_summary_table(dict(summary, wall_time=result.wall_time)))
    logger.debug(f"Fit finished with termination '{result.termination}'")
    return TERMINATION_EXIT_CODES[result.termination]


def run_diagnose(config: RunConfig) -> int:
    """
    Write a spectral report of the assembled system to <prefix>.report.json.

    With with_pinv set, the pseudo-inverse reference solution is written to
    <prefix>.pinv.csv as well.

    Returns:
        int: 0 when every check passes, 1 otherwise
    """
    logger = logging.getLogger(__name__)
    _check_output(config)

    data = load_data(config)
    problem = assemble(config.basis_space(), data, config.solver.empty_group_policy, config.workers)
    report = spectral_report(problem.collocation, problem.weights, tol=config.tol,
                             zero_tol=config.zero_tol, dense_limit=config.dense_limit)

    projector_error = None
    try:
        projector_check(problem.collocation, tol=config.tol, dense_limit=config.dense_limit)
    except VerificationError as e:
        projector_error = str(e)
        logger.warning(f"Projector check failed: {e}")

    doc = report.to_dict()
    doc['projector_check'] = {'passed': projector_error is None, 'message': projector_error}
    doc['problem'] = _problem_info(problem)
    write_report(output_path(config.out_prefix, 'report.json'), doc)

    if config.with_pinv:
        write_control_points(output_path(config.out_prefix, 'pinv.csv'),
                             pinv_solution(problem.collocation, problem.Q))

    show(spectral_table(report, projector_error))
    return EXIT_OK if report.passed and projector_error is None else EXIT_FAILURE


def run_synth(config: RunConfig) -> int:
    """Write a synthetic data set to <prefix>.points.csv."""
    _check_output(config)
    data = synthesize(config.synth)
    write_points(output_path(config.out_prefix, 'points.csv'), data)
    return EXIT_OK


COMMAND_HANDLERS = {
    'fit': run_fit,
    'diagnose': run_diagnose,
    'synth': run_synth,
}


def _add_data_arguments(parser):
    """Flags shared by every subcommand: data source, basis and output."""
    parser.add_argument(
        '--config',
        metavar='PATH',
        help='Path to a YAML configuration file; flags override its values'
    )
    parser.add_argument(
        '--input',
        metavar='PATH',
        help='Point file (.csv with header x[,y[,z]][,u[,v[,w]]], or .xyz)'
    )
    parser.add_argument(
        '--format',
        dest='input_format',
        choices=['csv', 'xyz'],
        help='Point file format (default: from the file extension)'
    )
    parser.add_argument(
        '--out-prefix',
        metavar='PATH',
        help='Prefix of the output files (default: lspiafit-out)'
    )
    parser.add_argument(
        '--seed',
        type=int,
        metavar='S',
        help='Seed for synthetic data (default: 0)'
    )
    parser.add_argument(
        '--basis-dim',
        type=int,
        choices=[1, 2, 3],
        help='1 for curves, 2 for patches, 3 for solids'
    )
    parser.add_argument(
        '--degree',
        type=_int_list,
        metavar='D[,D,D]',
        help='Degree per direction (default: 3)'
    )
    parser.add_argument(
        '--controls',
        type=_int_list,
        metavar='N[,N,N]',
        help=f'Control points per direction, {CLAMPED_UNIFORM} knots'
    )
    parser.add_argument(
        '--param',
        choices=['chord', 'uniform', 'given'],
        help='Parameterization (default: given if the data carry parameters, else chord)'
    )
    parser.add_argument(
        '--empty-group',
        choices=['freeze', 'strict'],
        help='Control points without data: keep them fixed, or fail (default: freeze)'
    )
    parser.add_argument(
        '--workers',
        type=int,
        metavar='N',
        help='Threads used to evaluate the basis during assembly (default: 1)'
    )

    synth = parser.add_argument_group('synthetic data')
    synth.add_argument(
        '--synth',
        choices=KINDS,
        metavar='KIND',
        help=f'Generate data instead of reading it: {", ".join(KINDS)}'
    )
    synth.add_argument(
        '--samples',
        type=_int_list,
        metavar='N[,N,N]',
        help='Samples per direction (distinct parameters for clustered-params)'
    )
    synth.add_argument(
        '--hole',
        type=_hole,
        metavar='LO:HI[,...]',
        help='Closed parameter box removed by hole-punched (default: 0.3:0.7 per direction)'
    )
    synth.add_argument(
        '--multiplicity',
        type=int,
        metavar='M',
        help='Repeats per parameter for clustered-params (default: 5)'
    )
    synth.add_argument(
        '--noise',
        type=float,
        help='Gaussian noise amplitude added to the points (default: 0)'
    )
    synth.add_argument(
        '--field',
        choices=FIELDS,
        help='Vector field sampled by the generator (default: wave)'
    )
    synth.add_argument(
        '--scatter',
        action='store_true',
        help='Random parameter positions instead of a regular grid'
    )


def build_parser():
    """Create the argument parser."""
    parser = argparse.ArgumentParser(
        prog='lspiafit',
        description='lspiafit - least-squares B-spline fitting by progressive iterative approximation',
        formatter_class=argparse.RawDescriptionHelpFormatter
    )

    # Global flags
    parser.add_argument(
        '-v', '--verbose',
        action='store_true',
        help='Enable verbose output (DEBUG level logging)'
    )
    parser.add_argument(
        '-q', '--quiet',
        action='store_true',
        help='Enable quiet output (WARNING level logging)'
    )
    parser.add_argument(
        '--version',
        action='version',
        version=f'lspiafit {__version__}'
    )

    subparsers = parser.add_subparsers(dest='command', help='Available commands', required=False)

    # Fit subcommand
    fit_parser = subparsers.add_parser(
        'fit',
        help='Fit control points to data and write control points, trace and summary'
    )
    _add_data_arguments(fit_parser)
    fit_parser.add_argument(
        '--variant',
        choices=['weighted', 'uniform'],
        help='Weighted (per-control normalization) or uniform step (default: weighted)'
    )
    fit_parser.add_argument(
        '--alpha',
        type=_alpha,
        help="Uniform step size, or 'auto' for 1/(1.01 lambda_max) (default: auto)"
    )
    fit_parser.add_argument(
        '--tol-delta',
        type=float,
        help='Stop when the largest control update is at most this (default: 1e-10)'
    )
    fit_parser.add_argument(
        '--tol-residual-change',
        type=float,
        help='Relative residual change counted as a stall (default: 1e-12)'
    )
    fit_parser.add_argument(
        '--stall-window',
        type=int,
        help='Stalled steps before stopping as stagnated (default: 50)'
    )
    fit_parser.add_argument(
        '--max-iters',
        type=int,
        help='Iteration limit (default: 100000)'
    )
    fit_parser.add_argument(
        '--start',
        choices=['zero', 'subset'],
        help='Initial control points: zeros, or data points nearest the Greville abscissae (default: zero)'
    )
    fit_parser.add_argument(
        '--non-interactive',
        action='store_true',
        help='Use logging instead of progress bar (useful for scripts)'
    )
    fit_parser.add_argument(
        '--no-timing',
        action='store_true',
        help='Leave wall_ms empty in the trace so repeated runs produce identical files'
    )

    # Diagnose subcommand
    diagnose_parser = subparsers.add_parser(
        'diagnose',
        help='Check the spectrum of the assembled system against the convergence theory'
    )
    _add_data_arguments(diagnose_parser)
    diagnose_parser.add_argument(
        '--with-pinv',
        action='store_true',
        help='Also write the pseudo-inverse reference solution'
    )
    diagnose_parser.add_argument(
        '--dense-limit',
        type=int,
        metavar='N',
        help='Largest number of control points to analyse densely (default: 2000)'
    )
    diagnose_parser.add_argument(
        '--tol',
        type=float,
        help='Tolerance of the spectral checks (default: 1e-8)'
    )
    diagnose_parser.add_argument(
        '--zero-tol',
        type=float,
        help='Eigenvalues at or below this count as zero (default: 1e-8 * lambda_max)'
    )

    # Synth subcommand
    synth_parser = subparsers.add_parser(
        'synth',
        help='Write a synthetic point set to <prefix>.points.csv'
    )
    _add_data_arguments(synth_parser)

    return parser


def main(argv=None):
    """Main entry point for the CLI."""
    parser = build_parser()
    args = parser.parse_args(argv)

    setup_logging(verbose=args.verbose, quiet=args.quiet)
    logger = logging.getLogger(__name__)

    if args.command not in COMMAND_HANDLERS:
        parser.error("A command is required. Use 'fit', 'diagnose' or 'synth'.")

    try:
        config = load_config(args.config, _overrides(args), command=args.command)
        if not (args.verbose or args.quiet):
            setup_logging(level=config.log_level)
        return COMMAND_HANDLERS[args.command](config)
    except ConfigError as e:
        logger.error(f"Invalid configuration: {e}")
        return EXIT_CONFIG
    except SingularAssemblyError as e:
        logger.error(f"Assembly failed: {e}")
        logger.error("Use --empty-group freeze to keep these control points fixed")
        return EXIT_SINGULAR
    except ParseError as e:
        logger.error(f"Cannot parse input: {e}")
        return EXIT_IO
    except OSError as e:
        logger.error(f"I/O error: {e}")
        return EXIT_IO
    except LspiaError as e:
        logger.error(f"{type(e).__name__}: {e}")
        logger.debug("Details", exc_info=True)
        return EXIT_FAILURE
    except Exception as e:
        logger.error(f"Unexpected error: {e}")
        logger.debug("Details", exc_info=True)
        return EXIT_FAILURE


if __name__ == '__main__':
    sys.exit(main())
