"""Tests for the command-line interface, validators and console tables."""

import json
import logging

import numpy as np
import pytest
from numpy.testing import assert_allclose
from rich.console import Console

from lspiafit import oracle
from lspiafit.cli import (
    EXIT_CONFIG,
    EXIT_FAILURE,
    EXIT_IO,
    EXIT_MAX_ITERS,
    EXIT_OK,
    EXIT_SINGULAR,
    EXIT_STAGNATED,
    build_parser,
    main,
    setup_logging,
)
from lspiafit.fitting import assemble
from lspiafit.pointio import load_control_points, load_points
from lspiafit.report import fit_summary_table, show, spectral_table
from lspiafit.validators import point_format, validate_input_file, validate_output_prefix

CLUSTERED = ['--synth', 'clustered-params', '--samples', '8', '--multiplicity', '5',
             '--noise', '0.05', '--seed', '3', '--controls', '10']
HOLE_PATCH = ['--synth', 'hole-punched', '--samples', '31,31', '--hole', '0:0.21,0:0.21',
              '--field', 'wave', '--noise', '0.01', '--seed', '5', '--controls', '8,8']


@pytest.fixture(autouse=True)
def restore_logging():
    """main() reconfigures the root logger; put it back afterwards."""
    root = logging.getLogger()
    level, handlers = root.level, root.handlers[:]
    yield
    root.handlers[:] = handlers
    root.setLevel(level)


def prefix(tmp_path, name='run'):
    return str(tmp_path / name)


def read_json(path):
    with open(path) as f:
        return json.load(f)


class TestFit:
    """Test the fit command."""

    def test_uniform_clustered_fit(self, tmp_path, clustered_problem):
        out = prefix(tmp_path)
        code = main(['fit'] + CLUSTERED + ['--variant', 'uniform', '--non-interactive', '--out-prefix', out])
        assert code == EXIT_OK

        summary = read_json(out + '.summary.json')
        assert summary['termination'] == 'converged'
        assert summary['variant'] == 'uniform'
        assert summary['alpha'] > 0
        assert summary['problem']['size'] == 10
        assert summary['problem']['samples'] == 40
        assert summary['final_delta'] <= 1e-10

        P = load_control_points(out + '.ctrl.csv')
        expected = oracle.pinv_solution(clustered_problem.collocation, clustered_problem.Q)
        assert_allclose(P, expected, atol=1e-6)

        lines = (tmp_path / 'run.trace.csv').read_text().splitlines()
        assert lines[0] == 'iter,residual_norm,delta_norm,wall_ms'
        assert len(lines) == summary['iterations_used'] + 2

    def test_strict_hole_exits_singular(self, tmp_path):
        code = main(['fit'] + HOLE_PATCH + ['--empty-group', 'strict', '--out-prefix', prefix(tmp_path)])
        assert code == EXIT_SINGULAR
        assert not (tmp_path / 'run.ctrl.csv').exists()

    def test_alpha_with_weighted_is_config_error(self, tmp_path):
        code = main(['fit'] + CLUSTERED + ['--variant', 'weighted', '--alpha', '0.5',
                                          '--out-prefix', prefix(tmp_path)])
        assert code == EXIT_CONFIG

    def test_too_few_controls_is_config_error(self, tmp_path):
        code = main(['fit', '--synth', 'curve-samples', '--controls', '2', '--out-prefix', prefix(tmp_path)])
        assert code == EXIT_CONFIG

    def test_missing_input(self, tmp_path):
        code = main(['fit', '--input', str(tmp_path / 'missing.csv'), '--out-prefix', prefix(tmp_path)])
        assert code == EXIT_IO

    def test_malformed_input(self, tmp_path):
        path = tmp_path / 'bad.csv'
        path.write_text("x,y,z\n0,0,0\n1,1\n")
        code = main(['fit', '--input', str(path), '--controls', '4', '--out-prefix', prefix(tmp_path)])
        assert code == EXIT_IO

    def test_output_prefix_is_directory(self, tmp_path):
        code = main(['fit'] + CLUSTERED + ['--out-prefix', str(tmp_path)])
        assert code == EXIT_IO

    def test_max_iters_exit_code(self, tmp_path):
        code = main(['fit'] + CLUSTERED + ['--max-iters', '3', '--non-interactive',
                                          '--out-prefix', prefix(tmp_path)])
        assert code == EXIT_MAX_ITERS
        assert read_json(prefix(tmp_path) + '.summary.json')['iterations_used'] == 3

    def test_stagnation_exit_code(self, tmp_path):
        code = main(['fit', '--synth', 'curve-samples', '--samples', '61', '--noise', '0.02',
                     '--controls', '8', '--tol-delta', '1e-300', '--stall-window', '5',
                     '--non-interactive', '--out-prefix', prefix(tmp_path)])
        assert code == EXIT_STAGNATED

    def test_runs_without_timing_are_byte_identical(self, tmp_path):
        args = ['fit'] + CLUSTERED + ['--max-iters', '200', '--no-timing', '--non-interactive']
        main(args + ['--out-prefix', prefix(tmp_path, 'a')])
        main(args + ['--out-prefix', prefix(tmp_path, 'b')])
        for suffix in ('ctrl.csv', 'trace.csv', 'summary.json'):
            first = (tmp_path / f'a.{suffix}').read_bytes()
            assert first == (tmp_path / f'b.{suffix}').read_bytes()
        assert read_json(prefix(tmp_path, 'a') + '.summary.json')['wall_time'] is None
        assert (tmp_path / 'a.trace.csv').read_text().splitlines()[1].endswith(',')

    def test_fit_from_file_with_config(self, tmp_path):
        points = prefix(tmp_path, 'grid')
        assert main(['synth', '--synth', 'grid-samples', '--samples', '12,12', '--field', 'sphere',
                     '--out-prefix', points]) == EXIT_OK
        config = tmp_path / 'fit.yml'
        config.write_text("controls: [5, 5]\nstart: subset\nnon_interactive: true\nlog_level: WARNING\n")
        out = prefix(tmp_path, 'fit')
        code = main(['fit', '--config', str(config), '--input', points + '.points.csv', '--out-prefix', out])
        assert code == EXIT_OK
        summary = read_json(out + '.summary.json')
        assert summary['start'] == 'subset'
        assert summary['problem']['controls'] == [5, 5]
        assert summary['normal_residual'] <= 1e-8

    def test_missing_config_file(self, tmp_path):
        code = main(['fit'] + CLUSTERED + ['--config', str(tmp_path / 'none.yml')])
        assert code == EXIT_IO


class TestDiagnose:
    """Test the diagnose command."""

    def test_clustered_report(self, tmp_path):
        out = prefix(tmp_path)
        code = main(['diagnose'] + CLUSTERED + ['--with-pinv', '--out-prefix', out])
        assert code == EXIT_OK
        report = read_json(out + '.report.json')
        assert report['order'] == 10
        assert report['rank'] == 8
        assert report['n0'] == 2
        assert report['flags'] == {'real_01': True, 'zero_count': True, 'rank_match': True}
        assert report['projector_check']['passed'] is True
        assert load_control_points(out + '.pinv.csv').shape == (10, 3)

    def test_hole_patch_reports_frozen(self, tmp_path):
        out = prefix(tmp_path)
        main(['diagnose'] + HOLE_PATCH + ['--out-prefix', out])
        report = read_json(out + '.report.json')
        assert report['n0'] >= 1
        assert 0 in report['problem']['frozen']

    def test_dense_limit(self, tmp_path):
        code = main(['diagnose'] + CLUSTERED + ['--dense-limit', '5', '--out-prefix', prefix(tmp_path)])
        assert code == EXIT_FAILURE

    def test_failed_check_exit_code(self, tmp_path):
        code = main(['diagnose'] + CLUSTERED + ['--tol', '1e-30', '--out-prefix', prefix(tmp_path)])
        assert code == EXIT_FAILURE


class TestSynth:
    """Test the synth command."""

    def test_writes_points(self, tmp_path):
        out = prefix(tmp_path)
        assert main(['synth', '--synth', 'solid-samples', '--samples', '4', '--out-prefix', out]) == EXIT_OK
        data = load_points(out + '.points.csv')
        assert data.size == 64
        assert data.params.shape == (64, 3)

    def test_synth_then_assemble_matches_generator(self, tmp_path, hole_problem):
        out = prefix(tmp_path)
        assert main(['synth'] + HOLE_PATCH + ['--out-prefix', out]) == EXIT_OK
        data = load_points(out + '.points.csv')
        assert_allclose(data.points, hole_problem.data.points)
        rebuilt = assemble(hole_problem.space, data)
        assert np.array_equal(rebuilt.frozen, hole_problem.frozen)


class TestParser:
    """Test argument parsing."""

    def test_command_required(self):
        with pytest.raises(SystemExit):
            main([])

    def test_hole_and_lists(self):
        args = build_parser().parse_args(['fit', '--hole', '0:0.5,0.2:0.4', '--controls', '6,6',
                                          '--alpha', 'auto'])
        assert args.hole == [[0.0, 0.5], [0.2, 0.4]]
        assert args.controls == [6, 6]
        assert args.alpha == 'auto'

    def test_bad_alpha(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(['fit', '--alpha', 'fast'])

    def test_diagnose_has_no_solver_flags(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(['diagnose', '--variant', 'uniform'])

    @pytest.mark.parametrize("flags, level", [
        ({'verbose': True}, logging.DEBUG),
        ({'quiet': True}, logging.WARNING),
        ({'level': 'ERROR'}, logging.ERROR),
        ({}, logging.INFO),
    ])
    def test_setup_logging(self, flags, level):
        setup_logging(**flags)
        assert logging.getLogger().level == level


class TestValidators:
    """Test path validation."""

    def test_input_file(self, tmp_path):
        good = tmp_path / 'cloud.xyz'
        good.write_text("0 0 0\n")
        assert validate_input_file(str(good)) == (True, None)
        assert point_format(str(good)) == 'xyz'

    def test_input_missing_or_unsupported(self, tmp_path):
        ok, msg = validate_input_file(str(tmp_path / 'nope.csv'))
        assert not ok and "does not exist" in msg
        other = tmp_path / 'mesh.obj'
        other.write_text("v 0 0 0\n")
        ok, msg = validate_input_file(str(other))
        assert not ok and "Unsupported" in msg
        ok, msg = validate_input_file(str(tmp_path))
        assert not ok and "not a file" in msg

    def test_output_prefix(self, tmp_path):
        assert validate_output_prefix(str(tmp_path / 'run')) == (True, None)
        assert not validate_output_prefix(str(tmp_path / 'missing' / 'run'))[0]
        assert not validate_output_prefix(str(tmp_path))[0]
        assert not validate_output_prefix('')[0]


class TestTables:
    """Test console tables."""

    def test_fit_summary(self):
        summary = {
            'termination': 'max_iters', 'iterations_used': 12, 'final_residual': 0.5, 'final_delta': 0.1,
            'rms_error': 0.01, 'max_error': 0.02, 'normal_residual': 1e-3, 'variant': 'uniform',
            'alpha': 0.25, 'wall_time': 0.5,
            'problem': {'size': 10, 'controls': [10], 'samples': 40, 'frozen': [3]},
        }
        console = Console(record=True, width=120)
        show(fit_summary_table(summary), console)
        text = console.export_text()
        assert "MAX_ITERS" in text
        assert "Frozen controls" in text

    def test_spectral(self, clustered_problem):
        report = oracle.spectral_report(clustered_problem.collocation)
        console = Console(record=True, width=120)
        show(spectral_table(report, "projector trace 7 differs from rank 8"), console)
        text = console.export_text()
        assert "Rank deficiency n0" in text
        assert "projector trace" in text
