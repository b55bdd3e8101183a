"""Tests for the homlab command line"""
import json

import pytest

from homlab.cli import main
from homlab.models import SCHEMA_VERSION


def document(result):
    assert result.exit_code == 0, result.stderr
    return json.loads(result.stdout)


def diagnostic(result):
    """The single JSON line written to stderr on failure"""
    lines = [line for line in result.stderr.splitlines() if line.startswith('{')]
    assert lines, result.stderr
    return json.loads(lines[-1])


class TestClassify:
    """Test the classify command"""

    def test_identity_is_good(self, invoke):
        payload = document(invoke('classify', '--spec', 'identity', '--n', '2', '--N', '16'))
        assert payload['schema_version'] == SCHEMA_VERSION
        assert payload['command'] == 'classify'
        assert payload['result']['verdict'] == 'c-good'
        assert payload['result']['max_abs_c'] <= 1e-6
        assert payload['run_config']['spec']['variant'] == 'identity'
        assert payload['run_config']['N'] == 16

    def test_output_is_deterministic(self, invoke):
        """Test identical runs give byte-identical documents"""
        args = ('classify', '--spec', 'separable', '--N', '16')
        first = invoke(*args)
        second = invoke(*args)
        assert first.exit_code == 0
        assert first.stdout == second.stdout

    def test_prop31_is_bad_with_prediction(self, invoke):
        """Test computed and predicted c^{11}_1 side by side"""
        payload = document(invoke('classify', '--spec', 'prop31', '--N', '32'))
        result = payload['result']
        assert result['verdict'] == 'c-bad'
        assert result['comparison']['index'] == [1, 1, 1]
        assert result['comparison']['relative_error'] < 0.05
        assert result['construction']['s'] > 0

    def test_smallness_violation_exits_two(self, invoke):
        """Test an inadmissible s is a numerical failure with the admissible bound"""
        result = invoke('classify', '--spec', 'prop31', '--alpha',
                        'exp(0.5*sin(2*pi*y1)*sin(2*pi*y2))', '--s', '0.05', '--N', '32')
        assert result.exit_code == 2
        error = diagnostic(result)['error']
        assert error['type'] == 'SmallnessError'
        assert error['category'] == 'numerical'
        assert 0 < error['details']['max_admissible'] < 0.05

    def test_csv(self, invoke):
        result = invoke('classify', '--spec', 'identity', '--N', '8', '--format', 'csv')
        assert result.exit_code == 0
        lines = result.stdout.strip().splitlines()
        assert lines[0] == 'k,l,j,c'
        assert len(lines) == 1 + 8

    def test_inline_json_spec(self, invoke):
        spec = json.dumps({'variant': 'expression', 'dim': 2,
                           'params': {'entries': {'a11': '2', 'a22': '1+0.5*cos(2*pi*y1)'}}})
        payload = document(invoke('classify', '--spec', spec, '--N', '16'))
        assert payload['result']['verdict'] == 'c-good'


class TestValidationFailures:
    """Test exit code 1 with a JSON diagnostic"""

    def test_missing_spec(self, invoke):
        result = invoke('classify', '--N', '16')
        assert result.exit_code == 1
        assert diagnostic(result)['error']['category'] == 'validation'
        assert result.stdout == ''

    def test_odd_grid(self, invoke):
        result = invoke('classify', '--spec', 'identity', '--N', '15')
        assert result.exit_code == 1

    def test_unknown_family(self, invoke):
        result = invoke('classify', '--spec', 'no_such_family')
        assert result.exit_code == 1

    def test_unknown_identifier(self, invoke):
        """Test an expression naming an unknown variable"""
        result = invoke('gallery', '--spec', 'scalar', '--param', 'a=1+0.5*sin(2*pi*z)', '--N', '8')
        assert result.exit_code == 1
        error = diagnostic(result)['error']
        assert error['type'] == 'UnknownIdentifierError'
        assert error['details']['name'] == 'z'

    def test_eps_not_reciprocal(self, invoke):
        """Test eps = 0.3 is refused before any solve"""
        result = invoke('rates', '--spec', 'identity', '--eps', '0.3,0.125,0.0625')
        assert result.exit_code == 1
        assert diagnostic(result)['error']['type'] == 'DivisibilityError'

    def test_box_too_large(self, invoke):
        result = invoke('rates', '--spec', 'identity', '--eps', '4,8,4096')
        assert result.exit_code == 1
        assert 'drop 1/4096' in diagnostic(result)['error']['message']

    def test_bad_option_type(self, invoke):
        result = invoke('classify', '--spec', 'identity', '--N', 'many')
        assert result.exit_code == 1
        assert diagnostic(result)['error']['category'] == 'validation'


class TestNumericalFailures:
    """Test exit code 2"""

    def test_indefinite_coefficient(self, invoke):
        spec = json.dumps({'variant': 'expression',
                           'params': {'entries': {'a11': '1', 'a12': '2', 'a22': '1'}}})
        result = invoke('effective', '--spec', spec, '--N', '8')
        assert result.exit_code == 2
        error = diagnostic(result)['error']
        assert error['type'] == 'SPDViolationError'
        assert error['details']['min_eigenvalue'] == pytest.approx(-1.0)


class TestEffectiveAndCell:
    """Test the effective and cell commands"""

    def test_closed_form_measure(self, invoke):
        payload = document(invoke('effective', '--spec', 'scalar', '--N', '32'))
        assert payload['result']['closed_form_error'] < 1e-10
        assert payload['result']['drift_norm'] < 1e-8

    def test_effective_csv(self, invoke):
        result = invoke('effective', '--spec', 'identity', '--N', '8', '--format', 'csv')
        lines = result.stdout.strip().splitlines()
        assert lines[0] == 'y1,y2,r,b1,b2'
        assert len(lines) == 1 + 64

    def test_cell_pair(self, invoke):
        spec = json.dumps({'variant': 'expression', 'params': {'entries': {
            'a11': '1.5+0.3*sin(2*pi*y1)', 'a12': '0.2*cos(2*pi*(y1-y2))', 'a22': '1.2'}}})
        payload = document(invoke('cell', '--spec', spec, '--pair', '1,2', '--N', '16'))
        result = payload['result']
        assert result['pair'] == [1, 2]
        assert result['abar_kl'] == pytest.approx(result['abar'][0][1])
        assert payload['run_config']['pair'] == [1, 2]

    def test_cell_pair_out_of_range(self, invoke):
        result = invoke('cell', '--spec', 'identity', '--pair', '1,3', '--N', '8')
        assert result.exit_code == 1


class TestRatesAndAsymptotics:
    """Test the study commands"""

    def test_rates_csv_with_summary(self, invoke, tmp_path):
        summary = tmp_path / 'summary.json'
        result = invoke('rates', '--spec', 'identity', '--eps', '2,4,8', '--cells-per-period', '4',
                        '--format', 'csv', '--summary', str(summary))
        assert result.exit_code == 0, result.stderr
        lines = result.stdout.strip().splitlines()
        assert lines[0] == 'eps,e0,e1,local_slope_e0,local_slope_e1'
        assert len(lines) == 4
        payload = json.loads(summary.read_text())
        assert payload['result']['expected'] == 'second_order'
        assert payload['result']['passed'] is True
        assert payload['run_config']['eps'] == [2, 4, 8]

    def test_eps_as_fractions(self, invoke):
        payload = document(invoke('rates', '--spec', 'identity', '--eps', '1/2,1/4,1/8',
                                  '--cells-per-period', '4', '--data', 'cubic:1,2,2'))
        assert payload['run_config']['eps'] == [2, 4, 8]
        assert payload['run_config']['data'] == [1, 2, 2]

    def test_asymptotics(self, invoke):
        result = invoke('asymptotics', '--a1', '1', '--a2', '1', '--N', '8', '--format', 'csv')
        assert result.exit_code == 0, result.stderr
        lines = result.stdout.strip().splitlines()
        assert lines[0] == 's,l2_distance'
        assert len(lines) == 4

    def test_asymptotics_s_below_one(self, invoke):
        result = invoke('asymptotics', '--s-values', '0.5,2,3', '--N', '8')
        assert result.exit_code == 1


class TestGallery:
    """Test the gallery command"""

    def test_list(self, invoke):
        payload = document(invoke('gallery', '--list'))
        families = {family['variant']: family for family in payload['result']['families']}
        assert families['prop31_bad']['alias'] == 'prop31'
        assert 'alpha' in families['prop31_bad']['defaults']

    def test_thm16_reports_distance(self, invoke):
        payload = document(invoke('gallery', '--spec', 'thm16', '--N', '16'))
        result = payload['result']
        assert result['min_eigenvalue'] > 0
        assert result['distance_to_base'] > 0
        assert result['construction']['component'] == 1

    def test_gallery_csv(self, invoke):
        result = invoke('gallery', '--spec', 'separable', '--N', '4', '--format', 'csv')
        lines = result.stdout.strip().splitlines()
        assert lines[0] == 'y1,y2,a11,a12,a22'
        assert len(lines) == 1 + 16


class TestConfigFiles:
    """Test --config and output files"""

    def test_config_file_with_flag_override(self, invoke, tmp_path):
        path = tmp_path / 'run.yaml'
        path.write_text('command: classify\nspec: separable\nN: 8\n')
        payload = document(invoke('classify', '--config', str(path), '--N', '16'))
        assert payload['run_config']['N'] == 16
        assert payload['run_config']['spec']['variant'] == 'diagonal_separable'

    def test_config_for_another_command(self, invoke, tmp_path):
        path = tmp_path / 'run.yaml'
        path.write_text('command: rates\nspec: identity\n')
        result = invoke('classify', '--config', str(path))
        assert result.exit_code == 1
        assert diagnostic(result)['error']['category'] == 'configuration'

    def test_unknown_config_key(self, invoke, tmp_path):
        path = tmp_path / 'run.json'
        path.write_text(json.dumps({'spec': 'identity', 'resolution': 16}))
        result = invoke('classify', '--config', str(path))
        assert result.exit_code == 1

    def test_missing_config_file(self, invoke, tmp_path):
        result = invoke('classify', '--config', str(tmp_path / 'absent.yaml'))
        assert result.exit_code == 1

    def test_output_file(self, invoke, tmp_path):
        target = tmp_path / 'result.json'
        result = invoke('classify', '--spec', 'identity', '--N', '8', '--output', str(target))
        assert result.exit_code == 0
        assert result.stdout == ''
        assert json.loads(target.read_text())['result']['verdict'] == 'c-good'


class TestMain:
    """Test the exit-code entry point"""

    def test_success(self, capsys):
        assert main(['--env', 'testing', 'classify', '--spec', 'identity', '--N', '8']) == 0
        assert json.loads(capsys.readouterr().out)['result']['verdict'] == 'c-good'

    def test_validation_failure(self, capsys):
        assert main(['--env', 'testing', 'classify', '--N', '8']) == 1
        assert 'error' in json.loads(capsys.readouterr().err.strip().splitlines()[-1])

    def test_bad_profile(self, capsys):
        assert main(['--env', 'nowhere', 'classify']) == 1

    def test_numerical_failure(self, capsys):
        spec = json.dumps({'variant': 'expression',
                           'params': {'entries': {'a11': '1', 'a12': '2', 'a22': '1'}}})
        assert main(['--env', 'testing', 'effective', '--spec', spec, '--N', '8']) == 2
