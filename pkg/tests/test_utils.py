"""Tests for validation rules, serialization, errors and logging"""
import json
import logging
import math

import numpy as np
import pytest

from homlab.models import Classification
from homlab.utils.enhanced_logging import (
    JSONFormatter,
    StructuredLogFilter,
    correlation_context,
    get_logger,
    log_operation,
    new_run_id,
)
from homlab.utils.error_handling import (
    ConfigurationError,
    ErrorCategory,
    HomlabError,
    NumericalError,
    SmallnessError,
    ValidationError,
    error_context,
    handle_linalg_errors,
)
from homlab.utils.serialization import csv_text, dump_json, format_float
from homlab.utils.validation import (
    ChoiceRule,
    FloatRule,
    IntegerRule,
    PathRule,
    ReciprocalLadderRule,
    validate_fields,
)


class TestValidationRules:
    """Test individual rules"""

    @pytest.mark.parametrize('value, valid', [
        (4, True), (64, True), (2, False), (5, False), (4.0, True), (4.5, False),
        (True, False), ('8', False), (None, False),
    ])
    def test_even_grid(self, value, valid):
        assert IntegerRule('N', min_value=4, even=True).validate(value) is valid

    def test_float_rule(self):
        rule = FloatRule('tol')
        assert rule.validate(1e-10)
        assert not rule.validate(0.0)
        assert not rule.validate(float('nan'))
        assert FloatRule('center', inclusive=True).validate(0.0)

    def test_choice_rule(self):
        rule = ChoiceRule('dim', [1, 2, 3])
        assert rule.validate(3)
        assert not rule.validate(4)
        assert '1, 2, 3' in rule.get_error_message()

    @pytest.mark.parametrize('ladder, valid', [
        ([4, 8, 16], True),
        ([4, 8], False),
        ([8, 4, 16], False),
        ([4, 4, 8], False),
        ([0, 4, 8], False),
        ('4,8,16', False),
    ])
    def test_reciprocal_ladder(self, ladder, valid):
        assert ReciprocalLadderRule('eps', min_length=3).validate(ladder) is valid

    def test_real_ladder(self):
        rule = ReciprocalLadderRule('s_values', min_length=3, integer=False)
        assert rule.validate([1.5, 10.0, 100.0])
        assert not rule.validate([10.0, 1.5, 100.0])

    def test_path_rule(self, tmp_path):
        assert PathRule('output').validate(str(tmp_path / 'result.json'))
        assert not PathRule('output').validate(str(tmp_path / 'missing' / 'result.json'))
        assert not PathRule('output', must_exist=True).validate(str(tmp_path / 'result.json'))


class TestValidateFields:
    """Test the combined check"""

    def test_passes_data_through(self):
        data = {'N': 16, 'tol': 1e-10}
        assert validate_fields(data, [IntegerRule('N', even=True), FloatRule('tol')]) is data

    def test_lists_every_failure(self):
        """Test all bad fields appear in one error"""
        rules = [IntegerRule('N', min_value=4, even=True), FloatRule('tol'), ChoiceRule('dim', [1, 2, 3])]
        with pytest.raises(ValidationError) as excinfo:
            validate_fields({'N': 7, 'tol': -1.0, 'dim': 2}, rules)
        errors = excinfo.value.details['errors']
        assert sorted(errors) == ['N', 'tol']
        assert excinfo.value.exit_code == 1

    def test_required_and_optional(self):
        with pytest.raises(ValidationError):
            validate_fields({}, [FloatRule('tol')])
        assert validate_fields({}, [FloatRule('tol', required=False)]) == {}


class TestSerialization:
    """Test the deterministic writers"""

    @pytest.mark.parametrize('value, text', [
        (1.0, '1.0'),
        (0.5, '0.5'),
        (-2.0, '-2.0'),
    ])
    def test_format_float(self, value, text):
        assert format_float(value) == text

    def test_float_round_trip(self):
        """Test 17 significant digits give the float back"""
        value = 1.0 / 3.0
        assert float(format_float(value)) == value

    def test_sorted_keys_and_nan(self):
        document = dump_json({'b': float('nan'), 'a': [1, 2.5, math.inf]}, indent=None)
        assert document == '{"a": [1, 2.5, null], "b": null}'

    def test_numpy_enum_and_dataclass(self):
        """Test arrays, numpy scalars and enums are converted"""
        payload = {'c': np.zeros((1, 2)), 'n': np.int64(3), 'verdict': Classification.C_BAD}
        parsed = json.loads(dump_json(payload))
        assert parsed == {'c': [[0.0, 0.0]], 'n': 3, 'verdict': Classification.C_BAD.value}

    def test_to_dict_is_used(self):
        class Report:
            def to_dict(self):
                return {'residual': 1e-12}

        assert json.loads(dump_json({'report': Report()})) == {'report': {'residual': 1e-12}}

    def test_identical_output(self):
        payload = {'x': [0.1, 0.2], 'y': {'z': 1}}
        assert dump_json(payload) == dump_json(dict(reversed(list(payload.items()))))

    def test_unknown_type(self):
        with pytest.raises(TypeError):
            dump_json({'value': object()})

    def test_csv(self):
        text = csv_text(['eps', 'e0'], [[0.25, 1e-3], [0.125, None]])
        assert text == 'eps,e0\n0.25,0.001\n0.125,\n'


class TestErrors:
    """Test the error hierarchy"""

    def test_exit_codes(self):
        assert ValidationError('bad').exit_code == 1
        assert ConfigurationError('bad').exit_code == 1
        assert HomlabError('bad', category=ErrorCategory.INPUT_OUTPUT).exit_code == 1
        assert NumericalError('bad').exit_code == 2
        assert HomlabError('bad').exit_code == 2

    def test_to_dict(self):
        error = SmallnessError('too large', parameter='s', value=1.0, max_admissible=0.25)
        payload = error.to_dict()['error']
        assert payload['type'] == 'SmallnessError'
        assert payload['category'] == 'numerical'
        assert payload['details'] == {'parameter': 's', 'value': 1.0, 'max_admissible': 0.25}
        assert payload['context'] is None

    def test_context_attached(self):
        """Test error_context records the operation on a HomlabError"""
        with pytest.raises(ValidationError) as excinfo:
            with error_context('rate_point', ErrorCategory.NUMERICAL, eps=0.25):
                raise ValidationError('bad eps', field='eps')
        assert excinfo.value.context.operation == 'rate_point'
        assert excinfo.value.context.additional_data == {'eps': 0.25}
        assert excinfo.value.category is ErrorCategory.VALIDATION

    def test_context_wraps_foreign_errors(self):
        with pytest.raises(HomlabError) as excinfo:
            with error_context('rate_point', ErrorCategory.NUMERICAL):
                raise ZeroDivisionError('division by zero')
        assert excinfo.value.category is ErrorCategory.NUMERICAL
        assert isinstance(excinfo.value.original_exception, ZeroDivisionError)

    def test_linalg_failures(self):
        @handle_linalg_errors
        def factorize():
            raise np.linalg.LinAlgError('Singular matrix')

        with pytest.raises(NumericalError) as excinfo:
            factorize()
        assert not excinfo.value.recoverable


class TestLogging:
    """Test structured logging"""

    def test_details_are_attached(self, caplog):
        caplog.set_level(logging.INFO, logger='homlab_tests.logging')
        get_logger('homlab_tests.logging').info('Measure solved', residual=1e-13, category='numerics')
        record = caplog.records[-1]
        assert record.details == {'residual': 1e-13}
        assert record.category == 'numerics'

    def test_disabled_level_is_skipped(self, caplog):
        caplog.set_level(logging.WARNING, logger='homlab_tests.quiet')
        get_logger('homlab_tests.quiet').debug('hidden')
        assert not [r for r in caplog.records if r.name == 'homlab_tests.quiet']

    def test_operation_context(self, caplog):
        """Test the operation is set inside and restored after"""
        caplog.set_level(logging.DEBUG, logger='homlab_tests.operation')
        logger = get_logger('homlab_tests.operation')
        previous = correlation_context.operation
        with logger.operation_context('cell_problems', pairs=3):
            assert correlation_context.operation == 'cell_problems'
        assert correlation_context.operation == previous
        completed = caplog.records[-1]
        assert completed.operation_type == 'complete'
        assert completed.operation_duration >= 0

    def test_json_formatter(self):
        """Test one parseable line with the run id"""
        run_id = new_run_id()
        record = logging.makeLogRecord({'name': 'homlab.test', 'msg': 'Solved %s', 'args': ('r',),
                                        'levelname': 'INFO', 'levelno': logging.INFO,
                                        'details': {'iterations': 2}})
        StructuredLogFilter().filter(record)
        entry = json.loads(JSONFormatter().format(record))
        assert entry['message'] == 'Solved r'
        assert entry['correlation_id'] == run_id
        assert entry['details'] == {'iterations': 2}
        correlation_context.correlation_id = None

    def test_log_operation_decorator(self, caplog):
        """Test the decorator category reaches the start and completion records"""
        caplog.set_level(logging.DEBUG, logger=__name__)

        @log_operation('assemble', category='numerics')
        def assemble(size):
            return size * 2

        assert assemble(3) == 6
        records = [r for r in caplog.records if r.name == __name__]
        assert [r.operation_type for r in records] == ['start', 'complete']
        assert {r.category for r in records} == {'numerics'}
        assert records[-1].details == {}

    def test_log_operation_failure(self, caplog):
        caplog.set_level(logging.DEBUG, logger=__name__)

        @log_operation('assemble')
        def assemble():
            raise ValueError('singular')

        with pytest.raises(ValueError):
            assemble()
        failed = [r for r in caplog.records if r.name == __name__][-1]
        assert failed.operation_type == 'error'
        assert failed.details == {'error_type': 'ValueError'}


class TestConfig:
    """Test configuration profiles"""

    def test_testing_profile(self):
        from homlab import create_context, current_settings, resolve_setting

        settings = create_context('testing')
        assert settings['TESTING'] is True
        assert settings['CONFIG_NAME'] == 'testing'
        assert current_settings() is settings
        assert resolve_setting('HOMLAB_GRID_N') == settings['HOMLAB_GRID_N']
        assert resolve_setting('HOMLAB_GRID_N', 16) == 16

    def test_defaults(self):
        from config import Config

        assert Config.HOMLAB_SOLVER_TOL == pytest.approx(1e-10)
        assert Config.HOMLAB_EPS_LADDER == [4, 8, 16, 32]
        assert Config.validate_numerical_config()

    def test_odd_grid_is_rejected(self, monkeypatch):
        from config import TestingConfig

        monkeypatch.setattr(TestingConfig, 'HOMLAB_GRID_N', 15)
        with pytest.raises(ValueError, match='HOMLAB_GRID_N'):
            TestingConfig.validate_numerical_config()
