"""Test configuration and fixtures for HomLab"""
import numpy as np
import pytest
from click.testing import CliRunner

from homlab import create_context
from homlab.cli import cli
from homlab.gallery.specs import CoefficientSpec, realize
from homlab.torus.fields import PeriodicGrid, SymMatrixField


@pytest.fixture(scope='session', autouse=True)
def context():
    """Testing configuration for every library call"""
    return create_context('testing')


@pytest.fixture
def grid16():
    return PeriodicGrid(2, 16)


@pytest.fixture
def grid32():
    return PeriodicGrid(2, 32)


@pytest.fixture
def grid64():
    return PeriodicGrid(2, 64)


@pytest.fixture
def diagonal_coefficient(grid16):
    """Smooth diagonal matrix depending on both variables"""
    y1, y2 = grid16.coordinates()
    return SymMatrixField.from_arrays(grid16, {
        (0, 0): 1.0 + 0.3 * np.sin(2 * np.pi * (y1 + y2)),
        (1, 1): 1.0 + 0.4 * np.cos(2 * np.pi * y1) * np.sin(2 * np.pi * y2),
    })


@pytest.fixture
def full_coefficient(grid16):
    """Smooth matrix with an off-diagonal entry"""
    y1, y2 = grid16.coordinates()
    return SymMatrixField.from_arrays(grid16, {
        (0, 0): 1.5 + 0.3 * np.sin(2 * np.pi * y1),
        (0, 1): 0.2 * np.cos(2 * np.pi * (y1 - y2)),
        (1, 1): 1.2 + 0.4 * np.cos(2 * np.pi * y2),
    })


@pytest.fixture
def prop31_spec():
    return CoefficientSpec.named('prop31')


@pytest.fixture
def scalar_coefficient(grid32):
    return realize(CoefficientSpec.named('scalar'), grid32)


@pytest.fixture
def runner():
    """CLI runner with standard error kept apart from the result stream"""
    return CliRunner(mix_stderr=False)


@pytest.fixture
def invoke(runner):
    """Run a homlab command under the testing configuration"""
    def run(*args):
        return runner.invoke(cli, ['--env', 'testing', *args])
    return run
