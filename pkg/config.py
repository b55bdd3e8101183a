"""Configuration settings for HomLab"""
import os

basedir = os.path.abspath(os.path.dirname(__file__))


def _env_list(name, default):
    raw = os.environ.get(name) or default
    return [int(item) for item in raw.split(',') if item.strip()]


class Config:
    """Base configuration"""

    # Logging
    HOMLAB_LOG_LEVEL = os.environ.get('HOMLAB_LOG_LEVEL') or 'WARNING'
    LOG_JSON_FORMAT = os.environ.get('LOG_JSON_FORMAT', 'false').lower() == 'true'
    LOG_FILE = os.environ.get('LOG_FILE')
    LOG_MAX_BYTES = int(os.environ.get('LOG_MAX_BYTES') or '10485760')  # 10MB
    LOG_BACKUP_COUNT = int(os.environ.get('LOG_BACKUP_COUNT') or '5')

    # Linear solves
    HOMLAB_SOLVER_TOL = float(os.environ.get('HOMLAB_SOLVER_TOL') or '1e-10')
    HOMLAB_SOLVER_MAX_ITERATIONS = int(os.environ.get('HOMLAB_SOLVER_MAX_ITERATIONS') or '8')
    HOMLAB_COMPATIBILITY_TOL = float(os.environ.get('HOMLAB_COMPATIBILITY_TOL') or '1e-8')

    # Homogenization
    HOMLAB_CLASSIFY_THRESHOLD = float(os.environ.get('HOMLAB_CLASSIFY_THRESHOLD') or '1e-6')
    HOMLAB_SPD_MIN_EIGENVALUE = float(os.environ.get('HOMLAB_SPD_MIN_EIGENVALUE') or '1e-8')
    HOMLAB_DRIFT_TOL = float(os.environ.get('HOMLAB_DRIFT_TOL') or '1e-8')
    HOMLAB_GRID_N = int(os.environ.get('HOMLAB_GRID_N') or '64')

    # Rate studies
    HOMLAB_CELLS_PER_PERIOD = int(os.environ.get('HOMLAB_CELLS_PER_PERIOD') or '16')
    HOMLAB_EPS_LADDER = _env_list('HOMLAB_EPS_LADDER', '4,8,16,32')
    HOMLAB_MAX_BOX_UNKNOWNS = int(os.environ.get('HOMLAB_MAX_BOX_UNKNOWNS') or '2000000')
    HOMLAB_RATE_WORKERS = int(os.environ.get('HOMLAB_RATE_WORKERS') or '1')
    HOMLAB_GOOD_SLOPE_MIN = float(os.environ.get('HOMLAB_GOOD_SLOPE_MIN') or '1.8')
    HOMLAB_BAD_SLOPE_RANGE = (
        float(os.environ.get('HOMLAB_BAD_SLOPE_LOW') or '0.8'),
        float(os.environ.get('HOMLAB_BAD_SLOPE_HIGH') or '1.2'),
    )
    HOMLAB_CORRECTED_SLOPE_MIN = float(os.environ.get('HOMLAB_CORRECTED_SLOPE_MIN') or '1.7')

    @classmethod
    def validate_numerical_config(cls):
        """Validate settings that would make every solve fail"""
        errors = []

        if cls.HOMLAB_SOLVER_TOL <= 0:
            errors.append("HOMLAB_SOLVER_TOL must be positive")

        if cls.HOMLAB_SOLVER_MAX_ITERATIONS < 1:
            errors.append("HOMLAB_SOLVER_MAX_ITERATIONS must be at least 1")

        if cls.HOMLAB_GRID_N < 4 or cls.HOMLAB_GRID_N % 2:
            errors.append("HOMLAB_GRID_N must be an even integer >= 4")

        if cls.HOMLAB_CELLS_PER_PERIOD < 4 or cls.HOMLAB_CELLS_PER_PERIOD % 2:
            errors.append("HOMLAB_CELLS_PER_PERIOD must be an even integer >= 4")

        if any(p < 1 for p in cls.HOMLAB_EPS_LADDER):
            errors.append("HOMLAB_EPS_LADDER entries must be positive integers")

        if errors:
            raise ValueError("Numerical configuration errors: " + "; ".join(errors))

        return True

    @classmethod
    def init_app(cls, settings):
        """Hook for per-environment setup after the settings are resolved"""
        cls.validate_numerical_config()


class DevelopmentConfig(Config):
    """Development configuration"""
    DEBUG = True
    HOMLAB_LOG_LEVEL = os.environ.get('HOMLAB_LOG_LEVEL') or 'INFO'


class TestingConfig(Config):
    """Testing configuration"""
    TESTING = True
    HOMLAB_LOG_LEVEL = os.environ.get('HOMLAB_LOG_LEVEL') or 'WARNING'
    LOG_FILE = None
    HOMLAB_RATE_WORKERS = 1


class ProductionConfig(Config):
    """Batch configuration for long studies"""
    LOG_JSON_FORMAT = os.environ.get('LOG_JSON_FORMAT', 'true').lower() == 'true'
    LOG_FILE = os.environ.get('LOG_FILE') or os.path.join(basedir, 'logs', 'homlab.log')


config = {
    'development': DevelopmentConfig,
    'testing': TestingConfig,
    'production': ProductionConfig,
    'default': Config,
}
