"""HomLab: periodic homogenization of non-divergence form elliptic operators"""
import logging
from typing import Any, Dict, Optional

__version__ = '1.0.0'

_settings: Optional[Dict[str, Any]] = None


def create_context(config_name: str = 'default') -> Dict[str, Any]:
    """Context factory: resolve the configuration and install logging"""
    from config import config
    from homlab.utils.enhanced_logging import install_handlers

    global _settings

    config_class = config[config_name]
    settings = {key: getattr(config_class, key) for key in dir(config_class) if key.isupper()}
    settings['CONFIG_NAME'] = config_name
    config_class.init_app(settings)

    install_handlers(logging.getLogger('homlab'), settings)
    _settings = settings
    return settings


def current_settings() -> Dict[str, Any]:
    """Settings of the active context; a default context is created on first use"""
    if _settings is None:
        return create_context('default')
    return _settings


def resolve_setting(name: str, value: Any = None) -> Any:
    """Explicit argument wins, otherwise the configured value"""
    if value is not None:
        return value
    return current_settings()[name]
