"""Utility modules"""

from .config_manager import ConfigManager, RunConfig, load_config, parse_config_text
from .output import OutputWriter, format_value, read_csv_header

__all__ = ['ConfigManager', 'RunConfig', 'load_config', 'parse_config_text',
           'OutputWriter', 'format_value', 'read_csv_header']
