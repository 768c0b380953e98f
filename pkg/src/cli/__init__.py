"""Command-line interface"""

from .app import COMMANDS, build_parser, dispatch, flag_overrides, main

__all__ = ['COMMANDS', 'build_parser', 'dispatch', 'flag_overrides', 'main']
