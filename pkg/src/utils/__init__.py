"""
Utility modules for the entanglement rate toolkit.

This package contains utility functions for logging, validation
and settings loading used throughout the application.
"""

from .logger import setup_logger
from .validators import validate_settings
from .settings import load_settings

__version__ = "1.0.0"

__all__ = ['setup_logger', 'validate_settings', 'load_settings', '__version__']
