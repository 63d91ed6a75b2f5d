"""
Common utilities package
"""
from .log_handlers import init_logging
