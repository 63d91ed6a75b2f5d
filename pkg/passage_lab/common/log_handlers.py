"""
Log Handlers

This module contains utility functions to set up logging
consistently
"""
import logging
import sys


def init_logging(app, logger_name: str):
    """Set up logging for the command line and the library modules"""
    app.logger.propagate = False
    host_logger = logging.getLogger(logger_name)
    if host_logger is not app.logger and host_logger.handlers:
        app.logger.handlers = host_logger.handlers
    else:
        # replaces Flask's default handler, which follows request streams
        app.logger.handlers = [logging.StreamHandler(sys.stderr)]
    app.logger.setLevel(app.config.get("LOGGING_LEVEL", logging.INFO))
    # Make all log formats consistent
    format_string = "[%(asctime)s] [%(levelname)s] [%(module)s] %(message)s"
    formatter = logging.Formatter(format_string, "%Y-%m-%d %H:%M:%S %z")
    for handler in app.logger.handlers:
        handler.setFormatter(formatter)
    app.logger.info("Logging handler established")
