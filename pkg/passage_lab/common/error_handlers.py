# Copyright 2016, 2022 John J. Rofrano. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
# https://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""
Module: error_handlers

Command line counterpart of Flask's error handlers: each handler turns
one exception family into a JSON error document on stdout and an exit
code.
"""
import functools
import json

import click

from passage_lab import app
from passage_lab.errors import (
    DataValidationError,
    InvariantViolation,
    NumericalError,
    PassageLabError,
)
from . import status

HANDLERS = {}


def errorhandler(exception_type):
    """Registers a handler for an exception family"""

    def register(function):
        HANDLERS[exception_type] = function
        return function

    return register


def dispatch(error: Exception) -> int:
    """Runs the handler of the closest registered base class"""
    for klass in type(error).__mro__:
        if klass in HANDLERS:
            return HANDLERS[klass](error)
    raise error


def handle_errors(function):
    """Wraps a command so lab errors end in their exit code"""

    @functools.wraps(function)
    def wrapper(*args, **kwargs):
        try:
            return function(*args, **kwargs)
        except PassageLabError as error:
            code = dispatch(error)
            click.get_current_context().exit(code)

    return wrapper


def _report(error: PassageLabError, exit_code: int, title: str) -> int:
    message = str(error)
    app.logger.warning(message)
    click.echo(
        json.dumps(
            {"status": exit_code, "error": title, "code": error.code, "message": message},
            sort_keys=True,
        )
    )
    return exit_code


######################################################################
# Error Handlers
######################################################################
@errorhandler(DataValidationError)
def request_validation_error(error):
    """Handles bad input with EXIT_1_CONFIG_ERROR"""
    return _report(error, status.EXIT_1_CONFIG_ERROR, "Invalid Input")


@errorhandler(InvariantViolation)
def invariant_violation(error):
    """Handles failed consistency checks with EXIT_2_INVARIANT_VIOLATION"""
    return _report(error, status.EXIT_2_INVARIANT_VIOLATION, "Invariant Violation")


@errorhandler(NumericalError)
def non_convergence(error):
    """Handles numerical failures with EXIT_3_NON_CONVERGENCE"""
    return _report(error, status.EXIT_3_NON_CONVERGENCE, "Numerical Failure")


@errorhandler(PassageLabError)
def internal_error(error):
    """Anything else from the lab is reported as a numerical failure"""
    app.logger.error(str(error))
    return _report(error, status.EXIT_3_NON_CONVERGENCE, "Internal Error")
