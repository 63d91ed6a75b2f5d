######################################################################
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
######################################################################

"""
Package: passage_lab

Boundary-crossing exponents of self-similar Gaussian processes
This module creates and configures the Flask app that owns the
configuration, logging, run archive and the ``flask lab`` commands
"""
import sys
from flask import Flask
from passage_lab import config
from passage_lab.common import log_handlers, status

__version__ = "1.0.0"

# NOTE: Do not change the order of this code
# The Flask app must be created
# BEFORE you import modules that depend on it !!!

# Create the Flask app
app = Flask(__name__)  # pylint: disable=invalid-name

# Load Configurations
app.config.from_object(config)

# Dependencies require we import the commands AFTER the Flask app is created
# pylint: disable=wrong-import-position, wrong-import-order, cyclic-import
from passage_lab import models  # noqa: F401, E402
from passage_lab.common import error_handlers, cli_commands  # noqa: F401, E402

# Set up logging for the command line
log_handlers.init_logging(app, "passage_lab")

app.logger.info(70 * "*")
app.logger.info(f"  P A S S A G E   L A B   {__version__}  ".center(70, "*"))
app.logger.info(70 * "*")

try:
    models.init_db(app)  # make our sqlalchemy tables
except Exception as error:  # pylint: disable=broad-except
    app.logger.critical("%s: Cannot continue", error)
    sys.exit(status.EXIT_1_CONFIG_ERROR)

app.logger.info("Lab initialized!")
