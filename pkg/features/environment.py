"""
Environment for Behave Testing
"""
import os
import tempfile

DATABASE_URI = os.getenv("DATABASE_URI", "sqlite:///:memory:")


def before_all(context):
    """ Executed once before all tests """
    os.environ["DATABASE_URI"] = DATABASE_URI
    os.environ.pop("PASSAGE_LAB_SEED", None)
    # the app reads its configuration at import time
    from passage_lab import app  # pylint: disable=import-outside-toplevel
    context.app = app
    context.config.setup_logging()


def before_scenario(context, scenario):
    """ Executed before every scenario """
    context.runner = context.app.test_cli_runner()
    context.workspace = tempfile.TemporaryDirectory()  # pylint: disable=consider-using-with
    context.result = None
    context.document = None


def after_scenario(context, scenario):
    """ Executed after every scenario """
    context.workspace.cleanup()
