"""
Main Application Class for the Forgery Detection Tool
"""
import argparse
import logging
import sys

from app.dataset_component import DatasetComponent
from app.evaluation_component import EvaluationComponent
from app.explain_component import ExplainComponent
from app.training_component import TrainingComponent
from forensics.errors import ConfigError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class UsageError(Exception):
    """Command line could not be parsed"""


class ToolArgumentParser(argparse.ArgumentParser):
    """ArgumentParser that raises instead of exiting on bad input"""

    def error(self, message):
        raise UsageError(message)


class ForgeryTool:
    """Main application class for the Forgery Detection Tool"""
    def __init__(self):
        self.parser = ToolArgumentParser(
            prog="forgery_tool",
            description="Open-set facial forgery detection: synthetic benchmark, two-stage training, "
                        "threshold calibration and evaluation protocols",
        )
        self.parser.add_argument("--verbose", action="store_true", help="Log at DEBUG level")
        self.subparsers = self.parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
        self.add_command_components()

    def add_command_components(self):
        """Register the command groups"""
        self.dataset_component = DatasetComponent(self.subparsers, self)
        self.training_component = TrainingComponent(self.subparsers, self)
        self.evaluation_component = EvaluationComponent(self.subparsers, self)
        self.explain_component = ExplainComponent(self.subparsers, self)

    def update_status(self, text):
        """Status lines go to the log"""
        logger.info(text)

    def run(self, argv=None):
        """
        Parse argv and run the selected command.

        Returns:
            Exit code: 0 success, 1 usage or configuration error, 2 runtime failure
        """
        try:
            args = self.parser.parse_args(argv)
        except UsageError as e:
            self.parser.print_usage(sys.stderr)
            logging.error(f"Usage error: {e}")
            return EXIT_USAGE
        if args.verbose:
            logging.getLogger().setLevel(logging.DEBUG)

        try:
            args.handler(args)
        except ConfigError as e:
            logging.error(f"Configuration error: {e}")
            return EXIT_USAGE
        except Exception as e:
            logging.error(f"Command '{args.command}' failed: {e}")
            logger.debug("Traceback", exc_info=True)
            return EXIT_RUNTIME
        return EXIT_OK
