"""
Base class for command groups of the forgery tool
"""
import logging

from forensics.config import load_config, with_overrides

logger = logging.getLogger(__name__)

STATUS_LEVELS = {
    "error": logging.ERROR,
    "failed": logging.ERROR,
    "warning": logging.WARNING,
    "progress": logging.DEBUG,
}


class CommandComponent:
    """Base class for command components"""
    def __init__(self, subparsers, app):
        """
        Initialize the command component

        Args:
            subparsers: argparse subparsers action the commands are added to
            app: Main application instance (ForgeryTool)
        """
        self.subparsers = subparsers
        self.app = app
        self.setup_parser()

    def setup_parser(self):
        """Register subcommands - to be implemented by subclasses"""
        raise NotImplementedError("Subclasses must implement setup_parser()")

    def add_command(self, name, handler, help_text):
        parser = self.subparsers.add_parser(name, help=help_text, description=help_text)
        parser.set_defaults(handler=handler)
        return parser

    @staticmethod
    def add_config_arguments(parser, with_out=True):
        parser.add_argument("--config", required=True, help="YAML run configuration")
        parser.add_argument("--seed", type=int, help="Root seed (overrides the config)")
        if with_out:
            parser.add_argument("--out", help="Output directory (overrides the config)")

    def load_run_config(self, args):
        """Config file with the command-line overrides applied"""
        config = load_config(args.config)
        return with_overrides(
            config,
            seed=getattr(args, "seed", None),
            output_dir=getattr(args, "out", None),
            alpha=getattr(args, "alpha", None),
            lambda_percentile=getattr(args, "lambda_percentile", None),
        )

    def update_status(self, text):
        """Report a status line through the application"""
        self.app.update_status(text)

    def progress_callback(self, status, message):
        """Route library progress callbacks into logging"""
        logger.log(STATUS_LEVELS.get(status, logging.INFO), "[%s] %s", status, message)
