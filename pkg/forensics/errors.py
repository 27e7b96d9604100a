"""
Exception types raised across the forensics package.
"""


class DatasetError(ValueError):
    """Dataset layout, manifest or split cannot be built"""


class ProtocolError(ValueError):
    """Evaluation protocol violates its contract (e.g. leaked unknown samples)"""


class ConfigError(ValueError):
    """Run configuration is malformed or references missing paths"""


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss"""

    def __init__(self, message, last_good_checkpoint=None):
        super().__init__(message)
        self.last_good_checkpoint = last_good_checkpoint
