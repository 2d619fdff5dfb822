"""Exception hierarchy shared by every module.

Each class carries the process exit code the CLI maps it to
(2 config, 3 data, 4 numeric failure).
"""

from __future__ import annotations


class MvFusionError(Exception):
    exit_code = 3


class ConfigError(MvFusionError):
    exit_code = 2


class ParseError(MvFusionError):
    pass


class DimensionError(MvFusionError):
    pass


class DataError(MvFusionError):
    pass


class LabelError(MvFusionError):
    pass


class EmptyError(MvFusionError):
    pass


class RangeError(MvFusionError):
    pass


class IoError(MvFusionError):
    pass


class UnfittedError(MvFusionError):
    pass


class DegenerateError(MvFusionError):
    pass


class SingularError(MvFusionError):
    exit_code = 4


class NumericError(MvFusionError):
    exit_code = 4


def annotate(err: MvFusionError, context: str) -> MvFusionError:
    """Return a copy of ``err`` (same class) whose message is prefixed by ``context``."""
    new = type(err)(f"{context}: {err}")
    new.__cause__ = err
    return new
