"""
Common Stieltjes toolkit code
"""

import logging
import os
from typing import Any, Callable, Dict, Optional

import numpy as np
import pandas as pd

from stieltjes_tools.errors import ConfigError, NonFiniteValue


_LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def get_default_logger(name: str) -> logging.Logger:
    """
    Returns a logger writing to stderr with the package format.
    Calling it repeatedly for the same name does not duplicate handlers.

    :param name: The logger name, usually the module __name__.
    :returns: The configured logger.
    """
    logger = logging.getLogger(name)
    if not logger.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(_LOG_FORMAT))
        logger.addHandler(handler)
        logger.propagate = False
    return logger


_LOG = get_default_logger(__name__)
_LOG.setLevel(logging.INFO)


def set_package_log_level(level: int):
    """
    Sets the level of every logger created for the package.

    :param level: The logging level, e.g. logging.DEBUG.
    """
    for name, logger in logging.root.manager.loggerDict.items():
        if name.startswith("stieltjes_tools") and isinstance(logger, logging.Logger):
            logger.setLevel(level)


def get_env_setting(
    env_vars: Optional[Dict[str, Optional[str]]],
    env_var_name: str,
    default: Any,
    cast: Callable[[str], Any] = str,
) -> Any:
    """
    Reads a typed setting from the .env dictionary.

    :param env_vars: The environment variable dictionary, possibly None.
    :param env_var_name: The setting name.
    :param default: The value returned when the setting is absent or empty.
    :param cast: The conversion applied to the raw string.
    :returns: The setting value.
    """
    if not env_vars or not env_vars.get(env_var_name):
        return default
    raw = env_vars[env_var_name]
    try:
        return cast(raw)
    except ValueError as e:
        raise ConfigError(
            f"Invalid value for the {env_var_name} .env variable: {raw!r}"
        ) from e


def read_text_file(path: str) -> str:
    """
    Reads a whole UTF-8 text file.

    :param path: The file path.
    :returns: The file contents.
    """
    _LOG.debug("Reading file: %s", path)
    with open(path, encoding="utf-8") as file:
        content = file.read()
    _LOG.debug("Characters read: %d", len(content))
    return content


def write_text_file(path: str, content: str):
    """
    Writes a UTF-8 text file, creating parent directories.

    :param path: The file path.
    :param content: The text to write.
    """
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8") as file:
        file.write(content)
    _LOG.debug("Wrote %d characters to %s", len(content), path)


def write_frame_csv(frame: pd.DataFrame, path: str):
    """
    Writes a data frame as CSV without the index.
    Floats are written with full precision so the output is reproducible.

    :param frame: The frame to write.
    :param path: The output path.
    """
    write_text_file(path, frame.to_csv(index=False, lineterminator="\n"))


def ensure_finite(values: Any, what: str) -> np.ndarray:
    """
    Converts values to a float array and checks every entry is finite.

    :param values: Scalar or array-like.
    :param what: Description used in the error message.
    :returns: The values as a float array.
    """
    arr = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteValue(f"Non-finite value encountered in {what}")
    return arr
