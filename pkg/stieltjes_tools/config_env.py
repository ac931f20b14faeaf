"""
Configures the toolkit's .env settings.
Asks user a series of questions to prepare the .env configuration file.
"""

import logging
import os
from dataclasses import dataclass
from typing import Dict, List, Optional

from stieltjes_tools.errors import ConfigError
from stieltjes_tools.utils import get_env_setting


DEFAULT_ENV_CONTENTS = """
# Logging
# Default level of the stieltjes_tools loggers: DEBUG, INFO, WARNING or ERROR.
# The --verbose flag of every command overrides it with DEBUG.
STIELTJES_LOG_LEVEL="INFO"

# Simulation
# Number of worker threads used by simulate --sweep.
STIELTJES_SWEEP_WORKERS="4"
# Time step in hours used when a scenario file does not set STEP_HOURS.
STIELTJES_DEFAULT_STEP_HOURS="0.1"

# Output
# Directory receiving CSV and derivator files given by relative paths.
STIELTJES_OUTPUT_DIR="."
"""

_LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


@dataclass(frozen=True)
class Settings:
    """
    Typed global settings with their defaults.
    """

    log_level: int = logging.INFO
    sweep_workers: int = 4
    default_step_hours: float = 0.1
    output_dir: str = "."

    def output_path(self, path: str) -> str:
        """
        Resolves a relative output path against the output directory.
        """
        if os.path.isabs(path):
            return path
        return os.path.join(self.output_dir, path)


def _log_level(raw: str) -> int:
    name = raw.strip().upper()
    if name not in _LOG_LEVELS:
        raise ValueError(name)
    return getattr(logging, name)


def get_settings(env_vars: Optional[Dict[str, Optional[str]]]) -> Settings:
    """
    Reads the settings from the .env dictionary.

    :param env_vars: The environment variables containing static configuration.
    :returns: The settings; absent keys take their defaults.
    """
    settings = Settings(
        log_level=get_env_setting(env_vars, "STIELTJES_LOG_LEVEL", logging.INFO, _log_level),
        sweep_workers=get_env_setting(env_vars, "STIELTJES_SWEEP_WORKERS", 4, int),
        default_step_hours=get_env_setting(
            env_vars, "STIELTJES_DEFAULT_STEP_HOURS", 0.1, float
        ),
        output_dir=get_env_setting(env_vars, "STIELTJES_OUTPUT_DIR", "."),
    )
    if settings.sweep_workers < 1:
        raise ConfigError("STIELTJES_SWEEP_WORKERS must be at least 1")
    if not settings.default_step_hours > 0.0:
        raise ConfigError("STIELTJES_DEFAULT_STEP_HOURS must be positive")
    return settings


def ask_yes_no_question(question: str, default: str) -> bool:
    """
    Asks user a yes/no question.

    :param question: The question to ask the user.
    :param default: The default response value.
    :returns: The user response converted to a boolean.
    """
    while True:
        answer = input(f"{question} (y/n) [{default}]: ").strip().lower()
        if not answer:
            answer = default
        if answer in ["yes", "y"]:
            return True
        if answer in ["no", "n"]:
            return False
        print("Invalid input. Please enter yes/no or y/n.")


def ask_string_question(question: str, default=None, choices=None):
    """
    Asks user a string question.

    :param question: The question to ask the user.
    :param default: The default response value.
    :param choices: Optional accepted answers.
    :returns: The user response.
    """
    while True:
        answer = input(f"{question} [{default}]: ").strip()
        if not answer:
            if default is not None:
                return default
            print("Invalid input. Please enter a non-empty string.")
        elif choices is not None and answer not in choices:
            print(f"Invalid input. Please enter one of: {', '.join(choices)}.")
        else:
            return answer


def set_env_value(lines: List[str], key: str, value: str) -> List[str]:
    """
    Replaces the line assigning key, or appends one.

    :param lines: The .env file lines.
    :param key: The setting name.
    :param value: The new value.
    :returns: The updated lines.
    """
    updated = list(lines)
    for i, line in enumerate(updated):
        if line.strip().startswith(key):
            updated[i] = f'{key}="{value}"\n'
            return updated
    if updated and not updated[-1].endswith("\n"):
        updated[-1] += "\n"
    updated.append(f'{key}="{value}"\n')
    return updated


def main():
    """
    Main function for the tool.
    """
    print(
        "This tool will ask a series of questions to configure settings stored in the .env file."
    )

    file_path = ".env"
    if not os.path.exists(file_path):
        with open(file_path, "w", encoding="utf-8") as file:
            file.write(DEFAULT_ENV_CONTENTS.strip() + "\n")
        print("\nCreated a default .env file.")

    with open(file_path, encoding="utf-8") as file:
        lines = file.readlines()

    if ask_yes_no_question("\nDo you want to change the log level?", "n"):
        level = ask_string_question(
            "Please enter the log level", "INFO", choices=_LOG_LEVELS
        )
        lines = set_env_value(lines, "STIELTJES_LOG_LEVEL", level)

    if ask_yes_no_question("\nDo you want to configure simulation defaults?", "n"):
        workers = ask_string_question("Number of sweep worker threads", "4")
        step = ask_string_question("Default time step in hours", "0.1")
        lines = set_env_value(lines, "STIELTJES_SWEEP_WORKERS", workers)
        lines = set_env_value(lines, "STIELTJES_DEFAULT_STEP_HOURS", step)

    if ask_yes_no_question("\nDo you want to configure the output directory?", "n"):
        output_dir = ask_string_question("Please enter the output directory", ".")
        lines = set_env_value(lines, "STIELTJES_OUTPUT_DIR", output_dir)

    with open(file_path, "w", encoding="utf-8") as file:
        file.writelines(lines)

    print("\nThe .env file has been updated.")


if __name__ == "__main__":
    main()
