"""Gaussian-conditioning basis functions for rough elliptic operators.

Configs are the same JSON documents the ``bayeshom`` command line tool reads;
pass them as strings, or use :func:`load` for a path.
"""

import json
from pathlib import Path

from ._core import (
    EXIT_CONFIG,
    EXIT_INTERNAL,
    EXIT_OK,
    EXIT_VERIFICATION,
    ConfigError,
    InvalidArgument,
    Model,
    SolverError,
    VerificationError,
    build_basis,
    config_hash,
    set_threads,
    study,
    verify,
)

__all__ = [
    "EXIT_CONFIG",
    "EXIT_INTERNAL",
    "EXIT_OK",
    "EXIT_VERIFICATION",
    "ConfigError",
    "InvalidArgument",
    "Model",
    "SolverError",
    "VerificationError",
    "build_basis",
    "config_hash",
    "load",
    "set_threads",
    "study",
    "verify",
]


def load(config):
    """Model from a dict, a JSON string or a path to a JSON file."""
    if isinstance(config, dict):
        return Model(json.dumps(config))
    if isinstance(config, Path) or (isinstance(config, str) and not config.lstrip().startswith("{")):
        return Model(Path(config).read_text())
    return Model(config)
