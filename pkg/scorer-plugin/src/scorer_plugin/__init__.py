"""Reference external scorer process for the scorer/1 stdio protocol."""

from .serve import (
    PROTOCOL,
    PluginConfig,
    PluginSetupError,
    RequestError,
    Scorer,
    build_parser,
    main,
    make_scorer,
    overlap_score,
    serve,
)

__version__ = "0.1.0"

__all__ = [
    "PROTOCOL",
    "PluginConfig",
    "PluginSetupError",
    "RequestError",
    "Scorer",
    "build_parser",
    "main",
    "make_scorer",
    "overlap_score",
    "serve",
]
