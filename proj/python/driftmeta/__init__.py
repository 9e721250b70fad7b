"""Incremental drift-aware trend forecasting.

Thin wrapper over the compiled extension. Installed wheels carry the module
inside this package; in-tree test runs find it flat on PYTHONPATH next to
the build directory.
"""

try:
    from ._driftmeta import *  # noqa: F401,F403
    from ._driftmeta import __doc__ as _core_doc  # noqa: F401
except ImportError:  # in-tree: extension built by cmake, not installed
    from _driftmeta import *  # noqa: F401,F403

__all__ = [
    "canonical_config",
    "config_hash",
    "generate",
    "run",
    "ablate",
    "pearson",
    "spearman",
    "friedman_ranks",
    "percentile",
    "ConfigError",
    "LookaheadError",
]
