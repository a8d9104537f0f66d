"""Streaming valence/arousal regression over facial low-level descriptors."""

try:
    from ._xtrace import *  # noqa: F401,F403
    from ._xtrace import __doc__  # noqa: F401
except ImportError:
    # in-tree builds put the extension on PYTHONPATH instead of in the package
    from _xtrace import *  # noqa: F401,F403
    from _xtrace import __doc__  # noqa: F401
