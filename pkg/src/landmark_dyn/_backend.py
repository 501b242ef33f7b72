"""Select the compiled core or the numpy fallback at import time.

Set ``LANDMARK_DYN_PURE_PYTHON=1`` to force the fallback (used by the
benchmark and by the backend-agreement tests).
"""

import os

from . import _pycore

_core = None
if os.environ.get("LANDMARK_DYN_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _core
    except ImportError:
        _core = None

COMPILED = _core is not None
NAME = "cython" if COMPILED else "python"


def compiled_module():
    """Return the compiled module, or None when running the fallback."""
    return _core
