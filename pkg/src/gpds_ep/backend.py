"""Selection of the moment-matching backend at import time.

The compiled extension is preferred when present; the numpy fallback is
always available.  ``GPDS_EP_BACKEND=numpy`` or ``=compiled`` forces the
choice (the latter raises if the extension was not built).
"""

import os

from . import _moment_np
from .errors import ConfigError

try:
    from . import _moment_cy
except ImportError:
    _moment_cy = None


def _select():
    choice = os.environ.get("GPDS_EP_BACKEND", "auto").strip().lower()
    if choice in ("", "auto"):
        return _moment_cy if _moment_cy is not None else _moment_np
    if choice in ("compiled", "cython"):
        if _moment_cy is None:
            raise ConfigError("GPDS_EP_BACKEND=compiled but the extension "
                              "is not built")
        return _moment_cy
    if choice in ("numpy", "fallback", "python"):
        return _moment_np
    raise ConfigError(f"unknown GPDS_EP_BACKEND value {choice!r}")


_active = _select()

BACKEND_NAME = _active.NAME
mm_core = _active.mm_core


def available_backends() -> dict:
    """Name -> mm_core mapping of every importable backend."""
    out = {_moment_np.NAME: _moment_np.mm_core}
    if _moment_cy is not None:
        out[_moment_cy.NAME] = _moment_cy.mm_core
    return out
