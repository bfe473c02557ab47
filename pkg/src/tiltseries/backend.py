"""Kernel backend selection.

The compiled extension is used when it imports cleanly; the pure NumPy
module is the fallback.  ``TILTSERIES_BACKEND`` overrides the choice:
``compiled`` demands the extension (ImportError if missing), ``pure``
skips it, ``auto`` (default) prefers compiled.
"""

import os

from . import _pure


def _load():
    choice = os.environ.get("TILTSERIES_BACKEND", "auto").lower()
    if choice not in ("auto", "pure", "compiled"):
        raise ValueError(
            f"TILTSERIES_BACKEND must be auto, pure or compiled, got {choice!r}"
        )
    if choice == "pure":
        return _pure
    try:
        from . import _core
    except ImportError:
        if choice == "compiled":
            raise
        return _pure
    return _core


active = _load()


def backend_name():
    """Name of the backend in use: ``"pure"`` or ``"compiled"``."""
    return active.NAME


def get_backend(name=None):
    """Return a kernel module by name (``None`` means the active one)."""
    if name is None or name == "auto":
        return active
    if name == "pure":
        return _pure
    if name == "compiled":
        from . import _core
        return _core
    raise ValueError(f"unknown backend {name!r}")
