"""Scan-kernel backend, chosen at import time.

The compiled extension is used when it is importable and the environment
variable ``CRISP_PURE_PYTHON`` is unset (or ``0``); otherwise the numpy
implementation is used.
"""
import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("CRISP_PURE_PYTHON", "0") in ("", "0"):
    try:
        from . import _ckernels as _impl  # noqa: F811

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels

best_prefix_batch = _impl.best_prefix_batch
disc_score = _impl.disc_score
hill_climb = _impl.hill_climb
scan_center = _impl.scan_center


def backend_module(name: str):
    """Return the kernel module for ``"python"`` or ``"cython"``."""
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown backend {name!r}")
