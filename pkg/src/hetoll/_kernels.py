"""Kernel backend selection.

The compiled ``_core`` extension is used when importable; otherwise the
NumPy implementation in ``_core_py``. Set ``HETOLL_PURE_PYTHON=1`` to force
the fallback.
"""

import os

from . import _core_py

if os.environ.get("HETOLL_PURE_PYTHON") == "1":
    core = _core_py
    BACKEND = "python"
else:
    try:
        from . import _core as core
    except ImportError:
        core = _core_py
        BACKEND = "python"
    else:
        BACKEND = "cython"

CONVERGED = _core_py.CONVERGED
MAX_ITERS = _core_py.MAX_ITERS
STALLED = _core_py.STALLED
