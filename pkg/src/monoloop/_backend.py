"""Kernel selection.

The compiled extension is used when importable; ``MONOLOOP_PURE_PYTHON=1``
forces the pure-Python twin.
"""

import os

from . import _pykernels

if os.environ.get("MONOLOOP_PURE_PYTHON"):
    kernels = _pykernels
else:
    try:
        from . import _ckernels as kernels
    except ImportError:  # extension not built
        kernels = _pykernels

BACKEND = kernels.BACKEND
ST_OK, ST_DIVERGED, ST_DOMAIN, ST_UNDERFLOW, ST_MAXSTEPS = range(5)


def available():
    """Names of the kernel backends importable in this environment."""
    names = {"python": _pykernels}
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        names["cython"] = _ckernels
    return names
