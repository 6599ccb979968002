"""Hot-loop kernels with import-time backend selection.

The compiled Cython extension is used when present; otherwise the numpy
fallback takes over.  ``QPKAM_FORCE_PYTHON=1`` forces the fallback (used by
the benchmark and the parity tests).
"""

import os

from . import pyloops

if os.environ.get("QPKAM_FORCE_PYTHON") == "1":
    _backend = pyloops
else:
    try:
        from . import _cyk as _backend  # type: ignore[no-redef]
    except ImportError:
        _backend = pyloops

qr_growth = _backend.qr_growth
IMPL = _backend.IMPL

__all__ = ["qr_growth", "IMPL", "pyloops"]
