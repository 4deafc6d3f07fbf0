"""Kernel backend selection.

Imports the compiled extension when available, otherwise the pure-Python
fallback. ``JFPD_PURE_PYTHON=1`` forces the fallback (useful for the
benchmark and for debugging). Both backends expose the same functions and
produce bit-identical results on a given platform.
"""

import os

from . import _pure

if os.environ.get("JFPD_PURE_PYTHON") == "1":
    _impl = _pure
else:
    try:
        from . import _core as _impl
    except ImportError:
        _impl = _pure

BACKEND = _impl.BACKEND
SPLITMIX_GAMMA = _pure.SPLITMIX_GAMMA

splitmix64_next = _impl.splitmix64_next
xoshiro_fill_u64 = _impl.xoshiro_fill_u64
xoshiro_fill_uniform = _impl.xoshiro_fill_uniform
xoshiro_fill_gaussian = _impl.xoshiro_fill_gaussian
row_entropy = _impl.row_entropy
row_js = _impl.row_js
row_cosine = _impl.row_cosine


def get_backends():
    """Return {name: module} for every importable backend."""
    backends = {_pure.BACKEND: _pure}
    try:
        from . import _core
    except ImportError:
        pass
    else:
        backends[_core.BACKEND] = _core
    return backends
