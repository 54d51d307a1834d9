"""Backend selection for the geometry kernels.

The compiled extension is preferred; the pure-Python twin is used when it
is missing or when ``R2PACK_PURE_PYTHON`` is set in the environment.
``BACKEND`` names the active implementation.
"""

import os

if os.environ.get("R2PACK_PURE_PYTHON"):
    from . import _kernels_py as _impl
else:
    try:
        from . import _kernels_cy as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import _kernels_py as _impl

BACKEND = _impl.NAME
candidate_positions_arr = _impl.candidate_positions_arr
overlaps_any = _impl.overlaps_any
box_supported = _impl.box_supported
enumerate_legal = _impl.enumerate_legal
