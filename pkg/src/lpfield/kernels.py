"""Select the compiled kernels when available, the NumPy fallback otherwise.

Set ``LPFIELD_PURE_PYTHON=1`` to force the fallback.
"""

import os

if os.environ.get("LPFIELD_PURE_PYTHON"):
    from . import _purepy as _impl
else:
    try:
        from . import _speedups as _impl
    except ImportError:  # extension not built
        from . import _purepy as _impl

BACKEND = _impl.NAME

peetre_sup = _impl.peetre_sup
box_max = _impl.box_max
gather_diag = _impl.gather_diag

__all__ = ["BACKEND", "peetre_sup", "box_max", "gather_diag"]
