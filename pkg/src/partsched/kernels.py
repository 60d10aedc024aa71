"""Hot numeric kernels, compiled when available.

Set ``PARTSCHED_PURE_PYTHON=1`` to force the pure-Python implementation.
"""
import os

from . import _kernels_py as python_impl

compiled_impl = None
if not os.environ.get("PARTSCHED_PURE_PYTHON"):
    try:
        from . import _kernels_c as compiled_impl
    except ImportError:  # extension not built
        compiled_impl = None

impl = compiled_impl or python_impl
IMPLEMENTATION = impl.IMPLEMENTATION

cumulative_at = impl.cumulative_at
first_intersection = impl.first_intersection
