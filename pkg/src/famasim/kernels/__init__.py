"""Per-drop simulation kernels with a compiled fast path.

The compiled Cython backend is preferred when its extension module built;
otherwise (or when the ``FAMASIM_PURE_PYTHON`` environment variable is
set) the NumPy reference backend is used.  Both expose the same
``simulate_drop`` contract documented in
:mod:`famasim.kernels.reference`.
"""

from __future__ import annotations

import os

from famasim.kernels import reference

MODE_FIXED_PORTS = reference.MODE_FIXED_PORTS
MODE_RANKED = reference.MODE_RANKED
MODE_FASTFAMA = reference.MODE_FASTFAMA

_impl = None
if not os.environ.get("FAMASIM_PURE_PYTHON"):
    try:
        from famasim.kernels import _fast as _impl
    except ImportError:
        _impl = None
if _impl is None:
    _impl = reference

simulate_drop = _impl.simulate_drop


def backend() -> str:
    """Name of the active kernel backend: ``"cython"`` or ``"numpy"``."""
    return "numpy" if _impl is reference else "cython"


def load_backend(name: str):
    """Load a kernel backend by name, regardless of which one is active."""
    if name == "numpy":
        return reference
    if name == "cython":
        from famasim.kernels import _fast

        return _fast
    raise ValueError(f"unknown backend {name!r}")
