"""Backend selection for the hot loops.

The compiled extension ``koopinv._kernels`` is used when it imports; otherwise
the NumPy implementation in ``koopinv._kernels_py`` takes over. Setting
``KOOPINV_PURE_PYTHON=1`` forces the fallback.
"""

import os

from . import _kernels_py

if os.environ.get("KOOPINV_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:  # extension not built
        _impl = _kernels_py

BACKEND = "python" if _impl is _kernels_py else "cython"

rk4_rigid_body = _impl.rk4_rigid_body
monomial_values = _impl.monomial_values
monomial_gradients = _impl.monomial_gradients
monomial_directional = _impl.monomial_directional

__all__ = [
    "BACKEND",
    "rk4_rigid_body",
    "monomial_values",
    "monomial_gradients",
    "monomial_directional",
]
