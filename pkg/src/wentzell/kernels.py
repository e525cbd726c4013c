"""Hot-loop kernels: compiled extension when built, NumPy otherwise.

Set ``WENTZELL_PURE_PYTHON=1`` to force the NumPy path.
"""

import os

import numpy as np

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("WENTZELL_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"


def backends():
    """Map of available backend name to module."""
    out = {"python": _kernels_py}
    try:
        from . import _kernels as _compiled
    except ImportError:
        return out
    out["cython"] = _compiled
    return out


def stiffness_apply(u, cx, ct, out=None, impl=None):
    """``K u`` for the 5-point conductance graph; exact zero on constants.

    ``cx[i, j]`` couples nodes ``(i, j)`` and ``(i + 1, j)``; ``ct[i, j]`` couples
    ``(i, j)`` and ``(i, j + 1 mod n_theta)``.
    """
    u = np.ascontiguousarray(u, dtype=np.complex128)
    if out is None:
        out = np.empty_like(u)
    (impl or _impl).stiffness_apply(u, cx, ct, out)
    return out


def power_law(y, coef, alpha, out=None, impl=None):
    """Nodewise ``coef * |y|^(alpha - 1) * y``."""
    shape = np.shape(y)
    y = np.ascontiguousarray(y, dtype=np.complex128).ravel()
    coef = np.ascontiguousarray(np.broadcast_to(coef, shape), dtype=np.float64).ravel()
    res = np.empty_like(y)
    (impl or _impl).power_law(y, coef, float(alpha), res)
    res = res.reshape(shape)
    if out is not None:
        out[...] = res
        return out
    return res
