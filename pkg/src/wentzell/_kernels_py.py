"""NumPy implementations of the compiled kernels (used when the extension is absent)."""

import numpy as np


def stiffness_apply(u, cx, ct, out):
    out[...] = 0.0
    f = cx * (u[1:] - u[:-1])
    out[:-1] -= f
    out[1:] += f
    g = ct * (np.roll(u, -1, axis=1) - u)
    out -= g
    out += np.roll(g, 1, axis=1)
    return out


def power_law(y, coef, alpha, out):
    if alpha == 1.0:
        np.multiply(coef, y, out=out)
        return out
    a = np.abs(y)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(a == 0.0, 0.0, a ** (alpha - 1.0))
    np.multiply(coef * scale, y, out=out)
    return out
