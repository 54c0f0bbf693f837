"""Central finite differences with state-scaled steps.

Step sizes follow the usual truncation/rounding balance for doubles:
h = 1e-6 * (1 + |x|) for first derivatives and Jacobians,
h = 1e-4 * (1 + |x|) for Hessians.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

GRAD_STEP = 1e-6
HESS_STEP = 1e-4


def fd_gradient(V: Callable, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    h = GRAD_STEP * (1.0 + np.abs(x))
    grad = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h[i]
        grad[i] = (float(V(x + e)) - float(V(x - e))) / (2 * h[i])
    return grad


def fd_jacobian(f: Callable, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    h = GRAD_STEP * (1.0 + np.abs(x))
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h[i]
        hi = np.atleast_1d(np.asarray(f(x + e), dtype=float))
        lo = np.atleast_1d(np.asarray(f(x - e), dtype=float))
        cols.append((hi - lo) / (2 * h[i]))
    return np.stack(cols, axis=1)


def fd_hessian(V: Callable, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    d = x.size
    h = HESS_STEP * (1.0 + np.abs(x))
    H = np.empty((d, d))
    v0 = float(V(x))
    for i in range(d):
        ei = np.zeros(d)
        ei[i] = h[i]
        H[i, i] = (float(V(x + ei)) - 2 * v0 + float(V(x - ei))) / h[i] ** 2
        for j in range(i + 1, d):
            ej = np.zeros(d)
            ej[j] = h[j]
            H[i, j] = (float(V(x + ei + ej)) - float(V(x + ei - ej))
                       - float(V(x - ei + ej)) + float(V(x - ei - ej))) \
                / (4 * h[i] * h[j])
            H[j, i] = H[i, j]
    return H
