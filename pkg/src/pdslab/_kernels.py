"""Compiled chain runners for the bundled models.

Each runner advances every chain through one block of pre-drawn noise,
writing retained post-burn-in states into the output buffer.  The drift
maps here mirror the plain-Python definitions in models.py; the compiled
path only accelerates measure estimation and never changes the law.

All kernels share the signature
    runner(xs, noise, gamma, t0, burn_in, thinning, out, kept, status)
with xs (C, d) updated in place, noise (C, T, p), out (C, K, d), and
status[c] holding the first blow-up step index (0 while healthy).
"""

from __future__ import annotations

import math

from numba import njit


@njit(cache=True, nogil=True, inline="always")
def _retain(c, x0, x1, tg, burn, thin, out, kept, dim):
    if tg > burn and (tg - burn) % thin == 0:
        k = (tg - burn) // thin - 1
        if 0 <= k < out.shape[1]:
            out[c, k, 0] = x0
            if dim == 2:
                out[c, k, 1] = x1
            kept[c] += 1


@njit(cache=True, nogil=True)
def dw_runner(xs, noise, gamma, t0, burn, thin, out, kept, status,
              u0, nsub):
    C, T, _ = noise.shape
    h = u0 / nsub
    for c in range(C):
        if status[c] != 0:
            continue
        x = xs[c, 0]
        for t in range(T):
            for _ in range(nsub):
                k1 = x - x * x * x
                a = x + 0.5 * h * k1
                k2 = a - a * a * a
                a = x + 0.5 * h * k2
                k3 = a - a * a * a
                a = x + h * k3
                k4 = a - a * a * a
                x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            x = x + gamma * noise[c, t, 0]
            tg = t0 + t + 1
            if not math.isfinite(x):
                status[c] = tg
                break
            _retain(c, x, 0.0, tg, burn, thin, out, kept, 1)
        xs[c, 0] = x


@njit(cache=True, nogil=True, inline="always")
def _quartic_field(x, y):
    # minus the gradient of (x^2 - y^2)/2 + (x^4 + y^4)/4
    return -(x + x * x * x), -(-y + y * y * y)


@njit(cache=True, nogil=True)
def quartic_runner(xs, noise, gamma, t0, burn, thin, out, kept, status,
                   u0, nsub):
    C, T, _ = noise.shape
    h = u0 / nsub
    for c in range(C):
        if status[c] != 0:
            continue
        x = xs[c, 0]
        y = xs[c, 1]
        for t in range(T):
            for _ in range(nsub):
                k1x, k1y = _quartic_field(x, y)
                k2x, k2y = _quartic_field(x + 0.5 * h * k1x,
                                          y + 0.5 * h * k1y)
                k3x, k3y = _quartic_field(x + 0.5 * h * k2x,
                                          y + 0.5 * h * k2y)
                k4x, k4y = _quartic_field(x + h * k3x, y + h * k3y)
                x = x + (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
                y = y + (h / 6.0) * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
            x = x + gamma * noise[c, t, 0]
            y = y + gamma * noise[c, t, 1]
            tg = t0 + t + 1
            if not (math.isfinite(x) and math.isfinite(y)):
                status[c] = tg
                break
            _retain(c, x, y, tg, burn, thin, out, kept, 2)
        xs[c, 0] = x
        xs[c, 1] = y


@njit(cache=True, nogil=True, inline="always")
def _lemniscate_field(x, y, ts, band):
    r2 = x * x + y * y
    L = r2 * r2 / 16.0 - x * y
    gx = x * r2 / 4.0 - y
    gy = y * r2 / 4.0 - x
    one = 1.0 + L * L
    # one ** -1.75 via square roots (cheaper than pow, same accuracy class)
    sp = L * (1.0 + 0.25 * L * L) / (one * math.sqrt(one * math.sqrt(one)))
    hx = sp * gx
    hy = sp * gy
    if abs(L) < band:
        u = L / band
        e = 1.0 - u * u
        eta = ts * e * e * e
        hx -= eta * gy
        hy += eta * gx
    return -hx, -hy


@njit(cache=True, nogil=True)
def lemniscate_runner(xs, noise, gamma, t0, burn, thin, out, kept, status,
                      u0, nsub, ts, band):
    C, T, _ = noise.shape
    h = u0 / nsub
    for c in range(C):
        if status[c] != 0:
            continue
        x = xs[c, 0]
        y = xs[c, 1]
        for t in range(T):
            for _ in range(nsub):
                k1x, k1y = _lemniscate_field(x, y, ts, band)
                k2x, k2y = _lemniscate_field(x + 0.5 * h * k1x,
                                             y + 0.5 * h * k1y, ts, band)
                k3x, k3y = _lemniscate_field(x + 0.5 * h * k2x,
                                             y + 0.5 * h * k2y, ts, band)
                k4x, k4y = _lemniscate_field(x + h * k3x, y + h * k3y,
                                             ts, band)
                x = x + (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
                y = y + (h / 6.0) * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
            x = x + gamma * noise[c, t, 0]
            y = y + gamma * noise[c, t, 1]
            tg = t0 + t + 1
            if not (math.isfinite(x) and math.isfinite(y)):
                status[c] = tg
                break
            _retain(c, x, y, tg, burn, thin, out, kept, 2)
        xs[c, 0] = x
        xs[c, 1] = y


@njit(cache=True, nogil=True)
def coordination_runner(xs, noise, gamma, t0, burn, thin, out, kept,
                        status):
    C, T, _ = noise.shape
    for c in range(C):
        if status[c] != 0:
            continue
        x = xs[c, 0]
        for t in range(T):
            if x > 0.5:
                fx = 1.0
            elif x < 0.5:
                fx = 0.0
            else:
                fx = 0.5
            x = fx + gamma * noise[c, t, 0]
            if x < 0.0:
                x = 0.0
            elif x > 1.0:
                x = 1.0
            tg = t0 + t + 1
            _retain(c, x, 0.0, tg, burn, thin, out, kept, 1)
        xs[c, 0] = x


@njit(cache=True, nogil=True)
def contracting_runner(xs, noise, gamma, t0, burn, thin, out, kept,
                       status, a):
    C, T, _ = noise.shape
    for c in range(C):
        if status[c] != 0:
            continue
        x = xs[c, 0]
        for t in range(T):
            if x == 0.0:
                fx = 0.0
            else:
                s = 1.0 if math.sin(1.0 / abs(x)) >= 0.0 else -1.0
                fx = a * x * s
            x = fx + gamma * noise[c, t, 0]
            tg = t0 + t + 1
            if not math.isfinite(x):
                status[c] = tg
                break
            _retain(c, x, 0.0, tg, burn, thin, out, kept, 1)
        xs[c, 0] = x


@njit(cache=True, nogil=True)
def tent_runner(xs, noise, gamma, t0, burn, thin, out, kept, status):
    C, T, _ = noise.shape
    for c in range(C):
        if status[c] != 0:
            continue
        x = xs[c, 0]
        for t in range(T):
            if x < 0.0 or x > 1.0:
                fx = 0.0
            elif x <= 0.5:
                fx = 2.0 * x
            else:
                fx = 2.0 * (1.0 - x)
            x = fx + gamma * noise[c, t, 0]
            tg = t0 + t + 1
            if not math.isfinite(x):
                status[c] = tg
                break
            _retain(c, x, 0.0, tg, burn, thin, out, kept, 1)
        xs[c, 0] = x
