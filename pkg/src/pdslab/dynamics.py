"""Constant-step perturbed dynamical systems.

A system advances by ``x' = P(f(x) + gamma * e(x, y))`` where ``f`` is a
deterministic drift map (possibly discontinuous), ``e`` a noise gain fed
with i.i.d. draws ``y``, ``gamma`` a fixed step size, and ``P`` an optional
state projection.  All operations here are pure given their arguments;
randomness always enters through an explicit seed or draw.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ._streams import TAG_CHAIN, TAG_TRANSITION, stream


class BlowUpError(RuntimeError):
    """A trajectory produced a non-finite state.

    Carries the offending state and, when known, the chain and step index.
    Blow-up is diagnostic information (the invariant-measure family is not
    tight), so it is never silently clipped.
    """

    def __init__(self, message: str, state=None, chain: int | None = None,
                 step: int | None = None):
        super().__init__(message)
        self.state = state
        self.chain = chain
        self.step = step


@dataclass(frozen=True)
class NoiseModel:
    """Law of the i.i.d. noise draws.

    kind is one of "gaussian" (standard normal on R^p), "uniform"
    (uniform on [-1,1]^p), "two_point" (+v or -v with equal probability),
    or "degenerate" (always zero, for deterministic-orbit tests).
    """

    kind: str
    dim: int
    vector: Optional[np.ndarray] = None

    def sample(self, gen: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "gaussian":
            return gen.standard_normal((n, self.dim))
        if self.kind == "uniform":
            return gen.uniform(-1.0, 1.0, size=(n, self.dim))
        if self.kind == "two_point":
            signs = gen.integers(0, 2, size=n) * 2 - 1
            return signs[:, None] * self.vector[None, :]
        if self.kind == "degenerate":
            return np.zeros((n, self.dim))
        raise ValueError(f"unknown noise kind {self.kind!r}")


def gaussian_noise(dim: int) -> NoiseModel:
    return NoiseModel("gaussian", dim)


def uniform_noise(dim: int) -> NoiseModel:
    return NoiseModel("uniform", dim)


def two_point_noise(vector) -> NoiseModel:
    v = np.atleast_1d(np.asarray(vector, dtype=float))
    return NoiseModel("two_point", v.size, v)


def degenerate_noise(dim: int) -> NoiseModel:
    return NoiseModel("degenerate", dim)


NOISE_FAMILIES = {
    "gaussian": gaussian_noise,
    "uniform": uniform_noise,
    "degenerate": degenerate_noise,
}


def additive_gain(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Default noise gain e(x, y) = y."""
    return y


@dataclass(frozen=True)
class SimKernel:
    """Compiled chain runner attached to a SystemSpec.

    ``runner(xs, noise, gamma, t0, burn_in, thinning, out, kept, status)``
    advances every chain in ``xs`` through one block of pre-drawn noise and
    appends retained states to ``out``.  Immutable and shareable.
    """

    runner: Callable
    name: str = ""


@dataclass(frozen=True)
class SystemSpec:
    """A perturbed dynamical system.

    drift and noise_gain must be total on finite inputs.  projection, when
    present, is idempotent and applied after every step.  drift_batch, the
    optional vectorized drift over an (n, dim) array, and sim_kernel, an
    optional compiled runner, only accelerate estimation; the law of the
    dynamics is defined by the scalar callables.
    """

    dim: int
    drift: Callable
    noise: NoiseModel
    noise_gain: Callable = additive_gain
    projection: Optional[Callable] = None
    discontinuity_indicator: Optional[Callable] = None
    discontinuity_indicator_rows: Optional[Callable] = None
    drift_batch: Optional[Callable] = None
    projection_batch: Optional[Callable] = None
    sim_kernel: Optional[SimKernel] = None
    name: str = ""

    def project(self, x: np.ndarray) -> np.ndarray:
        return x if self.projection is None else self.projection(x)

    def project_rows(self, xs: np.ndarray) -> np.ndarray:
        if self.projection is None:
            return xs
        if self.projection_batch is not None:
            return self.projection_batch(xs)
        return np.stack([self.projection(row) for row in xs])

    def drift_rows(self, xs: np.ndarray) -> np.ndarray:
        if self.drift_batch is not None:
            return self.drift_batch(xs)
        return np.stack([np.atleast_1d(np.asarray(self.drift(row), dtype=float))
                         for row in xs])


@dataclass(frozen=True)
class Trajectory:
    """Seeded sample path.  Re-running with the same arguments reproduces
    ``states`` bit-exactly."""

    gamma: float
    states: np.ndarray  # (horizon + 1, dim)
    seed: int

    def __len__(self) -> int:
        return self.states.shape[0]


def _as_state(x, dim: int) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if arr.shape != (dim,):
        raise ValueError(f"state has shape {arr.shape}, expected ({dim},)")
    return arr


def step(spec: SystemSpec, x, gamma: float, y) -> np.ndarray:
    """One update x -> projection(f(x) + gamma * e(x, y)).

    The draw ``y`` is an explicit argument; there is no hidden randomness.
    Raises BlowUpError if the result is not finite.
    """
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    x = _as_state(x, spec.dim)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    fx = np.atleast_1d(np.asarray(spec.drift(x), dtype=float))
    nxt = spec.project(fx + gamma * np.atleast_1d(spec.noise_gain(x, y)))
    if not np.all(np.isfinite(nxt)):
        raise BlowUpError(f"non-finite state after step from {x!r}", state=nxt)
    return nxt


def simulate(spec: SystemSpec, x0, gamma: float, horizon: int,
             seed: int) -> Trajectory:
    """Run ``horizon`` steps from x0 with noise from the seeded stream.

    Deterministic in all arguments.  On blow-up the error names the failing
    step index.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    x = _as_state(x0, spec.dim)
    gen = stream(seed, TAG_CHAIN, 0)
    draws = spec.noise.sample(gen, horizon)
    states = np.empty((horizon + 1, spec.dim))
    states[0] = x
    for t in range(horizon):
        try:
            x = step(spec, x, gamma, draws[t])
        except BlowUpError as err:
            raise BlowUpError(f"trajectory blew up at step {t + 1}",
                              state=err.state, step=t + 1) from None
        states[t + 1] = x
    return Trajectory(gamma=gamma, states=states, seed=seed)


def transition_mean(spec: SystemSpec, g: Callable, x, gamma: float,
                    n_samples: int, seed: int) -> tuple[float, float]:
    """Monte-Carlo estimate of the one-step kernel average of g from x.

    Returns (estimate, standard error) over ``n_samples`` independent
    draws.  With gamma = 0 the kernel is degenerate and the estimate equals
    g(f(x)) exactly with zero standard error.
    """
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    x = _as_state(x, spec.dim)
    gen = stream(seed, TAG_TRANSITION)
    draws = spec.noise.sample(gen, n_samples)
    fx = np.atleast_1d(np.asarray(spec.drift(x), dtype=float))
    gains = np.stack([np.atleast_1d(spec.noise_gain(x, y)) for y in draws])
    landed = spec.project_rows(fx[None, :] + gamma * gains)
    vals = np.asarray([float(g(row)) for row in landed])
    bad = np.flatnonzero(~np.isfinite(vals))
    if bad.size:
        raise BlowUpError(f"g returned a non-finite value at draw {bad[0]}",
                          state=landed[bad[0]], step=int(bad[0]))
    est = float(vals.mean())
    se = float(vals.std(ddof=1) / np.sqrt(n_samples))
    return est, se
