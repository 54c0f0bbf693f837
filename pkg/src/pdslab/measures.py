"""Invariant-measure estimation by ergodic averaging.

An EmpiricalMeasure is the finite-sample surrogate for an invariant law of
the step-gamma chain: chains started in a box, burned in, thinned, and
pooled with equal weights.  Every statistic used by the localization and
exclusion experiments lives here.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from ._streams import TAG_CHAIN, TAG_SUBSAMPLE, TAG_TRANSITION, stream
from .dynamics import BlowUpError, SystemSpec, transition_mean

RETAIN_CAP = 200_000
_BLOCK = 1 << 15


@dataclass(frozen=True)
class MeasureMeta:
    """Provenance of an estimated measure."""

    chains: int
    burn_in: int
    horizon: int
    thinning: int
    seed: int
    chain_ids: Optional[np.ndarray] = None  # per-sample chain of origin
    model: str = ""


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Weighted sample cloud approximating an invariant measure."""

    samples: np.ndarray  # (n, dim)
    weights: np.ndarray  # (n,), nonnegative, sums to 1
    gamma: float
    meta: MeasureMeta

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    def __post_init__(self):
        if self.samples.ndim != 2:
            raise ValueError("samples must be a 2-d array")
        if self.samples.shape[0] != self.weights.shape[0]:
            raise ValueError("samples and weights length mismatch")
        if abs(float(self.weights.sum()) - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1 within 1e-12")


def _normalized_box(init_box, dim: int) -> np.ndarray:
    box = np.asarray(init_box, dtype=float)
    if box.shape == (2,) and dim == 1:
        box = box[None, :]
    if box.shape != (dim, 2):
        raise ValueError(f"init_box must have shape ({dim}, 2)")
    if np.any(box[:, 1] <= box[:, 0]):
        raise ValueError("init_box must have positive extent")
    return box


def auto_thinning(chains: int, burn_in: int, horizon: int,
                  cap: int = RETAIN_CAP) -> int:
    """Smallest thinning keeping pooled retained samples at or below cap."""
    total = chains * (horizon - burn_in)
    return max(1, int(np.ceil(total / cap)))


def _gain_rows(spec: SystemSpec, xs: np.ndarray,
               draws: np.ndarray) -> np.ndarray:
    from .dynamics import additive_gain
    if spec.noise_gain is additive_gain:
        return draws
    return np.stack([np.atleast_1d(spec.noise_gain(x, y))
                     for x, y in zip(xs, draws)])


def _python_block_runner(spec: SystemSpec, xs: np.ndarray, noise: np.ndarray,
                         gamma: float, t0: int, burn_in: int, thinning: int,
                         out: np.ndarray, kept: np.ndarray,
                         status: np.ndarray) -> None:
    # Mirrors the compiled kernels: xs (C, d) updated in place, retained
    # post-burn-in states written into out every `thinning` steps.
    n_chains, block, _ = noise.shape
    for t in range(block):
        live = status == 0
        if not np.any(live):
            return
        rows = np.flatnonzero(live)
        fx = spec.drift_rows(xs[rows])
        gains = _gain_rows(spec, xs[rows], noise[rows, t])
        nxt = spec.project_rows(fx + gamma * gains)
        bad = ~np.all(np.isfinite(nxt), axis=1)
        xs[rows] = nxt
        t_global = t0 + t + 1
        if np.any(bad):
            status[rows[bad]] = t_global
        if t_global > burn_in and (t_global - burn_in) % thinning == 0:
            k = (t_global - burn_in) // thinning - 1
            if 0 <= k < out.shape[1]:
                for c in range(n_chains):
                    if status[c] == 0:
                        out[c, k] = xs[c]
                        kept[c] += 1


def estimate_invariant(spec: SystemSpec, gamma: float, chains: int,
                       burn_in: int, horizon: int, thinning: Optional[int],
                       init_box, seed: int, use_fast: bool = True,
                       model: str = "") -> EmpiricalMeasure:
    """Ergodic-average estimate of an invariant measure at step size gamma.

    Each chain draws its start uniformly from init_box, runs ``horizon``
    steps, discards the first ``burn_in`` and keeps every ``thinning``-th
    state; chains are pooled with equal weights.  thinning=None picks the
    smallest value keeping the pool at or below RETAIN_CAP.  Deterministic
    in ``seed`` regardless of scheduling; chains use independent
    counter-based substreams.
    """
    if chains < 1:
        raise ValueError("chains must be >= 1")
    if horizon <= burn_in:
        raise ValueError("horizon must exceed burn_in")
    if thinning is None:
        thinning = auto_thinning(chains, burn_in, horizon)
    if thinning < 1:
        raise ValueError("thinning must be >= 1")
    keep_per_chain = (horizon - burn_in) // thinning
    if keep_per_chain < 1:
        raise BlowUpError("no samples retained: horizon too short for "
                          f"burn_in={burn_in} thinning={thinning}")
    box = _normalized_box(init_box, spec.dim)

    gens = [stream(seed, TAG_CHAIN, c) for c in range(chains)]
    xs = np.empty((chains, spec.dim))
    for c, gen in enumerate(gens):
        xs[c] = box[:, 0] + gen.random(spec.dim) * (box[:, 1] - box[:, 0])
    xs = spec.project_rows(xs)

    out = np.empty((chains, keep_per_chain, spec.dim))
    kept = np.zeros(chains, dtype=np.int64)
    status = np.zeros(chains, dtype=np.int64)
    runner = (spec.sim_kernel.runner
              if (use_fast and spec.sim_kernel is not None)
              else lambda *a: _python_block_runner(spec, *a))

    done = 0
    while done < horizon:
        block = min(_BLOCK, horizon - done)
        noise = np.stack([spec.noise.sample(gen_, block) for gen_ in gens])
        runner(xs, noise, gamma, done, burn_in, thinning, out, kept, status)
        done += block
        if np.any(status > 0):
            c = int(np.argmax(status > 0))
            raise BlowUpError(
                f"chain {c} blew up at step {int(status[c])}",
                chain=c, step=int(status[c]))

    samples = out.reshape(chains * keep_per_chain, spec.dim)
    chain_ids = np.repeat(np.arange(chains), keep_per_chain)
    if samples.shape[0] > RETAIN_CAP:
        sub = stream(seed, TAG_SUBSAMPLE)
        idx = np.sort(sub.choice(samples.shape[0], RETAIN_CAP, replace=False))
        samples = samples[idx]
        chain_ids = chain_ids[idx]
    n = samples.shape[0]
    weights = np.full(n, 1.0 / n)
    weights /= weights.sum()
    meta = MeasureMeta(chains=chains, burn_in=burn_in, horizon=horizon,
                       thinning=thinning, seed=seed, chain_ids=chain_ids,
                       model=model or spec.name)
    return EmpiricalMeasure(samples=samples, weights=weights,
                            gamma=float(gamma), meta=meta)


def integrate(m: EmpiricalMeasure, g: Callable) -> float:
    """Weighted average of g over the sample cloud."""
    vals = np.asarray([float(g(row)) for row in m.samples])
    bad = np.flatnonzero(~np.isfinite(vals))
    if bad.size:
        raise ValueError(f"g returned a non-finite value at sample {bad[0]}")
    return float(np.dot(m.weights, vals))


def integrate_rows(m: EmpiricalMeasure, g_rows: Callable) -> float:
    """integrate() for a vectorized g taking the full (n, d) array."""
    vals = np.asarray(g_rows(m.samples), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise ValueError("g returned non-finite values")
    return float(np.dot(m.weights, vals))


def mass_in_ball(m: EmpiricalMeasure, center, radius: float) -> float:
    """Total weight within Euclidean distance `radius` of `center`."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    c = np.atleast_1d(np.asarray(center, dtype=float))
    dist = np.linalg.norm(m.samples - c[None, :], axis=1)
    return float(m.weights[dist <= radius].sum())


class OverlappingBallsError(ValueError):
    pass


def localization_report(m: EmpiricalMeasure, fixed_points: Sequence,
                        radius: float) -> tuple[np.ndarray, float]:
    """Per-fixed-point ball masses and the mass of their union.

    Balls must be pairwise disjoint so that mass is attributable to single
    equilibria; overlapping balls raise OverlappingBallsError.
    """
    fps = np.atleast_2d(np.asarray(fixed_points, dtype=float))
    if fps.shape[0] == 0:
        raise ValueError("fixed_points must be nonempty")
    if radius <= 0:
        raise ValueError("radius must be positive")
    for i in range(fps.shape[0]):
        for j in range(i + 1, fps.shape[0]):
            if np.linalg.norm(fps[i] - fps[j]) <= 2 * radius:
                raise OverlappingBallsError(
                    f"balls at {fps[i]} and {fps[j]} overlap at radius "
                    f"{radius}; use a smaller radius")
    dists = np.linalg.norm(m.samples[:, None, :] - fps[None, :, :], axis=2)
    per_point = np.array([
        float(m.weights[dists[:, k] <= radius].sum())
        for k in range(fps.shape[0])
    ])
    union = float(m.weights[(dists <= radius).any(axis=1)].sum())
    return per_point, union


def _w1_sorted(v1, w1, v2, w2) -> float:
    # Exact 1-Wasserstein between weighted discrete 1-d laws: integral of
    # |F1 - F2| over the merged support grid.
    order1 = np.argsort(v1, kind="stable")
    order2 = np.argsort(v2, kind="stable")
    v1, w1 = v1[order1], w1[order1]
    v2, w2 = v2[order2], w2[order2]
    grid = np.concatenate([v1, v2])
    grid.sort(kind="stable")
    f1 = np.cumsum(w1)
    f2 = np.cumsum(w2)
    c1 = f1[np.minimum(np.searchsorted(v1, grid, side="right"), len(v1)) - 1]
    c1[np.searchsorted(v1, grid, side="right") == 0] = 0.0
    c2 = f2[np.minimum(np.searchsorted(v2, grid, side="right"), len(v2)) - 1]
    c2[np.searchsorted(v2, grid, side="right") == 0] = 0.0
    return float(np.sum(np.abs(c1[:-1] - c2[:-1]) * np.diff(grid)))


def _unit_directions(dim: int, count: int = 64) -> np.ndarray:
    if dim == 2:
        angles = np.pi * (np.arange(count) + 0.5) / count
        return np.stack([np.cos(angles), np.sin(angles)], axis=1)
    gen = stream(0x5_11CE, dim, count)
    dirs = gen.standard_normal((count, dim))
    return dirs / np.linalg.norm(dirs, axis=1, keepdims=True)


def weak_distance(m1: EmpiricalMeasure, m2: EmpiricalMeasure) -> float:
    """Weak-convergence surrogate metric between two measures.

    d=1: exact 1-Wasserstein via the sorted-sample coupling.  d>=2: sliced
    1-Wasserstein averaged over a fixed deterministic set of 64 unit
    directions.  Symmetric, nonnegative, and zero for identical clouds.
    """
    if m1.dim != m2.dim:
        raise ValueError(f"dimension mismatch: {m1.dim} vs {m2.dim}")
    if m1.dim == 1:
        return _w1_sorted(m1.samples[:, 0], m1.weights,
                          m2.samples[:, 0], m2.weights)
    dirs = _unit_directions(m1.dim)
    acc = 0.0
    for u in dirs:
        acc += _w1_sorted(m1.samples @ u, m1.weights,
                          m2.samples @ u, m2.weights)
    return acc / len(dirs)


def default_dictionary(dim: int, clip: float = 4.0,
                       V: Optional[Callable] = None) -> list[Callable]:
    """Bounded Lipschitz test dictionary for invariance checks.

    Coordinate maps clipped to [-clip, clip], clipped pairwise products,
    and (when given) V through a saturating reparametrization.
    """
    funcs: list[Callable] = []
    for i in range(dim):
        funcs.append(lambda x, i=i: float(np.clip(x[i], -clip, clip)))
    for i in range(dim):
        for j in range(i, dim):
            funcs.append(lambda x, i=i, j=j:
                         float(np.clip(x[i] * x[j], -clip, clip)))
    if V is not None:
        funcs.append(lambda x: float(np.tanh(V(x))))
    return funcs


@dataclass(frozen=True)
class DefectReport:
    max_defect: float
    defects: np.ndarray          # per dictionary entry
    bootstrap_se: np.ndarray     # per dictionary entry, over chains
    n_samples: int


def invariance_defect(spec: SystemSpec, m: EmpiricalMeasure,
                      g_dictionary: Sequence[Callable], n_samples: int,
                      seed: int, bootstrap: int = 200) -> DefectReport:
    """Finite-sample check that m is invariant for the step-gamma kernel.

    For each dictionary entry g, compares the measure average of g with
    the measure average of the one-step kernel mean of g (Monte Carlo with
    ``n_samples`` draws per sample point) and reports |gap| per entry plus
    a chain-level bootstrap standard error.
    """
    if not g_dictionary:
        raise ValueError("dictionary must be nonempty")
    gen = stream(seed, TAG_TRANSITION, 1)
    n = m.samples.shape[0]
    draws = spec.noise.sample(gen, n_samples)
    chain_ids = m.meta.chain_ids
    if chain_ids is None:
        chain_ids = np.zeros(n, dtype=int)
    chains = np.unique(chain_ids)
    fx = spec.drift_rows(m.samples)

    # per-sample kernel means of every g, chunked to bound memory
    n_g = len(g_dictionary)
    gvals = np.empty((n_g, n))
    pg = np.empty((n_g, n))
    for s in range(n):
        gains = _gain_rows(spec, np.broadcast_to(m.samples[s],
                                                 (n_samples, m.dim)), draws)
        landed = spec.project_rows(fx[s][None, :] + m.gamma * gains)
        for gi, g in enumerate(g_dictionary):
            gvals[gi, s] = float(g(m.samples[s]))
            vals = np.asarray([float(g(row)) for row in landed])
            if not np.all(np.isfinite(vals)):
                raise BlowUpError(f"non-finite g under kernel at sample {s}")
            pg[gi, s] = vals.mean()

    defects = np.empty(n_g)
    ses = np.empty(n_g)
    for gi in range(n_g):
        diff = gvals[gi] - pg[gi]
        defects[gi] = abs(float(np.dot(m.weights, diff)))
        boot_gen = stream(seed, TAG_SUBSAMPLE, gi)
        stats = np.empty(bootstrap)
        for b in range(bootstrap):
            pick = boot_gen.choice(chains, size=len(chains), replace=True)
            mask_w = np.zeros(n)
            for c in pick:
                mask_w[chain_ids == c] += 1.0
            tot = np.dot(mask_w, m.weights)
            stats[b] = abs(np.dot(mask_w * m.weights, diff) / tot)
        ses[gi] = float(stats.std(ddof=1))
    return DefectReport(max_defect=float(defects.max()), defects=defects,
                        bootstrap_se=ses, n_samples=n_samples)


@dataclass(frozen=True)
class EstimationOptions:
    chains: int = 8
    burn_in: Optional[int] = None   # None -> horizon // 10
    horizon: int = 100_000
    thinning: Optional[int] = None  # None -> auto cap
    init_box: object = None
    seed: int = 0
    use_fast: bool = True

    def resolved_burn_in(self) -> int:
        return self.horizon // 10 if self.burn_in is None else self.burn_in


def moment_curve(spec: SystemSpec, V: Callable, gamma_grid: Sequence[float],
                 options: EstimationOptions) -> list[tuple[float, float]]:
    """Estimated measure average of V per gamma on the grid.

    One estimate_invariant + integrate per grid point, with per-gamma
    substreams so results are independent of evaluation order.  Blow-up
    propagates (a non-tight family is diagnostic, not recoverable).
    """
    grid = [float(g) for g in gamma_grid]
    if not grid or any(g <= 0 for g in grid):
        raise ValueError("gamma_grid must be nonempty and strictly positive")
    rows = []
    for k, gamma in enumerate(grid):
        m = estimate_invariant(
            spec, gamma, options.chains, options.resolved_burn_in(),
            options.horizon, options.thinning, options.init_box,
            seed=options.seed + 7919 * k, use_fast=options.use_fast)
        rows.append((gamma, integrate(m, V)))
    return rows


def save_measure(m: EmpiricalMeasure, path) -> None:
    """Write samples+weights as flat CSV with a JSON metadata sidecar."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"x{i}" for i in range(m.dim)] + ["weight"])
        for row, w in zip(m.samples, m.weights):
            writer.writerow([repr(float(v)) for v in row] + [repr(float(w))])
    meta = {
        "gamma": m.gamma,
        "seed": m.meta.seed,
        "chains": m.meta.chains,
        "burn_in": m.meta.burn_in,
        "horizon": m.meta.horizon,
        "thinning": m.meta.thinning,
        "model": m.meta.model,
    }
    Path(str(path) + ".meta.json").write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_measure(path) -> EmpiricalMeasure:
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        dim = len(header) - 1
        rows = [[float(v) for v in row] for row in reader]
    arr = np.asarray(rows)
    meta_raw = json.loads(Path(str(path) + ".meta.json").read_text())
    meta = MeasureMeta(chains=meta_raw["chains"], burn_in=meta_raw["burn_in"],
                       horizon=meta_raw["horizon"],
                       thinning=meta_raw["thinning"], seed=meta_raw["seed"],
                       model=meta_raw.get("model", ""))
    weights = arr[:, dim]
    weights = weights / weights.sum()
    return EmpiricalMeasure(samples=arr[:, :dim], weights=weights,
                            gamma=meta_raw["gamma"], meta=meta)
