"""Lyapunov machinery: descent functions, smooth reparametrizations,
bounded C^2 test functions, and the second-order expansion diagnostics.

A test function W is a monotone C^2 reparametrization of a descent
function V, built so that W inherits W o f <= W, has a negative-definite
Hessian at one targeted maximum (or a symmetric pair), a vanishing Hessian
at every other registered fixed point, and a global bound.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from ._diff import fd_gradient, fd_hessian
from ._streams import TAG_EXCITATION, TAG_PROBE, stream
from .dynamics import SystemSpec
from .measures import EmpiricalMeasure, _gain_rows


class ReparamError(ValueError):
    pass


class TestFunctionError(ValueError):
    pass


@dataclass(frozen=True)
class LyapunovSpec:
    """Scalar descent function with derivative evaluators.

    gradient/hessian may be closed-form or finite-difference; they must
    agree with central differences within 1e-5 relative error on probe
    grids (checked by the model test suite).
    """

    fn: Callable
    gradient: Callable
    hessian: Callable
    coercive: bool = True
    fn_rows: Optional[Callable] = None
    name: str = ""

    def __call__(self, x):
        return float(self.fn(x))

    def rows(self, xs: np.ndarray) -> np.ndarray:
        if self.fn_rows is not None:
            return np.asarray(self.fn_rows(xs), dtype=float)
        return np.asarray([float(self.fn(row)) for row in xs])


def lyapunov_from_scalar(fn: Callable, name: str = "",
                         coercive: bool = True,
                         fn_rows: Optional[Callable] = None) -> LyapunovSpec:
    """Wrap a bare scalar function with finite-difference derivatives."""
    return LyapunovSpec(fn=fn,
                        gradient=lambda x: fd_gradient(fn, x),
                        hessian=lambda x: fd_hessian(fn, x),
                        coercive=coercive, fn_rows=fn_rows, name=name)


# ---------------------------------------------------------------------------
# Smooth reparametrizations: piecewise slope-1 / flat with quintic blends.
# ---------------------------------------------------------------------------

def _smoothstep(u):
    return u * u * u * (10.0 + u * (-15.0 + 6.0 * u))


def _smoothstep_int(u):
    # integral of the quintic smoothstep from 0 to u
    return u ** 4 * (2.5 + u * (-3.0 + u))


def _smoothstep_d(u):
    return 30.0 * u * u * (1.0 - u) * (1.0 - u)


_AFFINE, _FLAT, _DOWN, _UP = 0, 1, 2, 3


@dataclass(frozen=True)
class SmoothReparam:
    """Nondecreasing C^2 map: slope-1 stretches, exactly flat plateaus,
    and quintic blends of width ``blend_width`` between them.

    The derivative is bit-exact 0 strictly inside flat intervals and
    bit-exact 1 strictly inside identity-affine intervals.
    """

    breaks: np.ndarray       # ascending piece boundaries, length m
    kinds: np.ndarray        # length m + 1 piece kinds
    starts: np.ndarray       # value at each piece's reference point
    blend_width: float

    def _pieces(self, t: np.ndarray) -> np.ndarray:
        return np.searchsorted(self.breaks, t, side="right")

    def _eval(self, t, order: int):
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        t = np.atleast_1d(t)
        idx = self._pieces(t)
        out = np.empty_like(t)
        w = self.blend_width
        for p in np.unique(idx):
            mask = idx == p
            tm = t[mask]
            ref = self.breaks[0] if p == 0 else self.breaks[p - 1]
            kind = self.kinds[p]
            v0 = self.starts[p]
            if kind == _AFFINE:
                vals = (v0 + (tm - ref), np.ones_like(tm),
                        np.zeros_like(tm))[order]
            elif kind == _FLAT:
                vals = (np.full_like(tm, v0), np.zeros_like(tm),
                        np.zeros_like(tm))[order]
            else:
                u = np.clip((tm - ref) / w, 0.0, 1.0)
                if kind == _DOWN:
                    vals = (v0 + w * (u - _smoothstep_int(u)),
                            1.0 - _smoothstep(u),
                            -_smoothstep_d(u) / w)[order]
                else:
                    vals = (v0 + w * _smoothstep_int(u),
                            _smoothstep(u),
                            _smoothstep_d(u) / w)[order]
            out[mask] = vals
        return float(out[0]) if scalar else out

    def value(self, t):
        return self._eval(t, 0)

    def d1(self, t):
        return self._eval(t, 1)

    def d2(self, t):
        return self._eval(t, 2)


def _normalize_interval(iv) -> tuple[float, float]:
    lo, hi = float(iv[0]), float(iv[1])
    if not lo < hi:
        raise ReparamError(f"degenerate interval ({lo}, {hi})")
    return lo, hi


def build_reparam(flat_regions: Sequence, identity_region,
                  blend_width: float) -> SmoothReparam:
    """Nondecreasing C^2 reparametrization, exactly flat on each region in
    ``flat_regions`` and slope-1 elsewhere, with quintic blends of width
    ``blend_width`` eaten out of the non-flat side.

    Regions may extend to +/-inf.  Raises ReparamError if the regions
    inflated by the blend width overlap each other or the identity region.
    """
    w = float(blend_width)
    if w <= 0:
        raise ReparamError("blend_width must be positive")
    regions = sorted(_normalize_interval(r) for r in flat_regions)
    for (al, ah), (bl, bh) in zip(regions, regions[1:]):
        if ah + w >= bl - w:
            raise ReparamError(
                f"flat regions ({al},{ah}) and ({bl},{bh}) overlap after "
                f"inflation by blend_width={w}")
    id_lo, id_hi = _normalize_interval(identity_region)
    for (al, ah) in regions:
        if max(al - w, id_lo) < min(ah + w, id_hi):
            raise ReparamError(
                f"identity region ({id_lo},{id_hi}) intersects flat region "
                f"({al},{ah}) inflated by blend_width={w}")

    breaks: list[float] = []
    kinds: list[int] = [_AFFINE]
    for (lo, hi) in regions:
        if np.isfinite(lo):
            breaks.extend([lo - w, lo])
            kinds.extend([_DOWN, _FLAT])
        else:
            kinds[-1] = _FLAT  # flat from -inf
        if np.isfinite(hi):
            breaks.extend([hi, hi + w])
            kinds.extend([_UP, _AFFINE])
        else:
            if np.isfinite(lo):
                breaks.append(np.inf)  # placeholder, removed below
            kinds.append(_AFFINE)  # unreachable tail
    # drop the unreachable tail after a flat-to-infinity region
    while breaks and not np.isfinite(breaks[-1]):
        breaks.pop()
        kinds.pop()
    if not breaks:
        raise ReparamError("no finite structure: nothing to build")
    breaks_arr = np.asarray(breaks)
    if np.any(np.diff(breaks_arr) < 0):
        raise ReparamError("flat regions out of order")

    # accumulate piece start values; increments: affine = length,
    # flat = 0, blend = w/2
    starts = np.zeros(len(kinds))
    v = 0.0
    for p in range(1, len(kinds)):
        prev = kinds[p - 1]
        if p == 1:
            # piece 0 spans (-inf, breaks[0]] with reference breaks[0]
            inc = 0.0
        else:
            seg = breaks_arr[p - 1] - breaks_arr[p - 2]
            if prev == _AFFINE:
                inc = seg
            elif prev == _FLAT:
                inc = 0.0
            else:
                inc = w / 2
        v += inc
        starts[p] = v

    rep = SmoothReparam(breaks=breaks_arr, kinds=np.asarray(kinds),
                        starts=starts, blend_width=w)
    # shift so the identity region maps t -> t exactly
    anchor = 0.5 * (id_lo + id_hi)
    offset = anchor - rep.value(anchor)
    return SmoothReparam(breaks=breaks_arr, kinds=np.asarray(kinds),
                         starts=starts + offset, blend_width=w)


# ---------------------------------------------------------------------------
# Test functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TestFunction:
    """Bounded C^2 monotone reparametrization W of a descent function V."""

    V: LyapunovSpec
    phis: tuple[SmoothReparam, ...]
    targets: np.ndarray     # points where the Hessian is negative definite
    other_fps: np.ndarray
    cap: float              # raw V level above which W saturates
    bound: float
    constant: bool = False  # debug override: W identically zero

    def chain(self, t):
        """Value and first two derivatives of the scalar reparametrization."""
        v = np.asarray(t, dtype=float)
        d1 = np.ones_like(v)
        d2 = np.zeros_like(v)
        for phi in self.phis:
            pd2 = phi.d2(v)
            pd1 = phi.d1(v)
            d2 = pd2 * d1 * d1 + pd1 * d2
            d1 = pd1 * d1
            v = phi.value(v)
        return v, d1, d2

    def value(self, x) -> float:
        if self.constant:
            return 0.0
        v, _, _ = self.chain(self.V(x))
        return float(v)

    def value_rows(self, xs: np.ndarray) -> np.ndarray:
        if self.constant:
            return np.zeros(xs.shape[0])
        v, _, _ = self.chain(self.V.rows(xs))
        return np.asarray(v)

    def grad(self, x) -> np.ndarray:
        if self.constant:
            return np.zeros_like(np.atleast_1d(np.asarray(x, float)))
        _, d1, _ = self.chain(self.V(x))
        return float(d1) * np.asarray(self.V.gradient(x), dtype=float)

    def hess(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if self.constant:
            return np.zeros((x.size, x.size))
        _, d1, d2 = self.chain(self.V(x))
        g = np.asarray(self.V.gradient(x), dtype=float)
        H = np.asarray(self.V.hessian(x), dtype=float)
        return float(d2) * np.outer(g, g) + float(d1) * H


def _merged_flat_pockets(values: np.ndarray, w: float) -> list[tuple]:
    """Cluster nearby levels (gap <= 4w) into single flat pockets."""
    vals = np.sort(np.unique(values))
    pockets = []
    lo = hi = vals[0]
    for v in vals[1:]:
        if v - hi <= 4 * w:
            hi = v
        else:
            pockets.append((lo - w, hi + w))
            lo = hi = v
    pockets.append((lo - w, hi + w))
    return pockets


def _build(V: LyapunovSpec, targets: np.ndarray, other_fps: np.ndarray,
           K: float, blend_width: Optional[float],
           v_floor: Optional[float]) -> TestFunction:
    v_star = V(targets[0])
    if not K > v_star:
        raise TestFunctionError(f"K={K} must exceed V(x*)={v_star}")
    for x in targets:
        evals = np.linalg.eigvalsh(0.5 * (np.asarray(V.hessian(x))
                                          + np.asarray(V.hessian(x)).T))
        if evals.max() >= 0:
            raise TestFunctionError(
                f"target {x} is not a strict local maximum: "
                f"Hessian eigenvalues {evals}")
    other_vals = np.asarray([V(x) for x in other_fps])
    for x, v in zip(other_fps, other_vals):
        if not v < v_star:
            raise TestFunctionError(
                f"descent-level hypothesis fails: V({x})={v} is not below "
                f"V(x*)={v_star}")
    levels = np.concatenate([other_vals, [v_star], [K]])
    seps = np.diff(np.sort(np.unique(np.round(levels, 14))))
    sep_min = float(seps.min()) if seps.size else float(K - v_star)
    w = sep_min / 4 if blend_width is None else float(blend_width)
    bad = np.abs(other_vals - v_star) < 4 * w
    if np.any(bad):
        k = int(np.argmax(bad))
        raise TestFunctionError(
            f"value separation insufficient: |V(x*) - V({other_fps[k]})| = "
            f"{abs(other_vals[k] - v_star)} < 4 * blend_width = {4 * w}")

    floor = min(float(other_vals.min(initial=v_star)), v_star)
    if v_floor is not None:
        floor = min(floor, float(v_floor))

    phi1 = build_reparam([(K + w, np.inf)],
                         identity_region=(floor - 8 * w, K), blend_width=w)
    pockets = _merged_flat_pockets(other_vals, w) if other_fps.size else []
    if pockets:
        phi2 = build_reparam(pockets, identity_region=(v_star - w, v_star + w),
                             blend_width=w)
    else:
        phi2 = build_reparam([(K + 6 * w, np.inf)],
                             identity_region=(floor - 8 * w, K + 2 * w),
                             blend_width=w)
    lo = floor - 6 * w
    hi = K + 4 * w
    phi3 = build_reparam([(-np.inf, lo - 4 * w), (hi + 4 * w, np.inf)],
                         identity_region=(lo, hi), blend_width=w)

    # |W| is capped by the saturator's two tail constants
    tails = np.asarray([phi3.value(lo - 5 * w), phi3.value(hi + 5 * w)])
    bound = float(np.max(np.abs(tails)))
    return TestFunction(V=V, phis=(phi1, phi2, phi3), targets=targets,
                        other_fps=other_fps, cap=float(K), bound=bound)


def build_test_function(V: LyapunovSpec, f: Callable, x_star,
                        other_fps: Sequence, K: float,
                        blend_width: Optional[float] = None,
                        v_floor: Optional[float] = None) -> TestFunction:
    """Bounded C^2 test function targeting one strict local maximum.

    W = phi3 o phi2 o phi1 o V with phi1 identity below K and flat above,
    phi2 slope-1 near V(x*) and flat near every other fixed-point level,
    and phi3 a saturator.  Requires V(x*) > V(fp) for every other
    registered fixed point and a level separation of at least four blend
    widths.  Monotonicity of the reparametrization plus descent of V give
    W o f <= W analytically; probe audits guard the implementation.
    """
    targets = np.atleast_2d(np.asarray(x_star, dtype=float))
    others = (np.atleast_2d(np.asarray(other_fps, dtype=float))
              if len(other_fps) else np.empty((0, targets.shape[1])))
    return _build(V, targets, others, float(K), blend_width, v_floor)


def build_symmetric_pair_test_function(V: LyapunovSpec, f: Callable, pair,
                                       other_fps: Sequence, K: float,
                                       blend_width: Optional[float] = None,
                                       v_floor: Optional[float] = None,
                                       ) -> TestFunction:
    """Test function targeting a symmetric pair of maxima at equal V-level.

    Extends the single-target construction to two strict local maxima with
    the same V value (the separation hypothesis fails between them, but
    excluding the pair jointly is enough when every other fixed point sits
    strictly lower).  A duplicated pair degenerates to the single builder.
    """
    pts = np.atleast_2d(np.asarray(pair, dtype=float))
    if pts.shape[0] != 2:
        raise TestFunctionError("pair must contain exactly two points")
    if np.allclose(pts[0], pts[1]):
        pts = pts[:1]
    else:
        v0, v1 = V(pts[0]), V(pts[1])
        if abs(v0 - v1) > 1e-9 * (1 + abs(v0)):
            raise TestFunctionError(
                f"pair has unequal V values: {v0} vs {v1}")
    others = (np.atleast_2d(np.asarray(other_fps, dtype=float))
              if len(other_fps) else np.empty((0, pts.shape[1])))
    return _build(V, pts, others, float(K), blend_width, v_floor)


def constant_test_function(V: LyapunovSpec, dim: int) -> TestFunction:
    """Debug override: W identically zero (all expansion terms vanish)."""
    return TestFunction(V=V, phis=(), targets=np.zeros((1, dim)),
                        other_fps=np.empty((0, dim)), cap=np.inf, bound=0.0,
                        constant=True)


def probe_descent_gap(W_value_rows: Callable, f_rows: Callable,
                      probes: np.ndarray) -> float:
    """max over probes of W(f(x)) - W(x); <= ~1e-10 for a valid W."""
    return float(np.max(W_value_rows(f_rows(probes))
                        - W_value_rows(probes)))


# ---------------------------------------------------------------------------
# Second-order expansion diagnostics
# ---------------------------------------------------------------------------

def expansion_lhs(m: EmpiricalMeasure, W: TestFunction, f: Callable,
                  f_rows: Optional[Callable] = None) -> float:
    """(1/gamma^2) * measure average of W - W o f."""
    if m.gamma <= 0:
        raise ValueError("measure gamma must be positive")
    if f_rows is not None:
        fx = np.asarray(f_rows(m.samples), dtype=float)
    else:
        fx = np.stack([np.atleast_1d(np.asarray(f(row), dtype=float))
                       for row in m.samples])
    diff = W.value_rows(m.samples) - W.value_rows(fx)
    return float(np.dot(m.weights, diff)) / m.gamma ** 2


_TAG_EXPANSION_BOOT = 97


def expansion_lhs_bootstrap(m: EmpiricalMeasure, W: TestFunction,
                            f: Callable, f_rows: Optional[Callable] = None,
                            bootstrap: int = 200, seed: int = 0,
                            ) -> tuple[float, float]:
    """expansion_lhs plus a chain-level bootstrap standard error."""
    if f_rows is not None:
        fx = np.asarray(f_rows(m.samples), dtype=float)
    else:
        fx = np.stack([np.atleast_1d(np.asarray(f(row), dtype=float))
                       for row in m.samples])
    diff = (W.value_rows(m.samples) - W.value_rows(fx)) / m.gamma ** 2
    lhs = float(np.dot(m.weights, diff))
    ids = m.meta.chain_ids
    if ids is None:
        return lhs, float("nan")
    chains = np.unique(ids)
    per_chain = np.asarray([
        np.dot(m.weights[ids == c], diff[ids == c])
        / m.weights[ids == c].sum()
        for c in chains])
    gen = stream(seed, _TAG_EXPANSION_BOOT)
    stats = per_chain[gen.integers(0, len(chains),
                                   size=(bootstrap, len(chains)))].mean(axis=1)
    return lhs, float(stats.std(ddof=1))


def expansion_rhs(spec: SystemSpec, W: TestFunction,
                  fp_masses: Sequence[tuple], n: int, seed: int,
                  ) -> tuple[float, float]:
    """Monte-Carlo value of the limiting expansion functional.

    (1/2) * sum over registered fixed points of mass * E[e(x,y)^T
    Hess W(x) e(x,y)], with the per-point masses supplied by the caller
    (finite-gamma ball masses serve as surrogates for the limit atoms).
    Returns (estimate, standard error).
    """
    total = 0.0
    var = 0.0
    for j, (x, mass) in enumerate(fp_masses):
        if not 0.0 <= mass <= 1.0 + 1e-12:
            raise ValueError(f"mass {mass} outside [0, 1]")
        if mass == 0.0:
            continue
        x = np.atleast_1d(np.asarray(x, dtype=float))
        H = W.hess(x)
        gen = stream(seed, TAG_EXCITATION, j)
        draws = spec.noise.sample(gen, n)
        gains = _gain_rows(spec, np.broadcast_to(x, (n, x.size)), draws)
        quad = np.einsum("ni,ij,nj->n", gains, H, gains)
        total += 0.5 * mass * float(quad.mean())
        var += (0.5 * mass) ** 2 * float(quad.var(ddof=1)) / n
    return total, float(np.sqrt(var))


# ---------------------------------------------------------------------------
# Drift and discontinuity-avoidance checks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DriftReport:
    beta_hat: float
    satisfied: bool
    tightness_bound: float   # beta_hat / (1 - alpha)
    per_probe: np.ndarray


def drift_check(spec: SystemSpec, V: LyapunovSpec, alpha: float,
                probe_points: np.ndarray, gamma: float, n: int,
                seed: int) -> DriftReport:
    """One-step geometric drift estimate: max over probes of the kernel
    mean of V minus alpha * V.  The ratio beta_hat / (1 - alpha) surrogates
    the uniform-in-gamma tightness bound."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    probes = np.atleast_2d(np.asarray(probe_points, dtype=float))
    if probes.shape[0] == 0:
        raise ValueError("probe_points must be nonempty")
    from .dynamics import transition_mean
    vals = np.empty(probes.shape[0])
    for i, x in enumerate(probes):
        if gamma == 0.0 and spec.noise.kind != "degenerate":
            est = float(V(spec.project(np.atleast_1d(
                np.asarray(spec.drift(x), dtype=float)))))
        else:
            est, _ = transition_mean(spec, V.fn, x, gamma, n,
                                     seed + 31 * i)
        vals[i] = est - alpha * V(x)
    beta_hat = float(vals.max())
    satisfied = bool(np.isfinite(beta_hat))
    return DriftReport(beta_hat=beta_hat, satisfied=satisfied,
                       tightness_bound=beta_hat / (1.0 - alpha),
                       per_probe=vals)


@dataclass(frozen=True)
class AvoidanceReport:
    max_fraction: float
    fractions: np.ndarray
    n_draws: int


def discontinuity_avoidance(spec: SystemSpec, probe_points: np.ndarray,
                            gamma: float, n: int, seed: int,
                            ) -> AvoidanceReport:
    """Monte-Carlo landing fraction on the declared discontinuity set.

    For each probe x, the fraction of draws y with f(x) + gamma * e(x, y)
    inside the marked set (pre-projection, matching the kernel's inner
    landing point).  Diffuse noise on a null set should report exactly 0.
    """
    if spec.discontinuity_indicator is None:
        raise ValueError("system has no discontinuity_indicator")
    probes = np.atleast_2d(np.asarray(probe_points, dtype=float))
    fracs = np.empty(probes.shape[0])
    for i, x in enumerate(probes):
        gen = stream(seed, TAG_PROBE, i)
        draws = spec.noise.sample(gen, n)
        fx = np.atleast_1d(np.asarray(spec.drift(x), dtype=float))
        gains = _gain_rows(spec, np.broadcast_to(x, (n, spec.dim)), draws)
        landed = fx[None, :] + gamma * gains
        if spec.discontinuity_indicator_rows is not None:
            hits = np.asarray(spec.discontinuity_indicator_rows(landed),
                              dtype=bool)
        else:
            hits = np.asarray([bool(spec.discontinuity_indicator(row))
                               for row in landed])
        fracs[i] = hits.mean()
    return AvoidanceReport(max_fraction=float(fracs.max()), fractions=fracs,
                           n_draws=n)
