"""Bundled example systems with ground-truth metadata.

Every card packages a drift map (several are time-u0 maps of explicit
descent flows, integrated by fixed-substep RK4), a descent function with
closed-form derivatives where available, the known fixed points with their
classifications, and a compiled fast path for measure estimation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _kernels
from .dynamics import (BlowUpError, NOISE_FAMILIES, NoiseModel, SimKernel,
                       SystemSpec)
from .lyapunov import LyapunovSpec

SUBSTEP_CAP = 0.01


def flow_map(gradient_field: Callable, u0: float, x,
             substep_cap: float = SUBSTEP_CAP):
    """Time-u0 map of the descent flow dx/dt = -gradient_field(x).

    Classical RK4 with the fixed substep h = u0 / ceil(u0 / substep_cap);
    deterministic, vectorized over leading axes when the field is.
    """
    if u0 <= 0:
        raise ValueError("u0 must be positive")
    nsub = int(np.ceil(u0 / substep_cap))
    h = u0 / nsub
    y = np.asarray(x, dtype=float).copy()
    for _ in range(nsub):
        k1 = -np.asarray(gradient_field(y), dtype=float)
        k2 = -np.asarray(gradient_field(y + 0.5 * h * k1), dtype=float)
        k3 = -np.asarray(gradient_field(y + 0.5 * h * k2), dtype=float)
        k4 = -np.asarray(gradient_field(y + h * k3), dtype=float)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise BlowUpError("non-finite state inside flow integration",
                              state=y)
    return y


@dataclass(frozen=True)
class KnownFixedPoint:
    location: np.ndarray
    classification: Optional[str]
    jacobian_defined: bool = True


@dataclass(frozen=True)
class ModelCard:
    """Ready-made system + descent function + ground truth."""

    name: str
    system: SystemSpec
    lyapunov: Optional[LyapunovSpec]
    known_fixed_points: tuple[KnownFixedPoint, ...]
    provenance: str
    domain_box: np.ndarray
    params: dict = field(default_factory=dict)
    localizable: bool = True
    descent: bool = True
    default_radius: float = 0.3
    # expansion experiment defaults: target point or symmetric pair,
    # remaining fixed points, and the saturation level K
    expansion: Optional[dict] = None

    @property
    def dim(self) -> int:
        return self.system.dim

    def fixed_point_array(self) -> np.ndarray:
        return np.stack([fp.location for fp in self.known_fixed_points])


def _noise(kind: str, dim: int) -> NoiseModel:
    try:
        return NOISE_FAMILIES[kind](dim)
    except KeyError:
        raise ValueError(f"unknown noise family {kind!r}; choose from "
                         f"{sorted(NOISE_FAMILIES)}") from None


# ---------------------------------------------------------------------------
# double well
# ---------------------------------------------------------------------------

def _dw_field(x):
    return x ** 3 - x


def make_double_well(u0: float = 0.5, noise: str = "gaussian",
                     substep_cap: float = SUBSTEP_CAP) -> ModelCard:
    """Time-u0 map of the scalar double-well descent flow.

    The outer equilibria +-1 are attracting; the origin is repelling with
    map derivative exp(u0) > 1 while remaining a strict local maximum of
    the potential, so it is the exclusion target.
    """
    if u0 <= 0:
        raise ValueError("u0 must be positive")
    nsub = int(np.ceil(u0 / substep_cap))

    def drift(x):
        return flow_map(_dw_field, u0, x, substep_cap=substep_cap)

    V = LyapunovSpec(
        fn=lambda x: 0.25 * x[0] ** 4 - 0.5 * x[0] ** 2,
        gradient=lambda x: np.array([x[0] ** 3 - x[0]]),
        hessian=lambda x: np.array([[3.0 * x[0] ** 2 - 1.0]]),
        coercive=True,
        fn_rows=lambda xs: 0.25 * xs[:, 0] ** 4 - 0.5 * xs[:, 0] ** 2,
        name="double_well",
    )
    runner = (lambda *args: _kernels.dw_runner(*args, u0, nsub))
    system = SystemSpec(
        dim=1, drift=drift, noise=_noise(noise, 1), drift_batch=drift,
        sim_kernel=SimKernel(runner=runner, name="double_well"),
        name="double_well")
    fps = (
        KnownFixedPoint(np.array([-1.0]), "strict_local_min"),
        KnownFixedPoint(np.array([0.0]), "strict_local_max"),
        KnownFixedPoint(np.array([1.0]), "strict_local_min"),
    )
    return ModelCard(
        name="double_well", system=system, lyapunov=V,
        known_fixed_points=fps,
        provenance="time-u0 map of the scalar double-well descent flow",
        domain_box=np.array([[-2.0, 2.0]]),
        params={"u0": u0, "noise": noise, "substep_cap": substep_cap},
        default_radius=0.3,
        expansion={"target": [[0.0]], "others": [[-1.0], [1.0]], "K": 1.0,
                   "v_floor": -0.25})


# ---------------------------------------------------------------------------
# quartic saddle (artifact extension: a nondegenerate planar saddle)
# ---------------------------------------------------------------------------

def _quartic_field(p):
    x, y = p[..., 0], p[..., 1]
    return np.stack([x + x ** 3, -y + y ** 3], axis=-1)


def make_quartic_saddle(u0: float = 0.5, noise: str = "gaussian",
                        substep_cap: float = 0.005) -> ModelCard:
    """Confined planar saddle with closed-form linearization.

    V(x, y) = (x^2 - y^2)/2 + (x^4 + y^4)/4 has a saddle at the origin and
    minima at (0, +-1); the time-u0 map linearizes to
    diag(exp(-u0), exp(u0)) at the origin, giving a strictly positive
    dissipation gap and a one-dimensional noncontracting subspace.
    """
    if u0 <= 0:
        raise ValueError("u0 must be positive")
    nsub = int(np.ceil(u0 / substep_cap))

    def drift(p):
        return flow_map(_quartic_field, u0, p, substep_cap=substep_cap)

    V = LyapunovSpec(
        fn=lambda p: 0.5 * (p[0] ** 2 - p[1] ** 2)
        + 0.25 * (p[0] ** 4 + p[1] ** 4),
        gradient=lambda p: np.array([p[0] + p[0] ** 3, -p[1] + p[1] ** 3]),
        hessian=lambda p: np.diag([1.0 + 3.0 * p[0] ** 2,
                                   -1.0 + 3.0 * p[1] ** 2]),
        coercive=True,
        fn_rows=lambda xs: 0.5 * (xs[:, 0] ** 2 - xs[:, 1] ** 2)
        + 0.25 * (xs[:, 0] ** 4 + xs[:, 1] ** 4),
        name="quartic_saddle",
    )
    runner = (lambda *args: _kernels.quartic_runner(*args, u0, nsub))
    system = SystemSpec(
        dim=2, drift=drift, noise=_noise(noise, 2), drift_batch=drift,
        sim_kernel=SimKernel(runner=runner, name="quartic_saddle"),
        name="quartic_saddle")
    fps = (
        KnownFixedPoint(np.array([0.0, -1.0]), "strict_local_min"),
        KnownFixedPoint(np.array([0.0, 0.0]), "saddle"),
        KnownFixedPoint(np.array([0.0, 1.0]), "strict_local_min"),
    )
    return ModelCard(
        name="quartic_saddle", system=system, lyapunov=V,
        known_fixed_points=fps,
        provenance="planar saddle descent flow with closed-form "
                   "linearization (artifact extension)",
        domain_box=np.array([[-2.0, 2.0], [-2.0, 2.0]]),
        params={"u0": u0, "noise": noise, "substep_cap": substep_cap},
        default_radius=0.3)


# ---------------------------------------------------------------------------
# lemniscate
# ---------------------------------------------------------------------------

def _lemni_L(x, y):
    r2 = x * x + y * y
    return r2 * r2 / 16.0 - x * y


def _lemni_profile(L):
    one = 1.0 + L * L
    return L * L / (2.0 * np.sqrt(one * np.sqrt(one)))


def _lemni_profile_d1(L):
    one = 1.0 + L * L
    return L * (1.0 + 0.25 * L * L) / (one * np.sqrt(one * np.sqrt(one)))


def _lemni_profile_d2(L):
    one = 1.0 + L * L
    return ((1.0 - 1.75 * L * L - 0.125 * L ** 4)
            / (one * one * np.sqrt(one * np.sqrt(one))))


def _lemni_grad_L(x, y):
    r2 = x * x + y * y
    return x * r2 / 4.0 - y, y * r2 / 4.0 - x


def make_lemniscate(u0: float = 0.5, theta_scale: float = 1.0,
                    band: float = 0.5, noise: str = "gaussian",
                    substep_cap: float = 0.0025) -> ModelCard:
    """Planar descent system whose minimum set is a figure-eight curve.

    V is a saturating profile of L(x, y) = (x^2+y^2)^2/16 - x*y; the drive
    field adds a tangential correction theta = theta_scale * eta(L) * J
    grad L (J a quarter turn, eta a C^2 bump supported on |L| < band), so
    grad V . h >= 0 holds identically (the correction is orthogonal to
    grad V) and the flow's equilibria are exactly the origin (degenerate,
    zero Hessian) and the two strict maxima (+-sqrt2, +-sqrt2).
    """
    if u0 <= 0:
        raise ValueError("u0 must be positive")
    nsub = int(np.ceil(u0 / substep_cap))
    ts = float(theta_scale)

    def h_field(p):
        x, y = p[..., 0], p[..., 1]
        L = _lemni_L(x, y)
        gx, gy = _lemni_grad_L(x, y)
        sp = _lemni_profile_d1(L)
        u = L / band
        eta = np.where(np.abs(L) < band,
                       (1.0 - np.minimum(u * u, 1.0)) ** 3, 0.0)
        return np.stack([sp * gx - ts * eta * gy,
                         sp * gy + ts * eta * gx], axis=-1)

    def drift(p):
        return flow_map(h_field, u0, p, substep_cap=substep_cap)

    def v_fn(p):
        return float(_lemni_profile(_lemni_L(p[0], p[1])))

    def v_grad(p):
        x, y = p[0], p[1]
        gx, gy = _lemni_grad_L(x, y)
        sp = _lemni_profile_d1(_lemni_L(x, y))
        return np.array([sp * gx, sp * gy])

    def v_hess(p):
        x, y = p[0], p[1]
        L = _lemni_L(x, y)
        gx, gy = _lemni_grad_L(x, y)
        g = np.array([gx, gy])
        hess_L = np.array([[(3 * x * x + y * y) / 4.0, x * y / 2.0 - 1.0],
                           [x * y / 2.0 - 1.0, (x * x + 3 * y * y) / 4.0]])
        return (_lemni_profile_d2(L) * np.outer(g, g)
                + _lemni_profile_d1(L) * hess_L)

    V = LyapunovSpec(
        fn=v_fn, gradient=v_grad, hessian=v_hess, coercive=True,
        fn_rows=lambda xs: _lemni_profile(_lemni_L(xs[:, 0], xs[:, 1])),
        name="lemniscate")
    runner = (lambda *args: _kernels.lemniscate_runner(*args, u0, nsub, ts,
                                                       band))
    system = SystemSpec(
        dim=2, drift=drift, noise=_noise(noise, 2), drift_batch=drift,
        sim_kernel=SimKernel(runner=runner, name="lemniscate"),
        name="lemniscate")
    s2 = float(np.sqrt(2.0))
    fps = (
        KnownFixedPoint(np.array([-s2, -s2]), "strict_local_max"),
        KnownFixedPoint(np.array([0.0, 0.0]), "degenerate"),
        KnownFixedPoint(np.array([s2, s2]), "strict_local_max"),
    )
    return ModelCard(
        name="lemniscate", system=system, lyapunov=V,
        known_fixed_points=fps,
        provenance="descent flow of a figure-eight level-set potential "
                   "with a tangential drive correction",
        domain_box=np.array([[-3.0, 3.0], [-3.0, 3.0]]),
        params={"u0": u0, "theta_scale": theta_scale, "band": band,
                "noise": noise, "substep_cap": substep_cap},
        default_radius=0.4,
        expansion={"pair": [[s2, s2], [-s2, -s2]], "others": [[0.0, 0.0]],
                   "K": 1.0, "v_floor": 0.0})


# ---------------------------------------------------------------------------
# coordination game
# ---------------------------------------------------------------------------

def _best_response(x):
    if x > 0.5:
        return 1.0
    if x < 0.5:
        return 0.0
    return 0.5


def make_coordination_game(noise: str = "uniform") -> ModelCard:
    """Pure best-response dynamics on [0, 1] with a tie at 1/2.

    The update jumps to the majority convention, the state is projected
    back onto [0, 1] after the noise kick, and the tie point 1/2 is the
    declared discontinuity set (never hit under diffuse noise).
    """
    def drift(x):
        return np.array([_best_response(float(x[0]))])

    def drift_batch(xs):
        c = xs[:, 0]
        out = np.where(c > 0.5, 1.0, np.where(c < 0.5, 0.0, 0.5))
        return out[:, None]

    V = LyapunovSpec(
        fn=lambda x: x[0] ** 2 * (1.0 - x[0]) ** 2,
        gradient=lambda x: np.array([
            2.0 * x[0] * (1.0 - x[0]) * (1.0 - 2.0 * x[0])]),
        hessian=lambda x: np.array([[12.0 * x[0] ** 2 - 12.0 * x[0] + 2.0]]),
        coercive=False,
        fn_rows=lambda xs: xs[:, 0] ** 2 * (1.0 - xs[:, 0]) ** 2,
        name="coordination_game")
    system = SystemSpec(
        dim=1, drift=drift, noise=_noise(noise, 1), drift_batch=drift_batch,
        projection=lambda x: np.clip(x, 0.0, 1.0),
        projection_batch=lambda xs: np.clip(xs, 0.0, 1.0),
        discontinuity_indicator=lambda u: bool(u[0] == 0.5),
        discontinuity_indicator_rows=lambda us: us[:, 0] == 0.5,
        sim_kernel=SimKernel(runner=_kernels.coordination_runner,
                             name="coordination_game"),
        name="coordination_game")
    fps = (
        KnownFixedPoint(np.array([0.0]), "strict_local_min"),
        KnownFixedPoint(np.array([0.5]), "strict_local_max",
                        jacobian_defined=False),
        KnownFixedPoint(np.array([1.0]), "strict_local_min"),
    )
    return ModelCard(
        name="coordination_game", system=system, lyapunov=V,
        known_fixed_points=fps,
        provenance="pure best-response map on the unit interval",
        domain_box=np.array([[0.0, 1.0]]), params={"noise": noise},
        default_radius=0.05,
        expansion={"target": [[0.5]], "others": [[0.0], [1.0]], "K": 0.1,
                   "v_floor": 0.0})


# ---------------------------------------------------------------------------
# tent map
# ---------------------------------------------------------------------------

def _tent(x):
    if x < 0.0 or x > 1.0:
        return 0.0
    if x <= 0.5:
        return 2.0 * x
    return 2.0 * (1.0 - x)


def make_tent_map(noise: str = "uniform") -> ModelCard:
    """Piecewise-linear chaos generator preserving Lebesgue measure on
    [0, 1]; any continuous descent function for it is constant there, so
    the card ships no descent metadata and is flagged non-localizable."""
    def drift(x):
        return np.array([_tent(float(x[0]))])

    def drift_batch(xs):
        c = xs[:, 0]
        out = np.where((c < 0.0) | (c > 1.0), 0.0,
                       np.where(c <= 0.5, 2.0 * c, 2.0 * (1.0 - c)))
        return out[:, None]

    system = SystemSpec(
        dim=1, drift=drift, noise=_noise(noise, 1), drift_batch=drift_batch,
        sim_kernel=SimKernel(runner=_kernels.tent_runner, name="tent_map"),
        name="tent_map")
    fps = (
        KnownFixedPoint(np.array([0.0]), None),
        KnownFixedPoint(np.array([2.0 / 3.0]), None),
    )
    return ModelCard(
        name="tent_map", system=system, lyapunov=None,
        known_fixed_points=fps,
        provenance="piecewise-linear chaos generator on the unit interval",
        domain_box=np.array([[0.0, 1.0]]), params={"noise": noise},
        localizable=False, descent=False, default_radius=0.1)


# ---------------------------------------------------------------------------
# contracting Borel map
# ---------------------------------------------------------------------------

def make_contracting_borel(a: float = 0.5, noise: str = "gaussian",
                           ) -> ModelCard:
    """Discontinuous Borel contraction with |f(x)| = a |x| exactly.

    The sign flips on a partition accumulating at the origin (sign of
    sin(1/|x|)), so f is continuous at 0 and only there; the invariant
    measures still collapse to the point mass at 0 as gamma -> 0.
    """
    if not 0.0 < a < 1.0:
        raise ValueError("a must lie in (0, 1)")

    def scalar(x):
        if x == 0.0:
            return 0.0
        s = 1.0 if np.sin(1.0 / abs(x)) >= 0.0 else -1.0
        return a * x * s

    def drift(x):
        return np.array([scalar(float(x[0]))])

    def drift_batch(xs):
        c = xs[:, 0]
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.where(np.sin(1.0 / np.abs(c)) >= 0.0, 1.0, -1.0)
        out = np.where(c == 0.0, 0.0, a * c * s)
        return out[:, None]

    V = LyapunovSpec(
        fn=lambda x: x[0] ** 2,
        gradient=lambda x: np.array([2.0 * x[0]]),
        hessian=lambda x: np.array([[2.0]]),
        coercive=True,
        fn_rows=lambda xs: xs[:, 0] ** 2,
        name="contracting_borel")
    runner = (lambda *args: _kernels.contracting_runner(*args, a))
    system = SystemSpec(
        dim=1, drift=drift, noise=_noise(noise, 1), drift_batch=drift_batch,
        sim_kernel=SimKernel(runner=runner, name="contracting_borel"),
        name="contracting_borel")
    fps = (KnownFixedPoint(np.array([0.0]), "strict_local_min",
                           jacobian_defined=False),)
    return ModelCard(
        name="contracting_borel", system=system, lyapunov=V,
        known_fixed_points=fps,
        provenance="discontinuous Borel contraction, sign flipping on a "
                   "partition accumulating at the origin",
        domain_box=np.array([[-1.0, 1.0]]), params={"a": a, "noise": noise},
        default_radius=0.2)


MODEL_MAKERS = {
    "double_well": make_double_well,
    "quartic_saddle": make_quartic_saddle,
    "lemniscate": make_lemniscate,
    "coordination_game": make_coordination_game,
    "tent_map": make_tent_map,
    "contracting_borel": make_contracting_borel,
}


def make_model(name: str, **params) -> ModelCard:
    try:
        maker = MODEL_MAKERS[name]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; available: "
                         f"{sorted(MODEL_MAKERS)}") from None
    return maker(**params)
