"""Lloyd maps, distortion descent, and Voronoi mosaics.

One-dimensional codebooks are the interior boundary configurations
m < x^1 < ... < x^n < M; the update averages the centroids of the two
cells adjacent to each boundary.  Multi-dimensional codebooks are
generator points whose update moves each to its own cell's centroid.
Exact interval moments (or adaptive Simpson quadrature at 1e-10) drive
the 1-d path; the multi-d path is Monte Carlo with reported errors.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ._streams import TAG_QUANTIZER, stream
from .dynamics import NOISE_FAMILIES, SystemSpec
from .lyapunov import lyapunov_from_scalar
from .models import KnownFixedPoint, ModelCard

SIMPSON_TOL = 1e-10
MASS_FLOOR = 1e-12
UNDERFILL_COUNT = 10


class QuantizerError(ValueError):
    pass


class DegenerateCellError(QuantizerError):
    pass


class OrderingError(QuantizerError):
    pass


class DuplicateCodepointError(QuantizerError):
    pass


class UnderfilledCellError(QuantizerError):
    pass


@dataclass(frozen=True)
class SourceLaw:
    """Diffuse source distribution on a compact convex support."""

    dim: int
    density: Callable
    sampler: Callable                 # (generator, n) -> (n, dim)
    support: np.ndarray               # (dim, 2)
    name: str = ""
    second_moment_finite: bool = True
    exact_mass: Optional[Callable] = None   # (a, b) -> mu((a, b]), 1-d
    exact_m1: Optional[Callable] = None     # (a, b) -> int u dmu
    exact_m2: Optional[Callable] = None     # (a, b) -> int u^2 dmu

    @property
    def lo(self) -> float:
        return float(self.support[0, 0])

    @property
    def hi(self) -> float:
        return float(self.support[0, 1])

    def sample(self, seed: int, n: int) -> np.ndarray:
        return self.sampler(stream(seed, TAG_QUANTIZER), n)


def uniform_law(m: float = 0.0, M: float = 1.0) -> SourceLaw:
    width = M - m
    return SourceLaw(
        dim=1,
        density=lambda u: np.where((u >= m) & (u <= M), 1.0 / width, 0.0),
        sampler=lambda gen, n: gen.uniform(m, M, size=(n, 1)),
        support=np.array([[m, M]]),
        name=f"uniform[{m},{M}]",
        exact_mass=lambda a, b: (b - a) / width,
        exact_m1=lambda a, b: (b * b - a * a) / (2.0 * width),
        exact_m2=lambda a, b: (b ** 3 - a ** 3) / (3.0 * width),
    )


def triangular_law() -> SourceLaw:
    """Density 2u on [0, 1]."""
    return SourceLaw(
        dim=1,
        density=lambda u: np.where((u >= 0.0) & (u <= 1.0), 2.0 * u, 0.0),
        sampler=lambda gen, n: np.sqrt(gen.random((n, 1))),
        support=np.array([[0.0, 1.0]]),
        name="triangular-2u",
        exact_mass=lambda a, b: b * b - a * a,
        exact_m1=lambda a, b: 2.0 * (b ** 3 - a ** 3) / 3.0,
        exact_m2=lambda a, b: (b ** 4 - a ** 4) / 2.0,
    )


def law_from_density(density: Callable, support, sampler: Callable,
                     name: str = "custom") -> SourceLaw:
    """1-d law with quadrature-only moments (no closed forms)."""
    return SourceLaw(dim=1, density=density, sampler=sampler,
                     support=np.atleast_2d(np.asarray(support, float)),
                     name=name)


def uniform_box_law(dim: int) -> SourceLaw:
    return SourceLaw(
        dim=dim,
        density=lambda u: 1.0,
        sampler=lambda gen, n: gen.random((n, dim)),
        support=np.tile([0.0, 1.0], (dim, 1)),
        name=f"uniform-box-{dim}d",
    )


def adaptive_simpson(f: Callable, a: float, b: float,
                     tol: float = SIMPSON_TOL, max_depth: int = 48) -> float:
    """Classic recursive adaptive Simpson quadrature."""
    if a == b:
        return 0.0

    def simpson(lo, hi, flo, fmid, fhi):
        return (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi)

    def recurse(lo, hi, flo, fmid, fhi, whole, eps, depth):
        mid = 0.5 * (lo + hi)
        lm = 0.5 * (lo + mid)
        rm = 0.5 * (mid + hi)
        flm = float(f(lm))
        frm = float(f(rm))
        left = simpson(lo, mid, flo, flm, fmid)
        right = simpson(mid, hi, fmid, frm, fhi)
        if depth <= 0:
            return left + right
        if abs(left + right - whole) <= 15.0 * eps:
            return left + right + (left + right - whole) / 15.0
        return (recurse(lo, mid, flo, flm, fmid, left, eps / 2.0, depth - 1)
                + recurse(mid, hi, fmid, frm, fhi, right, eps / 2.0,
                          depth - 1))

    fa, fb = float(f(a)), float(f(b))
    fm = float(f(0.5 * (a + b)))
    whole = simpson(a, b, fa, fm, fb)
    return recurse(a, b, fa, fm, fb, whole, tol, max_depth)


def _interval_moments(law: SourceLaw, a: float, b: float,
                      ) -> tuple[float, float, float]:
    if law.exact_mass and law.exact_m1 and law.exact_m2:
        return (float(law.exact_mass(a, b)), float(law.exact_m1(a, b)),
                float(law.exact_m2(a, b)))
    rho = law.density
    return (adaptive_simpson(lambda u: rho(u), a, b),
            adaptive_simpson(lambda u: u * rho(u), a, b),
            adaptive_simpson(lambda u: u * u * rho(u), a, b))


def centroid_1d(law: SourceLaw, alpha: float, beta: float) -> float:
    """Conditional mean of the law on (alpha, beta], with the degenerate
    convention centroid(alpha, alpha) = alpha."""
    m, M = law.lo, law.hi
    if not (m <= alpha <= beta <= M):
        raise QuantizerError(
            f"interval [{alpha}, {beta}] outside support [{m}, {M}] "
            "or reversed")
    if beta == alpha:
        return float(alpha)
    mass, m1, _ = _interval_moments(law, alpha, beta)
    if mass < MASS_FLOOR:
        raise DegenerateCellError(
            f"cell ({alpha}, {beta}] carries mass {mass} < {MASS_FLOOR}")
    return float(np.clip(m1 / mass, alpha, beta))


def check_codebook_1d(law: SourceLaw, x: np.ndarray) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.ndim != 1:
        raise OrderingError("1-d codebook must be a flat vector")
    ext = np.concatenate([[law.lo], x, [law.hi]])
    if np.any(np.diff(ext) <= 0):
        raise OrderingError(
            f"codebook must satisfy {law.lo} < x1 < ... < xn < {law.hi}; "
            f"got {x}")
    return x


def lloyd_map_1d(law: SourceLaw, x: np.ndarray) -> np.ndarray:
    """Boundary update: each point moves to the average of the centroids
    of its two adjacent cells (cells are delimited by the points
    themselves, padded with the support endpoints)."""
    x = check_codebook_1d(law, x)
    ext = np.concatenate([[law.lo], x, [law.hi]])
    cents = np.array([centroid_1d(law, ext[i], ext[i + 1])
                      for i in range(len(ext) - 1)])
    new = 0.5 * (cents[:-1] + cents[1:])
    if np.any(np.diff(np.concatenate([[law.lo], new, [law.hi]])) <= 0):
        raise OrderingError(
            "updated codebook lost its ordering; the source law is not "
            "diffuse enough for the boundary update")
    return new


def distortion_1d(law: SourceLaw, x: np.ndarray) -> float:
    """Mean squared quantization error of the cell-centroid quantizer."""
    x = check_codebook_1d(law, x)
    ext = np.concatenate([[law.lo], x, [law.hi]])
    total = 0.0
    for i in range(len(ext) - 1):
        mass, m1, m2 = _interval_moments(law, ext[i], ext[i + 1])
        if mass < MASS_FLOOR:
            raise DegenerateCellError(
                f"cell ({ext[i]}, {ext[i + 1]}] carries mass {mass}")
        total += m2 - m1 * m1 / mass
    return float(total)


def lemma_a1_oracle(law: SourceLaw, boundaries: np.ndarray,
                    n_grid: int = 2001) -> np.ndarray:
    """Brute-force per-cell level optimization.

    For fixed cell boundaries, scans a uniform grid of candidate levels
    and returns each cell's grid argmin of the squared error.  Stays
    independent of the closed-form centroid answer it is used to check.
    """
    bnd = np.atleast_1d(np.asarray(boundaries, dtype=float))
    ext = np.concatenate([[law.lo], bnd, [law.hi]])
    if np.any(np.diff(ext) < 0):
        raise OrderingError("boundaries must be ordered inside the support")
    grid = np.linspace(law.lo, law.hi, n_grid)
    argmins = np.empty(len(ext) - 1)
    for i in range(len(ext) - 1):
        mass, m1, m2 = _interval_moments(law, ext[i], ext[i + 1])
        objective = mass * grid ** 2 - 2.0 * m1 * grid + m2
        argmins[i] = grid[int(np.argmin(objective))]
    return argmins


@dataclass(frozen=True)
class BoundaryOracleResult:
    argmins: np.ndarray
    flat: np.ndarray          # per-boundary: objective constant in t
    flat_ranges: np.ndarray   # (n, 2) grid span attaining the minimum


def lemma_a2_oracle(law: SourceLaw, levels: np.ndarray,
                    n_grid: int = 2001) -> BoundaryOracleResult:
    """Brute-force per-boundary optimization for fixed levels.

    The total squared error separates per boundary into
    psi_j(t) = integral_m^t [(b_j - u)^2 - (b_{j+1} - u)^2] dmu, scanned
    on a uniform grid.  Equal adjacent levels make psi_j constant; the
    flat set is reported instead of an arbitrary point.
    """
    b = np.atleast_1d(np.asarray(levels, dtype=float))
    if b.size < 2:
        raise QuantizerError("need at least two levels")
    grid = np.linspace(law.lo, law.hi, n_grid)
    n = b.size - 1
    argmins = np.empty(n)
    flat = np.zeros(n, dtype=bool)
    flat_ranges = np.empty((n, 2))
    masses = np.array([_interval_moments(law, law.lo, t)[0] for t in grid])
    m1s = np.array([_interval_moments(law, law.lo, t)[1] for t in grid])
    for j in range(n):
        psi = (b[j] ** 2 - b[j + 1] ** 2) * masses \
            - 2.0 * (b[j] - b[j + 1]) * m1s
        lo = psi.min()
        spread = psi.max() - lo
        scale = max(1.0, np.abs(psi).max())
        atol = 1e-12 * scale
        if spread <= atol:
            flat[j] = True
            flat_ranges[j] = (grid[0], grid[-1])
            argmins[j] = grid[0]
        else:
            near = np.flatnonzero(psi <= lo + atol)
            flat_ranges[j] = (grid[near[0]], grid[near[-1]])
            argmins[j] = grid[int(np.argmin(psi))]
    return BoundaryOracleResult(argmins=argmins, flat=flat,
                                flat_ranges=flat_ranges)


BOUNDARY = -1


def _canonical_indices(x: np.ndarray) -> np.ndarray:
    """Minimal-index representative for every codepoint (duplicates
    resolve to the first occurrence)."""
    n = x.shape[0]
    reps = np.arange(n)
    for i in range(n):
        for j in range(i):
            if np.array_equal(x[i], x[j]):
                reps[i] = reps[j]
                break
    return reps


def voronoi_assign(x: np.ndarray, u: np.ndarray) -> int:
    """Index of the open Voronoi cell containing u.

    Duplicate codepoints resolve to the minimal index; a point equidistant
    to its two nearest distinct codepoints gets the BOUNDARY flag (-1).
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    u = np.atleast_1d(np.asarray(u, dtype=float))
    return int(voronoi_assign_rows(x, u[None, :])[0])


def voronoi_assign_rows(x: np.ndarray, us: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    us = np.atleast_2d(np.asarray(us, dtype=float))
    reps = _canonical_indices(x)
    uniq = np.unique(reps)
    d2 = ((us[:, None, :] - x[None, uniq, :]) ** 2).sum(axis=2)
    nearest = np.argmin(d2, axis=1)
    mind = d2[np.arange(us.shape[0]), nearest]
    ties = (d2 == mind[:, None]).sum(axis=1) > 1
    out = uniq[nearest]
    out[ties] = BOUNDARY
    return out


def lloyd_map_md(law: SourceLaw, x: np.ndarray, n_mc: int,
                 seed: int) -> np.ndarray:
    """Monte-Carlo centroid update: each codepoint moves to the sample
    centroid of its own cell.  Boundary-flagged samples are discarded
    (they carry zero mass under a diffuse law); empty or underfilled
    cells raise with the offending index."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    reps = _canonical_indices(x)
    dup = np.flatnonzero(reps != np.arange(x.shape[0]))
    if dup.size:
        raise DuplicateCodepointError(
            f"codepoint {dup[0]} duplicates codepoint {reps[dup[0]]}: "
            "its cell is empty")
    pts = law.sample(seed, n_mc)
    cells = voronoi_assign_rows(x, pts)
    new = np.empty_like(x)
    floor = max(UNDERFILL_COUNT, int(np.ceil(MASS_FLOOR * n_mc)))
    for i in range(x.shape[0]):
        mine = pts[cells == i]
        if mine.shape[0] <= floor:
            raise UnderfilledCellError(
                f"cell {i} received {mine.shape[0]} of {n_mc} samples "
                f"(floor {floor}): its mass is numerically zero")
        new[i] = mine.mean(axis=0)
    return new


def distortion_md(law: SourceLaw, x: np.ndarray, n_mc: int,
                  seed: int) -> tuple[float, float]:
    """Monte-Carlo mean squared distance to the assigned cell's centroid
    (the quantizer reproduces by centroid, not by codepoint).  Returns
    (estimate, standard error)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    pts = law.sample(seed, n_mc)
    cells = voronoi_assign_rows(x, pts)
    keep = cells != BOUNDARY
    pts, cells = pts[keep], cells[keep]
    errs = np.empty(pts.shape[0])
    for i in np.unique(cells):
        mine = pts[cells == i]
        centroid = mine.mean(axis=0)
        errs[cells == i] = ((mine - centroid) ** 2).sum(axis=1)
    return (float(errs.mean()),
            float(errs.std(ddof=1) / np.sqrt(errs.shape[0])))


def save_codebook(x: np.ndarray, path) -> None:
    np.savetxt(path, np.atleast_2d(np.asarray(x, dtype=float)),
               delimiter=",", fmt="%r")


def load_codebook(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)


def _state_seed(x: np.ndarray) -> int:
    return zlib.crc32(np.ascontiguousarray(x).tobytes())


def lloyd_fixed_point_1d(law: SourceLaw, n: int, tol: float = 1e-13,
                         max_iter: int = 100_000) -> np.ndarray:
    """Iterate the boundary update to convergence from an evenly spaced
    start; the descent property makes this the card's ground truth."""
    x = law.lo + (np.arange(1, n + 1) / (n + 1)) * (law.hi - law.lo)
    for _ in range(max_iter):
        new = lloyd_map_1d(law, x)
        if np.max(np.abs(new - x)) < tol:
            return new
        x = new
    raise QuantizerError("boundary update failed to converge")


def perturbed_lloyd_card(law: SourceLaw, n: int, noise: str = "gaussian",
                         n_mc: int = 200_000) -> ModelCard:
    """Perturbed quantizer dynamics as a ready-made model card.

    1-d laws use the exact boundary update as drift; multi-d laws use the
    Monte-Carlo centroid update with a large sample count frozen per
    evaluation (substream keyed by a hash of the state, keeping the drift
    a pure function of its argument).  States are re-sorted and clipped
    into the support after each noisy step; coinciding coordinates form
    the declared discontinuity set.
    """
    if law.dim == 1:
        dim = n
        m, M = law.lo, law.hi

        def drift(x):
            return lloyd_map_1d(law, x)

        def projection(x):
            return np.clip(np.sort(x), m, M)

        def v_fn(x):
            return distortion_1d(law, np.sort(x))

        fp = lloyd_fixed_point_1d(law, n)
        V = lyapunov_from_scalar(v_fn, name=f"distortion-{law.name}",
                                 coercive=False)
        system = SystemSpec(
            dim=dim, drift=drift, noise=NOISE_FAMILIES[noise](dim),
            projection=projection,
            projection_batch=lambda xs: np.clip(np.sort(xs, axis=1), m, M),
            discontinuity_indicator=lambda x: bool(
                np.any(np.diff(np.sort(x)) == 0.0)
                or np.any((x <= m) | (x >= M))),
            discontinuity_indicator_rows=lambda xs: np.any(
                np.diff(np.sort(xs, axis=1), axis=1) == 0.0, axis=1)
            | np.any((xs <= m) | (xs >= M), axis=1),
            name=f"lloyd_1d_{law.name}_n{n}")
        fps = (KnownFixedPoint(fp, "strict_local_min"),)
        spread = (M - m) / (4.0 * (n + 1))
        box = np.stack([fp - spread, fp + spread], axis=1)
        return ModelCard(
            name="lloyd_1d", system=system, lyapunov=V,
            known_fixed_points=fps,
            provenance=f"one-dimensional quantizer boundary update, "
                       f"{law.name}, n={n}",
            domain_box=box, params={"law": law.name, "n": n, "noise": noise},
            default_radius=min(0.1, spread))

    dim = n * law.dim

    def drift_md(x):
        book = x.reshape(n, law.dim)
        return lloyd_map_md(law, book, n_mc, _state_seed(x)).ravel()

    def v_fn_md(x):
        book = x.reshape(n, law.dim)
        return distortion_md(law, book, n_mc, _state_seed(x))[0]

    lo = np.tile(law.support[:, 0], n)
    hi = np.tile(law.support[:, 1], n)
    system = SystemSpec(
        dim=dim, drift=drift_md, noise=NOISE_FAMILIES[noise](dim),
        projection=lambda x: np.clip(x, lo, hi),
        discontinuity_indicator=lambda x: bool(
            len(np.unique(x.reshape(n, law.dim), axis=0)) < n),
        name=f"lloyd_md_{law.name}_n{n}")
    V = lyapunov_from_scalar(v_fn_md, name=f"distortion-{law.name}",
                             coercive=False)
    return ModelCard(
        name="lloyd_md", system=system, lyapunov=V, known_fixed_points=(),
        provenance=f"multi-dimensional quantizer centroid update, "
                   f"{law.name}, n={n}",
        domain_box=np.stack([lo, hi], axis=1),
        params={"law": law.name, "n": n, "noise": noise, "n_mc": n_mc},
        default_radius=0.1)


_LAWS = {"uniform": uniform_law, "triangular": triangular_law}


def _lloyd_1d_maker(law: str = "uniform", n: int = 2,
                    noise: str = "gaussian",
                    law_params: Optional[dict] = None) -> ModelCard:
    try:
        maker = _LAWS[law]
    except KeyError:
        raise QuantizerError(f"unknown source law {law!r}; available: "
                             f"{sorted(_LAWS)}") from None
    return perturbed_lloyd_card(maker(**(law_params or {})), n, noise=noise)


def _lloyd_md_maker(dim: int = 2, n: int = 2, noise: str = "gaussian",
                    n_mc: int = 200_000) -> ModelCard:
    return perturbed_lloyd_card(uniform_box_law(dim), n, noise=noise,
                                n_mc=n_mc)


# register the quantizer dynamics alongside the analytic models
from .models import MODEL_MAKERS as _MAKERS  # noqa: E402

_MAKERS.setdefault("lloyd_1d", _lloyd_1d_maker)
_MAKERS.setdefault("lloyd_md", _lloyd_md_maker)
