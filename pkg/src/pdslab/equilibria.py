"""Fixed points of the deterministic drift and their saddle machinery.

Locates fixed points by damped multistart Newton, classifies them through
the descent function's Hessian, and computes the linearized-dissipation
gap, the spectral projector onto the noncontracting subspace, and the
noise-excitation integral that together certify exclusion of unstable
equilibria.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg

from ._diff import fd_jacobian
from ._streams import TAG_EXCITATION, stream
from .dynamics import SystemSpec
from .lyapunov import LyapunovSpec

CLASS_MAX = "strict_local_max"
CLASS_MIN = "strict_local_min"
CLASS_SADDLE = "saddle"
CLASS_DEGENERATE = "degenerate"

_RING_TOL = 1e-9


class NotACriticalPointError(ValueError):
    pass


class ThresholdRingError(ValueError):
    pass


@dataclass(frozen=True)
class FixedPointReport:
    """Everything the exclusion experiments need to know about one
    fixed point."""

    location: np.ndarray
    residual: float
    jacobian: np.ndarray
    hessian: np.ndarray
    classification: str
    saddle_gap: float
    unstable_dim: int
    projector: np.ndarray
    noise_excitation: float
    noise_excitation_se: float = float("nan")
    jacobian_defined: bool = True


def find_fixed_points(f: Callable, search_box, n_starts: int, tol: float,
                      seed: int, max_iter: int = 60) -> np.ndarray:
    """Damped-Newton roots of f(x) - x from quasi-random starts.

    Uses finite-difference Jacobians and backtracking damping; converged
    roots (residual <= tol) are deduplicated at distance 10 * tol and
    returned sorted lexicographically.  The list may be empty; nothing
    certifies that all fixed points were found.
    """
    if n_starts < 1:
        raise ValueError("n_starts must be >= 1")
    box = np.atleast_2d(np.asarray(search_box, dtype=float))
    dim = box.shape[0]
    from scipy.stats import qmc
    sampler = qmc.Sobol(d=dim, scramble=True, seed=seed)
    n_pow2 = 1 << int(np.ceil(np.log2(max(n_starts, 2))))
    unit = sampler.random(n_pow2)[:n_starts]
    starts = box[:, 0] + unit * (box[:, 1] - box[:, 0])

    def g(x):
        return np.atleast_1d(np.asarray(f(x), dtype=float)) - x

    def polish(x):
        # a few undamped steps drive the location to the quadratic limit,
        # keeping 10 * tol deduplication meaningful for weak hyperbolicity
        best, best_norm = x, np.linalg.norm(g(x))
        for _ in range(4):
            try:
                delta = np.linalg.solve(fd_jacobian(g, best), -g(best))
            except np.linalg.LinAlgError:
                break
            cand = best + delta
            norm = np.linalg.norm(g(cand))
            if not np.isfinite(norm) or norm >= best_norm:
                break
            best, best_norm = cand, norm
        return best

    roots = []
    for x in starts:
        x = x.copy()
        for _ in range(max_iter):
            gx = g(x)
            norm = np.linalg.norm(gx)
            if not np.isfinite(norm):
                break
            if norm <= tol:
                roots.append(polish(x))
                break
            J = fd_jacobian(g, x)
            try:
                delta = np.linalg.solve(J, -gx)
            except np.linalg.LinAlgError:
                break
            alpha = 1.0
            while alpha > 1e-4:
                cand = x + alpha * delta
                if np.linalg.norm(g(cand)) < norm * (1 - 1e-4 * alpha):
                    break
                alpha *= 0.5
            else:
                break
            x = x + alpha * delta
    if not roots:
        return np.empty((0, dim))
    pts = np.asarray(roots)
    order = np.lexsort(pts.T[::-1])
    pts = pts[order]
    kept: list[np.ndarray] = []
    for p in pts:
        if all(np.linalg.norm(p - q) > 10 * tol for q in kept):
            kept.append(p)
    out = np.asarray(kept)
    return out[np.lexsort(out.T[::-1])]


def classify(V: LyapunovSpec, x_star, degeneracy_tol: float = 1e-6,
             grad_tol: float = 1e-5) -> str:
    """Classification of a critical point by Hessian eigenvalue signs.

    Raises NotACriticalPointError when the gradient is not small: the
    classification is only meaningful on the critical set.
    """
    x = np.atleast_1d(np.asarray(x_star, dtype=float))
    grad = np.asarray(V.gradient(x), dtype=float)
    gnorm = float(np.linalg.norm(grad))
    if gnorm > grad_tol:
        raise NotACriticalPointError(
            f"|grad V({x})| = {gnorm} exceeds tolerance {grad_tol}")
    H = np.asarray(V.hessian(x), dtype=float)
    evals = np.linalg.eigvalsh(0.5 * (H + H.T))
    if np.any(np.abs(evals) <= degeneracy_tol):
        return CLASS_DEGENERATE
    if np.all(evals < 0):
        return CLASS_MAX
    if np.all(evals > 0):
        return CLASS_MIN
    return CLASS_SADDLE


def saddle_gap(V: LyapunovSpec, f: Callable, x_star,
               jacobian: Optional[np.ndarray] = None) -> float:
    """Minimum eigenvalue of H - Df^T H Df at a fixed point, H = Hess V.

    A positive value certifies the nondegenerate linearized dissipation
    needed for saddle exclusion; descent alone already makes the matrix
    nonnegative.
    """
    x = np.atleast_1d(np.asarray(x_star, dtype=float))
    H = np.asarray(V.hessian(x), dtype=float)
    J = fd_jacobian(f, x) if jacobian is None else np.asarray(jacobian)
    M = H - J.T @ H @ J
    return float(np.linalg.eigvalsh(0.5 * (M + M.T)).min())


def unstable_projector(A: np.ndarray, modulus_threshold: float = 1.0,
                       ) -> tuple[np.ndarray, int]:
    """Real spectral projector onto the invariant subspace of eigenvalues
    with modulus >= threshold, along the complementary invariant subspace.

    Complex pairs stay together (ordered real Schur form + a Sylvester
    solve), so the projector is real.  Eigenvalues within 1e-9 of the
    threshold ring leave the splitting undefined and raise.
    """
    A = np.asarray(A, dtype=float)
    d = A.shape[0]
    moduli = np.abs(np.linalg.eigvals(A))
    if np.any(np.abs(moduli - modulus_threshold) < _RING_TOL):
        raise ThresholdRingError(
            f"eigenvalue modulus within {_RING_TOL} of threshold "
            f"{modulus_threshold}: splitting undefined (moduli {moduli})")
    thr2 = modulus_threshold ** 2

    def keep(wr, wi):
        return wr * wr + wi * wi >= thr2

    T, Z, sdim = scipy.linalg.schur(A, output="real", sort=keep)
    k = int(sdim)
    if k == 0:
        return np.zeros((d, d)), 0
    if k == d:
        return np.eye(d), d
    T11 = T[:k, :k]
    T12 = T[:k, k:]
    T22 = T[k:, k:]
    # invariant complement {(Yw, w)}: T11 Y - Y T22 = -T12
    Y = scipy.linalg.solve_sylvester(T11, -T22, -T12)
    P_t = np.zeros((d, d))
    P_t[:k, :k] = np.eye(k)
    P_t[:k, k:] = -Y
    return Z @ P_t @ Z.T, k


def noise_excitation(spec: SystemSpec, x_star, projector: np.ndarray,
                     n: int, seed: int) -> tuple[float, float]:
    """Monte-Carlo estimate of E ||P e(x*, y)||^2 with standard error.

    Strictly positive excitation certifies that the noise feeds the
    noncontracting directions; zero flags an excitation failure.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    x = np.atleast_1d(np.asarray(x_star, dtype=float))
    P = np.asarray(projector, dtype=float)
    gen = stream(seed, TAG_EXCITATION)
    draws = spec.noise.sample(gen, n)
    from .measures import _gain_rows
    gains = _gain_rows(spec, np.broadcast_to(x, (n, x.size)), draws)
    vals = np.einsum("ij,nj->ni", P, gains)
    sq = np.sum(vals * vals, axis=1)
    return float(sq.mean()), float(sq.std(ddof=1) / np.sqrt(n))


@dataclass(frozen=True)
class IteratedFormCurve:
    values: np.ndarray
    diverged: bool
    diverged_at: Optional[int]   # first p with |Q_p| past the threshold


def iterated_form_curve(A: np.ndarray, H: np.ndarray,
                        noise_samples: np.ndarray, p_max: int,
                        divergence_threshold: float = 1e9,
                        ) -> IteratedFormCurve:
    """Q_p = mean over samples of (A^p v)^T H (A^p v), p = 1..p_max.

    Powers are applied by repeated multiplication.  Overflow to non-finite
    truncates the curve at the last finite entry; crossing the divergence
    threshold flags divergence without truncating.
    """
    if p_max < 1:
        raise ValueError("p_max must be >= 1")
    A = np.asarray(A, dtype=float)
    H = np.asarray(H, dtype=float)
    vs = np.atleast_2d(np.asarray(noise_samples, dtype=float))
    if vs.shape[0] == 0:
        raise ValueError("noise_samples must be nonempty")
    out: list[float] = []
    diverged = False
    diverged_at: Optional[int] = None
    w = vs
    for p in range(1, p_max + 1):
        w = w @ A.T
        q = float(np.einsum("ni,ij,nj->n", w, H, w).mean())
        if not np.isfinite(q):
            diverged = True
            if diverged_at is None:
                diverged_at = p
            break
        out.append(q)
        if abs(q) >= divergence_threshold and diverged_at is None:
            diverged = True
            diverged_at = p
    return IteratedFormCurve(values=np.asarray(out), diverged=diverged,
                             diverged_at=diverged_at)


def lemma_probe(A: np.ndarray, v: np.ndarray, p_max: int) -> float:
    """Running minimum of |A^p v| over p = 1..p_max.

    For a matrix with no eigenvalue inside the unit disc the minimum stays
    bounded away from zero for every v != 0 (and is exactly 0 at v = 0).
    """
    A = np.asarray(A, dtype=float)
    w = np.asarray(v, dtype=float).copy()
    best = np.inf
    for _ in range(p_max):
        w = A @ w
        best = min(best, float(np.linalg.norm(w)))
    return best


def fixed_point_report(f: Callable, V: LyapunovSpec, spec: SystemSpec,
                       x_star, tol: float = 1e-8,
                       degeneracy_tol: float = 1e-6,
                       grad_tol: float = 1e-5,
                       jacobian: Optional[np.ndarray] = None,
                       jacobian_defined: bool = True,
                       excitation_n: int = 100_000,
                       seed: int = 0) -> FixedPointReport:
    """Assemble the full report for one fixed point."""
    x = np.atleast_1d(np.asarray(x_star, dtype=float))
    fx = np.atleast_1d(np.asarray(f(x), dtype=float))
    residual = float(np.linalg.norm(fx - x))
    J = (np.asarray(jacobian, dtype=float) if jacobian is not None
         else fd_jacobian(f, x))
    H = np.asarray(V.hessian(x), dtype=float)
    cls = classify(V, x, degeneracy_tol=degeneracy_tol, grad_tol=grad_tol)
    gap = saddle_gap(V, f, x, jacobian=J)
    if jacobian_defined:
        P, k = unstable_projector(J)
    else:
        P, k = np.full((x.size, x.size), np.nan), 0
    exc, exc_se = noise_excitation(spec, x, np.nan_to_num(P), excitation_n,
                                   seed)
    return FixedPointReport(location=x, residual=residual, jacobian=J,
                            hessian=H, classification=cls, saddle_gap=gap,
                            unstable_dim=k, projector=P,
                            noise_excitation=exc, noise_excitation_se=exc_se,
                            jacobian_defined=jacobian_defined)
