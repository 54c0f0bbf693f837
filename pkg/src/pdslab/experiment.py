"""Declarative gamma-sweep experiments.

An ExperimentConfig names a model, a descending gamma grid, estimation
budgets, and the claims to verify; run_sweep produces one row per gamma
with the measure statistics, exclusion masses, optional expansion
diagnostics, and a pass/fail verdict per claim.  All randomness derives
from the master seed through counter-based substreams, so repeated runs
and different worker counts produce identical tables.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._streams import derive
from .dynamics import BlowUpError
from .equilibria import fixed_point_report
from .lyapunov import (TestFunction, build_symmetric_pair_test_function,
                       build_test_function, constant_test_function,
                       expansion_lhs_bootstrap, expansion_rhs)
from .measures import (EmpiricalMeasure, estimate_invariant, integrate_rows,
                       localization_report, mass_in_ball, weak_distance)
from .models import ModelCard, make_model

SCHEMA_VERSION = 1

# claim kinds evaluated against the sweep's ball masses
CLAIM_KINDS = ("final_mass_below", "final_mass_above",
               "strictly_decreasing_mass", "final_combined_mass_above",
               "total_mass_above")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    model: str
    params: dict = field(default_factory=dict)
    gamma_grid: tuple = (0.2, 0.1, 0.05, 0.02)
    chains: int = 8
    burn_in: int = 100_000
    horizon: int = 1_000_000
    thinning: Optional[int] = None
    radius: float = 0.3
    init_box: Optional[tuple] = None
    search_box: Optional[tuple] = None
    n_starts: int = 64
    fp_tol: float = 1e-9
    seed: int = 20240811
    claims: tuple = ()
    expansion: Optional[dict] = None
    schema: int = SCHEMA_VERSION

    def to_json(self) -> str:
        def clean(v):
            if isinstance(v, tuple):
                return [clean(x) for x in v]
            if isinstance(v, dict):
                return {k: clean(x) for k, x in v.items()}
            if isinstance(v, np.ndarray):
                return v.tolist()
            return v
        doc = {
            "schema": self.schema,
            "model": {"name": self.model, "params": clean(self.params)},
            "gamma_grid": list(self.gamma_grid),
            "chains": self.chains,
            "burn_in": self.burn_in,
            "horizon": self.horizon,
            "thinning": self.thinning,
            "radius": self.radius,
            "init_box": clean(self.init_box),
            "search_box": clean(self.search_box),
            "n_starts": self.n_starts,
            "fp_tol": self.fp_tol,
            "seed": self.seed,
            "claims": clean(self.claims),
            "expansion": clean(self.expansion),
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @staticmethod
    def from_json(text: str) -> "ExperimentConfig":
        doc = json.loads(text)
        if doc.get("schema") != SCHEMA_VERSION:
            raise ConfigError(
                f"unsupported config schema {doc.get('schema')!r}; "
                f"expected {SCHEMA_VERSION}")
        model = doc.get("model", {})
        cfg = ExperimentConfig(
            model=model.get("name", ""),
            params=model.get("params", {}) or {},
            gamma_grid=tuple(doc.get("gamma_grid", ())),
            chains=int(doc.get("chains", 8)),
            burn_in=int(doc.get("burn_in", 100_000)),
            horizon=int(doc.get("horizon", 1_000_000)),
            thinning=doc.get("thinning"),
            radius=float(doc.get("radius", 0.3)),
            init_box=(tuple(map(tuple, doc["init_box"]))
                      if doc.get("init_box") else None),
            search_box=(tuple(map(tuple, doc["search_box"]))
                        if doc.get("search_box") else None),
            n_starts=int(doc.get("n_starts", 64)),
            fp_tol=float(doc.get("fp_tol", 1e-9)),
            seed=int(doc.get("seed", 20240811)),
            claims=tuple(doc.get("claims", []) or ()),
            expansion=doc.get("expansion"),
        )
        validate_config(cfg)
        return cfg


def validate_config(cfg: ExperimentConfig,
                    card: Optional[ModelCard] = None) -> ModelCard:
    """Structural checks plus the ball non-overlap rule for the model's
    known fixed points.  Returns the constructed card."""
    if not cfg.model:
        raise ConfigError("config must name a model")
    grid = np.asarray(cfg.gamma_grid, dtype=float)
    if grid.size == 0 or np.any(grid <= 0):
        raise ConfigError("gamma_grid must be nonempty and strictly "
                          "positive")
    if np.any(np.diff(grid) >= 0):
        raise ConfigError("gamma_grid must be strictly decreasing")
    if cfg.horizon <= cfg.burn_in:
        raise ConfigError("horizon must exceed burn_in")
    if cfg.radius <= 0:
        raise ConfigError("radius must be positive")
    for claim in cfg.claims:
        if claim.get("kind") not in CLAIM_KINDS:
            raise ConfigError(f"unknown claim kind {claim.get('kind')!r}; "
                              f"known: {CLAIM_KINDS}")
    if card is None:
        try:
            card = make_model(cfg.model, **cfg.params)
        except (TypeError, ValueError) as err:
            raise ConfigError(f"cannot build model {cfg.model!r}: {err}")
    if len(card.known_fixed_points) > 1:
        fps = card.fixed_point_array()
        for i in range(fps.shape[0]):
            for j in range(i + 1, fps.shape[0]):
                if np.linalg.norm(fps[i] - fps[j]) <= 2 * cfg.radius:
                    raise ConfigError(
                        f"radius {cfg.radius} overlaps the balls at "
                        f"{fps[i]} and {fps[j]}")
    return card


@dataclass(frozen=True)
class SweepRow:
    gamma: float
    nu_V: float
    masses: np.ndarray
    total_mass: float
    w1_prev: float
    exp_lhs: float = float("nan")
    exp_rhs: float = float("nan")
    exp_ratio: float = float("nan")
    exp_se: float = float("nan")
    failed: bool = False
    failure: str = ""


@dataclass(frozen=True)
class ClaimResult:
    name: str
    passed: bool
    detail: str


@dataclass(frozen=True)
class SweepReport:
    config: ExperimentConfig
    card: ModelCard
    rows: tuple
    claims: tuple
    caveats: tuple
    measures: tuple = ()

    @property
    def passed(self) -> bool:
        return (all(c.passed for c in self.claims)
                and not any(r.failed for r in self.rows))


def _estimate_cell(card: ModelCard, cfg: ExperimentConfig, k: int,
                   gamma: float):
    init_box = (np.asarray(cfg.init_box, dtype=float)
                if cfg.init_box is not None else card.domain_box)
    return estimate_invariant(
        card.system, gamma, cfg.chains, cfg.burn_in, cfg.horizon,
        cfg.thinning, init_box, seed=derive(cfg.seed, 101, k),
        model=card.name)


def _build_expansion_tf(card: ModelCard, spec: dict) -> TestFunction:
    if card.lyapunov is None:
        raise ConfigError(f"model {card.name} has no descent function")
    if spec.get("constant_w"):
        return constant_test_function(card.lyapunov, card.dim)
    K = float(spec.get("K", 1.0))
    others = spec.get("others", [])
    v_floor = spec.get("v_floor")
    if "pair" in spec:
        return build_symmetric_pair_test_function(
            card.lyapunov, card.system.drift, spec["pair"], others, K,
            v_floor=v_floor)
    target = np.asarray(spec["target"], dtype=float)[0]
    return build_test_function(card.lyapunov, card.system.drift, target,
                               others, K, v_floor=v_floor)


def _expansion_points(card: ModelCard, spec: dict) -> np.ndarray:
    pts = spec.get("pair") if "pair" in spec else spec.get("target")
    others = spec.get("others", [])
    return np.asarray(list(pts) + list(others), dtype=float)


def run_sweep(cfg: ExperimentConfig, workers: int = 1) -> SweepReport:
    """Full gamma sweep: measures, exclusion masses, optional expansion
    diagnostics, claim verdicts.  Deterministic in the master seed and in
    the worker count (cells use per-cell substreams and merge by index).
    """
    card = validate_config(cfg)
    fps = (card.fixed_point_array()
           if card.known_fixed_points else np.empty((0, card.dim)))

    results: dict[int, object] = {}

    def work(k_gamma):
        k, gamma = k_gamma
        try:
            return k, _estimate_cell(card, cfg, k, gamma)
        except BlowUpError as err:
            return k, err

    items = list(enumerate(cfg.gamma_grid))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for k, res in pool.map(work, items):
                results[k] = res
    else:
        for item in items:
            k, res = work(item)
            results[k] = res

    tf = None
    exp_spec = cfg.expansion or None
    if exp_spec is not None:
        tf = _build_expansion_tf(card, exp_spec)

    rows = []
    measures = []
    prev_measure = None
    for k, gamma in enumerate(cfg.gamma_grid):
        res = results[k]
        if isinstance(res, BlowUpError):
            rows.append(SweepRow(gamma=gamma, nu_V=float("nan"),
                                 masses=np.full(max(len(fps), 1),
                                                float("nan")),
                                 total_mass=float("nan"),
                                 w1_prev=float("nan"), failed=True,
                                 failure=str(res)))
            measures.append(None)
            prev_measure = None
            continue
        m: EmpiricalMeasure = res
        measures.append(m)
        nu_v = (integrate_rows(m, card.lyapunov.rows)
                if card.lyapunov is not None else float("nan"))
        if len(fps):
            masses, total = localization_report(m, fps, cfg.radius)
        else:
            masses, total = np.empty(0), float("nan")
        w1 = (weak_distance(prev_measure, m)
              if prev_measure is not None else float("nan"))
        prev_measure = m
        lhs = rhs = ratio = se = float("nan")
        if tf is not None:
            lhs, se = expansion_lhs_bootstrap(
                m, tf, card.system.drift, f_rows=card.system.drift_batch,
                seed=derive(cfg.seed, 202, k))
            pts = _expansion_points(card, exp_spec)
            fp_masses = [(p, mass_in_ball(m, p, cfg.radius)) for p in pts]
            rhs, _ = expansion_rhs(card.system, tf, fp_masses,
                                   n=int(exp_spec.get("mc_n", 1_000_000)),
                                   seed=derive(cfg.seed, 303, k))
            ratio = lhs / rhs if rhs != 0.0 else float("nan")
        rows.append(SweepRow(gamma=gamma, nu_V=nu_v, masses=masses,
                             total_mass=total, w1_prev=w1, exp_lhs=lhs,
                             exp_rhs=rhs, exp_ratio=ratio, exp_se=se))

    claims = tuple(_evaluate_claim(c, cfg, rows, measures)
                   for c in cfg.claims)
    caveats = (
        "fixed-point completeness is not certified: localization masses "
        "refer to the registered points only",
    )
    return SweepReport(config=cfg, card=card, rows=tuple(rows),
                       claims=claims, caveats=caveats,
                       measures=tuple(measures))


def _claim_name(claim: dict) -> str:
    kind = claim["kind"]
    pt = claim.get("point", claim.get("points", ""))
    return f"{kind}@{pt}"


def _mass_series(claim: dict, cfg: ExperimentConfig, measures) -> list:
    radius = float(claim.get("radius", cfg.radius))
    point = np.asarray(claim["point"], dtype=float)
    return [mass_in_ball(m, point, radius) if m is not None else None
            for m in measures]


def _evaluate_claim(claim: dict, cfg: ExperimentConfig, rows,
                    measures) -> ClaimResult:
    name = _claim_name(claim)
    kind = claim["kind"]
    if any(m is None for m in measures):
        return ClaimResult(name, False, "sweep cell failed (blow-up)")
    if kind == "final_mass_below":
        series = _mass_series(claim, cfg, measures)
        thr = float(claim["threshold"])
        ok = series[-1] < thr
        return ClaimResult(name, ok,
                           f"final mass {series[-1]!r} vs < {thr}")
    if kind == "final_mass_above":
        series = _mass_series(claim, cfg, measures)
        thr = float(claim["threshold"])
        ok = series[-1] > thr
        return ClaimResult(name, ok,
                           f"final mass {series[-1]!r} vs > {thr}")
    if kind == "strictly_decreasing_mass":
        series = _mass_series(claim, cfg, measures)
        ok = all(a > b for a, b in zip(series, series[1:]))
        return ClaimResult(name, ok, f"series {series!r}")
    if kind == "final_combined_mass_above":
        radius = float(claim.get("radius", cfg.radius))
        thr = float(claim["threshold"])
        m = measures[-1]
        total = sum(mass_in_ball(m, np.asarray(p, dtype=float), radius)
                    for p in claim["points"])
        return ClaimResult(name, total > thr,
                           f"combined final mass {total!r} vs > {thr}")
    if kind == "total_mass_above":
        thr = float(claim["threshold"])
        total = rows[-1].total_mass
        return ClaimResult(name, total > thr,
                           f"total captured {total!r} vs > {thr}")
    return ClaimResult(name, False, f"unknown kind {kind}")


# ---------------------------------------------------------------------------
# fixed-point experiment
# ---------------------------------------------------------------------------

def run_fixed_points(cfg: ExperimentConfig) -> list:
    """Locate fixed points (multistart Newton merged with the card's
    registered points) and assemble the full report for each."""
    card = validate_config(cfg)
    if card.lyapunov is None:
        raise ConfigError(
            f"model {card.name} ships no descent function; fixed-point "
            "classification is undefined")
    from .equilibria import find_fixed_points
    box = (np.asarray(cfg.search_box, dtype=float)
           if cfg.search_box is not None else card.domain_box)
    found = find_fixed_points(card.system.drift, box, cfg.n_starts,
                              cfg.fp_tol, seed=derive(cfg.seed, 404))
    candidates = [(fp.location, fp.jacobian_defined)
                  for fp in card.known_fixed_points]
    merge_radius = max(10 * cfg.fp_tol, 1e-7)
    for x in found:
        if all(np.linalg.norm(x - c[0]) > merge_radius
               for c in candidates):
            candidates.append((x, True))
    reports = []
    for j, (x, jac_ok) in enumerate(candidates):
        reports.append(fixed_point_report(
            card.system.drift, card.lyapunov, card.system, x,
            tol=cfg.fp_tol, jacobian_defined=jac_ok,
            seed=derive(cfg.seed, 505, j)))
    reports.sort(key=lambda r: tuple(r.location))
    return reports


# ---------------------------------------------------------------------------
# expansion experiment
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExpansionRow:
    gamma: float
    lhs: float
    rhs: float
    ratio: float
    bootstrap_se: float


def run_expansion(cfg: ExperimentConfig, workers: int = 1):
    """Per-gamma second-order expansion diagnostics as their own table."""
    if cfg.expansion is None:
        raise ConfigError("config has no expansion block")
    report = run_sweep(cfg, workers=workers)
    rows = [ExpansionRow(r.gamma, r.exp_lhs, r.exp_rhs, r.exp_ratio,
                         r.exp_se) for r in report.rows]
    return rows, report


# ---------------------------------------------------------------------------
# shipped default configurations (acceptance-scale)
# ---------------------------------------------------------------------------

def default_config(model: str) -> ExperimentConfig:
    """Acceptance-scale sweep configuration for a bundled model."""
    if model == "double_well":
        return ExperimentConfig(
            model="double_well", params={"u0": 0.04},
            gamma_grid=(0.2, 0.1, 0.05, 0.02), radius=0.3,
            claims=(
                {"kind": "strictly_decreasing_mass", "point": [0.0]},
                {"kind": "final_mass_below", "point": [0.0],
                 "threshold": 0.01},
            ),
            expansion={"target": [[0.0]], "others": [[-1.0], [1.0]],
                       "K": 1.0, "v_floor": -0.25})
    if model == "coordination_game":
        return ExperimentConfig(
            model="coordination_game", params={},
            gamma_grid=(0.2, 0.1, 0.05, 0.02), radius=0.05,
            claims=(
                {"kind": "final_mass_below", "point": [0.5],
                 "threshold": 0.01},
                {"kind": "final_combined_mass_above",
                 "points": [[0.0], [1.0]], "threshold": 0.98},
            ))
    if model == "quartic_saddle":
        return ExperimentConfig(
            model="quartic_saddle", params={"u0": 0.5},
            gamma_grid=(0.2, 0.1, 0.05, 0.02), radius=0.3,
            claims=(
                {"kind": "final_mass_below", "point": [0.0, 0.0],
                 "threshold": 0.02},
            ))
    if model == "lemniscate":
        s2 = float(np.sqrt(2.0))
        return ExperimentConfig(
            model="lemniscate", params={"u0": 0.25},
            gamma_grid=(0.2, 0.1, 0.05, 0.02), radius=0.4,
            claims=(
                {"kind": "final_mass_above", "point": [0.0, 0.0],
                 "threshold": 0.9},
            ),
            expansion={"pair": [[s2, s2], [-s2, -s2]],
                       "others": [[0.0, 0.0]], "K": 1.0, "v_floor": 0.0})
    raise ConfigError(f"no default config for model {model!r}")
