"""Delimited output and figures for experiment reports.

CSVs use comma separation, LF line endings, a header row, and repr-exact
floats, so identical runs produce byte-identical files.  Figures are
rendered with matplotlib (Agg) next to the tables.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

import numpy as np

from .equilibria import FixedPointReport
from .experiment import ExpansionRow, SweepReport


def _fmt(v) -> str:
    if v is None:
        return ""
    f = float(v)
    if np.isnan(f):
        return "nan"
    return repr(f)


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def write_sweep_csv(report: SweepReport, path) -> None:
    """Fixed column layout: gamma, nu_V, mass_fp_1..k, total_mass,
    w1_prev, exp_lhs, exp_rhs, exp_ratio, verdict."""
    k = max((len(r.masses) for r in report.rows), default=0)
    header = (["gamma", "nu_V"] + [f"mass_fp_{i + 1}" for i in range(k)]
              + ["total_mass", "w1_prev", "exp_lhs", "exp_rhs", "exp_ratio",
                 "verdict"])
    failed_claims = [c.name for c in report.claims if not c.passed]
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(header)
        for i, row in enumerate(report.rows):
            if row.failed:
                verdict = f"blowup:{row.failure}"
            elif i == len(report.rows) - 1:
                verdict = ("pass" if not failed_claims
                           else "fail:" + ";".join(failed_claims))
            else:
                verdict = "ok"
            masses = list(row.masses) + [None] * (k - len(row.masses))
            w.writerow([_fmt(row.gamma), _fmt(row.nu_V)]
                       + [_fmt(v) for v in masses]
                       + [_fmt(row.total_mass), _fmt(row.w1_prev),
                          _fmt(row.exp_lhs), _fmt(row.exp_rhs),
                          _fmt(row.exp_ratio), verdict])


def write_expansion_csv(rows: Sequence[ExpansionRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["gamma", "exp_lhs", "exp_rhs", "exp_ratio",
                    "bootstrap_se"])
        for r in rows:
            w.writerow([_fmt(r.gamma), _fmt(r.lhs), _fmt(r.rhs),
                        _fmt(r.ratio), _fmt(r.bootstrap_se)])


def write_fixed_points_csv(reports: Sequence[FixedPointReport],
                           path) -> None:
    if not reports:
        Path(path).write_text("")
        return
    d = reports[0].location.size
    header = ([f"x_{i}" for i in range(d)]
              + ["residual", "classification", "saddle_gap", "unstable_dim",
                 "noise_excitation", "noise_excitation_se",
                 "jacobian_defined"]
              + [f"jac_{i}{j}" for i in range(d) for j in range(d)]
              + [f"hess_{i}{j}" for i in range(d) for j in range(d)]
              + [f"proj_{i}{j}" for i in range(d) for j in range(d)])
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(header)
        for r in reports:
            w.writerow([_fmt(v) for v in r.location]
                       + [_fmt(r.residual), r.classification,
                          _fmt(r.saddle_gap), str(r.unstable_dim),
                          _fmt(r.noise_excitation),
                          _fmt(r.noise_excitation_se),
                          str(r.jacobian_defined)]
                       + [_fmt(v) for v in r.jacobian.ravel()]
                       + [_fmt(v) for v in r.hessian.ravel()]
                       + [_fmt(v) for v in r.projector.ravel()])


def format_fixed_point_table(reports: Sequence[FixedPointReport]) -> str:
    lines = [f"{'location':<24} {'residual':<10} {'class':<18} "
             f"{'gap':<12} {'udim':<5} {'excitation':<12}"]
    for r in reports:
        loc = "(" + ", ".join(f"{v:.6g}" for v in r.location) + ")"
        lines.append(f"{loc:<24} {r.residual:<10.2e} "
                     f"{r.classification:<18} {r.saddle_gap:<12.6g} "
                     f"{r.unstable_dim:<5d} {r.noise_excitation:<12.6g}")
    return "\n".join(lines)


def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def _save(fig, stem: Path, svg: bool) -> list[Path]:
    paths = [stem.with_suffix(".png")]
    fig.savefig(paths[0], dpi=150)
    if svg:
        paths.append(stem.with_suffix(".svg"))
        fig.savefig(paths[1], metadata={"Date": None})
    return paths


def plot_sweep(report: SweepReport, out_dir, svg: bool = False,
               ) -> list[Path]:
    """Exclusion curves: per-fixed-point ball mass against gamma."""
    plt = _pyplot()
    out_dir = Path(out_dir)
    gammas = [r.gamma for r in report.rows]
    k = max((len(r.masses) for r in report.rows), default=0)
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    labels = ["(" + ", ".join(f"{v:.3g}" for v in fp.location) + ")"
              for fp in report.card.known_fixed_points]
    for i in range(k):
        series = [r.masses[i] if len(r.masses) > i else np.nan
                  for r in report.rows]
        ax.plot(gammas, series, marker="o",
                label=labels[i] if i < len(labels) else f"fp {i + 1}")
    ax.plot(gammas, [r.total_mass for r in report.rows], marker="s",
            color="k", linestyle="--", label="captured total")
    ax.set_xscale("log")
    ax.set_xlabel("step size gamma")
    ax.set_ylabel(f"mass within radius {report.config.radius}")
    ax.set_title(f"{report.card.name}: ball masses vs gamma")
    ax.invert_xaxis()
    ax.legend(fontsize=8)
    fig.tight_layout()
    paths = _save(fig, out_dir / "masses_vs_gamma", svg)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.plot(gammas, [r.nu_V for r in report.rows], marker="o")
    ax.set_xscale("log")
    ax.set_xlabel("step size gamma")
    ax.set_ylabel("measure average of V")
    ax.set_title(f"{report.card.name}: descent-moment curve")
    ax.invert_xaxis()
    fig.tight_layout()
    paths += _save(fig, out_dir / "moment_vs_gamma", svg)
    plt.close(fig)
    return paths


def plot_expansion(rows: Sequence[ExpansionRow], out_dir, name: str,
                   svg: bool = False) -> list[Path]:
    plt = _pyplot()
    out_dir = Path(out_dir)
    gammas = [r.gamma for r in rows]
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.plot(gammas, [r.lhs for r in rows], marker="o", label="lhs")
    ax.plot(gammas, [r.rhs for r in rows], marker="s", label="rhs")
    ax.fill_between(gammas,
                    [r.lhs - 3 * r.bootstrap_se for r in rows],
                    [r.lhs + 3 * r.bootstrap_se for r in rows], alpha=0.2)
    ax.set_xscale("log")
    ax.set_xlabel("step size gamma")
    ax.set_ylabel("second-order expansion value")
    ax.set_title(f"{name}: expansion diagnostics")
    ax.invert_xaxis()
    ax.legend(fontsize=8)
    fig.tight_layout()
    paths = _save(fig, out_dir / "expansion_vs_gamma", svg)
    plt.close(fig)
    return paths
