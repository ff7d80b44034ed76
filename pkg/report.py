#!/usr/bin/env python3
"""
Rapports angleform
Exécute un scénario puis écrit trajectory.csv, metrics.json et les figures
SVG (angle_error.svg, trajectory.svg, rates.svg) dans un répertoire.
"""

import json
import math
import os
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional

import matplotlib
matplotlib.use("agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from errors import AngleformError  # noqa: E402
from geometry import fit_similarity, wrap_angle  # noqa: E402
from sim import (ManeuverResult, Scenario, TrajectoryRecord, check_cascade_rates,  # noqa: E402
                 check_collision_bound, follower_rates, integrate, run_maneuver)
from telemetry import series_stats  # noqa: E402

logger = logging.getLogger("report")

CSV_HEADER = "t,agent,x,y,ux,uy"
CSV_DIGITS = 9
SVG_SALT = "angleform"

TRAJECTORY_CSV = "trajectory.csv"
METRICS_JSON = "metrics.json"
ANGLE_ERROR_SVG = "angle_error.svg"
TRAJECTORY_SVG = "trajectory.svg"
RATES_SVG = "rates.svg"


@dataclass(frozen=True, eq=False)
class RunResult:
    scenario: Scenario
    record: TrajectoryRecord
    maneuver: Optional[ManeuverResult]
    metrics: Dict


def to_jsonable(obj):
    """Remplacer les flottants non finis par None et convertir les types numpy."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    return obj


def _limit_section(scenario: Scenario, record: TrajectoryRecord) -> Dict:
    section = {"predicted": None, "realized": None, "relative_error": None}
    if record.limit is None:
        return section
    predicted = record.limit
    section["predicted"] = predicted.to_dict()
    try:
        realized = fit_similarity(record.final, scenario.target.p_star)
    except AngleformError as e:
        logger.warning(f"⚠ Similitude finale introuvable : {e}")
        return section
    section["realized"] = realized.to_dict()
    xi_err = np.linalg.norm(np.asarray(realized.xi) - predicted.xi_dagger)
    section["relative_error"] = {
        "c": abs(realized.c - predicted.c_dagger) / predicted.c_dagger,
        "theta": abs(wrap_angle(realized.theta - predicted.theta_dagger)) / (2 * math.pi),
        "xi": float(xi_err / max(np.linalg.norm(predicted.xi_dagger), 1.0)),
    }
    return section


def build_metrics(scenario: Scenario, record: TrajectoryRecord,
                  maneuver: Optional[ManeuverResult] = None,
                  collision: Optional[Dict] = None) -> Dict:
    """MetricsReport sous forme d'arbre de clés stable."""
    target = scenario.target
    angles = []
    for ta in target.acs.angles:
        entry = ta.to_dict()
        entry["follower_angle_deg"] = math.degrees(ta.follower_angle)
        entry["sin2_follower_angle"] = ta.rate
        angles.append(entry)
    rates = follower_rates(record, target)
    metrics = {
        "scenario": {
            "name": scenario.name,
            "n": scenario.n,
            "mode": scenario.mode.label(),
            "activation": scenario.activation.kind,
            "dt": scenario.dt,
            "duration": scenario.duration,
            "samples": record.samples,
            "frame_offsets_deg": (
                [math.degrees(a) for a in scenario.frame_offsets.angles]
                if scenario.frame_offsets is not None else None),
        },
        "graph": {
            "sensing": scenario.graph.get_graph(),
            "formation": target.formation_graph.get_graph(),
        },
        "angles": angles,
        "terminal": {
            "angle_error_rad": float(record.angle_error[-1]),
            "shape_distance": float(record.shape_distance[-1]),
            "max_limit_distance": float(record.limit_distance[-1].max()),
        },
        "run": {
            "min_neighbor_distance": float(record.min_neighbor_distance.min()),
            "angle_error": series_stats(record.angle_error),
            "shape_distance": series_stats(record.shape_distance),
        },
        "limit": _limit_section(scenario, record),
        "rates": {str(k): {"predicted": v["predicted"], "fitted": v["fitted"],
                           "relative_error": v["relative_error"]}
                  for k, v in rates.items()},
        "cascade": {str(k): v for k, v in check_cascade_rates(record, target).items()},
        "collision": collision,
        "segments": [s.to_dict() for s in maneuver.segments] if maneuver else [],
        "activation_times": {str(k): v for k, v in record.activation_times.items()},
        "degenerate_samples": record.degenerate_samples,
    }
    return to_jsonable(metrics)


def run_scenario(scenario: Scenario) -> RunResult:
    """Intégrer (ou manœuvrer) puis calculer toutes les métriques."""
    maneuver = None
    if scenario.mode.is_maneuver:
        maneuver = run_maneuver(scenario)
        record = maneuver.record
    else:
        record = integrate(scenario)
    collision = check_collision_bound(scenario, record) if scenario.activation.sequential else None
    metrics = build_metrics(scenario, record, maneuver, collision)
    return RunResult(scenario, record, maneuver, metrics)


def save_json(path: str, data: Dict):
    """Sauvegarder un JSON atomiquement."""
    tmp = path + ".tmp"
    with open(tmp, "w") as f:
        json.dump(data, f, indent=2, ensure_ascii=False, allow_nan=False)
        f.write("\n")
    os.replace(tmp, path)


def format_decimal(value: float) -> str:
    """Décimal sans exposant, 9 chiffres significatifs, zéros de fin retirés."""
    return np.format_float_positional(float(value), precision=CSV_DIGITS, unique=False,
                                      fractional=False, trim="-")


def write_trajectory_csv(path: str, record: TrajectoryRecord):
    """Une ligne par agent et par échantillon, 9 chiffres significatifs."""
    tmp = path + ".tmp"
    with open(tmp, "w") as f:
        f.write(CSV_HEADER + "\n")
        for m in range(record.samples):
            t = format_decimal(record.t[m])
            for a in range(record.n):
                values = (*record.positions[m, a], *record.inputs[m, a])
                f.write(f"{t},{a + 1}," + ",".join(format_decimal(v) for v in values) + "\n")
    os.replace(tmp, path)


def _save_svg(fig, path: str):
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_angle_error(path: str, record: TrajectoryRecord, title: str = ""):
    series = np.where(record.angle_error > 0, record.angle_error, np.nan)
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.semilogy(record.t, series, color="tab:blue", linewidth=1.2)
    ax.set_xlabel("t (s)")
    ax.set_ylabel("angle error (rad)")
    ax.set_title(title or "angle error")
    ax.grid(True, which="both", alpha=0.3)
    _save_svg(fig, path)


def plot_trajectory(path: str, record: TrajectoryRecord, title: str = ""):
    fig, ax = plt.subplots(figsize=(6.4, 6.4))
    for a in range(record.n):
        xy = record.positions[:, a]
        line, = ax.plot(xy[:, 0], xy[:, 1], linewidth=1.0, label=f"agent {a + 1}")
        ax.plot(xy[0, 0], xy[0, 1], marker="o", color=line.get_color(), markersize=5)
        ax.plot(xy[-1, 0], xy[-1, 1], marker="s", color=line.get_color(), markersize=6)
    final = record.p_dagger[-1]
    ax.plot(final[:, 0], final[:, 1], linestyle="none", marker="x", color="black",
            markersize=7, label="p† (final)")
    ax.set_aspect("equal", adjustable="datalim")
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    ax.set_title(title or "trajectories (o start, ■ end)")
    ax.legend(fontsize=7, loc="best")
    ax.grid(True, alpha=0.3)
    _save_svg(fig, path)


def plot_rates(path: str, rates: Dict, title: str = ""):
    labels = sorted(rates, key=int)
    predicted = [rates[k]["predicted"] for k in labels]
    fitted = [rates[k]["fitted"] if rates[k]["fitted"] is not None else 0.0 for k in labels]
    x = np.arange(len(labels))
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.bar(x - 0.2, predicted, width=0.4, label="sin²(follower angle)", color="tab:gray")
    ax.bar(x + 0.2, fitted, width=0.4, label="fitted", color="tab:orange")
    ax.set_xticks(x)
    ax.set_xticklabels([f"agent {k}" for k in labels])
    ax.set_ylabel("decay rate (1/s)")
    ax.set_title(title or "follower decay rates")
    ax.legend(fontsize=8)
    ax.grid(True, axis="y", alpha=0.3)
    _save_svg(fig, path)


def write_artifacts(out_dir: str, result: RunResult) -> List[str]:
    """Écrire les cinq artefacts d'une exécution ; retourne leurs chemins."""
    os.makedirs(out_dir, exist_ok=True)
    plt.rcParams["svg.hashsalt"] = SVG_SALT
    name = result.scenario.name
    paths = [os.path.join(out_dir, f) for f in
             (TRAJECTORY_CSV, METRICS_JSON, ANGLE_ERROR_SVG, TRAJECTORY_SVG, RATES_SVG)]
    write_trajectory_csv(paths[0], result.record)
    save_json(paths[1], result.metrics)
    plot_angle_error(paths[2], result.record, name)
    plot_trajectory(paths[3], result.record, name)
    plot_rates(paths[4], result.metrics["rates"], name)
    logger.info(f"Artefacts écrits dans {out_dir}")
    return paths
