#!/usr/bin/env python3
"""
Télémétrie pour angleform
Séries dérivées d'une trajectoire (erreur d'angle, distance de forme,
distance à la limite, distance minimale entre voisins) et ajustement de
taux exponentiels par moindres carrés sur log(série).
"""

import math
import logging
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from constraints import ANGLE_VERTICES, AngleConstraintSet
from errors import DegenerateMeasurement, InsufficientData
from geometry import shape_distance, signed_angles, wrap_angle
from graph import FormationGraph

logger = logging.getLogger("telemetry")

RATE_FLOOR = 1e-10      # bas de la fenêtre d'ajustement par défaut
NUMERIC_FLOOR = 1e-12   # jamais ajusté en dessous
MIN_FIT_SAMPLES = 3


@dataclass(frozen=True)
class RateEstimate:
    """Taux exponentiel ajusté : série ≈ A·exp(-rate·t)."""
    label: str
    rate: float
    window: Tuple[float, float]
    r_squared: float
    samples: int

    def relative_error(self, reference: float) -> float:
        return abs(self.rate - reference) / abs(reference)

    def to_dict(self) -> Dict:
        return {
            "label": self.label,
            "rate": self.rate,
            "window": [self.window[0], self.window[1]],
            "r_squared": self.r_squared,
            "samples": self.samples,
        }


def measured_angles(positions, acs: AngleConstraintSet) -> Tuple[np.ndarray, np.ndarray]:
    """Angles (…, m, 3) mesurés comme ceux de la cible, et masque dégénéré (…, m)."""
    p = np.asarray(positions, dtype=float)
    out = []
    bad = []
    for tri in acs.triangles:
        roles = {"i": p[..., tri.i - 1, :], "j": p[..., tri.j - 1, :], "k": p[..., tri.k - 1, :]}
        cols = []
        deg = None
        for _, (a, b, c) in ANGLE_VERTICES:
            ang, d = signed_angles(roles[a], roles[b], roles[c])
            cols.append(ang)
            deg = d if deg is None else (deg | d)
        out.append(np.stack(cols, axis=-1))
        bad.append(deg)
    return np.stack(out, axis=-2), np.stack(bad, axis=-1)


def angle_error_series(positions, acs: AngleConstraintSet) -> Tuple[np.ndarray, int]:
    """e₁(t) = Σ |wrap(α - α*)| ; NaN aux instants dégénérés, comptés."""
    angles, degenerate = measured_angles(positions, acs)
    diff = np.abs(wrap_angle(angles - acs.reference_angles()))
    series = diff.sum(axis=(-1, -2))
    flagged = degenerate.any(axis=-1)
    series = np.where(flagged, np.nan, series)
    count = int(np.count_nonzero(flagged))
    if count:
        logger.warning(f"⚠ {count} échantillon(s) avec relèvement indéfini")
    return series, count


def angle_error(config, acs: AngleConstraintSet) -> float:
    """Erreur d'angle d'une configuration (radians)."""
    series, count = angle_error_series(np.asarray(config, dtype=float)[None], acs)
    if count:
        raise DegenerateMeasurement("undefined bearing: two constrained agents coincide")
    return float(series[0])


def shape_distance_series(positions, p_star) -> np.ndarray:
    return np.asarray(shape_distance(positions, p_star))


def limit_distance_series(positions, p_dagger) -> np.ndarray:
    """||p_k(t) - p†_k|| par agent, forme (T, n) ; p† peut dépendre du temps."""
    return np.linalg.norm(np.asarray(positions) - np.asarray(p_dagger), axis=-1)


def pair_distance_series(positions, a: int, b: int) -> np.ndarray:
    p = np.asarray(positions)
    return np.linalg.norm(p[..., a - 1, :] - p[..., b - 1, :], axis=-1)


def min_neighbor_distance_series(positions, fg: FormationGraph) -> np.ndarray:
    """Plus petite distance entre voisins du graphe de formation à chaque instant."""
    dists = [pair_distance_series(positions, a, b) for a, b in sorted(fg.edges)]
    return np.min(np.stack(dists, axis=-1), axis=-1)


def estimate_rate(t, series, window: Optional[Tuple[float, float]] = None,
                  label: str = "") -> RateEstimate:
    """Pente de log(série) en fonction de t ; taux = -pente.

    Sans fenêtre : échantillons où la série est dans [RATE_FLOOR, 0.5·initiale].
    Avec fenêtre (t0, t1) : échantillons de cet intervalle au-dessus de NUMERIC_FLOOR.
    """
    t = np.asarray(t, dtype=float)
    s = np.asarray(series, dtype=float)
    if t.shape != s.shape:
        raise ValueError(f"time/series shape mismatch: {t.shape} vs {s.shape}")
    finite = np.isfinite(s)
    if window is None:
        if s.size == 0 or not np.isfinite(s[0]):
            raise InsufficientData(f"{label or 'series'}: empty or undefined series")
        mask = finite & (s >= RATE_FLOOR) & (s <= 0.5 * s[0])
    else:
        mask = finite & (t >= window[0]) & (t <= window[1])
    mask &= s > NUMERIC_FLOOR
    n = int(np.count_nonzero(mask))
    if n < MIN_FIT_SAMPLES:
        raise InsufficientData(f"{label or 'series'}: {n} usable samples, need {MIN_FIT_SAMPLES}")
    tw, logs = t[mask], np.log(s[mask])
    slope, intercept = np.polyfit(tw, logs, 1)
    fitted = slope * tw + intercept
    ss_res = float(np.sum((logs - fitted) ** 2))
    ss_tot = float(np.sum((logs - logs.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    est = RateEstimate(label, float(-slope), (float(tw[0]), float(tw[-1])), r2, n)
    logger.debug(f"Taux {label}: {est.rate:.6f} 1/s sur [{tw[0]:.3f}, {tw[-1]:.3f}] (r²={r2:.6f})")
    return est


def series_stats(series) -> Dict:
    """Résumé d'une série (valeurs NaN ignorées)."""
    s = np.asarray(series, dtype=float)
    if s.size == 0 or not np.any(np.isfinite(s)):
        return {"samples": int(s.size), "initial": None, "terminal": None, "max": None, "min": None}
    return {
        "samples": int(s.size),
        "initial": _finite_or_none(s[0]),
        "terminal": _finite_or_none(s[-1]),
        "max": float(np.nanmax(s)),
        "min": float(np.nanmin(s)),
    }


def _finite_or_none(v) -> Optional[float]:
    v = float(v)
    return v if math.isfinite(v) else None
