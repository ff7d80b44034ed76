#!/usr/bin/env python3
"""
Lois de commande distribuées pour angleform
- stabilisation de forme par contraintes d'angles (agents 1 et 2 immobiles)
- même loi exprimée dans le repère local de chaque suiveur
- manœuvre : vitesse de référence + régulation leader / premier suiveur
- variantes distance-seule et relèvement-seul pour le premier suiveur
- matrice de rétroaction empilée K (u = K p) de la loi de forme
"""

import math
import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from constraints import AngleConstraintSet
from errors import InvalidScenario
from geometry import EPS_DEG, as_vec2, bearing, rotation_matrix

logger = logging.getLogger("control")

# Types valides
VALID_MODES = {"shape", "maneuver"}
VALID_VARIANTS = {"relative", "distance", "bearing"}

ZERO2 = np.zeros(2)


@dataclass(frozen=True)
class ControlMode:
    """Shape, ou Maneuver avec la loi du premier suiveur choisie."""
    kind: str = "shape"
    variant: str = "relative"

    def __post_init__(self):
        if self.kind not in VALID_MODES:
            raise InvalidScenario(f"unknown mode {self.kind!r}, expected one of {sorted(VALID_MODES)}")
        if self.variant not in VALID_VARIANTS:
            raise InvalidScenario(
                f"unknown follower variant {self.variant!r}, expected one of {sorted(VALID_VARIANTS)}")
        if self.kind == "shape" and self.variant != "relative":
            raise InvalidScenario("follower variants apply to maneuver mode only")

    @property
    def is_maneuver(self) -> bool:
        return self.kind == "maneuver"

    def label(self) -> str:
        return self.kind if self.kind == "shape" else f"{self.kind}/{self.variant}"


@dataclass(frozen=True)
class ManeuverReference:
    """v*_r (m/s) et δ*₁₂ (m), cible de p₂ - p₁."""
    v_r_star: Tuple[float, float]
    delta_12_star: Tuple[float, float]

    def __post_init__(self):
        v = as_vec2(self.v_r_star)
        d = as_vec2(self.delta_12_star)
        if np.linalg.norm(d) <= EPS_DEG:
            raise InvalidScenario("delta_12_star must be non-zero")
        object.__setattr__(self, "v_r_star", (float(v[0]), float(v[1])))
        object.__setattr__(self, "delta_12_star", (float(d[0]), float(d[1])))

    @property
    def velocity(self) -> np.ndarray:
        return np.array(self.v_r_star)

    @property
    def delta(self) -> np.ndarray:
        return np.array(self.delta_12_star)

    def to_dict(self) -> Dict:
        return {"v_r": list(self.v_r_star), "delta_12": list(self.delta_12_star)}


@dataclass(frozen=True)
class FrameOffsets:
    """Orientation θ_k du repère local de chaque agent (radians).

    Q_k = R(θ_k)ᵀ envoie le repère global dans le repère local k.
    """
    angles: Tuple[float, ...] = field(default_factory=tuple)

    def rotation(self, k: int) -> np.ndarray:
        return rotation_matrix(self.angles[k - 1]).T

    def to_local(self, k: int, v) -> np.ndarray:
        return self.rotation(k) @ np.asarray(v, dtype=float)

    def to_global(self, k: int, v) -> np.ndarray:
        return self.rotation(k).T @ np.asarray(v, dtype=float)

    def to_dict(self) -> Dict:
        return {"frame_offsets_deg": [math.degrees(a) for a in self.angles]}


def _angle_law(tc, e_ki: np.ndarray, e_kj: np.ndarray, gain: float) -> np.ndarray:
    return -gain * tc.A_k.T @ (tc.A_i @ e_ki + tc.A_j @ e_kj)


def shape_control(k: int, config, acs: AngleConstraintSet, gain: float = 1.0) -> np.ndarray:
    """u_k = -A_kᵀ(A_i e_ki + A_j e_kj), nul pour les agents 1 et 2."""
    if k <= 2:
        return ZERO2.copy()
    p = np.asarray(config, dtype=float)
    _, tc = acs.for_follower(k)
    i, j, _ = tc.triangle
    return _angle_law(tc, p[i - 1] - p[k - 1], p[j - 1] - p[k - 1], gain)


def local_frame_control(k: int, local_measurements: Sequence, acs: AngleConstraintSet,
                        gain: float = 1.0) -> np.ndarray:
    """Même loi à partir de mesures relatives exprimées dans le repère de k.

    local_measurements = [e_ki, e_kj] dans l'ordre des voisins (i < j).
    """
    if k <= 2:
        return ZERO2.copy()
    _, tc = acs.for_follower(k)
    e_ki, e_kj = (np.asarray(m, dtype=float) for m in local_measurements)
    return _angle_law(tc, e_ki, e_kj, gain)


def distance_follower_control(p1, p2, delta_star, gain: float = 1.0) -> np.ndarray:
    """u₂ = -(||e₁₂||² - ||δ*||²) e₁₂ : ne régule que l'échelle."""
    e12 = np.asarray(p2, dtype=float) - np.asarray(p1, dtype=float)
    target2 = float(np.dot(delta_star, delta_star))
    return -gain * (float(e12 @ e12) - target2) * e12


def bearing_follower_control(p1, p2, delta_star, gain: float = 1.0) -> np.ndarray:
    """u₂ = P_{b₁₂} b*₁₂ : ne régule que l'orientation.

    Nul aussi à l'antipode b₁₂ = -b*₁₂ (point selle).
    """
    b12 = bearing(p1, p2)
    b_star = np.asarray(delta_star, dtype=float)
    b_star = b_star / np.linalg.norm(b_star)
    projector = np.eye(2) - np.outer(b12, b12)
    return gain * projector @ b_star


def first_follower_control(variant: str, p1, p2, delta_star, gain: float = 1.0) -> np.ndarray:
    if variant == "distance":
        return distance_follower_control(p1, p2, delta_star, gain)
    if variant == "bearing":
        return bearing_follower_control(p1, p2, delta_star, gain)
    e12 = np.asarray(p2, dtype=float) - np.asarray(p1, dtype=float)
    return -gain * (e12 - np.asarray(delta_star, dtype=float))


def maneuver_control(agent: int, config, ref: ManeuverReference, acs: AngleConstraintSet,
                     variant: str = "relative", gain: float = 1.0) -> np.ndarray:
    """ṗ₁ = v*_r ; ṗ₂ = v*_r + loi du premier suiveur ; ṗ_k = v*_r + loi de forme."""
    v = ref.velocity
    p = np.asarray(config, dtype=float)
    if agent == 1:
        return v
    if agent == 2:
        return v + first_follower_control(variant, p[0], p[1], ref.delta, gain)
    return v + shape_control(agent, p, acs, gain)


def feedback_matrix(acs: AngleConstraintSet, n: int, gain: float = 1.0) -> np.ndarray:
    """K (2n × 2n) tel que la loi de forme empilée s'écrive u = K p.

    Bloc-triangulaire inférieur : valeurs propres 0 (agents 1, 2) et
    -gain·sin²(angle suiveur), deux fois par suiveur.
    """
    K = np.zeros((2 * n, 2 * n))
    for tc in acs.constraints:
        row = slice(2 * (tc.triangle.k - 1), 2 * tc.triangle.k)
        for agent, block in tc.blocks().items():
            col = slice(2 * (agent - 1), 2 * agent)
            K[row, col] += -gain * tc.A_k.T @ block
    return K
