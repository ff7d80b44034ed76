#!/usr/bin/env python3
"""
Géométrie plane pour angleform
Vecteurs 2D, rotations, angles signés, similitudes et distance de forme.

Conventions :
- un Vec2 est un np.ndarray de forme (2,)
- une Configuration est un np.ndarray de forme (n, 2), agent i à la ligne i-1
- les fonctions acceptent des axes de tête supplémentaires (séries temporelles)
  sauf mention contraire
"""

import math
import logging
from dataclasses import dataclass, field
from typing import Dict, Sequence, Tuple

import numpy as np

from errors import CoincidentPoints, DegenerateReference, InvalidScenario

logger = logging.getLogger("geometry")

EPS_DEG = 1e-9  # m, en dessous deux points sont confondus
TWO_PI = 2.0 * math.pi


def as_vec2(v) -> np.ndarray:
    arr = np.asarray(v, dtype=float)
    if arr.shape != (2,) or not np.all(np.isfinite(arr)):
        raise InvalidScenario(f"expected a finite 2-vector, got {v!r}")
    return arr


def as_configuration(points, min_agents: int = 2) -> np.ndarray:
    """Convertir une liste de positions en tableau (n, 2) validé."""
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise InvalidScenario(f"configuration must have shape (n, 2), got {arr.shape}")
    if arr.shape[0] < min_agents:
        raise InvalidScenario(f"configuration needs at least {min_agents} agents")
    if not np.all(np.isfinite(arr)):
        raise InvalidScenario("configuration has non-finite coordinates")
    return arr


def normalize_angle(theta):
    """Ramener un angle dans [0, 2π)."""
    t = np.mod(theta, TWO_PI)
    # np.mod peut rendre exactement 2π pour de petits négatifs
    t = np.where(t >= TWO_PI, 0.0, t)
    return float(t) if np.ndim(t) == 0 else t


def wrap_angle(delta):
    """Ramener une différence d'angles dans (-π, π]."""
    w = np.arctan2(np.sin(delta), np.cos(delta))
    w = np.where(w <= -math.pi, math.pi, w)
    return float(w) if np.ndim(w) == 0 else w


def rotation_matrix(theta: float) -> np.ndarray:
    """Matrice de rotation R(θ) = [cos, -sin; sin, cos]."""
    t = normalize_angle(float(theta))
    c, s = math.cos(t), math.sin(t)
    return np.array([[c, -s], [s, c]])


def cross2(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """det([a, b]) pour des vecteurs en colonnes."""
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def bearing(p_from, p_to) -> np.ndarray:
    """Relèvement unitaire (p_to - p_from) / ||p_to - p_from||."""
    d = np.asarray(p_to, dtype=float) - np.asarray(p_from, dtype=float)
    dist = np.linalg.norm(d, axis=-1, keepdims=True)
    if np.any(dist <= EPS_DEG):
        raise CoincidentPoints(f"points closer than {EPS_DEG} m: {p_from} / {p_to}")
    return d / dist


def signed_angles(p_i, p_j, p_k) -> Tuple[np.ndarray, np.ndarray]:
    """Angles signés vectorisés, sans lever d'erreur.

    Retourne (angles, degenerate) ; les entrées dont un relèvement est
    indéfini valent NaN et sont marquées dans le masque.
    """
    p_j = np.asarray(p_j, dtype=float)
    d_ji = np.asarray(p_i, dtype=float) - p_j
    d_jk = np.asarray(p_k, dtype=float) - p_j
    n_ji = np.linalg.norm(d_ji, axis=-1)
    n_jk = np.linalg.norm(d_jk, axis=-1)
    degenerate = (n_ji <= EPS_DEG) | (n_jk <= EPS_DEG)
    with np.errstate(invalid="ignore", divide="ignore"):
        b_ji = d_ji / n_ji[..., None]
        b_jk = d_jk / n_jk[..., None]
    cos_a = np.sum(b_ji * b_jk, axis=-1)
    det = cross2(b_ji, b_jk)
    # arccos(cos_a), bien conditionné près de 0 et π
    base = np.arctan2(np.abs(det), cos_a)
    angle = np.where(det <= 0.0, base, TWO_PI - base)
    angle = np.where(angle >= TWO_PI, 0.0, angle)
    angle = np.where(degenerate, np.nan, angle)
    return angle, degenerate


def signed_angle(p_i, p_j, p_k) -> float:
    """Angle signé α_ijk au sommet j, du relèvement vers i au relèvement vers k.

    arccos(b_jiᵀ b_jk) si det([b_ji, b_jk]) ≤ 0, sinon 2π - arccos(...).
    Avec cette règle la valeur mesure le balayage horaire de b_ji vers b_jk.
    """
    angle, degenerate = signed_angles(p_i, p_j, p_k)
    if np.any(degenerate):
        raise CoincidentPoints(f"degenerate vertex at {p_j}")
    return float(angle) if np.ndim(angle) == 0 else angle


@dataclass(frozen=True)
class SimilarityTransform:
    """q = c·R(θ)·p + ξ, avec c ≠ 0."""
    c: float
    theta: float = 0.0
    xi: Tuple[float, float] = field(default=(0.0, 0.0))

    def __post_init__(self):
        if not math.isfinite(self.c) or self.c == 0.0:
            raise ValueError(f"similarity scale must be finite and non-zero, got {self.c}")
        object.__setattr__(self, "theta", normalize_angle(float(self.theta)))
        object.__setattr__(self, "xi", tuple(float(v) for v in as_vec2(self.xi)))

    @property
    def matrix(self) -> np.ndarray:
        return self.c * rotation_matrix(self.theta)

    def to_dict(self) -> Dict:
        return {
            "c": self.c,
            "theta_deg": math.degrees(self.theta),
            "xi": list(self.xi),
        }


def apply_similarity(config, T: SimilarityTransform) -> np.ndarray:
    """Appliquer q_i = c·R(θ)·p_i + ξ à chaque position."""
    p = np.asarray(config, dtype=float)
    return p @ T.matrix.T + np.asarray(T.xi)


def _as_complex(config) -> np.ndarray:
    p = np.asarray(config, dtype=float)
    return p[..., 0] + 1j * p[..., 1]


def _complex_fit(q, p):
    """Moindres carrés q ≈ a·p + b dans ℂ (a = c·e^{iθ}).

    Le signe de c est absorbé par θ (c < 0 équivaut à θ + π), le minimum sur
    les deux branches est donc le minimum sur a complexe.
    """
    z = _as_complex(q)
    w = _as_complex(p)
    if z.shape[-1] != w.shape[-1]:
        raise ValueError(f"agent count mismatch: {z.shape[-1]} vs {w.shape[-1]}")
    z_mean = z.mean(axis=-1, keepdims=True)
    w_mean = w.mean(axis=-1, keepdims=True)
    zc = z - z_mean
    wc = w - w_mean
    spread = np.sqrt(np.sum(np.abs(wc) ** 2, axis=-1))
    if np.any(spread <= EPS_DEG):
        raise DegenerateReference("reference configuration has zero spread")
    a = np.sum(np.conj(wc) * zc, axis=-1) / spread ** 2
    return a, z_mean[..., 0], w_mean[..., 0], zc, wc, spread


def fit_similarity(q, p) -> SimilarityTransform:
    """Similitude (c > 0) qui envoie p au plus près de q, forme fermée."""
    a, z_mean, w_mean, _, _, _ = _complex_fit(q, p)
    if np.ndim(a) != 0:
        raise ValueError("fit_similarity expects single configurations")
    a = complex(a)
    if abs(a) <= EPS_DEG:
        raise DegenerateReference("fitted scale is zero: configuration collapsed")
    xi = complex(z_mean) - a * complex(w_mean)
    return SimilarityTransform(abs(a), math.atan2(a.imag, a.real), (xi.real, xi.imag))


def shape_distance(q, p):
    """min_T ||q - T(p)|| / ||p - centroid(p)||, réflexions exclues.

    Nul (≤ 1e-9) ssi q ∈ 𝓔(p). Un q sans étendue n'appartient pas à 𝓔(p)
    (c ≠ 0) : la valeur retournée est alors 1.0. q peut porter un axe de
    temps en tête, p aussi.
    """
    a, _, _, zc, wc, spread = _complex_fit(q, p)
    resid = np.sqrt(np.sum(np.abs(zc - a[..., None] * wc) ** 2, axis=-1)) / spread
    q_spread = np.sqrt(np.sum(np.abs(zc) ** 2, axis=-1))
    resid = np.where(q_spread <= EPS_DEG, 1.0, resid)
    return float(resid) if np.ndim(resid) == 0 else resid


def mirror(config: Sequence) -> np.ndarray:
    """Image miroir par rapport à l'axe des x."""
    p = np.array(config, dtype=float)
    p[..., 1] = -p[..., 1]
    return p
