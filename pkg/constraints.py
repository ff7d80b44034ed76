#!/usr/bin/env python3
"""
Contraintes d'angles pour angleform
Extraction des angles signés de la cible, blocs matriciels de la contrainte
linéaire par triangle, reconstruction d'une configuration depuis deux ancres
et configuration limite prédite (c†, θ†, ξ†, p†).

Chaque triangle [k] = (i, j, k) porte la contrainte
    A_i p_i + A_j p_j + A_k p_k = 0
avec
    A_i = sin(α_jki) I - sin(α_ijk) Rᵀ(α_kij)
    A_j = sin(α_ijk) Rᵀ(α_kij)
    A_k = -sin(α_jki) I
Les trois angles sont stockés comme balayages anti-horaires (signed_angle
avec ses deux rayons permutés) : c'est le sens dans lequel ces blocs
s'annulent sur le triangle générateur.
"""

import math
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from errors import CoincidentLeaders, DegenerateTarget
from geometry import (EPS_DEG, SimilarityTransform, apply_similarity,
                      as_configuration, as_vec2, rotation_matrix, signed_angle)
from graph import (EPS_COL, FormationGraph, SensingGraph, Triangle, TriangleSet,
                   build_formation_graph, nondegeneracy_violations, triangle_set)

logger = logging.getLogger("constraints")

IDENTITY2 = np.eye(2)

# (nom, rôle de chaque point) pour évaluer un angle stocké avec signed_angle
ANGLE_VERTICES = (
    ("alpha_jki", ("i", "k", "j")),  # au sommet k (suiveur)
    ("alpha_ijk", ("k", "j", "i")),  # au sommet j
    ("alpha_kij", ("j", "i", "k")),  # au sommet i
)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TriangleAngles:
    triangle: Triangle
    alpha_jki: float
    alpha_ijk: float
    alpha_kij: float

    @property
    def follower_angle(self) -> float:
        """Angle au sommet du suiveur ; sin² fixe son taux de convergence."""
        return self.alpha_jki

    @property
    def rate(self) -> float:
        return math.sin(self.follower_angle) ** 2

    def as_tuple(self) -> Tuple[float, float, float]:
        return (self.alpha_jki, self.alpha_ijk, self.alpha_kij)

    def to_dict(self) -> Dict:
        return {
            "triangle": list(self.triangle),
            "alpha_jki_deg": math.degrees(self.alpha_jki),
            "alpha_ijk_deg": math.degrees(self.alpha_ijk),
            "alpha_kij_deg": math.degrees(self.alpha_kij),
        }


@dataclass(frozen=True, eq=False)
class TriangleConstraint:
    triangle: Triangle
    A_i: np.ndarray
    A_j: np.ndarray
    A_k: np.ndarray

    def blocks(self) -> Dict[int, np.ndarray]:
        """Blocs indexés par agent (1-based)."""
        i, j, k = self.triangle
        return {i: self.A_i, j: self.A_j, k: self.A_k}


@dataclass(frozen=True, eq=False)
class AngleConstraintSet:
    """Angles et contraintes, un triangle par suiveur, ordonnés par suiveur."""
    angles: Tuple[TriangleAngles, ...]
    constraints: Tuple[TriangleConstraint, ...]

    @property
    def triangles(self) -> TriangleSet:
        return tuple(a.triangle for a in self.angles)

    @property
    def n(self) -> int:
        return max(t.k for t in self.triangles) if self.angles else 2

    def for_follower(self, k: int) -> Tuple[TriangleAngles, TriangleConstraint]:
        idx = k - 3
        if idx < 0 or idx >= len(self.angles) or self.angles[idx].triangle.k != k:
            raise KeyError(f"no triangle for follower {k}")
        return self.angles[idx], self.constraints[idx]

    def residuals(self, config) -> np.ndarray:
        """Résidus (n-2, 2) de toutes les contraintes sur une configuration."""
        p = np.asarray(config, dtype=float)
        out = [residual(tc, p[tc.triangle.i - 1], p[tc.triangle.j - 1], p[tc.triangle.k - 1])
               for tc in self.constraints]
        return np.array(out).reshape(len(out), 2)

    def reference_angles(self) -> np.ndarray:
        """Angles cibles (m, 3) dans l'ordre de ANGLE_VERTICES."""
        return np.array([a.as_tuple() for a in self.angles]).reshape(len(self.angles), 3)

    def follower_rates(self) -> Dict[int, float]:
        return {a.triangle.k: a.rate for a in self.angles}


@dataclass(frozen=True, eq=False)
class PredictedLimit:
    c_dagger: float
    theta_dagger: float
    xi_dagger: np.ndarray
    p_dagger: np.ndarray

    @property
    def transform(self) -> SimilarityTransform:
        return SimilarityTransform(self.c_dagger, self.theta_dagger, tuple(self.xi_dagger))

    def to_dict(self) -> Dict:
        return {
            "c": self.c_dagger,
            "theta_deg": math.degrees(self.theta_dagger),
            "xi": [float(v) for v in self.xi_dagger],
        }


@dataclass(frozen=True, eq=False)
class TargetFormation:
    """Cible validée : p*, graphes, triangles et contraintes."""
    p_star: np.ndarray
    graph: SensingGraph
    formation_graph: FormationGraph
    triangles: TriangleSet
    acs: AngleConstraintSet

    @property
    def n(self) -> int:
        return self.graph.n


def build_target(p_star, g: SensingGraph) -> TargetFormation:
    """Valider le graphe et la cible puis dériver toutes les contraintes."""
    p = _frozen(as_configuration(p_star, min_agents=3))
    fg = build_formation_graph(g)
    ts = triangle_set(g)
    if p.shape[0] != g.n:
        raise DegenerateTarget(f"target has {p.shape[0]} positions for {g.n} agents")
    violations = nondegeneracy_violations(p, g)
    if violations:
        raise DegenerateTarget("; ".join(violations))
    acs = extract_angles(p, ts)
    logger.debug(f"Cible construite : {g.n} agents, {len(ts)} triangles")
    return TargetFormation(p, g, fg, ts, acs)


def _points(p: np.ndarray, tri: Triangle) -> Dict[str, np.ndarray]:
    return {"i": p[tri.i - 1], "j": p[tri.j - 1], "k": p[tri.k - 1]}


def extract_angles(p_star, ts: TriangleSet) -> AngleConstraintSet:
    """Angles signés de p* sur chaque triangle, puis blocs de contrainte."""
    p = np.asarray(p_star, dtype=float)
    angles: List[TriangleAngles] = []
    constraints: List[TriangleConstraint] = []
    for tri in sorted(ts, key=lambda t: t.k):
        pts = _points(p, tri)
        values = {}
        for name, (a, b, c) in ANGLE_VERTICES:
            if (np.linalg.norm(pts[a] - pts[b]) <= EPS_DEG
                    or np.linalg.norm(pts[c] - pts[b]) <= EPS_DEG):
                raise DegenerateTarget(f"triangle {tuple(tri)} has coincident vertices")
            values[name] = signed_angle(pts[a], pts[b], pts[c])
        ta = TriangleAngles(tri, values["alpha_jki"], values["alpha_ijk"], values["alpha_kij"])
        if min(abs(math.sin(v)) for v in ta.as_tuple()) <= EPS_COL:
            raise DegenerateTarget(f"triangle {tuple(tri)} is collinear")
        tc = constraint_matrices(ta)
        r = residual(tc, pts["i"], pts["j"], pts["k"])
        scale = max(1.0, float(np.abs(p).max()))
        if np.linalg.norm(r) > 1e-9 * scale:
            raise DegenerateTarget(f"constraint of triangle {tuple(tri)} not satisfied by target")
        angles.append(ta)
        constraints.append(tc)
    return AngleConstraintSet(tuple(angles), tuple(constraints))


def constraint_matrices(a: TriangleAngles) -> TriangleConstraint:
    s_k = math.sin(a.alpha_jki)
    s_j = math.sin(a.alpha_ijk)
    rot_t = rotation_matrix(a.alpha_kij).T
    A_i = s_k * IDENTITY2 - s_j * rot_t
    A_j = s_j * rot_t
    A_k = -s_k * IDENTITY2
    return TriangleConstraint(a.triangle, _frozen(A_i), _frozen(A_j), _frozen(A_k))


def residual(tc: TriangleConstraint, p_i, p_j, p_k) -> np.ndarray:
    return (tc.A_i @ np.asarray(p_i, dtype=float)
            + tc.A_j @ np.asarray(p_j, dtype=float)
            + tc.A_k @ np.asarray(p_k, dtype=float))


def is_scaled_rotation(m: np.ndarray, tol: float = 1e-12) -> bool:
    """Forme [a, -b; b, a]."""
    return abs(m[0, 0] - m[1, 1]) <= tol and abs(m[0, 1] + m[1, 0]) <= tol


def scaled_rotation_inverse(m: np.ndarray) -> np.ndarray:
    """Inverse fermée d'une rotation mise à l'échelle : mᵀ / (a² + b²)."""
    scale2 = m[0, 0] ** 2 + m[1, 0] ** 2
    if scale2 <= EPS_COL ** 2:
        raise DegenerateTarget("singular follower block")
    return m.T / scale2


def reconstruct(q1, q2, acs: AngleConstraintSet,
                ts: Optional[TriangleSet] = None) -> np.ndarray:
    """Déroule q_k = -A_k⁻¹ (A_i q_i + A_j q_j) suiveur par suiveur."""
    q1, q2 = as_vec2(q1), as_vec2(q2)
    if np.linalg.norm(q1 - q2) <= EPS_DEG:
        raise CoincidentLeaders("leader and first follower anchors coincide")
    if ts is not None and tuple(ts) != acs.triangles:
        raise ValueError("triangle set does not match the constraint set")
    q = np.zeros((acs.n, 2))
    q[0], q[1] = q1, q2
    for tc in acs.constraints:
        i, j, k = tc.triangle
        q[k - 1] = -scaled_rotation_inverse(tc.A_k) @ (tc.A_i @ q[i - 1] + tc.A_j @ q[j - 1])
    return q


def predicted_limit(p_star, p1_0, p2_0) -> PredictedLimit:
    """c†, θ†, ξ† et p† fixés par les positions initiales des agents 1 et 2."""
    p = np.asarray(p_star, dtype=float)
    p1_0, p2_0 = as_vec2(p1_0), as_vec2(p2_0)
    d0 = p1_0 - p2_0
    d_star = p[0] - p[1]
    n0, n_star = np.linalg.norm(d0), np.linalg.norm(d_star)
    if n0 <= EPS_DEG or n_star <= EPS_DEG:
        raise CoincidentLeaders("agents 1 and 2 coincide")
    c = n0 / n_star
    b21, b21_star = d0 / n0, d_star / n_star
    side = float(b21 @ rotation_matrix(math.pi / 2) @ b21_star)
    base = math.atan2(abs(side), float(b21 @ b21_star))  # = arccos(b21ᵀ b21*)
    theta = base if side >= 0.0 else 2.0 * math.pi - base
    theta = theta % (2.0 * math.pi)
    xi = p1_0 - c * rotation_matrix(theta) @ p[0]
    T = SimilarityTransform(c, theta, tuple(xi))
    p_dagger = apply_similarity(p, T)
    return PredictedLimit(float(c), T.theta, _frozen(xi), _frozen(p_dagger))
