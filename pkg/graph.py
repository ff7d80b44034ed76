#!/usr/bin/env python3
"""
Graphes de formation pour angleform
Graphe de perception LFF (leader / premier suiveur), graphe de formation
fermé par triangles, ensemble de triangles et non-dégénérescence forte.
Export compatible D3.js/Cytoscape.js.

Indices 1-based partout dans l'API publique.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, NamedTuple, Sequence, Tuple

import numpy as np

from errors import InvalidSensingGraph
from geometry import EPS_DEG, cross2

logger = logging.getLogger("graph")

EPS_COL = 1e-9  # sur |det([b_ki, b_kj])|

# Types valides
VALID_NODE_TYPES = {"leader", "first_follower", "follower"}
VALID_EDGE_TYPES = {"SENSES", "CLOSES"}

RULE_LFF = "LFF structure"
RULE_NONDEGENERATE = "strong nondegeneracy"


class Triangle(NamedTuple):
    """Triangle [k] : (i, j, k) trié, k le suiveur."""
    i: int
    j: int
    k: int

    @property
    def follower(self) -> int:
        return self.k


TriangleSet = Tuple[Triangle, ...]


@dataclass(frozen=True)
class SensingGraph:
    """Graphe de perception orienté : out_neighbors[k] = agents perçus par k."""
    n: int
    out_neighbors: Dict[int, Tuple[int, ...]] = field(default_factory=dict)

    @classmethod
    def from_lists(cls, n: int, neighbors: Dict[int, Sequence[int]]) -> "SensingGraph":
        out = {k: tuple(int(v) for v in neighbors.get(k, ())) for k in range(1, n + 1)}
        extra = set(neighbors) - set(out)
        for k in extra:
            out[int(k)] = tuple(int(v) for v in neighbors[k])
        return cls(n, out)

    def neighbors(self, k: int) -> Tuple[int, ...]:
        return self.out_neighbors.get(k, ())

    def edges(self) -> List[Tuple[int, int]]:
        """Arêtes orientées (k, h) : k perçoit h."""
        return [(k, h) for k in sorted(self.out_neighbors) for h in self.out_neighbors[k]]

    def get_graph(self) -> Dict:
        """Retourner le graphe (format D3.js/Cytoscape compatible)."""
        edges = [{"source": str(k), "target": str(h), "type": "SENSES"}
                 for k, h in self.edges()]
        return {
            "nodes": _nodes(self.n),
            "edges": edges,
            "stats": {"node_count": self.n, "edge_count": len(edges)},
        }


@dataclass(frozen=True)
class FormationGraph:
    """Graphe non orienté E_f = E_s ∪ arêtes de fermeture des triangles."""
    n: int
    sensing_edges: FrozenSet[Tuple[int, int]]
    closure_edges: FrozenSet[Tuple[int, int]]

    @property
    def edges(self) -> FrozenSet[Tuple[int, int]]:
        return self.sensing_edges | self.closure_edges

    def has_edge(self, a: int, b: int) -> bool:
        return (min(a, b), max(a, b)) in self.edges

    def get_graph(self) -> Dict:
        """Retourner le graphe (format D3.js/Cytoscape compatible)."""
        edges = [{"source": str(a), "target": str(b), "type": "SENSES"}
                 for a, b in sorted(self.sensing_edges)]
        edges += [{"source": str(a), "target": str(b), "type": "CLOSES"}
                  for a, b in sorted(self.closure_edges)]
        return {
            "nodes": _nodes(self.n),
            "edges": edges,
            "stats": {
                "node_count": self.n,
                "edge_count": len(edges),
                "closure_count": len(self.closure_edges),
            },
        }


def _nodes(n: int) -> List[Dict]:
    nodes = []
    for k in range(1, n + 1):
        node_type = "leader" if k == 1 else "first_follower" if k == 2 else "follower"
        nodes.append({"id": str(k), "type": node_type, "label": f"agent {k}"})
    return nodes


def validate_lff(g: SensingGraph) -> List[str]:
    """Vérifier la structure LFF ; liste vide si le graphe est valide."""
    violations: List[str] = []
    if g.n < 3:
        violations.append(f"graph: n={g.n}, an LFF graph needs at least 3 agents ({RULE_LFF})")
    for k in sorted(g.out_neighbors):
        if not 1 <= k <= g.n:
            violations.append(f"agent {k}: index out of range 1..{g.n} ({RULE_LFF})")
    for k in range(1, g.n + 1):
        nbrs = g.neighbors(k)
        expected = 0 if k == 1 else 1 if k == 2 else 2
        if len(nbrs) != expected:
            violations.append(
                f"agent {k}: must sense exactly {expected} agent(s), has {len(nbrs)} ({RULE_LFF})")
        if len(set(nbrs)) != len(nbrs):
            violations.append(f"agent {k}: duplicate neighbor ({RULE_LFF})")
        for h in nbrs:
            if h == k:
                violations.append(f"agent {k}: self-loop ({k},{k}) ({RULE_LFF})")
            elif not 1 <= h <= g.n:
                violations.append(f"agent {k}: neighbor {h} out of range 1..{g.n} ({RULE_LFF})")
            elif h > k:
                violations.append(
                    f"agent {k}: edge ({k},{h}) points to higher index ({RULE_LFF})")
    if violations:
        logger.debug(f"Graphe LFF invalide : {len(violations)} violation(s)")
    return violations


def require_lff(g: SensingGraph):
    violations = validate_lff(g)
    if violations:
        raise InvalidSensingGraph(violations)


def build_formation_graph(g: SensingGraph) -> FormationGraph:
    """E_f : arêtes de perception + arête entre les deux voisins de chaque suiveur."""
    require_lff(g)
    sensing = frozenset((min(k, h), max(k, h)) for k, h in g.edges())
    closure = set()
    for k in range(3, g.n + 1):
        a, b = sorted(g.neighbors(k))
        if (a, b) not in sensing:
            closure.add((a, b))
    return FormationGraph(g.n, sensing, frozenset(closure))


def triangle_set(g: SensingGraph) -> TriangleSet:
    """Triangle [k] = tri(N_k ∪ {k}) pour k = 3..n."""
    require_lff(g)
    triangles = []
    for k in range(3, g.n + 1):
        i, j = sorted(g.neighbors(k))
        triangles.append(Triangle(i, j, k))
    return tuple(triangles)


def nondegeneracy_violations(p_star, g: SensingGraph) -> List[str]:
    """Suiveurs dont les deux arêtes sortantes sont colinéaires dans p*."""
    p = np.asarray(p_star, dtype=float)
    violations: List[str] = []
    if p.shape[0] != g.n:
        return [f"target: {p.shape[0]} positions for {g.n} agents ({RULE_NONDEGENERATE})"]
    if np.linalg.norm(p[0] - p[1]) <= EPS_DEG:
        violations.append(f"target: agents 1 and 2 coincide ({RULE_NONDEGENERATE})")
    for k in range(3, g.n + 1):
        nbrs = g.neighbors(k)
        if len(nbrs) != 2:
            continue
        i, j = nbrs
        d_ki = p[i - 1] - p[k - 1]
        d_kj = p[j - 1] - p[k - 1]
        n_ki, n_kj = np.linalg.norm(d_ki), np.linalg.norm(d_kj)
        if n_ki <= EPS_DEG or n_kj <= EPS_DEG:
            violations.append(f"target: agent {k} coincides with a neighbor ({RULE_NONDEGENERATE})")
            continue
        det = float(cross2(d_ki / n_ki, d_kj / n_kj))
        if abs(det) <= EPS_COL:
            violations.append(
                f"target: triangle ({i},{j},{k}) is collinear ({RULE_NONDEGENERATE})")
    return violations


def check_strong_nondegeneracy(p_star, g: SensingGraph) -> bool:
    return not nondegeneracy_violations(p_star, g)
