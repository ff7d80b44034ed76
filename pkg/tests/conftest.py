"""Fixtures partagées : cible à 6 agents, graphe LFF, générateur aléatoire."""
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from constraints import build_target  # noqa: E402
from graph import SensingGraph  # noqa: E402

P_STAR_6 = [(-1.0, 0.8), (-1.0, 0.1), (-0.3, 0.1), (-1.0, -0.6), (-2.12, -0.04), (0.12, -0.04)]
NEIGHBORS_6 = {1: [], 2: [1], 3: [1, 2], 4: [2, 3], 5: [1, 4], 6: [1, 4]}


@pytest.fixture
def p_star():
    return np.array(P_STAR_6)


@pytest.fixture
def graph6():
    return SensingGraph.from_lists(6, NEIGHBORS_6)


@pytest.fixture
def target6(p_star, graph6):
    return build_target(p_star, graph6)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
