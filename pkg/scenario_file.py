#!/usr/bin/env python3
"""
Fichiers scénario angleform (.scn)
Format texte par sections, indices 1-based, angles en degrés :

    [agents]     n
    [graph]      k: i j            (voisins sortants de k)
    [target]     x y par agent, ou "reconstruct" suivi de
                 1: x y / 2: x y (ancres) et k: a_k a_j a_i (degrés)
    [initial]    x y par agent
    [mode]       shape | maneuver [relative|distance|bearing]
    [schedule]   t_start t_end vx vy dx dy
    [sim]        dt, duration, activation, epsilon, frame_offsets, seed, gain

Toute erreur est rapportée avec sa ligne et sa colonne.
"""

import math
import os
import re
import logging
from typing import Dict, List, Optional, Tuple

import numpy as np

from constraints import (AngleConstraintSet, TriangleAngles, constraint_matrices,
                         extract_angles, reconstruct)
from control import ControlMode, FrameOffsets, ManeuverReference
from errors import AngleformError, ParseError, ScenarioFileError
from geometry import wrap_angle
from graph import SensingGraph, Triangle
from sim import DEFAULT_DT, DEFAULT_EPSILON, Activation, Scenario, ScheduleSegment

logger = logging.getLogger("scenario-file")

SCENARIOS_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "scenarios")
SCENARIO_EXT = ".scn"
VALID_NAME_RE = re.compile(r'^[a-z0-9_\-]{1,64}$')

SECTION_RE = re.compile(r'^\[([A-Za-z_]+)\]$')
KV_RE = re.compile(r'^([A-Za-z_]+)\s*=(.*)$')
TOKEN_RE = re.compile(r'\S+')

VALID_SECTIONS = {"agents", "graph", "target", "initial", "mode", "schedule", "sim"}
REQUIRED_SECTIONS = ("agents", "graph", "target", "initial")
VALID_SIM_KEYS = {"dt", "duration", "activation", "epsilon", "frame_offsets", "seed", "gain"}
RECONSTRUCT_TOL_DEG = 0.05

Token = Tuple[str, int]          # (texte, colonne 1-based)
Row = Tuple[int, List[Token]]    # (ligne 1-based, jetons)


class _Diagnostics:
    def __init__(self, path: Optional[str]):
        self.path = path
        self.items: List[ParseError] = []

    def add(self, message: str, line: int, column: int = 1):
        self.items.append(ParseError(message, line, column, self.path))


def _tokens(text: str, offset: int) -> List[Token]:
    return [(m.group(0), offset + m.start() + 1) for m in TOKEN_RE.finditer(text)]


def _split_sections(text: str, diag: _Diagnostics) -> Dict[str, Tuple[int, List[Row]]]:
    sections: Dict[str, Tuple[int, List[Row]]] = {}
    current: Optional[str] = None
    skipping = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].rstrip()
        stripped = body.strip()
        if not stripped:
            continue
        indent = len(body) - len(body.lstrip())
        m = SECTION_RE.match(stripped)
        if m:
            name = m.group(1).lower()
            if name not in VALID_SECTIONS:
                diag.add(f"unknown section [{name}]", lineno, indent + 1)
                current, skipping = None, True
            elif name in sections:
                diag.add(f"duplicate section [{name}]", lineno, indent + 1)
                current, skipping = None, True
            else:
                sections[name] = (lineno, [])
                current, skipping = name, False
            continue
        if current is None:
            if not skipping:
                diag.add("content outside of a known section", lineno, indent + 1)
            continue
        sections[current][1].append((lineno, _tokens(body, 0)))
    return sections


def _number(tok: Token, line: int, diag: _Diagnostics) -> Optional[float]:
    try:
        v = float(tok[0])
    except ValueError:
        diag.add(f"expected a number, got {tok[0]!r}", line, tok[1])
        return None
    if not math.isfinite(v):
        diag.add(f"non-finite number {tok[0]!r}", line, tok[1])
        return None
    return v


def _integer(tok: Token, line: int, diag: _Diagnostics) -> Optional[int]:
    text = tok[0].rstrip(":")
    if not re.fullmatch(r'[+-]?\d+', text):
        diag.add(f"expected an integer, got {tok[0]!r}", line, tok[1])
        return None
    return int(text)


def _index_prefix(tokens: List[Token], line: int, diag: _Diagnostics
                  ) -> Tuple[Optional[int], List[Token]]:
    """Sépare un préfixe « k: » éventuel du reste de la ligne."""
    if not tokens:
        return None, tokens
    head = tokens[0][0]
    if head.endswith(":"):
        return _integer(tokens[0], line, diag), tokens[1:]
    if ":" in head:
        left, right = head.split(":", 1)
        idx = _integer((left, tokens[0][1]), line, diag)
        rest = [(right, tokens[0][1] + len(left) + 1)] if right else []
        return idx, rest + tokens[1:]
    return None, tokens


def _parse_agents(rows: List[Row], start: int, diag: _Diagnostics) -> Optional[int]:
    if len(rows) != 1 or len(rows[0][1]) != 1:
        diag.add("[agents] expects a single integer", rows[0][0] if rows else start)
        return None
    line, toks = rows[0]
    n = _integer(toks[0], line, diag)
    if n is not None and n < 1:
        diag.add(f"agent count must be positive, got {n}", line, toks[0][1])
        return None
    return n


def _parse_graph(rows: List[Row], n: int, diag: _Diagnostics) -> Dict[int, List[int]]:
    neighbors: Dict[int, List[int]] = {}
    for line, toks in rows:
        k, rest = _index_prefix(toks, line, diag)
        if k is None:
            if toks and not toks[0][0].endswith(":") and ":" not in toks[0][0]:
                diag.add("graph rows have the form 'k: i j'", line, toks[0][1])
            continue
        if not 1 <= k <= n:
            diag.add(f"agent {k} out of range 1..{n}", line, toks[0][1])
            continue
        if k in neighbors:
            diag.add(f"agent {k} listed twice", line, toks[0][1])
            continue
        values = [_integer(t, line, diag) for t in rest]
        if None in values:
            continue
        neighbors[k] = values
    return neighbors


def _parse_points(rows: List[Row], n: int, section: str, start: int,
                  diag: _Diagnostics) -> Optional[np.ndarray]:
    if len(rows) != n:
        diag.add(f"[{section}] expects {n} rows 'x y', got {len(rows)}",
                 rows[-1][0] if rows else start)
        return None
    points = []
    for row_idx, (line, toks) in enumerate(rows, start=1):
        k, rest = _index_prefix(toks, line, diag)
        if k is not None and k != row_idx:
            diag.add(f"row for agent {k} found where agent {row_idx} was expected", line, toks[0][1])
        if len(rest) != 2:
            diag.add(f"[{section}] rows need exactly 2 coordinates", line,
                     rest[0][1] if rest else (toks[0][1] if toks else 1))
            points.append(None)
            continue
        xy = [_number(t, line, diag) for t in rest]
        points.append(None if None in xy else xy)
    if any(pt is None for pt in points):
        return None
    return np.array(points, dtype=float)


def _parse_reconstruct(rows: List[Row], n: int, neighbors: Dict[int, List[int]],
                       start: int, diag: _Diagnostics) -> Optional[np.ndarray]:
    """Reconstruire p* depuis deux ancres et les angles des triangles (degrés)."""
    anchors: Dict[int, np.ndarray] = {}
    angles: Dict[int, Tuple[int, List[float]]] = {}
    for line, toks in rows:
        k, rest = _index_prefix(toks, line, diag)
        if k is None:
            diag.add("reconstruct rows have the form 'k: values'", line, toks[0][1] if toks else 1)
            continue
        expected = 2 if k in (1, 2) else 3
        if not 1 <= k <= n or len(rest) != expected:
            diag.add(f"agent {k}: expected {expected} values", line, toks[0][1])
            continue
        values = [_number(t, line, diag) for t in rest]
        if None in values:
            continue
        if k in (1, 2):
            anchors[k] = np.array(values)
        else:
            angles[k] = (line, values)
    missing = [k for k in range(1, n + 1) if k not in anchors and k not in angles]
    if missing:
        diag.add(f"reconstruct: missing rows for agents {missing}", start)
        return None
    triangle_angles = []
    for k in range(3, n + 1):
        nbrs = neighbors.get(k, [])
        if len(nbrs) != 2 or max(nbrs) >= k or min(nbrs) < 1:
            diag.add(f"reconstruct: agent {k} needs two lower-index neighbors in [graph]",
                     angles[k][0])
            return None
        i, j = sorted(nbrs)
        a_k, a_j, a_i = (math.radians(v) % (2 * math.pi) for v in angles[k][1])
        triangle_angles.append(TriangleAngles(Triangle(i, j, k), a_k, a_j, a_i))
    acs = AngleConstraintSet(tuple(triangle_angles),
                             tuple(constraint_matrices(a) for a in triangle_angles))
    try:
        p_star = reconstruct(anchors[1], anchors[2], acs)
        check = extract_angles(p_star, acs.triangles)
    except AngleformError as e:
        diag.add(f"reconstruct: {e}", start)
        return None
    for given, got in zip(acs.angles, check.angles):
        err = np.abs(wrap_angle(np.array(given.as_tuple()) - np.array(got.as_tuple())))
        if math.degrees(float(err.max())) > RECONSTRUCT_TOL_DEG:
            diag.add(f"reconstruct: angles of triangle {tuple(given.triangle)} are not realizable",
                     angles[given.triangle.k][0])
            return None
    return p_star


def _parse_mode(rows: List[Row], diag: _Diagnostics) -> Optional[ControlMode]:
    if len(rows) != 1 or not 1 <= len(rows[0][1]) <= 2:
        diag.add("[mode] expects 'shape' or 'maneuver [relative|distance|bearing]'",
                 rows[0][0] if rows else 1)
        return None
    line, toks = rows[0]
    kind = toks[0][0].lower()
    variant = toks[1][0].lower() if len(toks) > 1 else "relative"
    try:
        return ControlMode(kind, variant)
    except AngleformError as e:
        diag.add(str(e), line, toks[-1][1])
        return None


def _parse_schedule(rows: List[Row], diag: _Diagnostics) -> List[ScheduleSegment]:
    schedule = []
    for line, toks in rows:
        if len(toks) != 6:
            diag.add("schedule rows are 't_start t_end vx vy dx dy'", line, toks[0][1])
            continue
        values = [_number(t, line, diag) for t in toks]
        if None in values:
            continue
        t0, t1, vx, vy, dx, dy = values
        try:
            schedule.append(ScheduleSegment(t0, t1, ManeuverReference((vx, vy), (dx, dy))))
        except AngleformError as e:
            diag.add(str(e), line, toks[0][1])
    return schedule


def _parse_sim(rows: List[Row], n: Optional[int], diag: _Diagnostics) -> Dict:
    opts: Dict = {}
    for line, toks in rows:
        text = " ".join(t[0] for t in toks)
        m = KV_RE.match(text)
        if not m:
            diag.add("[sim] rows have the form 'key = value'", line, toks[0][1])
            continue
        key, value = m.group(1).lower(), m.group(2).strip()
        value_col = toks[-1][1] if len(toks) > 1 else toks[0][1]
        if key not in VALID_SIM_KEYS:
            diag.add(f"unknown [sim] key {key!r}", line, toks[0][1])
            continue
        if key in opts:
            diag.add(f"duplicate [sim] key {key!r}", line, toks[0][1])
            continue
        if key == "activation":
            opts[key] = value.lower()
        elif key == "frame_offsets":
            vals = [_number((v, value_col), line, diag) for v in value.split()]
            if None in vals:
                continue
            if n is not None and len(vals) != n:
                diag.add(f"frame_offsets needs {n} angles, got {len(vals)}", line, value_col)
                continue
            opts[key] = FrameOffsets(tuple(math.radians(v) for v in vals))
        elif key == "seed":
            seed = _integer((value, value_col), line, diag)
            if seed is not None:
                opts[key] = seed
        else:
            v = _number((value, value_col), line, diag)
            if v is not None:
                opts[key] = v
    return opts


def parse_scenario(text: str, path: Optional[str] = None, name: str = "") -> Scenario:
    """Texte → Scenario, ou ScenarioFileError avec tous les diagnostics."""
    diag = _Diagnostics(path)
    sections = _split_sections(text, diag)
    for required in REQUIRED_SECTIONS:
        if required not in sections:
            diag.add(f"missing section [{required}]", 1)
    if diag.items:
        raise ScenarioFileError(diag.items)

    n = _parse_agents(sections["agents"][1], sections["agents"][0], diag)
    if n is None:
        raise ScenarioFileError(diag.items)
    neighbors = _parse_graph(sections["graph"][1], n, diag)

    t_start, t_rows = sections["target"]
    if t_rows and t_rows[0][1] and t_rows[0][1][0][0].lower() == "reconstruct":
        if len(t_rows[0][1]) != 1:
            diag.add("'reconstruct' stands alone on its line", t_rows[0][0], t_rows[0][1][1][1])
        p_star = None if diag.items else _parse_reconstruct(t_rows[1:], n, neighbors, t_start, diag)
    else:
        p_star = _parse_points(t_rows, n, "target", t_start, diag)
    p0 = _parse_points(sections["initial"][1], n, "initial", sections["initial"][0], diag)

    mode = ControlMode()
    if "mode" in sections:
        mode = _parse_mode(sections["mode"][1], diag) or mode
    schedule = _parse_schedule(sections["schedule"][1], diag) if "schedule" in sections else []
    opts = _parse_sim(sections["sim"][1], n, diag) if "sim" in sections else {}
    try:
        activation = Activation(opts.get("activation", "simultaneous"),
                                opts.get("epsilon", DEFAULT_EPSILON))
    except AngleformError as e:
        diag.add(str(e), sections["sim"][0] if "sim" in sections else 1)
        activation = Activation()
    if diag.items:
        raise ScenarioFileError(diag.items)

    default_duration = schedule[-1].t_end if schedule else 10.0
    return Scenario(
        p0=p0,
        p_star=p_star,
        graph=SensingGraph.from_lists(n, neighbors),
        mode=mode,
        schedule=tuple(schedule),
        dt=opts.get("dt", DEFAULT_DT),
        duration=opts.get("duration", default_duration),
        activation=activation,
        frame_offsets=opts.get("frame_offsets"),
        rng_seed=opts.get("seed"),
        gain=opts.get("gain", 1.0),
        name=name,
    )


def load_scenario(path: str) -> Scenario:
    """Lire et analyser un fichier scénario."""
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    name = os.path.splitext(os.path.basename(path))[0]
    scenario = parse_scenario(text, path=path, name=name)
    logger.debug(f"Scénario {name} chargé : {scenario.n} agents, mode {scenario.mode.label()}")
    return scenario


def bundled_path(name: str) -> str:
    """Chemin d'un scénario livré (protégé contre path traversal)."""
    if not VALID_NAME_RE.match(name):
        raise ValueError(f"invalid scenario name {name!r}")
    path = os.path.realpath(os.path.join(SCENARIOS_DIR, name + SCENARIO_EXT))
    if not path.startswith(os.path.realpath(SCENARIOS_DIR) + os.sep):
        raise ValueError(f"path traversal blocked for {name!r}")
    if not os.path.isfile(path):
        raise FileNotFoundError(f"no bundled scenario named {name!r}")
    return path


def list_bundled() -> List[str]:
    if not os.path.isdir(SCENARIOS_DIR):
        return []
    return sorted(os.path.splitext(f)[0] for f in os.listdir(SCENARIOS_DIR)
                  if f.endswith(SCENARIO_EXT))
