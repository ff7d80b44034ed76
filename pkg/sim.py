#!/usr/bin/env python3
"""
Simulateur angleform
Intégration RK4 à pas fixe de ṗ = u(p, t) pour des agents intégrateurs
simples, planning de manœuvre constant par morceaux, activation simultanée
ou séquentielle des suiveurs, et moniteurs (taux, collisions, cascade).

Les références (segment de planning, suiveurs actifs) sont échantillonnées
au début de chaque pas et restent constantes pendant le pas.
"""

import dataclasses
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from constraints import PredictedLimit, TargetFormation, build_target, predicted_limit
from control import (ControlMode, FrameOffsets, ManeuverReference, feedback_matrix,
                     first_follower_control, local_frame_control)
from errors import InsufficientData, InvalidScenario, StepTooLarge
from geometry import EPS_DEG, as_configuration
from graph import SensingGraph, nondegeneracy_violations, validate_lff
from telemetry import (RateEstimate, angle_error_series, estimate_rate,
                       limit_distance_series, min_neighbor_distance_series,
                       pair_distance_series, shape_distance_series)

logger = logging.getLogger("sim")

DEFAULT_DT = 0.01
MAX_DT = 0.05              # garde de stabilité du système linéaire à gain 1
DEFAULT_EPSILON = 1e-4     # m, seuil d'activation séquentielle
CASCADE_TOLERANCE = 0.25
TIME_TOL = 1e-9

VALID_ACTIVATIONS = {"simultaneous", "sequential"}


@dataclass(frozen=True)
class ScheduleSegment:
    """Référence active sur [t_start, t_end)."""
    t_start: float
    t_end: float
    ref: ManeuverReference

    def __post_init__(self):
        if not self.t_start < self.t_end:
            raise InvalidScenario(f"segment [{self.t_start}, {self.t_end}) is empty")

    def to_dict(self) -> Dict:
        return {"t_start": self.t_start, "t_end": self.t_end, **self.ref.to_dict()}


@dataclass(frozen=True)
class Activation:
    kind: str = "simultaneous"
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        if self.kind not in VALID_ACTIVATIONS:
            raise InvalidScenario(
                f"unknown activation {self.kind!r}, expected one of {sorted(VALID_ACTIVATIONS)}")
        if not self.epsilon > 0:
            raise InvalidScenario("activation epsilon must be positive")

    @property
    def sequential(self) -> bool:
        return self.kind == "sequential"


@dataclass(frozen=True, eq=False)
class Scenario:
    p0: np.ndarray
    p_star: np.ndarray
    graph: SensingGraph
    mode: ControlMode = field(default_factory=ControlMode)
    schedule: Tuple[ScheduleSegment, ...] = ()
    dt: float = DEFAULT_DT
    duration: float = 10.0
    activation: Activation = field(default_factory=Activation)
    frame_offsets: Optional[FrameOffsets] = None
    rng_seed: Optional[int] = None
    gain: float = 1.0
    name: str = ""

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def steps(self) -> int:
        return int(round(self.duration / self.dt))

    @cached_property
    def target(self) -> TargetFormation:
        return build_target(self.p_star, self.graph)

    def with_overrides(self, dt: Optional[float] = None,
                       duration: Optional[float] = None) -> "Scenario":
        changes = {}
        if dt is not None:
            changes["dt"] = float(dt)
        if duration is not None:
            changes["duration"] = float(duration)
        return dataclasses.replace(self, **changes) if changes else self

    def segment_at(self, t: float) -> Optional[ScheduleSegment]:
        """Segment actif à t (continuité à droite) ; le dernier au-delà de la fin."""
        if not self.schedule:
            return None
        for seg in self.schedule:
            if seg.t_start - TIME_TOL <= t < seg.t_end - TIME_TOL:
                return seg
        return self.schedule[-1] if t >= self.schedule[-1].t_start else self.schedule[0]


@dataclass(frozen=True, eq=False)
class TrajectoryRecord:
    """Trajectoire échantillonnée et séries dérivées (tableaux en lecture seule)."""
    t: np.ndarray                      # (T,)
    positions: np.ndarray              # (T, n, 2)
    inputs: np.ndarray                 # (T, n, 2)
    angle_error: np.ndarray            # (T,)
    shape_distance: np.ndarray         # (T,)
    p_dagger: np.ndarray               # (T, n, 2)
    limit_distance: np.ndarray         # (T, n)
    min_neighbor_distance: np.ndarray  # (T,)
    activation_times: Dict[int, Optional[float]]
    degenerate_samples: int = 0
    limit: Optional[PredictedLimit] = None

    @property
    def n(self) -> int:
        return self.positions.shape[1]

    @property
    def samples(self) -> int:
        return self.t.shape[0]

    @property
    def final(self) -> np.ndarray:
        return self.positions[-1]


@dataclass(frozen=True)
class SegmentSummary:
    index: int
    segment: ScheduleSegment
    terminal_first_follower_error: float
    terminal_limit_error: float
    terminal_shape_distance: float
    terminal_velocity_error: float
    terminal_leader_distance: float
    first_follower_rate: Optional[RateEstimate]
    limit_rate: Optional[RateEstimate]
    velocity_rate: Optional[RateEstimate]

    def to_dict(self) -> Dict:
        def rate(r):
            return r.to_dict() if r is not None else None
        return {
            "index": self.index,
            **self.segment.to_dict(),
            "terminal_first_follower_error": self.terminal_first_follower_error,
            "terminal_limit_error": self.terminal_limit_error,
            "terminal_shape_distance": self.terminal_shape_distance,
            "terminal_velocity_error": self.terminal_velocity_error,
            "terminal_leader_distance": self.terminal_leader_distance,
            "first_follower_rate": rate(self.first_follower_rate),
            "limit_rate": rate(self.limit_rate),
            "velocity_rate": rate(self.velocity_rate),
        }


@dataclass(frozen=True, eq=False)
class ManeuverResult:
    record: TrajectoryRecord
    segments: Tuple[SegmentSummary, ...]


def _is_multiple(value: float, dt: float) -> bool:
    return abs(round(value / dt) * dt - value) <= TIME_TOL * max(1.0, abs(value))


def scenario_violations(s: Scenario) -> List[str]:
    """Toutes les hypothèses violées par un scénario, sans lever d'erreur."""
    violations = list(validate_lff(s.graph))
    n = s.graph.n
    p0 = np.asarray(s.p0, dtype=float)
    p_star = np.asarray(s.p_star, dtype=float)
    if p0.shape != (n, 2):
        violations.append(f"initial: expected {n} positions, got {p0.shape[0] if p0.ndim else 0}")
    if p_star.shape != (n, 2):
        violations.append(f"target: expected {n} positions, got {p_star.shape[0] if p_star.ndim else 0}")
    if not violations:
        violations += nondegeneracy_violations(p_star, s.graph)
        if np.linalg.norm(p0[0] - p0[1]) <= EPS_DEG:
            violations.append("initial: agents 1 and 2 coincide")
    if not s.dt > 0:
        violations.append(f"sim: dt must be positive, got {s.dt}")
    elif s.dt > MAX_DT:
        violations.append(f"sim: dt={s.dt} exceeds the stability guard {MAX_DT}")
    elif not s.duration > 0 or not _is_multiple(s.duration, s.dt):
        violations.append(f"sim: duration={s.duration} must be a positive multiple of dt={s.dt}")
    if not s.gain > 0:
        violations.append(f"sim: gain must be positive, got {s.gain}")
    if s.mode.is_maneuver:
        violations += _schedule_violations(s)
        if s.activation.sequential:
            violations.append("sim: sequential activation is supported in shape mode only")
    elif s.schedule:
        violations.append("schedule: shape mode requires an empty schedule")
    if s.frame_offsets is not None and len(s.frame_offsets.angles) != n:
        violations.append(f"sim: frame_offsets needs {n} angles, got {len(s.frame_offsets.angles)}")
    return violations


def _schedule_violations(s: Scenario) -> List[str]:
    if not s.schedule:
        return ["schedule: maneuver mode requires at least one segment"]
    violations = []
    if abs(s.schedule[0].t_start) > TIME_TOL:
        violations.append("schedule: first segment must start at t=0")
    for prev, seg in zip(s.schedule, s.schedule[1:]):
        if abs(prev.t_end - seg.t_start) > TIME_TOL:
            violations.append(f"schedule: gap or overlap between t={prev.t_end} and t={seg.t_start}")
    for seg in s.schedule:
        for t in (seg.t_start, seg.t_end):
            if s.dt > 0 and not _is_multiple(t, s.dt):
                violations.append(f"schedule: switch time {t} is not a multiple of dt={s.dt}")
    if s.schedule[-1].t_end < s.duration - TIME_TOL:
        violations.append(f"schedule: ends at t={s.schedule[-1].t_end} before duration {s.duration}")
    return violations


def validate_scenario(s: Scenario) -> TargetFormation:
    """Lever StepTooLarge / InvalidScenario ; retourner la cible construite."""
    if s.dt > MAX_DT:
        raise StepTooLarge(f"dt={s.dt} exceeds the stability guard {MAX_DT}")
    violations = scenario_violations(s)
    if violations:
        raise InvalidScenario("; ".join(violations))
    return s.target


def rk4_step(f: Callable[[np.ndarray], np.ndarray], p: np.ndarray, dt: float,
             k1: Optional[np.ndarray] = None) -> np.ndarray:
    """Un pas de Runge-Kutta classique d'ordre 4."""
    if k1 is None:
        k1 = f(p)
    k2 = f(p + 0.5 * dt * k1)
    k3 = f(p + 0.5 * dt * k2)
    k4 = f(p + dt * k3)
    return p + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


class _ClosedLoop:
    """Champ de vitesses u(p) pour un segment et un jeu de suiveurs actifs."""

    def __init__(self, s: Scenario, target: TargetFormation):
        self.s = s
        self.n = s.n
        self.acs = target.acs
        self.K = feedback_matrix(self.acs, self.n, s.gain)
        self.active = np.ones(self.n, dtype=bool)
        self._K_eff = self.K

    def set_active(self, active: np.ndarray):
        self.active = active.copy()
        rows = np.repeat(active, 2).astype(float)
        self._K_eff = self.K * rows[:, None]

    def shape_field(self, p: np.ndarray) -> np.ndarray:
        if self.s.frame_offsets is None:
            return (self._K_eff @ p.reshape(-1)).reshape(self.n, 2)
        u = np.zeros((self.n, 2))
        frames = self.s.frame_offsets
        for tc in self.acs.constraints:
            i, j, k = tc.triangle
            if not self.active[k - 1]:
                continue
            q = frames.rotation(k)
            local = [q @ (p[i - 1] - p[k - 1]), q @ (p[j - 1] - p[k - 1])]
            u[k - 1] = q.T @ local_frame_control(k, local, self.acs, self.s.gain)
        return u

    def field(self, ref: Optional[ManeuverReference]) -> Callable[[np.ndarray], np.ndarray]:
        if ref is None:
            return self.shape_field
        v = ref.velocity
        delta = ref.delta
        variant = self.s.mode.variant
        gain = self.s.gain

        def f(p: np.ndarray) -> np.ndarray:
            u = self.shape_field(p) + v
            u[1] = v + first_follower_control(variant, p[0], p[1], delta, gain)
            return u
        return f


def _activation_ready(k: int, p: np.ndarray, p_dagger: np.ndarray, s: Scenario) -> bool:
    return all(np.linalg.norm(p[h - 1] - p_dagger[h - 1]) < s.activation.epsilon
               for h in s.graph.neighbors(k))


def _maneuver_limits(p_star: np.ndarray, positions: np.ndarray, t: np.ndarray,
                     s: Scenario) -> np.ndarray:
    """p†(t) recalculé par segment depuis p₁(t) et le δ*₁₂ actif."""
    out = np.empty_like(positions)
    cache: Dict[int, np.ndarray] = {}
    for m, tm in enumerate(t):
        seg = s.segment_at(float(tm))
        key = id(seg)
        if key not in cache:
            # p† de référence pour p₁ = 0, translaté ensuite par p₁(t)
            cache[key] = predicted_limit(p_star, np.zeros(2), seg.ref.delta).p_dagger
        out[m] = cache[key] + positions[m, 0]
    return out


def integrate(s: Scenario) -> TrajectoryRecord:
    """Intégrer le scénario ; déterministe, échantillons à chaque pas."""
    target = validate_scenario(s)
    n, dt, steps = s.n, s.dt, s.steps
    t = np.arange(steps + 1) * dt
    p = np.array(s.p0, dtype=float)
    loop = _ClosedLoop(s, target)

    limit = None if s.mode.is_maneuver else predicted_limit(target.p_star, p[0], p[1])
    activation_times: Dict[int, Optional[float]] = {k: 0.0 for k in range(1, n + 1)}
    sequential = s.activation.sequential
    if sequential:
        active = np.zeros(n, dtype=bool)
        active[:2] = True
        for k in range(3, n + 1):
            activation_times[k] = None
        loop.set_active(active)

    positions = np.empty((steps + 1, n, 2))
    inputs = np.empty((steps + 1, n, 2))
    logger.info(f"Simulation {s.name or 'scenario'} : {n} agents, {steps} pas de {dt} s, "
                f"mode {s.mode.label()}, activation {s.activation.kind}")

    for m in range(steps + 1):
        tm = float(t[m])
        if sequential and not loop.active.all():
            changed = False
            for k in range(3, n + 1):
                if not loop.active[k - 1] and _activation_ready(k, p, limit.p_dagger, s):
                    loop.active[k - 1] = True
                    activation_times[k] = tm
                    changed = True
                    logger.debug(f"Suiveur {k} activé à t={tm:.3f}")
            if changed:
                loop.set_active(loop.active)
        seg = s.segment_at(tm)
        f = loop.field(seg.ref if seg is not None else None)
        k1 = f(p)
        positions[m] = p
        inputs[m] = k1
        if m < steps:
            p = rk4_step(f, p, dt, k1)

    angle_err, degenerate = angle_error_series(positions, target.acs)
    if s.mode.is_maneuver:
        p_dagger = _maneuver_limits(target.p_star, positions, t, s)
    else:
        p_dagger = np.broadcast_to(limit.p_dagger, positions.shape).copy()
    record = TrajectoryRecord(
        t=_ro(t),
        positions=_ro(positions),
        inputs=_ro(inputs),
        angle_error=_ro(angle_err),
        shape_distance=_ro(shape_distance_series(positions, target.p_star)),
        p_dagger=_ro(p_dagger),
        limit_distance=_ro(limit_distance_series(positions, p_dagger)),
        min_neighbor_distance=_ro(min_neighbor_distance_series(positions, target.formation_graph)),
        activation_times=activation_times,
        degenerate_samples=degenerate,
        limit=limit,
    )
    logger.info(f"Simulation terminée : erreur d'angle finale {record.angle_error[-1]:.3e} rad")
    return record


def _ro(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def follower_rates(record: TrajectoryRecord, target: TargetFormation) -> Dict[int, Dict]:
    """Taux ajusté de ||p_k - p†_k|| par suiveur face à sin²(angle suiveur)."""
    out = {}
    for ta in target.acs.angles:
        k = ta.triangle.k
        entry = {"predicted": ta.rate, "fitted": None, "relative_error": None}
        try:
            est = estimate_rate(record.t, record.limit_distance[:, k - 1], label=f"agent {k}")
            entry["fitted"] = est.rate
            entry["relative_error"] = est.relative_error(ta.rate)
            entry["fit"] = est.to_dict()
        except InsufficientData as e:
            logger.debug(f"Pas de taux pour l'agent {k} : {e}")
        out[k] = entry
    return out


def check_cascade_rates(record: TrajectoryRecord, target: TargetFormation,
                        tolerance: float = CASCADE_TOLERANCE) -> Dict[int, Dict]:
    """Chaque suiveur décroît au moins aussi vite que min(son sin², taux amont).

    Borne unilatérale ; la tolérance relative couvre le facteur polynomial
    des taux répétés le long de la cascade.
    """
    rates = follower_rates(record, target)
    report = {}
    for ta in target.acs.angles:
        k = ta.triangle.k
        upstream = [rates[h]["fitted"] for h in target.graph.neighbors(k)
                    if h >= 3 and rates[h]["fitted"] is not None]
        bound = min([ta.rate] + upstream)
        fitted = rates[k]["fitted"]
        if fitted is None:
            status = "skipped"
        else:
            status = "ok" if fitted >= (1.0 - tolerance) * bound else "slow"
        report[k] = {"fitted": fitted, "own": ta.rate, "bound": bound, "status": status}
    return report


def check_collision_bound(s: Scenario, record: Optional[TrajectoryRecord] = None) -> Dict:
    """Condition ||p_k(0) - p†_k|| < min(||p†_k - p†_i||, ||p†_k - p†_j||) et distances réalisées.

    Évaluée contre p† (les équilibres effectivement atteints).
    """
    if not s.activation.sequential:
        logger.warning("⚠ Rapport de collision sans activation séquentielle : aucune garantie")
    target = validate_scenario(s)
    if record is None:
        record = integrate(s)
    p0 = np.asarray(s.p0, dtype=float)
    p_dagger = predicted_limit(target.p_star, p0[0], p0[1]).p_dagger
    followers = []
    for k in range(3, s.n + 1):
        nbrs = s.graph.neighbors(k)
        offset = float(np.linalg.norm(p0[k - 1] - p_dagger[k - 1]))
        bound = min(float(np.linalg.norm(p_dagger[k - 1] - p_dagger[h - 1])) for h in nbrs)
        precondition = offset < bound
        t_on = record.activation_times.get(k)
        window = record.t >= t_on if t_on is not None else np.zeros_like(record.t, dtype=bool)
        min_active: Dict[str, Optional[float]] = {}
        min_run: Dict[str, float] = {}
        for h in nbrs:
            d = pair_distance_series(record.positions, k, h)
            min_run[str(h)] = float(d.min())
            min_active[str(h)] = float(d[window].min()) if window.any() else None
        realized = [v for v in min_active.values() if v is not None]
        if not precondition:
            status = "precondition unmet"
        elif realized and min(realized) <= EPS_DEG:
            status = "collision"
        else:
            status = "ok"
        followers.append({
            "follower": k,
            "neighbors": list(nbrs),
            "offset": offset,
            "bound": bound,
            "precondition": precondition,
            "activated_at": t_on,
            "min_distance_active": min_active,
            "min_distance_run": min_run,
            "status": status,
        })
    return {
        "activation": s.activation.kind,
        "epsilon": s.activation.epsilon,
        "followers": followers,
        "collision_free": all(f["status"] != "collision" for f in followers),
    }


def _segment_rate(t, series, window, label) -> Optional[RateEstimate]:
    try:
        return estimate_rate(t, series, window=window, label=label)
    except InsufficientData as e:
        logger.debug(f"Pas de taux ({label}) : {e}")
        return None


def run_maneuver(s: Scenario) -> ManeuverResult:
    """Intégrer une manœuvre et résumer chaque segment du planning."""
    if not s.mode.is_maneuver or not s.schedule:
        raise InvalidScenario("run_maneuver needs maneuver mode with a non-empty schedule")
    record = integrate(s)
    t = record.t
    p = record.positions
    e12 = p[:, 1] - p[:, 0]
    limit_err = record.limit_distance.max(axis=1)
    summaries = []
    for idx, seg in enumerate(s.schedule):
        if seg.t_start > t[-1] + TIME_TOL:
            logger.debug(f"Segment {idx + 1} hors de la durée simulée, ignoré")
            break
        delta = seg.ref.delta
        ff_err = np.linalg.norm(e12 - delta, axis=1)
        vel_err = np.linalg.norm(record.inputs[:, 2:] - seg.ref.velocity, axis=2).max(axis=1) \
            if s.n > 2 else np.zeros_like(t)
        in_seg = (t >= seg.t_start - TIME_TOL) & (t <= min(seg.t_end, t[-1]) + TIME_TOL)
        last_state = int(np.nonzero(in_seg)[0][-1])
        # entrées du dernier échantillon encore piloté par ce segment
        last_input = last_state if idx == len(s.schedule) - 1 else max(last_state - 1, 0)
        window = (seg.t_start, float(t[last_state]))
        summaries.append(SegmentSummary(
            index=idx + 1,
            segment=seg,
            terminal_first_follower_error=float(ff_err[last_state]),
            terminal_limit_error=float(limit_err[last_state]),
            terminal_shape_distance=float(record.shape_distance[last_state]),
            terminal_velocity_error=float(vel_err[last_input]),
            terminal_leader_distance=float(np.linalg.norm(e12[last_state])),
            first_follower_rate=_segment_rate(t, ff_err, window, f"segment {idx + 1} e12"),
            limit_rate=_segment_rate(t, limit_err, window, f"segment {idx + 1} limit"),
            velocity_rate=_segment_rate(t[:last_input + 1], vel_err[:last_input + 1],
                                        window, f"segment {idx + 1} velocity"),
        ))
        logger.info(f"Segment {idx + 1} : ||p2-p1-δ*|| final {ff_err[last_state]:.3e}, "
                    f"vitesse {vel_err[last_input]:.3e}")
    return ManeuverResult(record, tuple(summaries))


def build_scenario(p0, p_star, neighbors: Dict[int, List[int]], **kwargs) -> Scenario:
    """Raccourci : positions en listes, voisins en dict 1-based."""
    n = len(p_star)
    graph = SensingGraph.from_lists(n, neighbors)
    return Scenario(
        p0=as_configuration(p0),
        p_star=as_configuration(p_star),
        graph=graph,
        **kwargs,
    )

