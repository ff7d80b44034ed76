"""Tests du simulateur : RK4, scénarios, activation séquentielle, manœuvre."""
import dataclasses
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from control import ControlMode, ManeuverReference, shape_control
from constraints import predicted_limit
from errors import InvalidScenario, StepTooLarge
from geometry import SimilarityTransform, apply_similarity
from reproduction import load_fixture, three_agent_scenario
from sim import (MAX_DT, Activation, ScheduleSegment, build_scenario, check_cascade_rates,
                 check_collision_bound, integrate, rk4_step, run_maneuver, scenario_violations,
                 validate_scenario)


def test_rk4_step_matches_fourth_order_taylor():
    h = 0.1
    got = rk4_step(lambda p: -p, np.array([1.0]), h)
    expected = 1 - h + h ** 2 / 2 - h ** 3 / 6 + h ** 4 / 24
    assert got[0] == pytest.approx(expected, abs=1e-15)
    assert abs(got[0] - math.exp(-h)) < 1e-7


def test_on_target_positions_stay_constant():
    record = integrate(load_fixture("on_target"))
    assert record.samples == 1001
    assert_allclose(record.positions, np.broadcast_to(record.positions[0], record.positions.shape),
                    atol=1e-12)
    assert_allclose(record.inputs, 0.0, atol=1e-12)
    assert record.angle_error.max() < 1e-12


def test_single_follower_decays_at_sin_squared():
    s = three_agent_scenario(60.0, dt=0.01, duration=10.0)
    record = integrate(s)
    d = record.limit_distance[:, 2]
    rate = math.sin(math.radians(60.0)) ** 2
    assert_allclose(d, d[0] * np.exp(-rate * record.t), rtol=1e-6)
    assert_allclose(record.positions[:, :2], np.broadcast_to(s.p0[:2], (record.samples, 2, 2)))


def test_integration_is_deterministic_and_read_only():
    s = load_fixture("shape").with_overrides(duration=2.0)
    a, b = integrate(s), integrate(s)
    assert np.array_equal(a.positions, b.positions)
    assert not a.positions.flags.writeable
    with pytest.raises(ValueError):
        a.positions[0, 0, 0] = 1.0


def test_inputs_are_the_sampled_control(target6):
    s = load_fixture("shape").with_overrides(duration=1.0)
    record = integrate(s)
    for k in range(1, 7):
        assert_allclose(record.inputs[0, k - 1], shape_control(k, s.p0, target6.acs), atol=1e-12)


def test_step_too_large():
    s = load_fixture("shape").with_overrides(dt=2 * MAX_DT)
    with pytest.raises(StepTooLarge):
        validate_scenario(s)
    with pytest.raises(StepTooLarge):
        integrate(s)


def test_duration_must_be_multiple_of_dt():
    s = load_fixture("shape").with_overrides(duration=0.015)
    assert any("multiple of dt" in v for v in scenario_violations(s))
    with pytest.raises(InvalidScenario):
        integrate(s)


def test_scenario_violations_collect_everything(p_star):
    s = build_scenario(np.zeros((6, 2)), p_star, {1: [], 2: [1, 3], 3: [1, 2], 4: [2, 3],
                                                  5: [1, 4], 6: [1, 4]}, dt=0.5)
    violations = scenario_violations(s)
    assert any("LFF structure" in v for v in violations)
    assert any("stability guard" in v for v in violations)


def test_shape_mode_rejects_schedule(p_star):
    seg = ScheduleSegment(0.0, 1.0, ManeuverReference((0.0, 0.0), (0.0, -0.7)))
    s = build_scenario(p_star, p_star, {2: [1], 3: [1, 2], 4: [2, 3], 5: [1, 4], 6: [1, 4]},
                       schedule=(seg,), duration=1.0)
    assert "schedule: shape mode requires an empty schedule" in scenario_violations(s)


def test_sequential_activation_only_in_shape_mode():
    s = load_fixture("maneuver")
    s2 = build_scenario(s.p0, s.p_star, dict(s.graph.out_neighbors), mode=s.mode,
                        schedule=s.schedule, duration=s.duration,
                        activation=Activation("sequential"))
    assert "sim: sequential activation is supported in shape mode only" in scenario_violations(s2)


def test_schedule_must_cover_duration():
    s = load_fixture("maneuver").with_overrides(duration=130.0)
    assert any("before duration" in v for v in scenario_violations(s))


def test_sequential_activation_and_collision_report():
    s = load_fixture("sequential")
    record = integrate(s)
    times = record.activation_times
    assert times[3] == 0.0
    assert times[4] is not None and times[4] > times[3]
    assert times[5] is not None and times[5] >= times[4]
    report = check_collision_bound(s, record)
    assert report["collision_free"]
    assert all(f["precondition"] for f in report["followers"])
    assert all(f["status"] == "ok" for f in report["followers"])
    for f in report["followers"]:
        for h in f["neighbors"]:
            assert f["min_distance_active"][str(h)] > 0.1 * f["bound"]


def test_cascade_rates_on_shape_fixture():
    s = load_fixture("shape")
    record = integrate(s)
    report = check_cascade_rates(record, s.target)
    assert set(report) == {3, 4, 5, 6}
    assert all(entry["status"] == "ok" for entry in report.values())
    assert record.angle_error[-1] < 1e-6


def test_maneuver_segments():
    result = run_maneuver(load_fixture("maneuver"))
    assert len(result.segments) == 3
    for seg in result.segments:
        assert seg.terminal_first_follower_error < 1e-8
        assert seg.terminal_velocity_error < 1e-4
        assert seg.first_follower_rate.rate == pytest.approx(1.0, rel=0.02)
    ratio = result.segments[2].terminal_leader_distance / result.segments[1].terminal_leader_distance
    assert ratio == pytest.approx(0.7, rel=1e-3)
    assert result.record.limit is None


def test_maneuver_requires_maneuver_mode():
    with pytest.raises(InvalidScenario):
        run_maneuver(load_fixture("shape"))


def test_segment_lookup():
    s = load_fixture("maneuver")
    assert s.segment_at(0.0).t_start == 0.0
    assert s.segment_at(49.999).t_start == 0.0
    assert s.segment_at(50.0).t_start == 50.0
    assert s.segment_at(120.0).t_start == 90.0
    assert s.mode == ControlMode("maneuver", "relative")


def test_trajectory_is_equivariant_under_similarity():
    """Départ et cible transformés par T : la trajectoire est l'image par T."""
    s = load_fixture("shape").with_overrides(duration=5.0)
    T = SimilarityTransform(1.7, 2.2, (3.0, -1.0))
    moved = dataclasses.replace(s, p0=apply_similarity(s.p0, T),
                                p_star=apply_similarity(s.p_star, T))
    a, b = integrate(s), integrate(moved)
    assert_allclose(b.positions, apply_similarity(a.positions, T), atol=1e-9)
    assert_allclose(b.angle_error, a.angle_error, atol=1e-9)


def test_still_maneuver_reproduces_shape_trajectory():
    """v*_r = 0 et δ* = p†₂ - p†₁ : même trajectoire et même équilibre qu'en mode forme."""
    s = load_fixture("shape").with_overrides(duration=20.0)
    lim = predicted_limit(s.p_star, s.p0[0], s.p0[1])
    delta = s.p0[1] - s.p0[0]
    assert_allclose(lim.p_dagger[1] - lim.p_dagger[0], delta, atol=1e-12)
    seg = ScheduleSegment(0.0, 20.0, ManeuverReference((0.0, 0.0), tuple(delta)))
    still = dataclasses.replace(s, mode=ControlMode("maneuver", "relative"), schedule=(seg,))
    shape, man = integrate(s), integrate(still)
    assert_allclose(man.positions, shape.positions, atol=1e-10)
    assert_allclose(man.p_dagger[-1], lim.p_dagger, atol=1e-10)


def test_distance_variant_converges_monotonically():
    """||e₁₂|| passe de 2 à ||δ*|| = 1 sans jamais remonter."""
    seg = ScheduleSegment(0.0, 10.0, ManeuverReference((0.0, 0.0), (1.0, 0.0)))
    s = build_scenario([(0.0, 0.0), (1.2, 1.6), (0.3, 0.8)], [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)],
                       {1: [], 2: [1], 3: [1, 2]}, mode=ControlMode("maneuver", "distance"),
                       schedule=(seg,), duration=10.0)
    record = integrate(s)
    norms = np.linalg.norm(record.positions[:, 1] - record.positions[:, 0], axis=1)
    assert norms[0] == pytest.approx(2.0)
    active = norms - 1.0 > 1e-10
    assert np.all(np.diff(norms)[active[:-1]] < 0.0)
    assert norms.min() >= 1.0 - 1e-12
    assert norms[-1] == pytest.approx(1.0, abs=1e-6)


def test_maneuver_fixture_with_distance_variant():
    s = load_fixture("maneuver")
    result = run_maneuver(dataclasses.replace(s, mode=ControlMode("maneuver", "distance")))
    assert len(result.segments) == 3
    for seg in result.segments:
        target = float(np.linalg.norm(seg.segment.ref.delta))
        assert seg.terminal_leader_distance == pytest.approx(target, rel=1e-3)
        assert seg.terminal_velocity_error < 1e-3


def test_maneuver_fixture_with_bearing_variant():
    """La loi de relèvement conserve ||e₁₂|| et aligne e₁₂ sur δ*."""
    s = load_fixture("maneuver")
    result = run_maneuver(dataclasses.replace(s, mode=ControlMode("maneuver", "bearing")))
    initial = float(np.linalg.norm(s.p0[1] - s.p0[0]))
    for seg in result.segments:
        assert seg.terminal_leader_distance == pytest.approx(initial, rel=1e-6)
        assert seg.terminal_shape_distance < 1e-6
    final = result.record.final
    e12 = (final[1] - final[0]) / np.linalg.norm(final[1] - final[0])
    b_star = s.schedule[-1].ref.delta / np.linalg.norm(s.schedule[-1].ref.delta)
    assert e12 @ b_star == pytest.approx(1.0, abs=1e-9)


def test_short_maneuver_summarizes_reached_segments_only():
    result = run_maneuver(load_fixture("maneuver").with_overrides(duration=10.0))
    assert len(result.segments) == 1
    assert result.segments[0].segment.t_end == 50.0
