"""Tests des lois de commande (forme, repère local, manœuvre, premier suiveur)."""
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from control import (ControlMode, FrameOffsets, ManeuverReference, bearing_follower_control,
                     distance_follower_control, feedback_matrix, first_follower_control,
                     local_frame_control, maneuver_control, shape_control)
from errors import InvalidScenario
from geometry import rotation_matrix


def test_shape_control_vanishes_on_target(target6, p_star):
    for k in range(1, 7):
        assert_allclose(shape_control(k, p_star, target6.acs), 0.0, atol=1e-12)


def test_leaders_never_move(target6, rng):
    p = rng.uniform(-1, 1, size=(6, 2))
    assert_allclose(shape_control(1, p, target6.acs), 0.0)
    assert_allclose(shape_control(2, p, target6.acs), 0.0)


def test_feedback_matrix_matches_per_agent_law(target6, rng):
    K = feedback_matrix(target6.acs, 6, gain=1.5)
    p = rng.uniform(-1, 1, size=(6, 2))
    u = (K @ p.reshape(-1)).reshape(6, 2)
    for k in range(1, 7):
        assert_allclose(u[k - 1], shape_control(k, p, target6.acs, gain=1.5), atol=1e-12)


def test_feedback_matrix_diagonal_blocks(target6, p_star):
    """Blocs diagonaux -sin²(angle suiveur)·I ; p* est un équilibre."""
    K = feedback_matrix(target6.acs, 6)
    rates = target6.acs.follower_rates()
    for k in range(3, 7):
        block = K[2 * (k - 1):2 * k, 2 * (k - 1):2 * k]
        assert_allclose(block, -rates[k] * np.eye(2), atol=1e-12)
    assert_allclose(K[:4], 0.0)
    assert_allclose(K @ p_star.reshape(-1), 0.0, atol=1e-12)


def test_local_frame_law_is_rotation_equivariant(target6, rng):
    p = rng.uniform(-1, 1, size=(6, 2))
    frames = FrameOffsets(tuple(rng.uniform(0, 2 * math.pi, size=6)))
    for k in range(3, 7):
        _, tc = target6.acs.for_follower(k)
        i, j, _ = tc.triangle
        q = frames.rotation(k)
        local = [q @ (p[i - 1] - p[k - 1]), q @ (p[j - 1] - p[k - 1])]
        u_local = local_frame_control(k, local, target6.acs)
        assert_allclose(frames.to_global(k, u_local), shape_control(k, p, target6.acs), atol=1e-12)


def test_frame_offsets_round_trip():
    frames = FrameOffsets((0.3, 1.2))
    v = np.array([0.5, -2.0])
    assert_allclose(frames.to_global(2, frames.to_local(2, v)), v, atol=1e-15)
    assert_allclose(frames.rotation(1), rotation_matrix(0.3).T)


def test_maneuver_control_at_equilibrium(target6, p_star):
    ref = ManeuverReference((0.05, 0.0), tuple(p_star[1] - p_star[0]))
    for k in range(1, 7):
        assert_allclose(maneuver_control(k, p_star, ref, target6.acs), ref.velocity, atol=1e-12)


def test_maneuver_first_follower_relative_law(target6, p_star):
    ref = ManeuverReference((0.0, 0.02), (0.4, 0.4))
    u2 = maneuver_control(2, p_star, ref, target6.acs)
    e12 = p_star[1] - p_star[0]
    assert_allclose(u2, ref.velocity - (e12 - ref.delta))


def test_distance_variant_regulates_length_only():
    delta = np.array([0.4, 0.4])
    p1 = np.zeros(2)
    p2 = np.array([0.0, math.hypot(0.4, 0.4)])
    assert_allclose(distance_follower_control(p1, p2, delta), 0.0, atol=1e-15)
    u = distance_follower_control(p1, 2 * p2, delta)
    assert u[1] < 0.0


def test_bearing_variant_regulates_direction_only():
    delta = np.array([1.0, 0.0])
    p1 = np.zeros(2)
    assert_allclose(bearing_follower_control(p1, (3.0, 0.0), delta), 0.0, atol=1e-15)
    assert_allclose(bearing_follower_control(p1, (-3.0, 0.0), delta), 0.0, atol=1e-15)
    u = bearing_follower_control(p1, (0.0, 2.0), delta)
    assert_allclose(u, (1.0, 0.0), atol=1e-15)


def test_first_follower_dispatch():
    args = (np.zeros(2), np.array([1.0, 1.0]), np.array([0.5, 0.5]))
    assert_allclose(first_follower_control("relative", *args), (-0.5, -0.5))
    assert_allclose(first_follower_control("distance", *args), distance_follower_control(*args))
    assert_allclose(first_follower_control("bearing", *args), bearing_follower_control(*args))


def test_control_mode_validation():
    assert ControlMode().label() == "shape"
    assert ControlMode("maneuver", "bearing").label() == "maneuver/bearing"
    with pytest.raises(InvalidScenario):
        ControlMode("shape", "bearing")
    with pytest.raises(InvalidScenario):
        ControlMode("orbit")


def test_maneuver_reference_rejects_zero_delta():
    with pytest.raises(InvalidScenario):
        ManeuverReference((0.0, 0.0), (0.0, 0.0))


def test_bearing_variant_output_is_orthogonal_to_bearing(rng):
    for _ in range(100):
        p1, p2, delta = rng.uniform(-2, 2, size=(3, 2))
        if np.linalg.norm(p2 - p1) < 1e-3 or np.linalg.norm(delta) < 1e-3:
            continue
        u = bearing_follower_control(p1, p2, delta, gain=rng.uniform(0.5, 2.0))
        b12 = (p2 - p1) / np.linalg.norm(p2 - p1)
        assert abs(b12 @ u) < 1e-12
