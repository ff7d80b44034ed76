"""Tests des séries dérivées et de l'ajustement de taux."""
import numpy as np
import pytest
from numpy.testing import assert_allclose

from errors import DegenerateMeasurement, InsufficientData
from geometry import SimilarityTransform, apply_similarity, mirror
from telemetry import (RATE_FLOOR, angle_error, angle_error_series, estimate_rate,
                       measured_angles, min_neighbor_distance_series, pair_distance_series,
                       series_stats)


def test_angle_error_zero_on_target_and_similar(target6, p_star):
    assert angle_error(p_star, target6.acs) < 1e-12
    q = apply_similarity(p_star, SimilarityTransform(4.0, 2.5, (1.0, -3.0)))
    assert angle_error(q, target6.acs) < 1e-12


def test_angle_error_positive_off_target(target6, p_star):
    assert angle_error(mirror(p_star), target6.acs) > 0.1


def test_measured_angles_match_reference(target6, p_star):
    angles, degenerate = measured_angles(p_star, target6.acs)
    assert angles.shape == (4, 3)
    assert not degenerate.any()
    assert_allclose(angles, target6.acs.reference_angles(), atol=1e-12)


def test_angle_error_degenerate_configuration(target6, p_star):
    p = p_star.copy()
    p[2] = p[0]
    with pytest.raises(DegenerateMeasurement):
        angle_error(p, target6.acs)


def test_angle_error_series_counts_degenerate_samples(target6, p_star):
    bad = p_star.copy()
    bad[3] = bad[1]
    series, count = angle_error_series(np.stack([p_star, bad, p_star]), target6.acs)
    assert count == 1
    assert np.isnan(series[1])
    assert series[0] < 1e-12 and series[2] < 1e-12


def test_estimate_rate_pure_exponential():
    t = np.linspace(0.0, 40.0, 4001)
    est = estimate_rate(t, 2.0 * np.exp(-0.7 * t), label="pure")
    assert est.rate == pytest.approx(0.7, rel=1e-9)
    assert est.r_squared == pytest.approx(1.0)
    assert est.window[0] >= 0.99  # 0.5·initiale atteint à ln 2 / 0.7
    assert est.relative_error(0.7) < 1e-9


def test_estimate_rate_default_window_stops_at_floor():
    t = np.linspace(0.0, 60.0, 6001)
    est = estimate_rate(t, np.exp(-0.5 * t))
    assert est.window[1] <= -np.log(RATE_FLOOR) / 0.5 + 0.01


def test_estimate_rate_explicit_window():
    t = np.linspace(0.0, 10.0, 1001)
    s = np.where(t < 5.0, np.exp(-2.0 * t), np.exp(-10.0) * np.exp(-0.3 * (t - 5.0)))
    est = estimate_rate(t, s, window=(5.0, 10.0))
    assert est.rate == pytest.approx(0.3, rel=1e-6)


def test_estimate_rate_insufficient_data():
    t = np.linspace(0.0, 1.0, 11)
    with pytest.raises(InsufficientData):
        estimate_rate(t, np.ones_like(t))
    with pytest.raises(InsufficientData):
        estimate_rate(t, np.zeros_like(t), window=(0.0, 1.0))


def test_pair_and_neighbor_distances(target6, p_star):
    d = pair_distance_series(p_star[None], 1, 2)
    assert_allclose(d, [0.7])
    nearest = min_neighbor_distance_series(p_star[None], target6.formation_graph)
    assert_allclose(nearest, [0.7])


def test_series_stats_ignores_nan():
    stats = series_stats([1.0, np.nan, 0.25])
    assert stats == {"samples": 3, "initial": 1.0, "terminal": 0.25, "max": 1.0, "min": 0.25}
    assert series_stats([])["initial"] is None
