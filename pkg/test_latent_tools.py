#!/usr/bin/env python3
"""
Tests for latent clustering, interpolation strips and their exports.
"""

import numpy as np
import pytest

from errors import KTooLarge
from latent_tools import (LatentMap, build_latent_map, decoded_mask, export_map, export_strip,
                          farthest_point_init, interpolate_strip, kmeans, load_map_csv, map_frame)
from manifold import AeModel
from screw_model import SLOT_COUNT


def blobs(seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return np.vstack([rng.normal([-5.0, 0.0], 0.1, (10, 2)), rng.normal([5.0, 0.0], 0.1, (10, 2))])


def test_two_blobs_are_separated():
    points = blobs()
    result = kmeans(points, k=2, seed=0)
    assert len(set(result.labels[:10])) == 1
    assert len(set(result.labels[10:])) == 1
    assert result.labels[0] != result.labels[10]
    centers = sorted(result.centroids[:, 0])
    assert centers[0] == pytest.approx(-5.0, abs=0.2)
    assert centers[1] == pytest.approx(5.0, abs=0.2)


def test_kmeans_is_deterministic():
    points = np.random.default_rng(3).standard_normal((30, 2))
    a = kmeans(points, k=4, seed=1)
    b = kmeans(points, k=4, seed=1)
    assert np.array_equal(a.labels, b.labels)
    assert np.array_equal(a.centroids, b.centroids)


def test_k_equal_to_point_count():
    points = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    result = kmeans(points, k=3)
    assert sorted(result.labels) == [0, 1, 2]
    assert result.inertia == pytest.approx(0.0)


def test_k_too_large():
    with pytest.raises(KTooLarge):
        kmeans(np.zeros((3, 2)), k=4)
    with pytest.raises(KTooLarge):
        kmeans(np.zeros((3, 2)), k=0)


def test_farthest_point_init_spreads_centers():
    centers = farthest_point_init(blobs(), 2, seed=0)
    assert abs(centers[0, 0] - centers[1, 0]) > 9.0


def test_latent_map_export_round_trip(tmp_path):
    model = AeModel(seed=0)
    data = np.random.default_rng(1).standard_normal((6, 120))
    names = [f"robot{i}" for i in range(6)]
    latent_map = build_latent_map(model, data, names, k=2)
    outputs = export_map(latent_map, str(tmp_path / "latent_map"))
    assert set(outputs) == {"csv", "svg"}
    assert (tmp_path / "latent_map.svg").read_text().lstrip().startswith("<?xml")
    again = load_map_csv(outputs["csv"])
    assert again.names == names
    assert np.allclose(again.coords, latent_map.coords)
    assert np.array_equal(again.labels, latent_map.labels)


def test_empty_map_frame():
    empty = LatentMap([], np.zeros((0, 2)), np.zeros(0, dtype=int), np.zeros((0, 2)))
    assert list(map_frame(empty).columns) == ["name", "z1", "z2", "cluster"]


def test_strip_endpoints_are_exact():
    model = AeModel(seed=4)
    strip = interpolate_strip(model, [-1.0, 0.5], [2.0, 0.25], n=5)
    assert np.array_equal(strip.points[0], [-1.0, 0.5])
    assert np.array_equal(strip.points[-1], [2.0, 0.25])
    assert np.allclose(strip.points[2], [0.5, 0.375])
    assert strip.vectors.shape == (5, 120)
    assert strip.masks.shape == (5, SLOT_COUNT)
    assert len(strip.structures) == 5


def test_strip_births_and_deaths_follow_masks():
    strip = interpolate_strip(AeModel(seed=6), [-10.0, -10.0], [10.0, 10.0], n=9)
    for i in range(1, 9):
        born = set(np.flatnonzero(strip.masks[i] & ~strip.masks[i - 1]))
        died = set(np.flatnonzero(strip.masks[i - 1] & ~strip.masks[i]))
        assert set(strip.births[i]) == born
        assert set(strip.deaths[i]) == died
    assert strip.births[0] == [] and strip.deaths[0] == []


def test_strip_needs_two_points():
    with pytest.raises(ValueError):
        interpolate_strip(AeModel(seed=0), [0.0, 0.0], [1.0, 1.0], n=1)


def test_strip_export(tmp_path):
    strip = interpolate_strip(AeModel(seed=4), [0.0, 0.0], [1.0, 1.0], n=3)
    outputs = export_strip(strip, str(tmp_path / "strip"))
    assert (tmp_path / "strip.csv").exists()
    assert (tmp_path / "strip.svg").exists()
    assert set(outputs) == {"csv", "svg"}


def test_dh_mask_width():
    assert decoded_mask(np.zeros(105), input_kind="dh").shape == (21,)
    assert not decoded_mask(np.zeros(105), input_kind="dh").any()
