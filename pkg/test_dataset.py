#!/usr/bin/env python3
"""
Tests for folder curation, provenance and synthetic robot families.
"""

import json
import os

import numpy as np
import pytest

from dataset import (ARCHETYPES, asymmetry_warnings, curate, curate_folder, curate_record, right_half,
                     synthesize_robots, write_records)
from errors import CapacityExceeded
from records import load_record, record_to_dict
from screw_model import NECK, R_SHOULDER, SLOT_COUNT, SLOT_RANGES, Side, activate_decoded

ROBOTS_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "data", "robots")


def test_curate_sample_folder():
    result = curate_folder(ROBOTS_DIR)
    assert result.failures == {}
    assert result.names == ["bench_humanoid", "minimal_arm_torso", "pedestal_dual_arm"]
    assert result.matrix.shape == (3, 120)
    assert result.dh_matrix.shape == (3, 105)
    assert np.all(np.isfinite(result.matrix))


def test_missing_neck_is_padded_from_torso():
    robot = curate_folder(ROBOTS_DIR, verbose=False).robot("minimal_arm_torso")
    neck = list(SLOT_RANGES[NECK])
    assert all(i in robot.structure.padded_slots for i in neck)
    provenance = robot.provenance()
    assert provenance["fallbacks"]["neck0"] == "ancestor:torso"
    assert provenance["fallbacks"]["wrist0"] == "ancestor:R-elbow"
    assert provenance["n_joints"] == 7
    assert provenance["tcp_right"] == pytest.approx([0.0, -0.6, -0.4])
    # torso joint sits 0.05 above a base 0.2 below the shoulders
    assert np.allclose(robot.structure.q[0], [0.0, 0.0, 0.25])


def test_provenance_report_is_json_ready():
    result = curate_folder(ROBOTS_DIR, verbose=False)
    text = json.dumps(result.report())
    assert "minimal_arm_torso" in text


def test_failures_are_collected(tmp_path):
    record = synthesize_robots(1, seed=0, jitter=0.0)[0]
    data = record_to_dict(record)
    shoulder = next(j for j in data["joints"] if j["group"] == "shoulder" and j["side"] == "right")
    data["joints"].extend([dict(shoulder, parent=-1) for _ in range(3)])
    (tmp_path / "crowded.json").write_text(json.dumps(data))
    (tmp_path / "broken.json").write_text("{")
    (tmp_path / "notes.txt").write_text("skip me")
    write_records(synthesize_robots(2, seed=1), str(tmp_path))

    result = curate_folder(str(tmp_path), verbose=False)
    assert set(result.failures) == {"crowded.json", "broken.json"}
    assert "shoulder" in result.failures["crowded.json"]
    assert len(result.robots) == 2


def test_capacity_is_enforced():
    record = synthesize_robots(1, seed=0, jitter=0.0)[0]
    extra = [j for j in record.joints if j.group == R_SHOULDER][0]
    record.joints.extend([extra] * 3)
    with pytest.raises(CapacityExceeded):
        curate_record(record)


def test_thirty_synthetic_robots_curate():
    records = synthesize_robots(30, seed=0)
    result = curate(records)
    assert len(result.robots) == 30
    assert result.matrix.shape == (30, 120)
    norms = np.linalg.norm(result.matrix.reshape(30, SLOT_COUNT, 6)[:, :, :3], axis=2)
    assert np.all(np.isclose(norms, 1.0) | (norms == 0.0))


def test_active_joints_match_record():
    for record in synthesize_robots(9, seed=4):
        robot = curate_record(record)
        structure = activate_decoded(robot.vector, 0.5, robot.tcp_right)
        assert structure.n_joints == len(record.joints)
        assert robot.warnings == []


def test_zero_jitter_is_exact_archetype():
    a = synthesize_robots(3, seed=0, jitter=0.0)
    b = synthesize_robots(3, seed=99, jitter=0.0)
    assert [record_to_dict(r) for r in a] == [record_to_dict(r) for r in b]
    assert [r.name for r in a] == [f"{name}_{i:02d}" for i, name in enumerate(ARCHETYPES)]


def test_synthesis_is_seeded():
    a = synthesize_robots(4, seed=7)
    b = synthesize_robots(4, seed=7)
    c = synthesize_robots(4, seed=8)
    assert [record_to_dict(r) for r in a] == [record_to_dict(r) for r in b]
    assert [record_to_dict(r) for r in a] != [record_to_dict(r) for r in c]


def test_synthesis_needs_robots():
    with pytest.raises(ValueError):
        synthesize_robots(0)


def test_curation_is_order_independent():
    records = synthesize_robots(6, seed=2)
    forward = curate(records)
    backward = curate(list(reversed(records)))
    assert forward.names == backward.names
    assert np.array_equal(forward.matrix, backward.matrix)


def test_written_records_curate_identically(tmp_path):
    records = synthesize_robots(3, seed=5)
    paths = write_records(records, str(tmp_path))
    assert len(paths) == 3
    from_disk = curate_folder(str(tmp_path), verbose=False)
    assert np.allclose(from_disk.matrix, curate(records).matrix)


def test_asymmetry_is_reported():
    record = load_record(os.path.join(ROBOTS_DIR, "minimal_arm_torso.json"))
    assert asymmetry_warnings(record) == []
    left_elbow = record.joints[6]
    record.joints[6] = type(left_elbow)(left_elbow.group, left_elbow.axis, left_elbow.anchor + [0.0, 0.1, 0.0],
                                        left_elbow.parent)
    warnings = asymmetry_warnings(record)
    assert len(warnings) == 1
    assert warnings[0].startswith("elbow[0]")
    # right side is what gets encoded
    assert np.allclose(curate_record(record).vector, curate_record(load_record(
        os.path.join(ROBOTS_DIR, "minimal_arm_torso.json"))).vector)


def test_right_half_drops_left_side():
    record = synthesize_robots(1, seed=0, jitter=0.0)[0]
    half = right_half(record.joints)
    assert all(group.side is not Side.LEFT for group in half)
    assert sum(len(v) for v in half.values()) < len(record.joints)
