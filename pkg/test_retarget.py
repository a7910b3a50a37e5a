#!/usr/bin/env python3
"""
Tests for similarity alignment, PA-MPJPE and the retargeting objective.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import least_squares
from scipy.spatial.transform import Rotation

from config import IkParams
from dataset import curate_record, synthesize_robots
from errors import DegenerateGeometry, MissingJoi
from kinematics import JointConfig, chain_from_structure, forward_kinematics
from motion_io import JOI_NAMES, MotionClip, extract_upper_body, synthesize_clip
from retarget import (MotionObjective, RetargetSpec, count_active_joints, evaluate_structure,
                      pa_mpjpe, pa_mpjpe_frames, procrustes_align, report_to_dict, retarget,
                      retarget_with_stats, robot_markers, total_objective)
from screw_model import NECK, R_ELBOW, R_SHOULDER, R_WRIST, SLOT_COUNT, SLOT_RANGES, activate_decoded

FAST = RetargetSpec(ik=IkParams(max_iters=30))


def clip(frames, names=None) -> MotionClip:
    frames = np.asarray(frames, dtype=float)
    return MotionClip(1.0 / 30.0, frames, names or [f"m{i}" for i in range(frames.shape[1])])


def wave_clip(n_frames: int = 6) -> MotionClip:
    return extract_upper_body(synthesize_clip("wave", n_frames=n_frames))


def sample_structure():
    robot = curate_record(synthesize_robots(1, seed=0, jitter=0.0)[0])
    return activate_decoded(robot.vector, 0.5, robot.tcp_right)


def similarity_cost(A, B, s, R, t) -> float:
    return float(np.sum((A - (s * (R @ B.T)).T - t) ** 2))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_similarity_copy_has_zero_error(seed):
    rng = np.random.default_rng(seed)
    frames = rng.standard_normal((4, 5, 3))
    R = Rotation.random(random_state=seed).as_matrix()
    s = rng.uniform(0.2, 5.0)
    t = rng.standard_normal(3)
    moved = np.einsum("ij,fkj->fki", s * R, frames) + t
    assert pa_mpjpe(clip(frames), clip(moved)) < 1e-9


def test_identical_clips():
    frames = np.random.default_rng(0).standard_normal((3, 4, 3))
    assert pa_mpjpe(clip(frames), clip(frames)) == pytest.approx(0.0, abs=1e-9)


def test_two_points_always_align():
    a = clip([[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]])
    b = clip([[[0.0, 0.0, 0.0], [0.0, 2.0, 0.0]]])
    assert pa_mpjpe(a, b) < 1e-9


def test_alignment_recovers_transform():
    rng = np.random.default_rng(4)
    B = rng.standard_normal((12, 3))
    R = Rotation.from_rotvec([0.3, -0.2, 0.9]).as_matrix()
    A = 1.7 * (R @ B.T).T + np.array([0.5, -1.0, 2.0])
    result = procrustes_align(A, B)
    assert result.scale == pytest.approx(1.7)
    assert np.allclose(result.rotation, R)
    assert np.allclose(result.translation, [0.5, -1.0, 2.0])
    assert np.allclose(result.aligned, A)


@pytest.mark.parametrize("seed", range(5))
def test_alignment_matches_least_squares_oracle(seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((10, 3))
    B = rng.standard_normal((10, 3))
    result = procrustes_align(A, B)
    ours = similarity_cost(A, B, result.scale, result.rotation, result.translation)

    def residual(x):
        R = Rotation.from_rotvec(x[1:4]).as_matrix()
        return (A - (np.exp(x[0]) * (R @ B.T)).T - x[4:]).reshape(-1)

    best = np.inf
    for start in range(8):
        x0 = np.concatenate([[0.0], Rotation.random(random_state=100 * seed + start).as_rotvec(), np.zeros(3)])
        fit = least_squares(residual, x0, xtol=1e-15, ftol=1e-15, gtol=1e-15)
        best = min(best, float(np.sum(fit.fun ** 2)))
    assert ours <= best + 1e-9
    assert abs(ours - best) < 1e-6


def test_reference_without_spread_is_degenerate():
    flat = np.zeros((2, 3, 3))
    with pytest.raises(DegenerateGeometry):
        pa_mpjpe(clip(flat), clip(np.random.default_rng(1).standard_normal((2, 3, 3))))


def test_collapsed_target_is_only_translated():
    A = np.random.default_rng(2).standard_normal((6, 3))
    B = np.ones((6, 3))
    result = procrustes_align(A, B)
    assert result.scale == 1.0
    assert np.array_equal(result.rotation, np.eye(3))
    assert np.allclose(result.aligned, A.mean(axis=0))


def test_mismatched_markers():
    a = clip(np.zeros((1, 2, 3)) + [[[0, 0, 0], [1, 0, 0]]], ["a", "b"])
    b = clip(np.zeros((1, 2, 3)) + [[[0, 0, 0], [1, 0, 0]]], ["a", "c"])
    with pytest.raises(MissingJoi):
        pa_mpjpe(a, b)


def test_per_frame_alignment_zero_for_per_frame_similarity():
    rng = np.random.default_rng(5)
    frames = rng.standard_normal((3, 5, 3))
    moved = np.stack([2.0 * f + i for i, f in enumerate(frames)])
    errors = pa_mpjpe_frames(clip(frames), clip(moved), per_frame_alignment=True)
    assert errors.shape == (3,)
    assert np.all(errors < 1e-9)
    # a single global transform cannot undo per-frame translations
    assert pa_mpjpe(clip(frames), clip(moved)) > 1e-3


def test_joint_count_doubles_arms():
    v = np.zeros((SLOT_COUNT, 6))
    v[0, :3] = v[1, :3] = [0.0, 0.0, 1.0]
    for slot in list(SLOT_RANGES[R_SHOULDER]) + [SLOT_RANGES[R_ELBOW][0]]:
        v[slot, :3] = [0.0, 1.0, 0.0]
    assert count_active_joints(activate_decoded(v.reshape(-1))) == 10


def test_markers_fall_back_to_ancestors():
    v = np.zeros((SLOT_COUNT, 6))
    v[0] = [0.0, 0.0, 1.0, 0.0, 0.0, 0.3]
    v[SLOT_RANGES[R_SHOULDER][0]] = [0.0, 1.0, 0.0, 0.0, -0.4, 1.0]
    structure = activate_decoded(v.reshape(-1))
    markers = robot_markers(structure)
    assert set(markers) == set(JOI_NAMES)
    assert markers["torso_root"][0] == -1
    # no neck: last torso joint
    assert markers["neck"][0] == 0
    assert markers["head"][0] == 0
    # no elbow or wrist: last shoulder joint of the same side
    assert markers["r_elbow"][0] == 1
    assert markers["r_wrist"][0] == 1
    assert markers["l_shoulder"][0] == 2
    assert np.allclose(markers["l_shoulder"][1], [0.0, 0.4, 1.0])


def test_wrist_marker_uses_tcp():
    v = np.zeros((SLOT_COUNT, 6))
    v[SLOT_RANGES[R_ELBOW][0]] = [0.0, 1.0, 0.0, 0.0, -0.4, 0.5]
    structure = activate_decoded(v.reshape(-1), tcp_right=np.array([0.0, -0.4, 0.1]))
    markers = robot_markers(structure)
    assert markers["r_wrist"][0] == 0
    assert np.allclose(markers["r_wrist"][1], [0.0, -0.4, 0.1])
    assert np.allclose(markers["l_wrist"][1], [0.0, 0.4, 0.1])


def test_markers_with_full_neck_and_wrist():
    v = np.zeros((SLOT_COUNT, 6))
    v[SLOT_RANGES[NECK][0]] = [0.0, 0.0, 1.0, 0.0, 0.0, 1.1]
    v[SLOT_RANGES[NECK][1]] = [0.0, 1.0, 0.0, 0.0, 0.0, 1.2]
    v[SLOT_RANGES[R_WRIST][0]] = [1.0, 0.0, 0.0, 0.0, -0.4, 0.2]
    structure = activate_decoded(v.reshape(-1))
    markers = robot_markers(structure)
    assert markers["neck"][0] == 0
    assert markers["head"][0] == 1
    assert markers["r_wrist"][0] == 2


def test_retarget_output_shape():
    structure = sample_structure()
    src = wave_clip(4)
    tar, unconverged = retarget_with_stats(structure, src, FAST)
    assert tar.joint_names == list(JOI_NAMES)
    assert tar.frames.shape == src.frames.shape
    assert np.all(np.isfinite(tar.frames))
    assert 0 <= unconverged <= src.n_frames
    # the base marker never moves
    assert np.allclose(tar.marker("torso_root"), 0.0)


def test_single_frame_clip():
    src = MotionClip(1.0 / 30.0, wave_clip(3).frames[:1], list(JOI_NAMES))
    tar = retarget(sample_structure(), src, FAST)
    assert tar.n_frames == 1


def test_retarget_requires_markers():
    src = wave_clip(2).subset(JOI_NAMES[:4])
    with pytest.raises(MissingJoi):
        retarget(sample_structure(), src, FAST)


def test_empty_structure_scores_only_error():
    empty = activate_decoded(np.zeros(SLOT_COUNT * 6))
    report = evaluate_structure(empty, {"wave": wave_clip(3)}, FAST)
    assert report.n_tot == 0
    assert report.total == pytest.approx(report.pa_mpjpe)
    assert report.pa_mpjpe > 0.0


def test_penalty_is_added_once_per_motion_set():
    structure = sample_structure()
    motions = {"a": wave_clip(3), "b": extract_upper_body(synthesize_clip("swim", n_frames=3))}
    report = total_objective(np.zeros(2), lambda z: structure, motions, lambda_joint=2.0, spec=FAST)
    assert report.n_tot == count_active_joints(structure)
    assert report.total == pytest.approx(sum(report.per_motion.values()) + 2.0 * report.n_tot)
    assert report.pa_mpjpe == pytest.approx(100.0 * report.pa_mpjpe_raw)
    assert set(report_to_dict(report)["per_frame"]) == {"a", "b"}


def test_lambda_must_be_non_negative():
    with pytest.raises(ValueError):
        total_objective(np.zeros(2), lambda z: sample_structure(), [wave_clip(2)], lambda_joint=-1.0, spec=FAST)


def test_motion_objective_keeps_last_report():
    structure = sample_structure()
    objective = MotionObjective(lambda z: structure, [wave_clip(2)], FAST)
    value = objective(np.zeros(2))
    assert objective.last_report is not None
    assert value == objective.last_report.total
    assert list(objective.last_report.per_motion) == ["motion0"]
    objective(np.ones(2))
    assert len(objective.reports) == 2
    assert objective.reports[-1] is objective.last_report


def own_motion(structure, n_frames: int, amplitude: float) -> MotionClip:
    """Marker trajectories produced by the structure's own forward kinematics"""
    markers = robot_markers(structure)
    chain = chain_from_structure(structure, {m: markers[m] for m in JOI_NAMES})
    limits = np.tile([-np.pi, np.pi], (chain.n_joints, 1))
    phase = np.arange(chain.n_joints)
    frames = [forward_kinematics(chain, JointConfig(amplitude * np.sin(0.5 * f + phase), limits)).markers
              for f in range(n_frames)]
    return MotionClip(1.0 / 30.0, np.stack(frames), list(chain.marker_names))


def test_static_pose_retargets_onto_itself():
    structure = sample_structure()
    src = own_motion(structure, 3, 0.0)
    assert pa_mpjpe(src, retarget(structure, src, FAST)) < 1e-9


def test_own_motion_retargets_with_small_error():
    structure = sample_structure()
    report = evaluate_structure(structure, {"own": own_motion(structure, 5, 0.1)}, RetargetSpec())
    # one percent of the shoulder-to-base distance
    assert report.pa_mpjpe < 1.0


def test_total_objective_is_bitwise_repeatable():
    robot = curate_record(synthesize_robots(1, seed=3, jitter=1.0)[0])

    def decode(z):
        return activate_decoded(robot.vector, 0.5, robot.tcp_right)

    motions = {"wave": wave_clip(4), "swim": extract_upper_body(synthesize_clip("swim", n_frames=4))}
    a = total_objective(np.zeros(2), decode, motions, spec=FAST)
    b = total_objective(np.zeros(2), decode, motions, spec=FAST)
    assert a.total == b.total
    assert a.pa_mpjpe_raw == b.pa_mpjpe_raw
    for name in motions:
        assert np.array_equal(a.per_frame[name], b.per_frame[name])
