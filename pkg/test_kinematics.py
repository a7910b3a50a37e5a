#!/usr/bin/env python3
"""
Tests for screw exponentials, product-of-exponentials FK, Jacobians and DLS IK.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from config import IkParams
from errors import ConfigMismatch
from kinematics import (JointConfig, KinematicChain, Twist, forward_kinematics, position_jacobian,
                        screw_exp, solve_ik)
from screw_model import ScrewJoint

Z = np.array([0.0, 0.0, 1.0])

angle = st.floats(min_value=-2 * math.pi, max_value=2 * math.pi, allow_nan=False)
coord = st.floats(min_value=-3.0, max_value=3.0, allow_nan=False)


def planar_two_link() -> KinematicChain:
    return KinematicChain(
        joints=[ScrewJoint(Z, np.zeros(3)), ScrewJoint(Z, np.array([1.0, 0.0, 0.0]))],
        parents=[-1, 0],
        marker_names=["ee"],
        marker_attach=[1],
        marker_home=np.array([[2.0, 0.0, 0.0]]),
    )


def random_twist(seed: int) -> Twist:
    rng = np.random.default_rng(seed)
    w = rng.standard_normal(3)
    w /= np.linalg.norm(w)
    return Twist.from_screw(ScrewJoint(w, rng.standard_normal(3)))


def test_rotation_about_offset_axis():
    T = screw_exp(Twist.from_screw(ScrewJoint(Z, np.array([1.0, 0.0, 0.0]))), math.pi)
    assert np.allclose(T @ [0.0, 0.0, 0.0, 1.0], [2.0, 0.0, 0.0, 1.0], atol=1e-12)


def test_zero_angle_is_identity():
    assert np.allclose(screw_exp(random_twist(3), 0.0), np.eye(4))


def test_twist_must_have_zero_pitch():
    with pytest.raises(ValueError):
        Twist(Z, np.array([0.0, 0.0, 1.0]))


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), angle, angle)
def test_one_parameter_subgroup(seed, a, b):
    t = random_twist(seed)
    assert np.allclose(screw_exp(t, a) @ screw_exp(t, b), screw_exp(t, a + b), atol=1e-9)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), angle)
def test_rotation_block_is_orthonormal(seed, theta):
    R = screw_exp(random_twist(seed), theta)[:3, :3]
    assert np.allclose(R.T @ R, np.eye(3), atol=1e-9)
    assert abs(np.linalg.det(R) - 1.0) < 1e-9


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), angle)
def test_axis_points_are_fixed(seed, theta):
    rng = np.random.default_rng(seed)
    w = rng.standard_normal(3)
    w /= np.linalg.norm(w)
    q = rng.standard_normal(3)
    T = screw_exp(Twist.from_screw(ScrewJoint(w, q)), theta)
    for p in (q, q + 0.7 * w):
        assert np.allclose(T[:3, :3] @ p + T[:3, 3], p, atol=1e-9)


def test_planar_two_link_fk():
    chain = planar_two_link()
    fk = forward_kinematics(chain, JointConfig(np.array([math.pi / 2, math.pi / 2]), np.tile([-4, 4], (2, 1))))
    assert np.allclose(fk.markers[0], [-1.0, 1.0, 0.0], atol=1e-9)
    fk = forward_kinematics(chain, JointConfig(np.array([math.pi / 2, 0.0]), np.tile([-4, 4], (2, 1))))
    assert np.allclose(fk.markers[0], [0.0, 2.0, 0.0], atol=1e-9)
    assert np.allclose(fk.joints[1], [0.0, 1.0, 0.0], atol=1e-9)


def test_fk_at_home_returns_home():
    chain = planar_two_link()
    fk = forward_kinematics(chain, JointConfig.zeros(2))
    assert np.allclose(fk.markers, chain.marker_home)
    assert np.allclose(fk.joints, [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])


def test_fk_rejects_wrong_angle_count():
    with pytest.raises(ConfigMismatch):
        forward_kinematics(planar_two_link(), JointConfig.zeros(3))


def test_parents_must_precede_children():
    with pytest.raises(ValueError):
        KinematicChain([ScrewJoint(Z, np.zeros(3))], parents=[0])


@settings(max_examples=50, deadline=None)
@given(st.tuples(coord, coord, coord))
def test_jacobian_matches_finite_differences(angles):
    rng = np.random.default_rng(7)
    joints = []
    for _ in range(3):
        w = rng.standard_normal(3)
        joints.append(ScrewJoint(w / np.linalg.norm(w), rng.standard_normal(3)))
    chain = KinematicChain(joints, [-1, 0, 1], ["tip", "mid"], [2, 0], rng.standard_normal((2, 3)))
    limits = np.tile([-10.0, 10.0], (3, 1))
    cfg = JointConfig(np.array(angles), limits)
    J = position_jacobian(chain, forward_kinematics(chain, cfg))
    h = 1e-6
    for i in range(3):
        plus, minus = np.array(angles), np.array(angles)
        plus[i] += h
        minus[i] -= h
        fd = (forward_kinematics(chain, JointConfig(plus, limits)).markers
              - forward_kinematics(chain, JointConfig(minus, limits)).markers).reshape(-1) / (2 * h)
        assert np.allclose(J[:, i], fd, atol=1e-6)


def test_ik_reaches_target():
    chain = planar_two_link()
    cfg0 = JointConfig(np.array([0.3, -0.3]), np.tile([-math.pi, math.pi], (2, 1)))
    result = solve_ik(chain, {"ee": np.array([1.0, 1.0, 0.0])}, cfg0, IkParams())
    assert result.converged
    assert result.residual < 1e-5
    fk = forward_kinematics(chain, result.config)
    assert np.allclose(fk.markers[0], [1.0, 1.0, 0.0], atol=1e-5)


def test_ik_out_of_reach_is_best_effort():
    chain = planar_two_link()
    result = solve_ik(chain, {"ee": np.array([3.0, 0.0, 0.0])}, JointConfig.zeros(2), IkParams())
    assert not result.converged
    assert abs(result.residual - 1.0) < 0.05


def test_ik_respects_joint_limits():
    chain = planar_two_link()
    cfg0 = JointConfig.zeros(2, limit=0.1)
    result = solve_ik(chain, {"ee": np.array([0.0, 2.0, 0.0])}, cfg0, IkParams())
    assert result.config.within_limits()
    assert np.all(np.abs(result.config.angles) <= 0.1 + 1e-12)


def test_ik_on_empty_chain():
    chain = KinematicChain([], [], ["root"], [-1], np.zeros((1, 3)))
    result = solve_ik(chain, {"root": np.array([0.0, 0.0, 1.0])}, JointConfig.zeros(0), IkParams())
    assert result.iterations == 0
    assert result.residual == pytest.approx(1.0)
