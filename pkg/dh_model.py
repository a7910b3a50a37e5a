"""
Denavit-Hartenberg baseline representation with an axis offset tau.

Each slot holds (theta, d, a, alpha, tau). The transform from the parent frame
is Rot_z(theta) Trans_z(d) Trans_x(a) Rot_x(alpha) followed by Trans_z(tau)
along the joint's own axis, so every joint frame has its origin on the joint
anchor and its z-axis along the joint axis. Absent slots are all-zero
(identity), which keeps the wiring fixed: torso chain from the base, neck and
arm hanging off the last torso slot, right TCP after the last wrist slot.
"""

import math
from dataclasses import dataclass
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from errors import DegenerateScale
from screw_model import (ActiveJoint, FullBodyStructure, JointGroup, RawJoint, ScrewJoint,
                         SLOT_LAYOUT, TORSO, NECK, R_TCP, MISSING_THRESHOLD, SCALE_EPS,
                         slot_names, slot_ranges, wire_parents)

PARAMS = ("theta", "d", "a", "alpha", "tau")
DH_LAYOUT: List[Tuple[JointGroup, int]] = SLOT_LAYOUT + [(R_TCP, 1)]
DH_SLOT_COUNT = sum(c for _, c in DH_LAYOUT)
DH_FEATURE_DIM = 5 * DH_SLOT_COUNT
DH_RANGES = slot_ranges(DH_LAYOUT)
DH_GROUPS: List[JointGroup] = [g for g, c in DH_LAYOUT for _ in range(c)]
TCP_SLOT = DH_RANGES[R_TCP][0]
GEOM_EPS = 1e-9


def _dh_parents() -> List[int]:
    last_torso = DH_RANGES[TORSO][-1]
    chain_starts = {DH_RANGES[NECK][0], DH_RANGES[SLOT_LAYOUT[2][0]][0]}
    return [last_torso if slot in chain_starts else slot - 1 for slot in range(DH_SLOT_COUNT)]


DH_PARENTS = _dh_parents()


def dh_columns() -> List[str]:
    names = slot_names(DH_LAYOUT)
    return [f"{slot}_{p}" for slot in names for p in PARAMS]


@dataclass(frozen=True)
class DhJoint:
    theta: float = 0.0
    d: float = 0.0
    a: float = 0.0
    alpha: float = 0.0
    tau: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in self.as_array()):
            raise ValueError("DH parameters must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.theta, self.d, self.a, self.alpha, self.tau], dtype=float)


@dataclass(eq=False)
class DhChainHalf:
    params: np.ndarray    # (21, 5)
    presence: np.ndarray  # (21,)

    def __post_init__(self):
        self.params = np.asarray(self.params, dtype=float).reshape(DH_SLOT_COUNT, 5)
        self.presence = np.asarray(self.presence, dtype=bool).reshape(DH_SLOT_COUNT)

    @classmethod
    def empty(cls) -> "DhChainHalf":
        return cls(np.zeros((DH_SLOT_COUNT, 5)), np.zeros(DH_SLOT_COUNT, dtype=bool))


def dh_flatten(half: DhChainHalf) -> np.ndarray:
    return half.params.reshape(DH_FEATURE_DIM).copy()


def dh_unflatten(vector, presence: Optional[Sequence[bool]] = None,
                 activity_tolerance: float = MISSING_THRESHOLD) -> DhChainHalf:
    """Presence defaults to the activity rule: slot parameter norm >= tolerance"""
    params = np.asarray(vector, dtype=float).reshape(DH_SLOT_COUNT, 5).copy()
    if presence is None:
        presence = np.linalg.norm(params, axis=1) >= activity_tolerance
    return DhChainHalf(params, presence)


def dh_transform(j: DhJoint) -> np.ndarray:
    ct, st = math.cos(j.theta), math.sin(j.theta)
    ca, sa = math.cos(j.alpha), math.sin(j.alpha)
    T = np.array([
        [ct, -st * ca, st * sa, j.a * ct],
        [st, ct * ca, -ct * sa, j.a * st],
        [0.0, sa, ca, j.d],
        [0.0, 0.0, 0.0, 1.0],
    ])
    # tau: translate along the resulting frame's own z-axis
    T[:3, 3] += j.tau * T[:3, 2]
    return T


def dh_mirror(half: DhChainHalf) -> DhChainHalf:
    params = half.params.copy()
    params[:, 0] = -params[:, 0]
    params[:, 3] = -params[:, 3]
    return DhChainHalf(params, half.presence.copy())


def dh_clamp(half: DhChainHalf, threshold: float = 0.01) -> DhChainHalf:
    params = half.params.copy()
    for column in (1, 2):
        params[np.abs(params[:, column]) <= threshold, column] = 0.0
    return DhChainHalf(params, half.presence.copy())


def _base_children(presence: np.ndarray, parents: Sequence[int] = DH_PARENTS) -> List[int]:
    """Present slots whose nearest present ancestor is the base frame"""
    out = []
    for slot in range(len(presence)):
        if not presence[slot]:
            continue
        node = parents[slot]
        while node >= 0 and not presence[node]:
            node = parents[node]
        if node < 0:
            out.append(slot)
    return out


def dh_normalize(half: DhChainHalf, ref_height: float, base_z: float = 0.0) -> DhChainHalf:
    """
    Scale d, a and tau by the shoulder-to-base distance. The d of the joints
    that leave the base frame (normally the first torso joint) is rebased by
    the base link's world height.
    """
    if ref_height <= SCALE_EPS:
        raise DegenerateScale(ref_height)
    params = half.params.copy()
    params[:, [1, 2, 4]] /= ref_height
    if base_z:
        for slot in _base_children(half.presence):
            params[slot, 1] -= base_z / ref_height
    return DhChainHalf(params, half.presence.copy())


def dh_frames(half: DhChainHalf, parents: Sequence[int] = DH_PARENTS,
              base_frame: Optional[np.ndarray] = None) -> np.ndarray:
    """World frame of every slot, composed along the chain from the base"""
    base = np.eye(4) if base_frame is None else base_frame
    frames = np.empty((DH_SLOT_COUNT, 4, 4))
    for slot, row in enumerate(half.params):
        parent = base if parents[slot] < 0 else frames[parents[slot]]
        frames[slot] = parent @ dh_transform(DhJoint(*row))
    return frames


class DhAnchors(NamedTuple):
    slots: List[int]
    anchors: np.ndarray  # (k, 3)
    axes: np.ndarray     # (k, 3)
    tcp: Optional[np.ndarray]


def dh_world_anchors(half: DhChainHalf, parents: Sequence[int] = DH_PARENTS) -> DhAnchors:
    frames = dh_frames(half, parents)
    slots = [s for s in range(DH_SLOT_COUNT) if half.presence[s] and s != TCP_SLOT]
    anchors = np.array([frames[s][:3, 3] for s in slots]).reshape(-1, 3)
    axes = np.array([frames[s][:3, 2] for s in slots]).reshape(-1, 3)
    tcp = frames[TCP_SLOT][:3, 3].copy() if half.presence[TCP_SLOT] else None
    return DhAnchors(slots, anchors, axes, tcp)


def _joint_params(frame: np.ndarray, axis: np.ndarray, anchor: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    DH parameters of the line (anchor, axis) relative to `frame`, and the new
    frame. Parallel axes take the common normal through the child anchor;
    intersecting axes give a = 0.
    """
    o, x_p, z = frame[:3, 3], frame[:3, 0], frame[:3, 2]
    w = axis / np.linalg.norm(axis)
    cross = np.cross(z, w)
    s = np.linalg.norm(cross)
    if s > GEOM_EPS:
        r = o - anchor
        b, d1, e = z @ w, z @ r, w @ r
        t_p = (b * e - d1) / (1.0 - b * b)
        t_c = e + b * t_p
        P, Q = o + t_p * z, anchor + t_c * w
        n = Q - P
        a = np.linalg.norm(n)
        x = n / a if a > GEOM_EPS else cross / s
    else:
        t_p = (anchor - o) @ z
        P, Q = o + t_p * z, anchor
        n = Q - P
        a = np.linalg.norm(n)
        x = n / a if a > GEOM_EPS else x_p
    if a <= GEOM_EPS:
        a = 0.0
    theta = math.atan2(np.cross(x_p, x) @ z, x_p @ x)
    alpha = math.atan2(np.cross(z, w) @ x, z @ w)
    tau = (anchor - Q) @ w
    new = np.eye(4)
    new[:3, 0], new[:3, 1], new[:3, 2], new[:3, 3] = x, np.cross(w, x), w, anchor
    return np.array([theta, t_p, a, alpha, tau]), new


def _point_params(frame: np.ndarray, point: np.ndarray) -> np.ndarray:
    local = frame[:3, :3].T @ (point - frame[:3, 3])
    radial = math.hypot(local[0], local[1])
    theta = math.atan2(local[1], local[0]) if radial > GEOM_EPS else 0.0
    return np.array([theta, local[2], radial, 0.0, 0.0])


def extract_dh(partial: Dict[JointGroup, Sequence[RawJoint]], base_position,
               tcp: Optional[np.ndarray] = None,
               missing_threshold: float = MISSING_THRESHOLD) -> DhChainHalf:
    """
    Compute DH+tau parameters from consecutive world-frame joint axes.

    The base frame sits at the world point directly below the base link with
    world-aligned axes, so dh_normalize's rebase by the base height is exact.
    """
    base_position = np.asarray(base_position, dtype=float).reshape(3)
    params = np.zeros((DH_SLOT_COUNT, 5))
    presence = np.zeros(DH_SLOT_COUNT, dtype=bool)
    placed: Dict[int, RawJoint] = {}
    for group, capacity in SLOT_LAYOUT:
        joints = [j for j in partial.get(group, [])
                  if np.linalg.norm(np.asarray(j.axis, dtype=float)) >= missing_threshold]
        for offset, joint in enumerate(joints[:capacity]):
            placed[DH_RANGES[group][offset]] = joint

    base = np.eye(4)
    base[:3, 3] = [base_position[0], base_position[1], 0.0]
    frames = np.empty((DH_SLOT_COUNT, 4, 4))
    for slot in range(DH_SLOT_COUNT):
        parent = base if DH_PARENTS[slot] < 0 else frames[DH_PARENTS[slot]]
        if slot in placed:
            joint = placed[slot]
            params[slot], frames[slot] = _joint_params(parent, np.asarray(joint.axis, dtype=float),
                                                       np.asarray(joint.anchor, dtype=float))
            presence[slot] = True
        elif slot == TCP_SLOT and tcp is not None:
            params[slot] = _point_params(parent, np.asarray(tcp, dtype=float))
            frames[slot] = parent @ dh_transform(DhJoint(*params[slot]))
            presence[slot] = True
        else:
            frames[slot] = parent
    return DhChainHalf(params, presence)


def dh_to_structure(vector, clamp_threshold: float = 0.01,
                    activity_tolerance: float = MISSING_THRESHOLD) -> FullBodyStructure:
    """
    Clamp and chain a (decoded) 105-vector into the mirrored full-body tree.
    The left arm is chained from the mirrored parameters (theta and alpha negated).
    """
    half = dh_clamp(dh_unflatten(vector, activity_tolerance=activity_tolerance), clamp_threshold)
    anchors = dh_world_anchors(half)
    mirrored = dh_world_anchors(dh_mirror(half))
    central: List[ActiveJoint] = []
    right: List[ActiveJoint] = []
    left: List[ActiveJoint] = []
    for slot, q, w, q_left, w_left in zip(anchors.slots, anchors.anchors, anchors.axes,
                                          mirrored.anchors, mirrored.axes):
        group = DH_GROUPS[slot]
        active = ActiveJoint(group, slot, ScrewJoint(w / np.linalg.norm(w), q))
        if group.is_central:
            central.append(active)
            continue
        right.append(active)
        left.append(ActiveJoint(group.mirrored(), slot, ScrewJoint(w_left / np.linalg.norm(w_left), q_left)))
    return FullBodyStructure(central, right, left, wire_parents(central, right, left), anchors.tcp, mirrored.tcp)
