"""
Screw-axis representation of humanoid upper bodies.

Each revolute joint is a screw axis (omega, q): a unit direction and a point on
the axis, both in the world frame of the A-pose. Only the torso, neck and the
right arm are stored (20 slots, 120 features); the left arm is recovered by
mirroring across the sagittal plane y = 0.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from errors import CapacityExceeded, DegenerateScale

UNIT_TOL = 1e-6
SCALE_EPS = 1e-9
MISSING_THRESHOLD = 1e-2


class GroupKind(Enum):
    TORSO = "torso"
    NECK = "neck"
    SHOULDER_GIRDLE = "shoulder_girdle"
    SHOULDER = "shoulder"
    UPPER_ARM = "upper_arm"
    ELBOW = "elbow"
    FOREARM = "forearm"
    WRIST = "wrist"
    TCP = "tcp"  # DH representation only


class Side(Enum):
    LEFT = "left"
    RIGHT = "right"


CENTRAL_KINDS = (GroupKind.TORSO, GroupKind.NECK)


@dataclass(frozen=True)
class JointGroup:
    kind: GroupKind
    side: Optional[Side] = None

    def __post_init__(self):
        if self.kind in CENTRAL_KINDS and self.side is not None:
            raise ValueError(f"{self.kind.value} carries no side")
        if self.kind not in CENTRAL_KINDS and self.side is None:
            raise ValueError(f"{self.kind.value} needs a side")

    @property
    def is_central(self) -> bool:
        return self.kind in CENTRAL_KINDS

    def mirrored(self) -> "JointGroup":
        if self.side is None:
            return self
        return JointGroup(self.kind, Side.LEFT if self.side is Side.RIGHT else Side.RIGHT)

    @property
    def label(self) -> str:
        if self.side is None:
            return self.kind.value
        return f"{self.side.value[0].upper()}-{self.kind.value}"


TORSO = JointGroup(GroupKind.TORSO)
NECK = JointGroup(GroupKind.NECK)
R_GIRDLE = JointGroup(GroupKind.SHOULDER_GIRDLE, Side.RIGHT)
R_SHOULDER = JointGroup(GroupKind.SHOULDER, Side.RIGHT)
R_UPPER_ARM = JointGroup(GroupKind.UPPER_ARM, Side.RIGHT)
R_ELBOW = JointGroup(GroupKind.ELBOW, Side.RIGHT)
R_FOREARM = JointGroup(GroupKind.FOREARM, Side.RIGHT)
R_WRIST = JointGroup(GroupKind.WRIST, Side.RIGHT)
R_TCP = JointGroup(GroupKind.TCP, Side.RIGHT)

# Right-half encoding; chain order within each group is base to distal.
SLOT_LAYOUT: List[Tuple[JointGroup, int]] = [
    (TORSO, 6),
    (NECK, 4),
    (R_GIRDLE, 1),
    (R_SHOULDER, 3),
    (R_UPPER_ARM, 1),
    (R_ELBOW, 1),
    (R_FOREARM, 1),
    (R_WRIST, 3),
]
ARM_GROUPS = [group for group, _ in SLOT_LAYOUT if not group.is_central]

SLOT_COUNT = sum(capacity for _, capacity in SLOT_LAYOUT)
FEATURE_DIM = 6 * SLOT_COUNT
COMPONENTS = ("wx", "wy", "wz", "qx", "qy", "qz")

# Nearest-ancestor order used when a whole group is absent; the base comes last.
ANCESTORS: Dict[JointGroup, List[JointGroup]] = {
    TORSO: [],
    NECK: [TORSO],
    R_GIRDLE: [TORSO],
    R_SHOULDER: [R_GIRDLE, TORSO],
    R_UPPER_ARM: [R_SHOULDER, R_GIRDLE, TORSO],
    R_ELBOW: [R_UPPER_ARM, R_SHOULDER, R_GIRDLE, TORSO],
    R_FOREARM: [R_ELBOW, R_UPPER_ARM, R_SHOULDER, R_GIRDLE, TORSO],
    R_WRIST: [R_FOREARM, R_ELBOW, R_UPPER_ARM, R_SHOULDER, R_GIRDLE, TORSO],
}


def slot_ranges(layout: Sequence[Tuple[JointGroup, int]] = SLOT_LAYOUT) -> Dict[JointGroup, range]:
    """Map each group to the slot indices it occupies"""
    ranges = {}
    start = 0
    for group, capacity in layout:
        ranges[group] = range(start, start + capacity)
        start += capacity
    return ranges


SLOT_RANGES = slot_ranges()
SLOT_GROUPS: List[JointGroup] = [group for group, capacity in SLOT_LAYOUT for _ in range(capacity)]


def slot_names(layout: Sequence[Tuple[JointGroup, int]] = SLOT_LAYOUT) -> List[str]:
    names = []
    for group, capacity in layout:
        base = group.kind.value.replace("_", "")
        names.extend(f"{base}{i}" for i in range(capacity))
    return names


def feature_columns() -> List[str]:
    return [f"{slot}_{comp}" for slot in slot_names() for comp in COMPONENTS]


@dataclass(frozen=True, eq=False)
class ScrewJoint:
    """One revolute joint: axis direction omega and anchor point q"""
    omega: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        omega = np.asarray(self.omega, dtype=float).reshape(3)
        q = np.asarray(self.q, dtype=float).reshape(3)
        norm = np.linalg.norm(omega)
        if norm != 0.0 and abs(norm - 1.0) > UNIT_TOL:
            raise ValueError(f"Axis norm {norm} is neither 0 nor 1")
        if not np.all(np.isfinite(q)):
            raise ValueError("Anchor position must be finite")
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "q", q)

    @property
    def is_placeholder(self) -> bool:
        return not np.any(self.omega)

    def mirrored(self) -> "ScrewJoint":
        flip = np.array([1.0, -1.0, 1.0])
        return ScrewJoint(self.omega * flip, self.q * flip)


class RawJoint(NamedTuple):
    """Axis/anchor pair as extracted, before missing-axis filtering"""
    axis: np.ndarray
    anchor: np.ndarray


@dataclass(frozen=True)
class WorldJoint:
    """A joint of a full-body record in world coordinates"""
    group: JointGroup
    axis: np.ndarray
    anchor: np.ndarray
    parent: int = -1


@dataclass(eq=False)
class UpperBodyStructure:
    """Right-half 20-slot layout; padded slots carry omega = 0"""
    omega: np.ndarray
    q: np.ndarray
    presence: np.ndarray
    fallbacks: List[str] = field(default_factory=lambda: [""] * SLOT_COUNT)

    def __post_init__(self):
        self.omega = np.asarray(self.omega, dtype=float).reshape(SLOT_COUNT, 3)
        self.q = np.asarray(self.q, dtype=float).reshape(SLOT_COUNT, 3)
        self.presence = np.asarray(self.presence, dtype=bool).reshape(SLOT_COUNT)

    @property
    def padded_slots(self) -> List[int]:
        return [i for i in range(SLOT_COUNT) if not self.presence[i]]


@dataclass(frozen=True)
class ActiveJoint:
    group: JointGroup
    slot: int
    joint: ScrewJoint


@dataclass
class FullBodyStructure:
    """Mirrored full upper body; `parents` indexes into `joints()`"""
    central: List[ActiveJoint] = field(default_factory=list)
    right: List[ActiveJoint] = field(default_factory=list)
    left: List[ActiveJoint] = field(default_factory=list)
    parents: List[int] = field(default_factory=list)
    tcp_right: Optional[np.ndarray] = None
    tcp_left: Optional[np.ndarray] = None

    def joints(self) -> List[ActiveJoint]:
        return self.central + self.right + self.left

    @property
    def n_joints(self) -> int:
        return len(self.central) + len(self.right) + len(self.left)


def _unit_or_none(axis, threshold: float) -> Optional[np.ndarray]:
    axis = np.asarray(axis, dtype=float).reshape(3)
    norm = np.linalg.norm(axis)
    if not np.isfinite(norm) or norm < threshold:
        return None
    return axis / norm


def pad_structure(partial: Dict[JointGroup, Sequence[RawJoint]],
                  base: Optional[np.ndarray] = None,
                  missing_threshold: float = MISSING_THRESHOLD) -> UpperBodyStructure:
    """
    Place per-group joints into the 20-slot layout and pad the rest.

    Joints whose axis norm is below `missing_threshold` count as missing.
    Padded slots get omega = 0 and the mean anchor of the present joints of the
    same group; a fully absent group inherits its nearest present ancestor's
    mean anchor, and finally the base position.
    """
    base = np.zeros(3) if base is None else np.asarray(base, dtype=float).reshape(3)
    omega = np.zeros((SLOT_COUNT, 3))
    q = np.zeros((SLOT_COUNT, 3))
    presence = np.zeros(SLOT_COUNT, dtype=bool)
    fallbacks = [""] * SLOT_COUNT

    unknown = [g for g in partial if g not in SLOT_RANGES]
    if unknown:
        raise ValueError(f"Groups outside the right-half layout: {[g.label for g in unknown]}")

    group_means: Dict[JointGroup, np.ndarray] = {}
    for group, capacity in SLOT_LAYOUT:
        joints = list(partial.get(group, []))
        if len(joints) > capacity:
            raise CapacityExceeded(group.label, len(joints), capacity)
        valid = []
        for joint in joints:
            unit = _unit_or_none(joint.axis, missing_threshold)
            if unit is not None:
                valid.append((unit, np.asarray(joint.anchor, dtype=float).reshape(3)))
        slots = SLOT_RANGES[group]
        for offset, (unit, anchor) in enumerate(valid):
            omega[slots[offset]] = unit
            q[slots[offset]] = anchor
            presence[slots[offset]] = True
        if valid:
            group_means[group] = np.mean([anchor for _, anchor in valid], axis=0)

    for group, _ in SLOT_LAYOUT:
        if group in group_means:
            fill, source = group_means[group], "group-mean"
        else:
            fill, source = base, "base"
            for ancestor in ANCESTORS[group]:
                if ancestor in group_means:
                    fill, source = group_means[ancestor], f"ancestor:{ancestor.label}"
                    break
        for i in SLOT_RANGES[group]:
            if not presence[i]:
                q[i] = fill
                fallbacks[i] = source

    return UpperBodyStructure(omega, q, presence, fallbacks)


def normalize_structure(raw: Sequence[WorldJoint], base_position, shoulder_positions,
                        missing_threshold: float = MISSING_THRESHOLD) -> UpperBodyStructure:
    """Center on the base, scale by the shoulder-to-base distance, keep the right half, pad"""
    base = np.asarray(base_position, dtype=float).reshape(3)
    shoulders = np.asarray(shoulder_positions, dtype=float).reshape(2, 3)
    scale = float(np.linalg.norm(shoulders.mean(axis=0) - base))
    if scale <= SCALE_EPS:
        raise DegenerateScale(scale)

    partial: Dict[JointGroup, List[RawJoint]] = {}
    for joint in raw:
        if joint.group.side is Side.LEFT:
            continue
        anchor = (np.asarray(joint.anchor, dtype=float) - base) / scale
        partial.setdefault(joint.group, []).append(RawJoint(np.asarray(joint.axis, dtype=float), anchor))
    return pad_structure(partial, base=np.zeros(3), missing_threshold=missing_threshold)


def mirror_right_to_left(right: Sequence[ScrewJoint]) -> List[ScrewJoint]:
    """Reflect through the sagittal plane: negate y of both omega and q"""
    return [joint.mirrored() for joint in right]


def flatten(structure: UpperBodyStructure) -> np.ndarray:
    return np.hstack([structure.omega, structure.q]).reshape(FEATURE_DIM)


def unflatten(vector, presence: Optional[Sequence[bool]] = None) -> UpperBodyStructure:
    """Inverse of flatten; presence defaults to 'axis is non-zero'"""
    v = np.asarray(vector, dtype=float).reshape(SLOT_COUNT, 6)
    omega, q = v[:, :3].copy(), v[:, 3:].copy()
    if presence is None:
        presence = np.any(omega != 0.0, axis=1)
    return UpperBodyStructure(omega, q, np.asarray(presence, dtype=bool))


def wire_parents(central: Sequence[ActiveJoint], right: Sequence[ActiveJoint],
                 left: Sequence[ActiveJoint]) -> List[int]:
    """
    Parent indices over central + right + left. Torso joints form a chain from
    the base; neck and both arm chains hang off the last active torso joint,
    or the base (-1) when no torso joint is active.
    """
    parents: List[int] = []
    last_torso = -1
    last_neck = None
    for index, active in enumerate(central):
        if active.group.kind is GroupKind.TORSO:
            parents.append(last_torso)
            last_torso = index
        else:
            parents.append(last_torso if last_neck is None else last_neck)
            last_neck = index

    offset = len(central)
    for chain in (right, left):
        previous = last_torso
        for index in range(len(chain)):
            parents.append(previous)
            previous = offset + index
        offset += len(chain)
    return parents


def activate_decoded(vector, epsilon: float = 0.5, tcp_right: Optional[np.ndarray] = None) -> FullBodyStructure:
    """
    Turn a (decoded) 120-vector into a mirrored full-body kinematic tree.

    A slot is active when its axis norm is >= epsilon (and non-zero); active
    axes are renormalized to unit length.
    """
    if epsilon < 0:
        raise ValueError(f"epsilon must be non-negative, got {epsilon}")
    v = np.asarray(vector, dtype=float).reshape(SLOT_COUNT, 6)
    central: List[ActiveJoint] = []
    right: List[ActiveJoint] = []
    for slot, group in enumerate(SLOT_GROUPS):
        omega = v[slot, :3]
        norm = float(np.linalg.norm(omega))
        if norm == 0.0 or norm < epsilon:
            continue
        active = ActiveJoint(group, slot, ScrewJoint(omega / norm, v[slot, 3:]))
        (central if group.is_central else right).append(active)

    left = [ActiveJoint(a.group.mirrored(), a.slot, a.joint.mirrored()) for a in right]
    tcp_left = None
    if tcp_right is not None:
        tcp_right = np.asarray(tcp_right, dtype=float).reshape(3)
        tcp_left = tcp_right * np.array([1.0, -1.0, 1.0])
    return FullBodyStructure(central, right, left, wire_parents(central, right, left), tcp_right, tcp_left)


def activity_mask(vector, epsilon: float = 0.5) -> np.ndarray:
    """Per-slot activity under the same rule as activate_decoded"""
    norms = np.linalg.norm(np.asarray(vector, dtype=float).reshape(SLOT_COUNT, 6)[:, :3], axis=1)
    return (norms > 0.0) & (norms >= epsilon)


def structure_to_dict(structure: FullBodyStructure) -> Dict:
    joints = []
    for index, active in enumerate(structure.joints()):
        joints.append({
            "group": active.group.kind.value,
            "side": active.group.side.value if active.group.side else None,
            "slot": active.slot,
            "parent": structure.parents[index],
            "omega": [float(x) for x in active.joint.omega],
            "q": [float(x) for x in active.joint.q],
        })
    out = {"n_joints": structure.n_joints, "joints": joints}
    if structure.tcp_right is not None:
        out["tcp_right"] = [float(x) for x in structure.tcp_right]
    return out
