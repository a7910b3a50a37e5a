"""
Dataset ingestion and synthesis.

Curated robot records are scanned from a folder, normalized into the 120-dim
screw layout (and the 105-dim DH layout), and summarized in a provenance
report. Synthetic robot families stand in for proprietary assets.
"""

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from config import DhConfig, ScrewConfig
from dh_model import dh_clamp, dh_flatten, dh_normalize, extract_dh
from errors import PipelineError
from records import SUPPORTED_EXTENSIONS, RobotRecord, load_record, save_record
from screw_model import (GroupKind, JointGroup, RawJoint, Side, UpperBodyStructure, WorldJoint,
                         flatten, normalize_structure, slot_names)

MIRROR = np.array([1.0, -1.0, 1.0])


@dataclass
class CuratedRobot:
    name: str
    robot_type: str
    vector: np.ndarray        # 120
    dh_vector: np.ndarray     # 105
    structure: UpperBodyStructure
    tcp_right: Optional[np.ndarray] = None
    n_joints: int = 0
    warnings: List[str] = field(default_factory=list)

    def provenance(self) -> Dict:
        names = slot_names()
        return {
            "type": self.robot_type,
            "n_joints": self.n_joints,
            "padded_slots": [names[i] for i in self.structure.padded_slots],
            "fallbacks": {names[i]: self.structure.fallbacks[i] for i in self.structure.padded_slots},
            "tcp_right": None if self.tcp_right is None else [float(v) for v in self.tcp_right],
            "warnings": list(self.warnings),
        }


@dataclass
class CurationResult:
    robots: List[CuratedRobot] = field(default_factory=list)
    failures: Dict[str, str] = field(default_factory=dict)

    @property
    def names(self) -> List[str]:
        return [r.name for r in self.robots]

    @property
    def matrix(self) -> np.ndarray:
        return np.array([r.vector for r in self.robots]).reshape(len(self.robots), -1)

    @property
    def dh_matrix(self) -> np.ndarray:
        return np.array([r.dh_vector for r in self.robots]).reshape(len(self.robots), -1)

    def report(self) -> Dict:
        return {
            "robots": {r.name: r.provenance() for r in self.robots},
            "failures": dict(self.failures),
        }

    def robot(self, name: str) -> CuratedRobot:
        for r in self.robots:
            if r.name == name:
                return r
        raise KeyError(f"No curated robot named {name!r}")


def right_half(joints: Sequence[WorldJoint]) -> Dict[JointGroup, List[RawJoint]]:
    partial: Dict[JointGroup, List[RawJoint]] = {}
    for joint in joints:
        if joint.group.side is Side.LEFT:
            continue
        partial.setdefault(joint.group, []).append(RawJoint(np.asarray(joint.axis, dtype=float),
                                                            np.asarray(joint.anchor, dtype=float)))
    return partial


def asymmetry_warnings(record: RobotRecord, tolerance: float = 0.05) -> List[str]:
    """Left/right differences beyond `tolerance` (relative to the shoulder-to-base distance)"""
    scale = record.shoulder_to_base
    sides: Dict[Tuple[GroupKind, Side], List[WorldJoint]] = {}
    for joint in record.joints:
        if joint.group.side is not None:
            sides.setdefault((joint.group.kind, joint.group.side), []).append(joint)

    warnings = []
    kinds = sorted({kind for kind, _ in sides}, key=lambda k: list(GroupKind).index(k))
    for kind in kinds:
        right = sides.get((kind, Side.RIGHT), [])
        left = sides.get((kind, Side.LEFT), [])
        if len(right) != len(left):
            warnings.append(f"{kind.value}: {len(right)} right vs {len(left)} left joints")
            continue
        for i, (r, l) in enumerate(zip(right, left)):
            gap = np.linalg.norm(np.asarray(r.anchor) * MIRROR - np.asarray(l.anchor)) / max(scale, 1e-12)
            axis = np.asarray(r.axis) * MIRROR
            turn = min(np.linalg.norm(axis - l.axis), np.linalg.norm(axis + l.axis))
            if gap > tolerance or turn > tolerance:
                warnings.append(f"{kind.value}[{i}]: mirrored anchor off by {gap:.3f}, axis by {turn:.3f}")
    return warnings


def curate_record(record: RobotRecord, screw: ScrewConfig = ScrewConfig(),
                  dh: DhConfig = DhConfig()) -> CuratedRobot:
    """center, scale, classify, pad, discard the left side, flatten; plus the DH encoding"""
    structure = normalize_structure(record.joints, record.base_position, record.shoulder_positions,
                                    screw.missing_threshold)
    scale = record.shoulder_to_base
    tcp_world = record.tcp_world.get(Side.RIGHT)
    tcp = None if tcp_world is None else (tcp_world - record.base_position) / scale

    half = extract_dh(right_half(record.joints), record.base_position, tcp_world, screw.missing_threshold)
    half = dh_clamp(dh_normalize(half, scale, base_z=float(record.base_position[2])), dh.clamp_threshold)

    warnings = asymmetry_warnings(record, screw.asymmetry_tolerance)
    for warning in warnings:
        print(f"⚠️  {record.name}: asymmetric source, right side kept ({warning})")
    return CuratedRobot(record.name, record.robot_type, flatten(structure), dh_flatten(half),
                        structure, tcp, len(record.joints), warnings)


def curate(records: Sequence[RobotRecord], screw: ScrewConfig = ScrewConfig(),
           dh: DhConfig = DhConfig()) -> CurationResult:
    """Curate every record; any failure is raised. Output is ordered by robot name."""
    robots = [curate_record(r, screw, dh) for r in records]
    return CurationResult(sorted(robots, key=lambda r: r.name))


def scan_records_folder(records_dir: str) -> List[Tuple[str, str]]:
    """(file_path, filename) for every supported record file, sorted by name"""
    files_found: List[Tuple[str, str]] = []
    if not os.path.exists(records_dir):
        print(f"❌ Records folder not found: {records_dir}")
        return files_found

    print(f"🔍 Scanning records folder: {records_dir}")
    for filename in sorted(os.listdir(records_dir)):
        file_path = os.path.join(records_dir, filename)
        if os.path.isdir(file_path) or filename.startswith("."):
            continue
        if Path(filename).suffix.lower() in SUPPORTED_EXTENSIONS:
            files_found.append((file_path, filename))
            print(f"  📄 Found: {filename}")
        else:
            print(f"  ⚠️  Skipping unsupported file: {filename}")
    return files_found


def curate_folder(records_dir: str, screw: ScrewConfig = ScrewConfig(), dh: DhConfig = DhConfig(),
                  verbose: bool = True) -> CurationResult:
    """Curate a folder, collecting per-file failures instead of stopping at the first one"""
    robots: List[CuratedRobot] = []
    failures: Dict[str, str] = {}
    for file_path, filename in scan_records_folder(records_dir):
        try:
            record = load_record(file_path)
            robot = curate_record(record, screw, dh)
            robots.append(robot)
            if verbose:
                print(f"  ✅ {robot.name}: {robot.n_joints} joints, "
                      f"{len(robot.structure.padded_slots)} padded slots")
        except PipelineError as e:
            failures[filename] = str(e)
            print(f"  ❌ {filename}: {e}")
    return CurationResult(sorted(robots, key=lambda r: r.name), failures)


ARCHETYPES: Dict[str, Dict] = {
    "tall_humanoid": {
        "type": "humanoid", "base_z": 0.95, "torso_height": 0.45, "half_width": 0.20,
        "neck_height": 0.12, "upper_arm": 0.30, "forearm": 0.27, "hand": 0.10, "abduction": 0.35,
        "torso": ["z", "y"], "neck": ["z", "y"], "girdle": [],
        "shoulder": ["y", "x", "z"], "upper_arm_roll": False, "elbow": True,
        "forearm_roll": True, "wrist": ["y", "x"],
    },
    "dual_arm_pedestal": {
        "type": "non-bipedal", "base_z": 0.60, "torso_height": 0.40, "half_width": 0.26,
        "neck_height": 0.10, "upper_arm": 0.32, "forearm": 0.30, "hand": 0.12, "abduction": 0.25,
        "torso": ["z"], "neck": [], "girdle": ["x"],
        "shoulder": ["y", "x"], "upper_arm_roll": True, "elbow": True,
        "forearm_roll": True, "wrist": ["y", "x", "u"],
    },
    "compact_humanoid": {
        "type": "humanoid", "base_z": 0.45, "torso_height": 0.22, "half_width": 0.11,
        "neck_height": 0.06, "upper_arm": 0.14, "forearm": 0.13, "hand": 0.05, "abduction": 0.45,
        "torso": ["z"], "neck": ["z"], "girdle": [],
        "shoulder": ["y", "x"], "upper_arm_roll": False, "elbow": True,
        "forearm_roll": False, "wrist": ["u"],
    },
}
OPTIONAL_LISTS = ("torso", "neck", "wrist")


def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def _rotate_small(axis: np.ndarray, rng: np.random.Generator, magnitude: float) -> np.ndarray:
    if magnitude <= 0.0:
        return axis
    return _unit(axis + magnitude * rng.standard_normal(3))


def _archetype_record(name: str, archetype: Dict, rng: np.random.Generator, jitter: float) -> RobotRecord:
    def scaled(value: float) -> float:
        return value * (1.0 + 0.1 * jitter * rng.standard_normal()) if jitter > 0 else value

    archetype = dict(archetype)
    if jitter > 0:
        for key in OPTIONAL_LISTS:
            axes = list(archetype[key])
            if len(axes) > 1 and rng.random() < 0.3 * jitter:
                axes.pop()
            archetype[key] = axes

    base = np.array([0.0, 0.0, scaled(archetype["base_z"])])
    shoulder_z = base[2] + scaled(archetype["torso_height"])
    width = scaled(archetype["half_width"])
    abduction = archetype["abduction"] + (0.05 * jitter * rng.standard_normal() if jitter > 0 else 0.0)
    down = _unit([0.0, -np.sin(abduction), -np.cos(abduction)])
    elbow_axis = _unit(np.cross(down, [1.0, 0.0, 0.0]))
    named_axes = {"x": np.array([1.0, 0.0, 0.0]), "y": np.array([0.0, 1.0, 0.0]),
                  "z": np.array([0.0, 0.0, 1.0]), "u": down}
    tilt = 0.02 * jitter

    joints: List[WorldJoint] = []

    def add(group: JointGroup, axis, anchor, parent: int) -> int:
        joints.append(WorldJoint(group, _rotate_small(_unit(axis), rng, tilt), np.asarray(anchor, dtype=float), parent))
        return len(joints) - 1

    last = -1
    torso_step = (shoulder_z - base[2]) / (len(archetype["torso"]) + 1)
    for i, a in enumerate(archetype["torso"]):
        last = add(JointGroup(GroupKind.TORSO), named_axes[a], base + [0.0, 0.0, torso_step * (i + 0.5)], last)
    torso_end = last

    previous = torso_end
    for i, a in enumerate(archetype["neck"]):
        anchor = [0.0, 0.0, shoulder_z + scaled(archetype["neck_height"]) * (1.0 + 0.5 * i)]
        previous = add(JointGroup(GroupKind.NECK), named_axes[a], anchor, previous)

    shoulder = np.array([0.0, -width, shoulder_z])
    elbow = shoulder + scaled(archetype["upper_arm"]) * down
    wrist = elbow + scaled(archetype["forearm"]) * down
    tcp = wrist + scaled(archetype["hand"]) * down

    arm: List[Tuple[GroupKind, np.ndarray, np.ndarray]] = []
    for a in archetype["girdle"]:
        arm.append((GroupKind.SHOULDER_GIRDLE, named_axes[a], np.array([0.0, -0.4 * width, shoulder_z])))
    for a in archetype["shoulder"]:
        arm.append((GroupKind.SHOULDER, named_axes[a], shoulder))
    if archetype["upper_arm_roll"]:
        arm.append((GroupKind.UPPER_ARM, down, 0.5 * (shoulder + elbow)))
    if archetype["elbow"]:
        arm.append((GroupKind.ELBOW, elbow_axis, elbow))
    if archetype["forearm_roll"]:
        arm.append((GroupKind.FOREARM, down, 0.5 * (elbow + wrist)))
    for a in archetype["wrist"]:
        arm.append((GroupKind.WRIST, elbow_axis if a == "y" else named_axes[a], wrist))

    right_start = len(joints)
    previous = torso_end
    for kind, axis, anchor in arm:
        previous = add(JointGroup(kind, Side.RIGHT), axis, anchor, previous)
    previous = torso_end
    for right in joints[right_start:right_start + len(arm)]:
        joints.append(WorldJoint(right.group.mirrored(), right.axis * MIRROR, right.anchor * MIRROR, previous))
        previous = len(joints) - 1

    return RobotRecord(
        name=name,
        robot_type=archetype["type"],
        base_position=base,
        shoulder_positions=np.vstack([shoulder * MIRROR, shoulder]),
        joints=joints,
        tcp_world={Side.RIGHT: tcp, Side.LEFT: tcp * MIRROR},
        source="synthetic",
    )


def synthesize_robots(n: int, seed: int = 0, jitter: float = 1.0,
                      archetypes: Optional[Sequence[str]] = None) -> List[RobotRecord]:
    """n records cycling through the archetypes, jittered deterministically from the seed"""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    names = list(archetypes or ARCHETYPES)
    rng = np.random.default_rng(seed)
    return [_archetype_record(f"{names[i % len(names)]}_{i:02d}", ARCHETYPES[names[i % len(names)]], rng, jitter)
            for i in range(n)]


def write_records(records: Sequence[RobotRecord], out_dir: str) -> List[str]:
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for record in records:
        path = os.path.join(out_dir, f"{record.name}.json")
        save_record(record, path)
        paths.append(path)
    return paths
