"""
Curated robot records: one JSON document per robot, world-frame A-pose.

{
  "name": "...", "type": "humanoid" | "non-bipedal",
  "base_position": [x, y, z],
  "shoulder_positions": {"left": [...], "right": [...]},
  "tcp_world": {"right": [...], "left": [...]},          (optional)
  "joints": [{"group": "shoulder", "side": "right",
              "axis_world": [...], "anchor_world": [...], "parent": 3}, ...]
}
"""

import json
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from errors import SchemaError
from screw_model import GroupKind, JointGroup, Side, WorldJoint

ROBOT_TYPES = ("humanoid", "non-bipedal")
SUPPORTED_EXTENSIONS = {".json"}


@dataclass
class RobotRecord:
    name: str
    robot_type: str
    base_position: np.ndarray
    shoulder_positions: np.ndarray  # rows: left, right
    joints: List[WorldJoint]
    tcp_world: Dict[Side, np.ndarray] = field(default_factory=dict)
    source: Optional[str] = None

    @property
    def shoulder_to_base(self) -> float:
        return float(np.linalg.norm(self.shoulder_positions.mean(axis=0) - self.base_position))


def _vector(name: str, field_name: str, value) -> np.ndarray:
    try:
        vec = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise SchemaError(name, field_name, "expected 3 numbers")
    if vec.shape != (3,) or not np.all(np.isfinite(vec)):
        raise SchemaError(name, field_name, "expected 3 finite numbers")
    return vec


def _group(name: str, index: int, entry: Dict) -> JointGroup:
    field_name = f"joints[{index}].group"
    try:
        kind = GroupKind(str(entry.get("group", "")).lower())
    except ValueError:
        raise SchemaError(name, field_name, f"unknown group {entry.get('group')!r}")
    if kind is GroupKind.TCP:
        raise SchemaError(name, field_name, "tcp is given through tcp_world, not as a joint")
    side_value = entry.get("side")
    side = None
    if side_value is not None:
        try:
            side = Side(str(side_value).lower())
        except ValueError:
            raise SchemaError(name, f"joints[{index}].side", f"unknown side {side_value!r}")
    try:
        return JointGroup(kind, side)
    except ValueError as e:
        raise SchemaError(name, f"joints[{index}].side", str(e))


def parse_record(data: Dict, source: Optional[str] = None) -> RobotRecord:
    """Validate a decoded JSON document and build a RobotRecord"""
    if not isinstance(data, dict):
        raise SchemaError(source or "?", "<document>", "expected a JSON object")
    name = data.get("name")
    if not name or not isinstance(name, str):
        raise SchemaError(source or "?", "name", "missing robot name")

    robot_type = str(data.get("type", "humanoid")).lower()
    if robot_type not in ROBOT_TYPES:
        raise SchemaError(name, "type", f"expected one of {ROBOT_TYPES}")

    if "base_position" not in data:
        raise SchemaError(name, "base_position", "missing")
    base = _vector(name, "base_position", data["base_position"])

    shoulders = data.get("shoulder_positions")
    if isinstance(shoulders, dict):
        if "left" not in shoulders or "right" not in shoulders:
            raise SchemaError(name, "shoulder_positions", "needs both left and right")
        rows = [shoulders["left"], shoulders["right"]]
    elif isinstance(shoulders, (list, tuple)) and len(shoulders) == 2:
        rows = list(shoulders)
    else:
        raise SchemaError(name, "shoulder_positions", "needs both left and right")
    shoulder_positions = np.vstack([_vector(name, "shoulder_positions", row) for row in rows])

    entries = data.get("joints")
    if not isinstance(entries, list):
        raise SchemaError(name, "joints", "expected a list")
    joints = []
    for index, entry in enumerate(entries):
        if not isinstance(entry, dict):
            raise SchemaError(name, f"joints[{index}]", "expected an object")
        group = _group(name, index, entry)
        axis = _vector(name, f"joints[{index}].axis_world", entry.get("axis_world"))
        anchor = _vector(name, f"joints[{index}].anchor_world", entry.get("anchor_world"))
        parent = entry.get("parent", -1)
        if not isinstance(parent, int) or parent < -1 or parent >= index:
            raise SchemaError(name, f"joints[{index}].parent", "must be -1 or an earlier joint index")
        joints.append(WorldJoint(group, axis, anchor, parent))

    tcp = {}
    for side_name, value in (data.get("tcp_world") or {}).items():
        try:
            side = Side(side_name)
        except ValueError:
            raise SchemaError(name, "tcp_world", f"unknown side {side_name!r}")
        tcp[side] = _vector(name, f"tcp_world.{side_name}", value)

    return RobotRecord(name, robot_type, base, shoulder_positions, joints, tcp, source)


def load_record_json(file_path: str) -> RobotRecord:
    try:
        with open(file_path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise SchemaError(os.path.basename(file_path), "<document>", f"invalid JSON: {e}")
    return parse_record(data, source=file_path)


def load_record(file_path: str) -> RobotRecord:
    """Load a record from any supported file type"""
    file_extension = os.path.splitext(file_path)[1].lower()
    if file_extension == ".json":
        return load_record_json(file_path)
    raise SchemaError(os.path.basename(file_path), "<file>", f"unsupported file type {file_extension}")


def record_to_dict(record: RobotRecord) -> Dict:
    def listed(v):
        return [float(x) for x in v]

    out = {
        "name": record.name,
        "type": record.robot_type,
        "base_position": listed(record.base_position),
        "shoulder_positions": {
            "left": listed(record.shoulder_positions[0]),
            "right": listed(record.shoulder_positions[1]),
        },
        "joints": [
            {
                "group": joint.group.kind.value,
                "side": joint.group.side.value if joint.group.side else None,
                "axis_world": listed(joint.axis),
                "anchor_world": listed(joint.anchor),
                "parent": joint.parent,
            }
            for joint in record.joints
        ],
    }
    if record.tcp_world:
        out["tcp_world"] = {side.value: listed(pos) for side, pos in record.tcp_world.items()}
    return out


def save_record(record: RobotRecord, file_path: str):
    with open(file_path, "w", encoding="utf-8") as f:
        json.dump(record_to_dict(record), f, indent=2)
