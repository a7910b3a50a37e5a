"""
BVH motion capture I/O and upper-body marker extraction.

Rotation channels are converted to radians at parse time and composed in the
order the file declares them (intrinsic), so "Zrotation Xrotation Yrotation"
means Rz . Rx . Ry. A joint's local transform is Trans(offset + position
channels) . Rot(channels); end sites are kept as zero-channel joints named
<Parent>_End.
"""

import math
import os
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.spatial.transform import Rotation

from errors import ChannelMismatch, DegenerateScale, ExportError, MissingJoi, ParseError

POSITION_CHANNELS = {"xposition": 0, "yposition": 1, "zposition": 2}
ROTATION_CHANNELS = {"xrotation": "X", "yrotation": "Y", "zrotation": "Z"}

JOI_NAMES = ("torso_root", "neck", "head",
             "r_shoulder", "r_elbow", "r_wrist",
             "l_shoulder", "l_elbow", "l_wrist")

# CMU skeleton aliases, first match wins
DEFAULT_NAME_MAP: Dict[str, Tuple[str, ...]] = {
    "torso_root": ("LowerBack", "Hips"),
    "neck": ("Neck", "Neck1"),
    "head": ("Head_End", "Head"),
    "r_shoulder": ("RightArm",),
    "r_elbow": ("RightForeArm",),
    "r_wrist": ("RightHand",),
    "l_shoulder": ("LeftArm",),
    "l_elbow": ("LeftForeArm",),
    "l_wrist": ("LeftHand",),
}


@dataclass
class BvhJoint:
    name: str
    parent: int
    offset: np.ndarray
    channels: List[str] = field(default_factory=list)
    end_site: bool = False


@dataclass
class BvhSkeleton:
    joints: List[BvhJoint]
    frame_time: float = 1.0 / 30.0

    def __post_init__(self):
        roots = [j for j in self.joints if j.parent < 0]
        if len(roots) != 1:
            raise ParseError(f"Expected exactly one ROOT, found {len(roots)}")
        self._starts = np.cumsum([0] + [len(j.channels) for j in self.joints])

    @property
    def names(self) -> List[str]:
        return [j.name for j in self.joints]

    @property
    def channel_count(self) -> int:
        return int(self._starts[-1])

    def channel_slice(self, index: int) -> slice:
        return slice(int(self._starts[index]), int(self._starts[index + 1]))

    def index(self, name: str) -> int:
        return self.names.index(name)


class BvhMotion(NamedTuple):
    skeleton: BvhSkeleton
    frames: np.ndarray  # (F, channels), rotations in radians


@dataclass
class MotionClip:
    """World-frame marker trajectories, frames (F, J, 3)"""
    frame_time: float
    frames: np.ndarray
    joint_names: List[str]

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=float)
        if self.frames.ndim != 3 or self.frames.shape[2] != 3:
            raise ValueError(f"Clip frames must be (F, J, 3), got {self.frames.shape}")
        if self.frames.shape[0] < 1:
            raise ValueError("Clip needs at least one frame")
        if self.frames.shape[1] != len(self.joint_names):
            raise ValueError("Clip joint names do not match the frame width")
        if not np.all(np.isfinite(self.frames)):
            raise ValueError("Clip contains non-finite positions")

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    def marker(self, name: str) -> np.ndarray:
        return self.frames[:, self.joint_names.index(name)]

    def subset(self, names: Sequence[str]) -> "MotionClip":
        idx = [self.joint_names.index(n) for n in names]
        return MotionClip(self.frame_time, self.frames[:, idx], list(names))

    def to_frame(self) -> pd.DataFrame:
        F, J, _ = self.frames.shape
        return pd.DataFrame({
            "frame": np.repeat(np.arange(F), J),
            "joint": np.tile(self.joint_names, F),
            "x": self.frames[:, :, 0].reshape(-1),
            "y": self.frames[:, :, 1].reshape(-1),
            "z": self.frames[:, :, 2].reshape(-1),
        })

    def save_csv(self, file_path: str):
        try:
            self.to_frame().to_csv(file_path, index=False)
        except OSError as e:
            raise ExportError(f"Cannot write clip to {file_path}: {e}")


def clip_from_frame(df: pd.DataFrame, frame_time: float = 1.0 / 30.0) -> MotionClip:
    names = list(dict.fromkeys(df["joint"]))
    F = int(df["frame"].max()) + 1
    frames = df[["x", "y", "z"]].to_numpy(dtype=float).reshape(F, len(names), 3)
    return MotionClip(frame_time, frames, names)


class _Tokens:
    """Whitespace tokens with their 1-based line numbers"""

    def __init__(self, lines: List[str]):
        self.items: List[Tuple[str, int]] = []
        for number, line in enumerate(lines, start=1):
            for token in line.replace("{", " { ").replace("}", " } ").split():
                self.items.append((token, number))
        self.pos = 0

    def peek(self) -> Optional[str]:
        return self.items[self.pos][0] if self.pos < len(self.items) else None

    @property
    def line(self) -> Optional[int]:
        if self.pos < len(self.items):
            return self.items[self.pos][1]
        return self.items[-1][1] if self.items else None

    def take(self, expected: Optional[str] = None) -> str:
        if self.pos >= len(self.items):
            raise ParseError(f"Unexpected end of hierarchy, expected {expected or 'a token'}", self.line)
        token, number = self.items[self.pos]
        if expected is not None and token != expected:
            raise ParseError(f"Expected '{expected}', found '{token}'", number)
        self.pos += 1
        return token

    def number(self) -> float:
        line = self.line
        token = self.take()
        try:
            return float(token)
        except ValueError:
            raise ParseError(f"Expected a number, found '{token}'", line)


def _parse_joint(tokens: _Tokens, joints: List[BvhJoint], parent: int):
    name_line = tokens.line
    name = tokens.take()
    tokens.take("{")
    tokens.take("OFFSET")
    offset = np.array([tokens.number() for _ in range(3)])
    tokens.take("CHANNELS")
    count_line = tokens.line
    try:
        count = int(tokens.take())
    except ValueError:
        raise ParseError("CHANNELS must be followed by a count", count_line)
    channels = [tokens.take() for _ in range(count)]
    for channel in channels:
        if channel.lower() not in POSITION_CHANNELS and channel.lower() not in ROTATION_CHANNELS:
            raise ParseError(f"Unknown channel '{channel}' on joint {name}", name_line)
    index = len(joints)
    joints.append(BvhJoint(name, parent, offset, channels))

    while tokens.peek() != "}":
        keyword = tokens.peek()
        if keyword == "JOINT":
            tokens.take()
            _parse_joint(tokens, joints, index)
        elif keyword == "End":
            tokens.take()
            tokens.take("Site")
            tokens.take("{")
            tokens.take("OFFSET")
            end_offset = np.array([tokens.number() for _ in range(3)])
            tokens.take("}")
            joints.append(BvhJoint(f"{name}_End", index, end_offset, [], end_site=True))
        elif keyword is None:
            raise ParseError(f"Unclosed joint {name}", name_line)
        else:
            raise ParseError(f"Unexpected '{keyword}' inside joint {name}", tokens.line)
    tokens.take("}")


def parse_bvh(text: Union[str, bytes]) -> BvhMotion:
    """Parse BVH text into a skeleton and a (F, channels) frame array"""
    if isinstance(text, bytes):
        text = text.decode("utf-8", errors="replace")
    lines = text.splitlines()

    motion_at = next((i for i, line in enumerate(lines) if line.strip().upper() == "MOTION"), None)
    if motion_at is None:
        raise ParseError("Missing MOTION section")
    tokens = _Tokens(lines[:motion_at])
    tokens.take("HIERARCHY")
    tokens.take("ROOT")
    joints: List[BvhJoint] = []
    _parse_joint(tokens, joints, -1)
    if tokens.peek() is not None:
        raise ParseError(f"Unexpected '{tokens.peek()}' after the ROOT joint", tokens.line)

    frame_count, frame_time, cursor = None, None, motion_at + 1
    while cursor < len(lines) and (frame_count is None or frame_time is None):
        line = lines[cursor].strip()
        cursor += 1
        if not line:
            continue
        try:
            if line.startswith("Frames:"):
                frame_count = int(line.split(":", 1)[1])
            elif line.startswith("Frame Time:"):
                frame_time = float(line.split(":", 1)[1])
            else:
                raise ParseError(f"Unexpected line in MOTION header: '{line}'", cursor)
        except ParseError:
            raise
        except ValueError:
            raise ParseError(f"Malformed MOTION header: '{line}'", cursor)
    if frame_count is None or frame_time is None:
        raise ParseError("MOTION section needs 'Frames:' and 'Frame Time:'", cursor)

    skeleton = BvhSkeleton(joints, frame_time)
    width = skeleton.channel_count
    rows = []
    for number in range(cursor, len(lines)):
        line = lines[number].strip()
        if not line:
            continue
        try:
            values = [float(v) for v in line.split()]
        except ValueError:
            raise ParseError("Non-numeric value in frame data", number + 1)
        if len(values) != width:
            raise ChannelMismatch(len(rows), width, len(values))
        rows.append(values)
    if len(rows) < frame_count:
        raise ChannelMismatch(len(rows), width, 0)
    if frame_count < 1:
        raise ParseError("MOTION section declares no frames", motion_at + 2)

    frames = np.array(rows[:frame_count], dtype=float).reshape(frame_count, width)
    for i, joint in enumerate(joints):
        start = skeleton.channel_slice(i).start
        for k, channel in enumerate(joint.channels):
            if channel.lower() in ROTATION_CHANNELS:
                frames[:, start + k] = np.deg2rad(frames[:, start + k])
    return BvhMotion(skeleton, frames)


def load_bvh(file_path: str) -> BvhMotion:
    with open(file_path, "r", encoding="utf-8") as f:
        return parse_bvh(f.read())


def write_bvh(motion: BvhMotion) -> str:
    """Serialize back to BVH text; rotations are written in degrees"""
    skeleton = motion.skeleton
    children: Dict[int, List[int]] = {i: [] for i in range(len(skeleton.joints))}
    for i, joint in enumerate(skeleton.joints):
        if joint.parent >= 0:
            children[joint.parent].append(i)

    out = ["HIERARCHY"]

    def emit(index: int, depth: int):
        joint = skeleton.joints[index]
        pad = "\t" * depth
        offset = " ".join(f"{v:.10g}" for v in joint.offset)
        if joint.end_site:
            out.extend([f"{pad}End Site", f"{pad}{{", f"{pad}\tOFFSET {offset}", f"{pad}}}"])
            return
        out.append(f"{pad}{'ROOT' if joint.parent < 0 else 'JOINT'} {joint.name}")
        out.append(f"{pad}{{")
        out.append(f"{pad}\tOFFSET {offset}")
        out.append(f"{pad}\tCHANNELS {len(joint.channels)} {' '.join(joint.channels)}".rstrip())
        for child in children[index]:
            emit(child, depth + 1)
        out.append(f"{pad}}}")

    root = next(i for i, j in enumerate(skeleton.joints) if j.parent < 0)
    emit(root, 0)

    values = np.array(motion.frames, dtype=float, copy=True)
    for i, joint in enumerate(skeleton.joints):
        start = skeleton.channel_slice(i).start
        for k, channel in enumerate(joint.channels):
            if channel.lower() in ROTATION_CHANNELS:
                values[:, start + k] = np.rad2deg(values[:, start + k])
    out.append("MOTION")
    out.append(f"Frames: {len(values)}")
    out.append(f"Frame Time: {skeleton.frame_time:.10g}")
    out.extend(" ".join(f"{v:.10g}" for v in row) for row in values)
    return "\n".join(out) + "\n"


def save_bvh(motion: BvhMotion, file_path: str):
    try:
        with open(file_path, "w", encoding="utf-8") as f:
            f.write(write_bvh(motion))
    except OSError as e:
        raise ExportError(f"Cannot write BVH to {file_path}: {e}")


def _local_rotations(joint: BvhJoint, values: np.ndarray) -> Rotation:
    """values: (F, len(channels)) in radians"""
    seq, columns = "", []
    for k, channel in enumerate(joint.channels):
        axis = ROTATION_CHANNELS.get(channel.lower())
        if axis:
            seq += axis
            columns.append(k)
    if not seq:
        return Rotation.identity(len(values))
    return Rotation.from_euler(seq, values[:, columns])


def _local_translations(joint: BvhJoint, values: np.ndarray) -> np.ndarray:
    translation = np.tile(joint.offset, (len(values), 1))
    for k, channel in enumerate(joint.channels):
        axis = POSITION_CHANNELS.get(channel.lower())
        if axis is not None:
            translation[:, axis] += values[:, k]
    return translation


def skeleton_fk_frames(skeleton: BvhSkeleton, frames: np.ndarray) -> np.ndarray:
    """World positions of every joint and end site, (F, J, 3)"""
    frames = np.atleast_2d(np.asarray(frames, dtype=float))
    if frames.shape[1] != skeleton.channel_count:
        raise ChannelMismatch(0, skeleton.channel_count, frames.shape[1])
    F = len(frames)
    positions = np.zeros((F, len(skeleton.joints), 3))
    orientations: List[Rotation] = []
    for i, joint in enumerate(skeleton.joints):
        values = frames[:, skeleton.channel_slice(i)]
        local_rot = _local_rotations(joint, values)
        local_pos = _local_translations(joint, values)
        if joint.parent < 0:
            positions[:, i] = local_pos
            orientations.append(local_rot)
        else:
            parent_rot = orientations[joint.parent]
            positions[:, i] = positions[:, joint.parent] + parent_rot.apply(local_pos)
            orientations.append(parent_rot * local_rot)
    return positions


def skeleton_fk(skeleton: BvhSkeleton, frame) -> np.ndarray:
    return skeleton_fk_frames(skeleton, np.asarray(frame, dtype=float).reshape(1, -1))[0]


def to_robot_axes(points: np.ndarray, axis_order: str = "zxy") -> np.ndarray:
    """Reorder BVH axes into the robot frame: robot x takes bvh axis_order[0], and so on"""
    order = axis_order.lower()
    if sorted(order) != ["x", "y", "z"]:
        raise ValueError(f"axis_order must be a permutation of 'xyz', got {axis_order!r}")
    return points[..., ["xyz".index(c) for c in order]]


def resolve_markers(skeleton: BvhSkeleton, name_map: Dict[str, Union[str, Sequence[str]]],
                    required: Sequence[str]) -> Dict[str, int]:
    names = skeleton.names
    resolved, missing = {}, []
    for marker in required:
        aliases = name_map.get(marker, ())
        if isinstance(aliases, str):
            aliases = (aliases,)
        hit = next((names.index(a) for a in aliases if a in names), None)
        if hit is None:
            missing.append(marker)
        else:
            resolved[marker] = hit
    if missing:
        raise MissingJoi(missing)
    return resolved


def extract_upper_body(motion: BvhMotion,
                       name_map: Optional[Dict[str, Union[str, Sequence[str]]]] = None,
                       required: Sequence[str] = JOI_NAMES,
                       axis_order: str = "zxy", stride: int = 1, max_frames: int = 0) -> MotionClip:
    """
    Joints of interest in the robot frame, with the torso root pinned to the
    origin and lengths divided by the rest-pose shoulder-to-root distance.
    """
    name_map = DEFAULT_NAME_MAP if name_map is None else name_map
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    resolved = resolve_markers(motion.skeleton, name_map, required)
    index = [resolved[m] for m in required]

    frames = motion.frames[::stride]
    if max_frames > 0:
        frames = frames[:max_frames]
    positions = skeleton_fk_frames(motion.skeleton, frames)[:, index]

    rest = skeleton_fk(motion.skeleton, np.zeros(motion.skeleton.channel_count))[index]
    root_slot = list(required).index("torso_root") if "torso_root" in required else 0
    shoulders = [list(required).index(m) for m in ("r_shoulder", "l_shoulder") if m in required]
    if shoulders:
        scale = float(np.linalg.norm(rest[shoulders].mean(axis=0) - rest[root_slot]))
    else:
        scale = float(np.max(np.linalg.norm(rest - rest[root_slot], axis=1)))
    if scale <= 1e-9:
        raise DegenerateScale(scale)

    positions = (positions - positions[:, root_slot:root_slot + 1]) / scale
    return MotionClip(motion.skeleton.frame_time * stride, to_robot_axes(positions, axis_order), list(required))


def load_clip(file_path: str, **kwargs) -> MotionClip:
    """BVH files are parsed and extracted; CSV files are read as exported clips"""
    extension = os.path.splitext(file_path)[1].lower()
    if extension == ".bvh":
        return extract_upper_body(load_bvh(file_path), **kwargs)
    if extension == ".csv":
        return clip_from_frame(pd.read_csv(file_path))
    raise ParseError(f"Unsupported motion file type {extension}")


# CMU-style upper body, Y-up, actor facing +z, left on +x
CMU_SKELETON: List[Tuple[str, str, Tuple[float, float, float]]] = [
    ("Hips", "", (0.0, 0.0, 0.0)),
    ("LowerBack", "Hips", (0.0, 2.0, 0.0)),
    ("Spine", "LowerBack", (0.0, 4.0, 0.0)),
    ("Spine1", "Spine", (0.0, 4.0, 0.0)),
    ("Neck", "Spine1", (0.0, 3.0, 0.0)),
    ("Neck1", "Neck", (0.0, 1.5, 0.0)),
    ("Head", "Neck1", (0.0, 1.5, 0.0)),
    ("Head_End", "Head", (0.0, 3.0, 0.0)),
    ("RightShoulder", "Spine1", (-1.0, 2.0, 0.0)),
    ("RightArm", "RightShoulder", (-3.5, 0.0, 0.0)),
    ("RightForeArm", "RightArm", (-5.5, 0.0, 0.0)),
    ("RightHand", "RightForeArm", (-4.5, 0.0, 0.0)),
    ("RightHand_End", "RightHand", (-1.5, 0.0, 0.0)),
    ("LeftShoulder", "Spine1", (1.0, 2.0, 0.0)),
    ("LeftArm", "LeftShoulder", (3.5, 0.0, 0.0)),
    ("LeftForeArm", "LeftArm", (5.5, 0.0, 0.0)),
    ("LeftHand", "LeftForeArm", (4.5, 0.0, 0.0)),
    ("LeftHand_End", "LeftHand", (1.5, 0.0, 0.0)),
]
ROOT_CHANNELS = ["Xposition", "Yposition", "Zposition", "Zrotation", "Yrotation", "Xrotation"]
JOINT_CHANNELS = ["Zrotation", "Yrotation", "Xrotation"]
CLIP_PATTERNS = ("wave", "chicken", "swim")


def cmu_skeleton(frame_time: float = 1.0 / 30.0) -> BvhSkeleton:
    names = [name for name, _, _ in CMU_SKELETON]
    joints = []
    for name, parent, offset in CMU_SKELETON:
        end_site = name.endswith("_End")
        channels = [] if end_site else (ROOT_CHANNELS if not parent else JOINT_CHANNELS)
        joints.append(BvhJoint(name, names.index(parent) if parent else -1,
                               np.array(offset, dtype=float), list(channels), end_site))
    return BvhSkeleton(joints, frame_time)


def _pattern_angles(pattern: str, t: np.ndarray) -> Dict[str, Dict[str, np.ndarray]]:
    """Per-joint Euler angles in degrees keyed by axis letter"""
    phase = 2.0 * math.pi * t
    if pattern == "wave":
        return {
            "RightArm": {"Z": np.full_like(t, -75.0), "Y": np.full_like(t, 10.0)},
            "RightForeArm": {"Z": -55.0 + 30.0 * np.sin(2.0 * phase)},
            "LeftArm": {"Z": np.full_like(t, 70.0)},
            "Neck": {"Y": 10.0 * np.sin(phase)},
        }
    if pattern == "chicken":
        flap = 25.0 * np.sin(3.0 * phase)
        return {
            "RightArm": {"Z": 30.0 + flap, "Y": np.full_like(t, -20.0)},
            "RightForeArm": {"Y": np.full_like(t, -110.0)},
            "LeftArm": {"Z": -30.0 - flap, "Y": np.full_like(t, 20.0)},
            "LeftForeArm": {"Y": np.full_like(t, 110.0)},
            "Spine": {"X": 8.0 * np.sin(3.0 * phase)},
            "Neck": {"X": -15.0 * np.sin(3.0 * phase)},
        }
    if pattern == "swim":
        return {
            "RightArm": {"Z": 80.0 * np.cos(phase), "Y": 80.0 * np.sin(phase)},
            "RightForeArm": {"Y": 20.0 + 20.0 * np.sin(phase)},
            "LeftArm": {"Z": 80.0 * np.cos(phase + math.pi), "Y": -80.0 * np.sin(phase + math.pi)},
            "LeftForeArm": {"Y": -20.0 - 20.0 * np.sin(phase + math.pi)},
            "Neck": {"Y": 25.0 * np.sin(phase)},
            "LowerBack": {"Y": 10.0 * np.sin(phase)},
        }
    raise ValueError(f"Unknown clip pattern {pattern!r}; expected one of {CLIP_PATTERNS}")


def synthesize_clip(pattern: str, n_frames: int = 120, frame_time: float = 1.0 / 30.0,
                    cycles: float = 2.0) -> BvhMotion:
    """Periodic upper-body motion on the CMU-named skeleton"""
    skeleton = cmu_skeleton(frame_time)
    t = np.linspace(0.0, cycles, n_frames, endpoint=False)
    angles = _pattern_angles(pattern, t)
    frames = np.zeros((n_frames, skeleton.channel_count))
    frames[:, 1] = 18.0 + 0.3 * np.sin(2.0 * math.pi * t)
    for i, joint in enumerate(skeleton.joints):
        start = skeleton.channel_slice(i).start
        for k, channel in enumerate(joint.channels):
            axis = ROTATION_CHANNELS.get(channel.lower())
            if axis and axis in angles.get(joint.name, {}):
                frames[:, start + k] = np.deg2rad(angles[joint.name][axis])
    return BvhMotion(skeleton, frames)


def synthesize_clip_bvh(pattern: str, n_frames: int = 120, frame_time: float = 1.0 / 30.0) -> str:
    return write_bvh(synthesize_clip(pattern, n_frames, frame_time))
