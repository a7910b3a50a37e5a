"""
Motion retargeting onto candidate upper bodies and the objective the
optimizer minimizes.

A candidate is scored by retargeting each human clip onto it (scaled
directional vectors plus damped least-squares IK), aligning the robot clip to
the human clip with one similarity transform, and averaging the per-joint
error. The objective adds a per-joint penalty once per motion set.
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import svd

from config import IkParams, RetargetConfig
from errors import DegenerateGeometry, DimensionMismatch, MissingJoi
from kinematics import JointConfig, chain_from_structure, forward_kinematics, solve_ik
from motion_io import JOI_NAMES, MotionClip
from screw_model import (FullBodyStructure, GroupKind, Side, ANCESTORS, JointGroup,
                         TORSO, NECK)

SPREAD_EPS = 1e-12

# JOI tree: (parent, child); targets are built root-first
SEGMENTS: List[Tuple[str, str]] = [
    ("torso_root", "neck"),
    ("neck", "head"),
    ("neck", "r_shoulder"),
    ("r_shoulder", "r_elbow"),
    ("r_elbow", "r_wrist"),
    ("neck", "l_shoulder"),
    ("l_shoulder", "l_elbow"),
    ("l_elbow", "l_wrist"),
]


@dataclass(frozen=True)
class RetargetSpec:
    markers: Tuple[str, ...] = JOI_NAMES
    segments: Tuple[Tuple[str, str], ...] = tuple(SEGMENTS)
    ik: IkParams = field(default_factory=IkParams)
    lambda_joint: float = 3.5
    per_frame_alignment: bool = False
    report_scale: float = 100.0

    @classmethod
    def from_config(cls, retarget: RetargetConfig, ik: IkParams) -> "RetargetSpec":
        return cls(ik=ik, lambda_joint=retarget.lambda_joint,
                   per_frame_alignment=retarget.per_frame_alignment,
                   report_scale=retarget.report_scale)


class Alignment(NamedTuple):
    scale: float
    rotation: np.ndarray
    translation: np.ndarray
    aligned: np.ndarray


@dataclass
class ObjectiveReport:
    pa_mpjpe: float        # summed over motions, report scale applied
    pa_mpjpe_raw: float    # same, normalized units
    n_tot: int
    total: float
    per_motion: Dict[str, float] = field(default_factory=dict)
    per_frame: Dict[str, np.ndarray] = field(default_factory=dict)
    ik_unconverged: int = 0


def robot_markers(structure: FullBodyStructure) -> Dict[str, Tuple[int, np.ndarray]]:
    """
    Robot marker for every joint of interest: (joint index, home position).

    A marker sits on the first active joint of its primary group. When the
    group is empty it takes the last active joint of the nearest ancestor
    group; the base origin (index -1) is the last resort. Wrists fall back to
    the TCP before walking up the arm.
    """
    joints = structure.joints()
    by_group: Dict[JointGroup, List[int]] = {}
    for index, active in enumerate(joints):
        by_group.setdefault(active.group, []).append(index)

    def anchor(index: int) -> Tuple[int, np.ndarray]:
        return index, joints[index].joint.q.copy()

    def first_or_fallback(primary: JointGroup, fallbacks: Sequence[JointGroup]) -> Tuple[int, np.ndarray]:
        if by_group.get(primary):
            return anchor(by_group[primary][0])
        for group in fallbacks:
            if by_group.get(group):
                return anchor(by_group[group][-1])
        return -1, np.zeros(3)

    markers: Dict[str, Tuple[int, np.ndarray]] = {"torso_root": (-1, np.zeros(3))}
    markers["neck"] = first_or_fallback(NECK, [TORSO])
    markers["head"] = (anchor(by_group[NECK][-1]) if by_group.get(NECK) else markers["neck"])

    for side, prefix, tcp in ((Side.RIGHT, "r", structure.tcp_right), (Side.LEFT, "l", structure.tcp_left)):
        def group(kind: GroupKind, side=side) -> JointGroup:
            right = JointGroup(kind, Side.RIGHT)
            return right if side is Side.RIGHT else right.mirrored()

        def walk(kind: GroupKind, side=side) -> List[JointGroup]:
            chain = ANCESTORS[JointGroup(kind, Side.RIGHT)]
            return list(chain) if side is Side.RIGHT else [a.mirrored() for a in chain]

        markers[f"{prefix}_shoulder"] = first_or_fallback(group(GroupKind.SHOULDER), walk(GroupKind.SHOULDER))
        markers[f"{prefix}_elbow"] = first_or_fallback(group(GroupKind.ELBOW), walk(GroupKind.ELBOW))

        arm = [i for i, a in enumerate(joints) if a.group.side is side]
        if by_group.get(group(GroupKind.WRIST)):
            markers[f"{prefix}_wrist"] = anchor(by_group[group(GroupKind.WRIST)][0])
        elif tcp is not None:
            torso = by_group.get(TORSO, [])
            attach = arm[-1] if arm else (torso[-1] if torso else -1)
            markers[f"{prefix}_wrist"] = (attach, np.asarray(tcp, dtype=float).copy())
        else:
            markers[f"{prefix}_wrist"] = first_or_fallback(group(GroupKind.WRIST), walk(GroupKind.WRIST))
    return markers


def _targets_for_frame(frame: Dict[str, np.ndarray], home: Dict[str, np.ndarray],
                       segments: Sequence[Tuple[str, str]]) -> Dict[str, np.ndarray]:
    targets = {"torso_root": home["torso_root"]}
    for parent, child in segments:
        length = float(np.linalg.norm(home[child] - home[parent]))
        direction = frame[child] - frame[parent]
        norm = float(np.linalg.norm(direction))
        if norm > SPREAD_EPS:
            unit = direction / norm
        elif length > SPREAD_EPS:
            unit = (home[child] - home[parent]) / length
        else:
            unit = np.zeros(3)
        targets[child] = targets[parent] + length * unit
    return targets


def retarget_with_stats(candidate: FullBodyStructure, src: MotionClip,
                        spec: RetargetSpec = RetargetSpec()) -> Tuple[MotionClip, int]:
    """Retargeted clip and the number of frames whose IK did not converge"""
    missing = [m for m in spec.markers if m not in src.joint_names]
    if missing:
        raise MissingJoi(missing)

    markers = robot_markers(candidate)
    chain = chain_from_structure(candidate, {m: markers[m] for m in spec.markers})
    home = {m: chain.marker_home[chain.marker_index(m)] for m in spec.markers}
    movable = [m for m in spec.markers if chain.marker_attach[chain.marker_index(m)] >= 0]

    cfg = JointConfig.zeros(chain.n_joints, spec.ik.joint_limit)
    out = np.empty((src.n_frames, len(spec.markers), 3))
    unconverged = 0
    for f in range(src.n_frames):
        frame = {m: src.frames[f, src.joint_names.index(m)] for m in spec.markers}
        targets = _targets_for_frame(frame, home, spec.segments)
        result = solve_ik(chain, {m: targets[m] for m in movable}, cfg, spec.ik)
        if not result.converged:
            unconverged += 1
        cfg = result.config
        out[f] = forward_kinematics(chain, cfg).markers
    return MotionClip(src.frame_time, out, list(spec.markers)), unconverged


def retarget(candidate: FullBodyStructure, src: MotionClip, spec: RetargetSpec = RetargetSpec()) -> MotionClip:
    return retarget_with_stats(candidate, src, spec)[0]


def procrustes_align(A, B) -> Alignment:
    """
    Similarity transform (s, R, t) minimizing sum ||A - (s R B + t)||^2 over
    all points of both trajectories (Umeyama). A reference with zero spread
    raises DegenerateGeometry; a B with zero spread is only translated.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape != B.shape:
        raise DimensionMismatch(A.size, B.size)
    a, b = A.reshape(-1, 3), B.reshape(-1, 3)
    mu_a, mu_b = a.mean(axis=0), b.mean(axis=0)
    ac, bc = a - mu_a, b - mu_b
    var_a = float(np.sum(ac ** 2)) / len(a)
    var_b = float(np.sum(bc ** 2)) / len(b)
    if var_a <= SPREAD_EPS:
        raise DegenerateGeometry("Reference point cloud has no spread")
    if var_b <= SPREAD_EPS:
        R, s = np.eye(3), 1.0
    else:
        U, D, Vt = svd(ac.T @ bc / len(a))
        S = np.eye(3)
        if np.linalg.det(U) * np.linalg.det(Vt) < 0:
            S[2, 2] = -1.0
        R = U @ S @ Vt
        s = float(np.trace(np.diag(D) @ S)) / var_b
    t = mu_a - s * R @ mu_b
    aligned = (s * (R @ b.T)).T + t
    return Alignment(s, R, t, aligned.reshape(B.shape))


def _check_pair(src: MotionClip, tar: MotionClip):
    if src.joint_names != tar.joint_names:
        missing = sorted(set(src.joint_names) ^ set(tar.joint_names)) or list(src.joint_names)
        raise MissingJoi(missing)
    if src.n_frames != tar.n_frames:
        raise DimensionMismatch(src.n_frames, tar.n_frames)


def pa_mpjpe_frames(src: MotionClip, tar: MotionClip, per_frame_alignment: bool = False) -> np.ndarray:
    """Per-frame mean joint error after alignment, normalized units"""
    _check_pair(src, tar)
    if per_frame_alignment:
        aligned = np.stack([procrustes_align(src.frames[f], tar.frames[f]).aligned
                            for f in range(src.n_frames)])
    else:
        aligned = procrustes_align(src.frames, tar.frames).aligned
    return np.linalg.norm(src.frames - aligned, axis=2).mean(axis=1)


def pa_mpjpe(src: MotionClip, tar: MotionClip, per_frame_alignment: bool = False) -> float:
    """Mean joint error after alignment in normalized units; reports scale it by report_scale"""
    return float(pa_mpjpe_frames(src, tar, per_frame_alignment).mean())


def count_active_joints(candidate: FullBodyStructure) -> int:
    """Central joints once, right-arm joints twice (mirror)"""
    return len(candidate.central) + 2 * len(candidate.right)


MotionSet = Union[Dict[str, MotionClip], Sequence[MotionClip]]


def named_motions(motions: MotionSet) -> Dict[str, MotionClip]:
    if isinstance(motions, dict):
        return dict(motions)
    return {f"motion{i}": clip for i, clip in enumerate(motions)}


def evaluate_structure(candidate: FullBodyStructure, motions: MotionSet,
                       spec: RetargetSpec = RetargetSpec()) -> ObjectiveReport:
    if spec.lambda_joint < 0:
        raise ValueError(f"lambda_joint must be >= 0, got {spec.lambda_joint}")
    per_motion, per_frame, raw_total, unconverged = {}, {}, 0.0, 0
    for name, clip in named_motions(motions).items():
        src = clip.subset(spec.markers)
        tar, misses = retarget_with_stats(candidate, src, spec)
        errors = pa_mpjpe_frames(src, tar, spec.per_frame_alignment)
        raw = float(errors.mean())
        per_motion[name] = spec.report_scale * raw
        per_frame[name] = errors
        raw_total += raw
        unconverged += misses
    n_tot = count_active_joints(candidate)
    scaled = float(sum(per_motion.values()))
    return ObjectiveReport(scaled, raw_total, n_tot, scaled + spec.lambda_joint * n_tot,
                           per_motion, per_frame, unconverged)


def total_objective(z, decode: Callable[[np.ndarray], FullBodyStructure], motions: MotionSet,
                    lambda_joint: Optional[float] = None, spec: RetargetSpec = RetargetSpec()) -> ObjectiveReport:
    """Sum of per-motion PA-MPJPE plus lambda_joint * N_tot, penalty added once"""
    if lambda_joint is not None:
        spec = RetargetSpec(spec.markers, spec.segments, spec.ik, lambda_joint,
                            spec.per_frame_alignment, spec.report_scale)
    return evaluate_structure(decode(np.asarray(z, dtype=float)), motions, spec)


class MotionObjective:
    """Black-box f(z) -> total for the optimizer; keeps every report in evaluation order"""

    def __init__(self, decode: Callable[[np.ndarray], FullBodyStructure], motions: MotionSet,
                 spec: RetargetSpec = RetargetSpec()):
        self.decode = decode
        self.motions = named_motions(motions)
        self.spec = spec
        self.last_report: Optional[ObjectiveReport] = None
        self.reports: List[ObjectiveReport] = []

    def report(self, z) -> ObjectiveReport:
        self.last_report = total_objective(z, self.decode, self.motions, spec=self.spec)
        self.reports.append(self.last_report)
        return self.last_report

    def __call__(self, z) -> float:
        return self.report(z).total


def report_columns(report: ObjectiveReport) -> Dict[str, float]:
    return {"pa_mpjpe": report.pa_mpjpe, "pa_mpjpe_raw": report.pa_mpjpe_raw, "n_tot": report.n_tot}


def report_to_dict(report: ObjectiveReport) -> Dict:
    return {
        "pa_mpjpe": report.pa_mpjpe,
        "pa_mpjpe_raw": report.pa_mpjpe_raw,
        "n_tot": report.n_tot,
        "total": report.total,
        "per_motion": dict(report.per_motion),
        "per_frame": {k: [float(x) for x in v] for k, v in report.per_frame.items()},
        "ik_unconverged": report.ik_unconverged,
    }
