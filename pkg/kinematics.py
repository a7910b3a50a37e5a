"""
Screw-theoretic rigid-body kinematics.

Twists are given in the space frame at the A-pose (home) configuration, so the
pose of any body is the ordered product of the exponentials of its ancestor
joints applied to its home position (product of exponentials).
"""

import math
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import solve as dense_solve

from config import IkParams
from errors import ConfigMismatch
from screw_model import FullBodyStructure, ScrewJoint

PITCH_TOL = 1e-9


def skew(w) -> np.ndarray:
    """[w] such that [w] x = w cross x"""
    return np.array([[0.0, -w[2], w[1]],
                     [w[2], 0.0, -w[0]],
                     [-w[1], w[0], 0.0]])


@dataclass(frozen=True, eq=False)
class Twist:
    """Zero-pitch screw: omega and moment v = -omega x q"""
    omega: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        omega = np.asarray(self.omega, dtype=float).reshape(3)
        v = np.asarray(self.v, dtype=float).reshape(3)
        if np.any(omega) and abs(float(omega @ v)) > PITCH_TOL:
            raise ValueError("Revolute twist must have zero pitch (omega . v = 0)")
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "v", v)

    @classmethod
    def from_screw(cls, joint: ScrewJoint) -> "Twist":
        return cls(joint.omega, -np.cross(joint.omega, joint.q))


def screw_exp(t: Twist, theta: float) -> np.ndarray:
    """Matrix exponential of the 4x4 twist matrix scaled by theta"""
    T = np.eye(4)
    w, v = t.omega, t.v
    if not np.any(w):
        T[:3, 3] = v * theta
        return T
    W = skew(w)
    W2 = W @ W
    s, c = math.sin(theta), math.cos(theta)
    T[:3, :3] = np.eye(3) + s * W + (1.0 - c) * W2
    T[:3, 3] = (theta * np.eye(3) + (1.0 - c) * W + (theta - s) * W2) @ v
    return T


@dataclass
class JointConfig:
    angles: np.ndarray
    limits: np.ndarray  # (n, 2) radians

    def __post_init__(self):
        self.angles = np.asarray(self.angles, dtype=float).reshape(-1)
        self.limits = np.asarray(self.limits, dtype=float).reshape(-1, 2)
        if len(self.limits) != len(self.angles):
            raise ConfigMismatch(len(self.limits), len(self.angles))
        if np.any(self.limits[:, 0] > self.limits[:, 1]):
            raise ValueError("Joint limit with lo > hi")

    @classmethod
    def zeros(cls, n: int, limit: float = math.pi) -> "JointConfig":
        return cls(np.zeros(n), np.tile([-limit, limit], (n, 1)))

    def clamped(self, angles) -> "JointConfig":
        return JointConfig(np.clip(angles, self.limits[:, 0], self.limits[:, 1]), self.limits)

    def within_limits(self) -> bool:
        return bool(np.all(self.angles >= self.limits[:, 0]) and np.all(self.angles <= self.limits[:, 1]))


@dataclass
class KinematicChain:
    """Joints with parent indices (parent < child) plus named markers"""
    joints: List[ScrewJoint]
    parents: List[int]
    marker_names: List[str] = field(default_factory=list)
    marker_attach: List[int] = field(default_factory=list)  # -1 = base (fixed)
    marker_home: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))

    def __post_init__(self):
        for i, parent in enumerate(self.parents):
            if parent >= i or parent < -1:
                raise ValueError(f"Joint {i} has parent {parent}; parents must precede children")
        self.twists = [Twist.from_screw(j) for j in self.joints]
        self.marker_home = np.asarray(self.marker_home, dtype=float).reshape(-1, 3)
        n, m = len(self.joints), len(self.marker_names)
        # influence[k, i]: joint i moves marker k
        self.influence = np.zeros((m, n), dtype=bool)
        for k, attach in enumerate(self.marker_attach):
            node = attach
            while node >= 0:
                self.influence[k, node] = True
                node = self.parents[node]

    @property
    def n_joints(self) -> int:
        return len(self.joints)

    def marker_index(self, name: str) -> int:
        return self.marker_names.index(name)


def chain_from_structure(structure: FullBodyStructure, markers: Dict[str, Tuple[int, np.ndarray]]) -> KinematicChain:
    """Markers map name -> (index into structure.joints() or -1, home position)"""
    names = list(markers)
    return KinematicChain(
        joints=[a.joint for a in structure.joints()],
        parents=list(structure.parents),
        marker_names=names,
        marker_attach=[markers[n][0] for n in names],
        marker_home=np.array([markers[n][1] for n in names], dtype=float).reshape(-1, 3),
    )


class FkResult(NamedTuple):
    joints: np.ndarray   # (n, 3) world anchors
    markers: np.ndarray  # (m, 3)
    transforms: np.ndarray  # (n, 4, 4) accumulated product up to and including joint i


def _accumulate(chain: KinematicChain, angles: np.ndarray) -> np.ndarray:
    transforms = np.empty((chain.n_joints, 4, 4))
    for i, (twist, parent) in enumerate(zip(chain.twists, chain.parents)):
        local = screw_exp(twist, angles[i])
        transforms[i] = local if parent < 0 else transforms[parent] @ local
    return transforms


def forward_kinematics(chain: KinematicChain, cfg: JointConfig) -> FkResult:
    angles = np.asarray(cfg.angles, dtype=float)
    if len(angles) != chain.n_joints:
        raise ConfigMismatch(chain.n_joints, len(angles))
    transforms = _accumulate(chain, angles)

    joints = np.empty((chain.n_joints, 3))
    for i, parent in enumerate(chain.parents):
        q = chain.joints[i].q
        joints[i] = q if parent < 0 else transforms[parent][:3, :3] @ q + transforms[parent][:3, 3]

    markers = np.empty((len(chain.marker_names), 3))
    for k, attach in enumerate(chain.marker_attach):
        home = chain.marker_home[k]
        markers[k] = home if attach < 0 else transforms[attach][:3, :3] @ home + transforms[attach][:3, 3]
    return FkResult(joints, markers, transforms)


def position_jacobian(chain: KinematicChain, fk: FkResult, marker_rows: Optional[Sequence[int]] = None) -> np.ndarray:
    """Stacked positional geometric Jacobian, columns omega_i x (p - p_i)"""
    rows = range(len(chain.marker_names)) if marker_rows is None else marker_rows
    J = np.zeros((3 * len(rows), chain.n_joints))
    axes = np.empty((chain.n_joints, 3))
    for i, parent in enumerate(chain.parents):
        w = chain.joints[i].omega
        axes[i] = w if parent < 0 else fk.transforms[parent][:3, :3] @ w
    for r, k in enumerate(rows):
        p = fk.markers[k]
        for i in np.flatnonzero(chain.influence[k]):
            J[3 * r:3 * r + 3, i] = np.cross(axes[i], p - fk.joints[i])
    return J


class IkResult(NamedTuple):
    config: JointConfig
    residual: float
    iterations: int
    converged: bool


def solve_ik(chain: KinematicChain, targets: Dict[str, np.ndarray], cfg0: JointConfig,
             params: IkParams = IkParams()) -> IkResult:
    """
    Damped least squares on the stacked marker position residual.

    Angles are clamped to their limits after every step and the best
    configuration seen is returned, converged or not.
    """
    rows = [chain.marker_index(name) for name in targets]
    goal = np.concatenate([np.asarray(targets[chain.marker_names[k]], dtype=float) for k in rows]) if rows else np.zeros(0)

    def residual_of(cfg: JointConfig):
        fk = forward_kinematics(chain, cfg)
        err = goal - fk.markers[rows].reshape(-1)
        return fk, err, float(np.linalg.norm(err))

    current = cfg0.clamped(cfg0.angles)
    fk, err, res = residual_of(current)
    best, best_res = current, res
    if res < params.tol or chain.n_joints == 0 or not rows:
        return IkResult(best, best_res, 0, res < params.tol)

    lam2 = params.damping ** 2
    for iteration in range(1, params.max_iters + 1):
        J = position_jacobian(chain, fk, rows)
        A = J @ J.T + lam2 * np.eye(J.shape[0])
        step = J.T @ dense_solve(A, err, assume_a="pos")

        improved = False
        for scale in (1.0, 0.5, 0.25):
            trial = current.clamped(current.angles + scale * step)
            t_fk, t_err, t_res = residual_of(trial)
            if t_res < res:
                current, fk, err, res = trial, t_fk, t_err, t_res
                improved = True
                break
        if res < best_res:
            best, best_res = current, res
        if best_res < params.tol:
            return IkResult(best, best_res, iteration, True)
        if not improved:
            return IkResult(best, best_res, iteration, False)
    return IkResult(best, best_res, params.max_iters, False)
