"""
Latent design-space analysis: clustering, interpolation strips and map export.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
from sklearn.cluster import KMeans

from config import DhConfig, ScrewConfig
from dh_model import dh_clamp, dh_unflatten
from errors import ExportError, KTooLarge
from manifold import AeModel, decode, encode, vector_to_structure
from screw_model import FullBodyStructure, GroupKind, activity_mask

CLUSTER_COLORS = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"]
GROUP_COLORS = {
    GroupKind.TORSO: "#444444",
    GroupKind.NECK: "#7f7f7f",
    GroupKind.SHOULDER_GIRDLE: "#9467bd",
    GroupKind.SHOULDER: "#1f77b4",
    GroupKind.UPPER_ARM: "#17becf",
    GroupKind.ELBOW: "#2ca02c",
    GroupKind.FOREARM: "#bcbd22",
    GroupKind.WRIST: "#d62728",
}


@dataclass
class LatentMap:
    names: List[str]
    coords: np.ndarray      # (n, z)
    labels: np.ndarray      # (n,)
    centroids: np.ndarray   # (k, z)
    inertia: float = 0.0

    @property
    def latent_dim(self) -> int:
        return self.coords.shape[1] if self.coords.ndim == 2 else 0


@dataclass
class KMeansResult:
    labels: np.ndarray
    centroids: np.ndarray
    inertia: float
    iterations: int


def farthest_point_init(points: np.ndarray, k: int, seed: int) -> np.ndarray:
    """First center drawn from the seed, each next one the point farthest from all chosen"""
    rng = np.random.default_rng(seed)
    chosen = [int(rng.integers(len(points)))]
    d2 = np.sum((points - points[chosen[0]]) ** 2, axis=1)
    for _ in range(1, k):
        nxt = int(np.argmax(d2))
        chosen.append(nxt)
        d2 = np.minimum(d2, np.sum((points - points[nxt]) ** 2, axis=1))
    return points[chosen].copy()


def kmeans(points, k: int = 5, seed: int = 0, max_iters: int = 100) -> KMeansResult:
    points = np.asarray(points, dtype=float)
    points = points.reshape(len(points), -1)
    if k < 1 or k > len(points):
        raise KTooLarge(k, len(points))
    km = KMeans(n_clusters=k, init=farthest_point_init(points, k, seed), n_init=1,
                max_iter=max_iters, tol=0.0, algorithm="lloyd")
    labels = km.fit_predict(points)
    return KMeansResult(labels.astype(int), km.cluster_centers_.copy(), float(km.inertia_), int(km.n_iter_))


def build_latent_map(model: AeModel, data, names: Sequence[str], k: int = 5, seed: int = 0,
                     max_iters: int = 100) -> LatentMap:
    coords = encode(model, data).reshape(len(names), -1)
    result = kmeans(coords, k, seed, max_iters)
    return LatentMap(list(names), coords, result.labels, result.centroids, result.inertia)


@dataclass
class Strip:
    points: np.ndarray                 # (n, z)
    vectors: np.ndarray                # (n, D)
    structures: List[FullBodyStructure]
    masks: np.ndarray                  # (n, slots) activity
    births: List[List[int]] = field(default_factory=list)
    deaths: List[List[int]] = field(default_factory=list)


def decoded_mask(vector, input_kind: str = "screw", screw: ScrewConfig = ScrewConfig(),
                 dh: DhConfig = DhConfig()) -> np.ndarray:
    if input_kind == "dh":
        half = dh_clamp(dh_unflatten(vector, activity_tolerance=dh.activity_tolerance), dh.clamp_threshold)
        return np.linalg.norm(half.params, axis=1) >= dh.activity_tolerance
    return activity_mask(vector, screw.epsilon)


def interpolate_strip(model: AeModel, z_a, z_b, n: int = 8, input_kind: str = "screw",
                      screw: ScrewConfig = ScrewConfig(), dh: DhConfig = DhConfig()) -> Strip:
    """n evenly spaced decodes from z_a to z_b inclusive, with per-step joint births and deaths"""
    if n < 2:
        raise ValueError(f"Strip needs at least 2 points, got {n}")
    z_a = np.asarray(z_a, dtype=float)
    z_b = np.asarray(z_b, dtype=float)
    t = np.linspace(0.0, 1.0, n)[:, None]
    points = (1.0 - t) * z_a + t * z_b
    points[0], points[-1] = z_a, z_b
    vectors = decode(model, points).reshape(n, -1)
    structures = [vector_to_structure(v, input_kind, screw, dh) for v in vectors]
    masks = np.array([decoded_mask(v, input_kind, screw, dh) for v in vectors])
    births = [[]] + [list(np.flatnonzero(masks[i] & ~masks[i - 1])) for i in range(1, n)]
    deaths = [[]] + [list(np.flatnonzero(~masks[i] & masks[i - 1])) for i in range(1, n)]
    return Strip(points, vectors, structures, masks, births, deaths)


def map_frame(latent_map: LatentMap, latent_dim: int = 2) -> pd.DataFrame:
    dim = latent_map.latent_dim or latent_dim
    columns = ["name"] + [f"z{i + 1}" for i in range(dim)] + ["cluster"]
    if not latent_map.names:
        return pd.DataFrame(columns=columns)
    data: Dict[str, object] = {"name": latent_map.names}
    for i in range(dim):
        data[f"z{i + 1}"] = latent_map.coords[:, i]
    data["cluster"] = latent_map.labels
    return pd.DataFrame(data, columns=columns)


def _write_svg(fig, file_path: str):
    try:
        fig.savefig(file_path, format="svg")
    except OSError as e:
        raise ExportError(f"Cannot write figure {file_path}: {e}")
    finally:
        plt.close(fig)


def export_map(latent_map: LatentMap, path_prefix: str) -> Dict[str, str]:
    """CSV always; SVG scatter only for 2-D latents"""
    outputs = {"csv": f"{path_prefix}.csv"}
    try:
        map_frame(latent_map).to_csv(outputs["csv"], index=False, float_format="%.17g")
    except OSError as e:
        raise ExportError(f"Cannot write latent map {outputs['csv']}: {e}")
    if latent_map.latent_dim not in (0, 2):
        return outputs

    outputs["svg"] = f"{path_prefix}.svg"
    fig, ax = plt.subplots(figsize=(7, 6))
    for cluster in np.unique(latent_map.labels):
        members = latent_map.labels == cluster
        ax.scatter(latent_map.coords[members, 0], latent_map.coords[members, 1],
                   color=CLUSTER_COLORS[int(cluster) % len(CLUSTER_COLORS)], label=f"cluster {cluster}")
    for name, (x, y) in zip(latent_map.names, latent_map.coords[:, :2] if latent_map.names else []):
        ax.annotate(name, (x, y), fontsize=7, xytext=(3, 3), textcoords="offset points")
    if len(latent_map.centroids):
        ax.scatter(latent_map.centroids[:, 0], latent_map.centroids[:, 1], marker="x", color="black")
    ax.set_xlabel("z1")
    ax.set_ylabel("z2")
    ax.set_title("Latent design space")
    if latent_map.names:
        ax.legend(loc="best", fontsize=8)
    _write_svg(fig, outputs["svg"])
    return outputs


def load_map_csv(file_path: str) -> LatentMap:
    df = pd.read_csv(file_path)
    z_cols = [c for c in df.columns if c.startswith("z")]
    coords = df[z_cols].to_numpy(dtype=float)
    labels = df["cluster"].to_numpy(dtype=int)
    centroids = np.array([coords[labels == c].mean(axis=0) for c in np.unique(labels)]).reshape(-1, len(z_cols))
    return LatentMap(df["name"].astype(str).tolist(), coords, labels, centroids)


def strip_frame(strip: Strip) -> pd.DataFrame:
    rows = []
    for i, (point, mask) in enumerate(zip(strip.points, strip.masks)):
        row: Dict[str, object] = {"step": i}
        row.update({f"z{k + 1}": float(v) for k, v in enumerate(point)})
        row["active_slots"] = int(mask.sum())
        row["mask"] = "".join("1" if m else "0" for m in mask)
        row["births"] = " ".join(str(s) for s in strip.births[i])
        row["deaths"] = " ".join(str(s) for s in strip.deaths[i])
        rows.append(row)
    return pd.DataFrame(rows)


def export_strip(strip: Strip, path_prefix: str) -> Dict[str, str]:
    """CSV of masks and a frontal (y, z) view of the active joint anchors per step"""
    outputs = {"csv": f"{path_prefix}.csv", "svg": f"{path_prefix}.svg"}
    try:
        strip_frame(strip).to_csv(outputs["csv"], index=False)
    except OSError as e:
        raise ExportError(f"Cannot write strip {outputs['csv']}: {e}")

    n = len(strip.structures)
    fig, axes = plt.subplots(1, n, figsize=(1.8 * n, 3.2), sharex=True, sharey=True)
    for i, (ax, structure) in enumerate(zip(np.atleast_1d(axes), strip.structures)):
        joints = structure.joints()
        for index, active in enumerate(joints):
            q = active.joint.q
            parent = structure.parents[index]
            start = joints[parent].joint.q if parent >= 0 else np.zeros(3)
            ax.plot([start[1], q[1]], [start[2], q[2]], color="#cccccc", linewidth=1)
            ax.scatter([q[1]], [q[2]], s=14, color=GROUP_COLORS.get(active.group.kind, "#000000"))
        ax.set_title(f"{i}: {structure.n_joints}j", fontsize=8)
        ax.set_aspect("equal")
        ax.set_xticks([])
        ax.set_yticks([])
    _write_svg(fig, outputs["svg"])
    return outputs
