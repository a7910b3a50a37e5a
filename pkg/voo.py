"""
Voronoi Optimistic Optimization over a latent box.

Each step either draws a global uniform sample or tries to land inside the
best point's Voronoi cell: uniform candidates first, then (after n_switch
rejections) Gaussian candidates around the best point, accepting the first
whose squared distance to the best is below the squared distance from the
best to its nearest neighbor. All distances are squared Euclidean.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.spatial.distance import cdist

from config import VooConfig
from errors import ObjectiveFailure

SAMPLE_KINDS = ("init", "global", "local_uniform", "local_gaussian", "fallback")

Objective = Callable[[np.ndarray], float]


@dataclass
class VooState:
    rng: np.random.Generator
    points: List[np.ndarray] = field(default_factory=list)
    values: List[float] = field(default_factory=list)
    kinds: List[str] = field(default_factory=list)
    best: int = -1
    clamped: int = 0
    warned_clamp: bool = False

    def add(self, point: np.ndarray, value: float, kind: str):
        self.points.append(np.asarray(point, dtype=float))
        self.values.append(float(value))
        self.kinds.append(kind)
        # strict comparison keeps the earliest of tied values
        if self.best < 0 or value < self.values[self.best]:
            self.best = len(self.values) - 1

    @property
    def best_point(self) -> np.ndarray:
        return self.points[self.best]

    @property
    def best_value(self) -> float:
        return self.values[self.best]

    def trace(self) -> np.ndarray:
        return np.minimum.accumulate(np.asarray(self.values, dtype=float))


@dataclass
class VooResult:
    best_point: np.ndarray
    best_value: float
    trace: np.ndarray
    state: VooState
    seed: int


def run_seed(master_seed: int, run_index: int) -> int:
    return master_seed + run_index


def _evaluate(objective: Objective, point: np.ndarray) -> float:
    try:
        value = float(objective(point))
    except ObjectiveFailure:
        raise
    except Exception as e:
        raise ObjectiveFailure(point, e) from e
    if not math.isfinite(value):
        raise ObjectiveFailure(point, ValueError(f"non-finite objective value {value}"))
    return value


def _uniform(state: VooState, cfg: VooConfig) -> np.ndarray:
    lo, hi = cfg.bounds()
    return state.rng.uniform(lo, hi)


def voo_init(cfg: VooConfig, objective: Objective, seed: Optional[int] = None) -> VooState:
    state = VooState(np.random.default_rng(cfg.seed if seed is None else seed))
    for _ in range(cfg.n_init):
        point = _uniform(state, cfg)
        state.add(point, _evaluate(objective, point), "init")
    return state


def voronoi_radius(state: VooState) -> float:
    """Squared distance from the best point to its nearest other archive point"""
    archive = np.vstack(state.points)
    d2 = cdist(archive[state.best:state.best + 1], archive, metric="sqeuclidean")[0]
    d2[state.best] = np.inf
    return float(d2.min())


def sample_candidate(state: VooState, cfg: VooConfig) -> Tuple[np.ndarray, str]:
    if len(state.points) < 2 or state.rng.random() < cfg.p_global:
        return _uniform(state, cfg), "global"

    lo, hi = cfg.bounds()
    best = state.best_point
    r = voronoi_radius(state)
    sigma = cfg.sigma_c * math.sqrt(r / cfg.dim)
    for draw in range(cfg.max_inner):
        if draw < cfg.n_switch:
            candidate, kind = state.rng.uniform(lo, hi), "local_uniform"
        else:
            raw = best + sigma * state.rng.standard_normal(cfg.dim)
            candidate, kind = np.clip(raw, lo, hi), "local_gaussian"
            if np.any(candidate != raw):
                state.clamped += 1
                if not state.warned_clamp:
                    print(f"⚠️ Gaussian candidate clamped to the search box (sigma={sigma:.4f})")
                    state.warned_clamp = True
        if float(np.sum((candidate - best) ** 2)) < r:
            return candidate, kind
    return _uniform(state, cfg), "fallback"


def voo_step(state: VooState, cfg: VooConfig, objective: Objective) -> VooState:
    point, kind = sample_candidate(state, cfg)
    state.add(point, _evaluate(objective, point), kind)
    return state


def voo_run(cfg: VooConfig, objective: Objective, seed: Optional[int] = None,
            verbose: bool = False) -> VooResult:
    """n_init uniform starts followed by exactly cfg.iters VOO steps"""
    seed = cfg.seed if seed is None else seed
    state = voo_init(cfg, objective, seed)
    for step in range(cfg.iters):
        voo_step(state, cfg, objective)
        if verbose:
            print(f"🔄 step {step + 1}/{cfg.iters} [{state.kinds[-1]}] "
                  f"value={state.values[-1]:.4f} best={state.best_value:.4f}")
    return VooResult(state.best_point.copy(), state.best_value, state.trace(), state, seed)


def random_search_run(cfg: VooConfig, objective: Objective, seed: Optional[int] = None) -> VooResult:
    """Uniform sampling with the same budget and seed derivation as voo_run"""
    seed = cfg.seed if seed is None else seed
    state = VooState(np.random.default_rng(seed))
    for i in range(cfg.n_init + cfg.iters):
        point = _uniform(state, cfg)
        state.add(point, _evaluate(objective, point), "init" if i < cfg.n_init else "global")
    return VooResult(state.best_point.copy(), state.best_value, state.trace(), state, seed)


def run_log(state: VooState, extras: Optional[Sequence[Dict[str, float]]] = None) -> pd.DataFrame:
    """
    eval_index, z1..zd, value, best_so_far, sample_kind, then one column per
    key of `extras` (one dict per evaluation, e.g. the objective breakdown)
    """
    points = np.vstack(state.points) if state.points else np.zeros((0, 0))
    data: Dict[str, object] = {"eval_index": np.arange(len(state.values))}
    for k in range(points.shape[1]):
        data[f"z{k + 1}"] = points[:, k]
    data["value"] = state.values
    data["best_so_far"] = state.trace()
    data["sample_kind"] = state.kinds
    if extras is not None:
        if len(extras) != len(state.values):
            raise ValueError(f"{len(extras)} extra rows for {len(state.values)} evaluations")
        for key in (extras[0] if extras else {}):
            data[key] = [row[key] for row in extras]
    return pd.DataFrame(data)


def trace_statistics(traces: Sequence[Sequence[float]]) -> pd.DataFrame:
    """Per-evaluation mean, median, interquartile range and min-max over runs"""
    T = np.asarray(traces, dtype=float)
    if T.ndim != 2 or T.size == 0:
        raise ValueError("Expected a (runs, evaluations) array of traces")
    return pd.DataFrame({
        "eval_index": np.arange(T.shape[1]),
        "mean": T.mean(axis=0),
        "median": np.median(T, axis=0),
        "q25": np.percentile(T, 25, axis=0),
        "q75": np.percentile(T, 75, axis=0),
        "min": T.min(axis=0),
        "max": T.max(axis=0),
    })


def budget_summary(traces_by_model: Dict[str, Sequence[Sequence[float]]]) -> pd.DataFrame:
    """Best value within the budget: mean and std over runs per model"""
    rows = []
    for name, traces in traces_by_model.items():
        final = np.asarray(traces, dtype=float)[:, -1]
        rows.append({"model": name, "runs": len(final), "best_mean": float(final.mean()),
                     "best_std": float(final.std()), "best_min": float(final.min())})
    return pd.DataFrame(rows, columns=["model", "runs", "best_mean", "best_std", "best_min"])
