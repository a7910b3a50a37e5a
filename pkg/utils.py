from typing import Dict, List, Optional, Sequence, Tuple
import datetime
import json
import os

import numpy as np
import pandas as pd

from errors import ConfigError, ExportError

"""Timestamped run directory name, e.g. 20260101_120000"""
def run_timestamp() -> str:
    return datetime.datetime.now().strftime("%Y%m%d_%H%M%S")

"""Create (if needed) and return runs/<timestamp>/<stage>"""
def stage_dir(output_root: str, run_name: str, stage: str) -> str:
    path = os.path.join(output_root, run_name, stage)
    os.makedirs(path, exist_ok=True)
    return path

def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    return value

"""Write a JSON document; numpy values are converted"""
def save_json(data, output_path: str, quiet: bool = False) -> str:
    try:
        with open(output_path, 'w', encoding='utf-8') as f:
            json.dump(_jsonable(data), f, indent=2, ensure_ascii=False)
    except (OSError, TypeError) as e:
        print(f"❌ Export failed: {e}")
        raise ExportError(f"Cannot write {output_path}: {e}")
    if not quiet:
        print(f"✅ Exported: {output_path}")
    return output_path

def load_json(path: str) -> Dict:
    with open(path, 'r', encoding='utf-8') as f:
        return json.load(f)

"""Write a DataFrame as CSV with full float precision"""
def save_frame(df: pd.DataFrame, output_path: str, quiet: bool = False) -> str:
    try:
        df.to_csv(output_path, index=False, float_format="%.17g")
    except OSError as e:
        print(f"❌ Export failed: {e}")
        raise ExportError(f"Cannot write {output_path}: {e}")
    if not quiet:
        print(f"✅ Exported: {output_path} ({len(df)} rows)")
    return output_path

"""One row per design: name followed by the feature columns"""
def matrix_frame(names: Sequence[str], matrix: np.ndarray, columns: Sequence[str]) -> pd.DataFrame:
    matrix = np.asarray(matrix, dtype=float).reshape(len(names), len(columns))
    df = pd.DataFrame(matrix, columns=list(columns))
    df.insert(0, "name", list(names))
    return df

"""Read a matrix written by matrix_frame back as (names, matrix, columns)"""
def read_matrix(path: str) -> Tuple[List[str], np.ndarray, List[str]]:
    df = pd.read_csv(path)
    if "name" not in df.columns:
        raise ConfigError(f"{path}: missing 'name' column")
    columns = [c for c in df.columns if c != "name"]
    return df["name"].astype(str).tolist(), df[columns].to_numpy(dtype=float), columns

"""Statistics about a curated dataset"""
def print_dataset_stats(report: Dict):
    robots = report.get("robots", {})
    if not robots:
        print("📊 Dataset is empty")
        return

    types: Dict[str, int] = {}
    padded = 0
    warned = 0
    for entry in robots.values():
        types[entry["type"]] = types.get(entry["type"], 0) + 1
        padded += len(entry["padded_slots"])
        warned += 1 if entry["warnings"] else 0
    joints = [entry["n_joints"] for entry in robots.values()]

    print(f"📊 Dataset Statistics:")
    print(f"  Total robots: {len(robots)}")
    print(f"  Types: {types}")
    print(f"  Joints per robot: min {min(joints)}, max {max(joints)}, mean {np.mean(joints):.1f}")
    print(f"  Padded slots: {padded} ({padded / len(robots):.1f} per robot)")
    print(f"  Asymmetric sources: {warned}")
    if report.get("failures"):
        print(f"  Failed records: {len(report['failures'])}")

"""Stage summary in the same layout for every CLI stage"""
def print_summary(title: str, stats: Dict, extra: Optional[Dict] = None):
    print(f"\n📊 {title} Summary:")
    for key in ("processed", "failed", "skipped"):
        if key in stats:
            print(f"  {key.capitalize()}: {stats[key]}")
    for key, value in (extra or {}).items():
        print(f"  {key}: {value}")
