"""
Run manifests: what a stage was run with and what it wrote.
"""

import datetime
import json
import os
from typing import Dict, List, Optional, Sequence

MANIFEST_NAME = "manifest.json"


def manifest_path(stage_dir: str) -> str:
    return os.path.join(stage_dir, MANIFEST_NAME)


def get_manifest(stage_dir: str) -> Dict:
    """Manifest of a stage directory, empty if none was written"""
    path = manifest_path(stage_dir)
    if os.path.exists(path):
        try:
            with open(path, 'r') as f:
                return json.load(f)
        except (OSError, json.JSONDecodeError):
            return {}
    return {}


def _save(stage_dir: str, manifest: Dict):
    try:
        with open(manifest_path(stage_dir), 'w') as f:
            json.dump(manifest, f, indent=2)
    except OSError as e:
        print(f"⚠️ Warning: Could not save run manifest: {e}")


def start_manifest(stage_dir: str, stage: str, config: Dict[str, str],
                   seeds: Sequence[int] = (), argv: Optional[List[str]] = None) -> Dict:
    """Echo the resolved configuration and seeds before the stage writes anything"""
    manifest = {
        "stage": stage,
        "started": datetime.datetime.now().isoformat(timespec="seconds"),
        "argv": list(argv or []),
        "config": dict(sorted(config.items())),
        "seeds": [int(s) for s in seeds],
        "outputs": [],
        "status": "running",
    }
    _save(stage_dir, manifest)
    return manifest


def mark_output_written(stage_dir: str, path: str):
    manifest = get_manifest(stage_dir)
    outputs = manifest.setdefault("outputs", [])
    name = os.path.relpath(path, stage_dir)
    if name not in outputs:
        outputs.append(name)
    _save(stage_dir, manifest)


def finish_manifest(stage_dir: str, stats: Dict):
    manifest = get_manifest(stage_dir)
    manifest["finished"] = datetime.datetime.now().isoformat(timespec="seconds")
    manifest["stats"] = {k: v for k, v in stats.items() if isinstance(v, (int, float, str, bool))}
    manifest["status"] = "failed" if stats.get("error") else "done"
    _save(stage_dir, manifest)
