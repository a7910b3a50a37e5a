#!/usr/bin/env python3
"""
Command-line pipeline: curate robot records, train the latent design space,
optimize designs for human motions and analyse the results.

Every stage writes into runs/<timestamp>/<stage>/ together with a manifest
echoing the resolved configuration and seeds.

Exit codes: 0 success, 1 configuration or input error, 2 partial failure.
"""

import argparse
import glob
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from concurrent.futures.process import BrokenProcessPool
from dataclasses import replace
from typing import Dict, List, Optional, Sequence, Tuple

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

from config import PipelineConfig, apply_overrides, load_config
from dataset import curate_folder, synthesize_robots, write_records
from dh_model import dh_columns
from errors import ConfigError, DimensionMismatch, ExportError, ObjectiveFailure, PipelineError
from latent_tools import build_latent_map, export_map, export_strip, interpolate_strip
from manifold import (LatentDecoder, encode, grid_iso, history_frame, load_checkpoint,
                      save_checkpoint, train, vector_to_structure)
from motion_io import CLIP_PATTERNS, MotionClip, load_clip, save_bvh, synthesize_clip
from retarget import MotionObjective, RetargetSpec, evaluate_structure, report_columns, report_to_dict
from run_manifest import finish_manifest, mark_output_written, start_manifest
from screw_model import feature_columns, structure_to_dict
from utils import (load_json, matrix_frame, print_dataset_stats, print_summary, read_matrix,
                   run_timestamp, save_frame, save_json, stage_dir)
from voo import budget_summary, random_search_run, run_log, run_seed, trace_statistics, voo_run

REPRESENTATIONS = {"screw": feature_columns, "dh": dh_columns}


class RawDecoder:
    """Identity 'decoder' for optimizing the feature vector directly"""

    def __init__(self, input_kind: str, cfg: PipelineConfig):
        self.input_kind = input_kind
        self.screw = cfg.screw
        self.dh = cfg.dh

    def vector(self, z) -> np.ndarray:
        return np.asarray(z, dtype=float)

    def __call__(self, z):
        return vector_to_structure(self.vector(z), self.input_kind, self.screw, self.dh)


def _print_config(stage: str, cfg: PipelineConfig, sections: Sequence[str]):
    print(f"🚀 Stage: {stage}")
    for key, value in cfg.flat().items():
        if key.split("_", 1)[0] in sections:
            print(f"  {key}={value}")


def _record(out_dir: str, path: str) -> str:
    mark_output_written(out_dir, path)
    return path


def _representation_of(columns: Sequence[str]) -> str:
    for kind, columns_of in REPRESENTATIONS.items():
        if list(columns) == columns_of():
            return kind
    raise DimensionMismatch(len(feature_columns()), len(columns))


def _load_matrix(path: Optional[str], rep: Optional[str] = None) -> Tuple[List[str], np.ndarray, str]:
    if not path:
        raise ConfigError("No curated dataset given (use --data)")
    if not os.path.exists(path):
        raise ConfigError(f"Curated dataset not found: {path}")
    names, matrix, columns = read_matrix(path)
    kind = _representation_of(columns)
    if rep and rep != kind:
        raise DimensionMismatch(len(REPRESENTATIONS[rep]()), len(columns))
    if not names:
        raise ConfigError(f"Curated dataset is empty: {path}")
    return names, matrix, kind


def _load_motions(cfg: PipelineConfig, paths: Sequence[str]) -> Dict[str, MotionClip]:
    paths = list(paths) or list(cfg.data.motions)
    if not paths:
        raise ConfigError("No motions given (use --motions or DATA_MOTIONS)")
    motions = {}
    for path in paths:
        if not os.path.exists(path):
            raise ConfigError(f"Motion file not found: {path}")
        name = os.path.splitext(os.path.basename(path))[0]
        if path.lower().endswith(".bvh"):
            clip = load_clip(path, axis_order=cfg.retarget.axis_order, stride=cfg.retarget.stride,
                             max_frames=cfg.retarget.max_frames)
        else:
            clip = load_clip(path)
        motions[name] = clip
        print(f"  📄 Motion {name}: {clip.n_frames} frames")
    return motions


def _spec(cfg: PipelineConfig) -> RetargetSpec:
    return RetargetSpec.from_config(cfg.retarget, cfg.ik)


def structure_document(vector, representation: str, cfg: PipelineConfig, structure,
                       latent=None, report=None) -> Dict:
    doc = {
        "representation": representation,
        "vector": [float(v) for v in np.asarray(vector).reshape(-1)],
        "epsilon": cfg.screw.epsilon,
        "dh_clamp_threshold": cfg.dh.clamp_threshold,
        "latent": None if latent is None else [float(v) for v in np.asarray(latent).reshape(-1)],
        "structure": structure_to_dict(structure),
    }
    if report is not None:
        doc["report"] = report_to_dict(report)
    return doc


def cmd_curate(cfg: PipelineConfig, args, out_dir: str) -> Dict:
    records_dir = args.records or cfg.data.records_dir
    result = curate_folder(records_dir, cfg.screw, cfg.dh)
    stats = {"processed": len(result.robots), "failed": len(result.failures), "skipped": 0}
    if not result.robots:
        if not result.failures:
            raise ConfigError(f"No records found in {records_dir}")
        return stats

    _record(out_dir, save_frame(matrix_frame(result.names, result.matrix, feature_columns()),
                                os.path.join(out_dir, "curated_screw.csv")))
    _record(out_dir, save_frame(matrix_frame(result.names, result.dh_matrix, dh_columns()),
                                os.path.join(out_dir, "curated_dh.csv")))
    report = result.report()
    _record(out_dir, save_json(report, os.path.join(out_dir, "provenance.json")))
    print_dataset_stats(report)
    return stats


def cmd_train(cfg: PipelineConfig, args, out_dir: str) -> Dict:
    names, matrix, kind = _load_matrix(args.data, args.rep)
    print(f"📁 Training {kind} autoencoder on {len(names)} designs "
          f"(z={cfg.train.latent_dim}, iso_weight={cfg.train.iso_weight})")
    result = train(matrix, cfg.train, kind, verbose=True)
    _record(out_dir, save_frame(history_frame(result.history), os.path.join(out_dir, "history.csv")))
    checkpoint = os.path.join(out_dir, "model.pt")
    save_checkpoint(result, checkpoint)
    _record(out_dir, checkpoint)
    print(f"✅ Checkpoint: {checkpoint}")
    return {"processed": len(names), "failed": 0, "final_mse": result.final_mse,
            "grid_iso": grid_iso(result.model, matrix)}


def _optimize_run(job: Tuple) -> Tuple[int, int, pd.DataFrame, np.ndarray, float]:
    run_index, seed, voo_cfg, decoder, motions, spec, search = job
    objective = MotionObjective(decoder, motions, spec)
    runner = random_search_run if search == "random" else voo_run
    result = runner(voo_cfg, objective, seed)
    log = run_log(result.state, [report_columns(report) for report in objective.reports])
    return run_index, seed, log, result.best_point, result.best_value


def cmd_optimize(cfg: PipelineConfig, args, out_dir: str) -> Dict:
    motions = _load_motions(cfg, args.motions)
    spec = _spec(cfg)
    if args.raw_space:
        rep = args.rep or cfg.data.representation
        decoder = RawDecoder(rep, cfg)
        dim = len(REPRESENTATIONS[rep]())
        print(f"📁 Optimizing the {dim}-dim {rep} vector directly")
    else:
        if not args.checkpoint:
            raise ConfigError("optimize needs --checkpoint unless --raw-space is set")
        trained = load_checkpoint(args.checkpoint)
        if args.rep and args.rep != trained.input_kind:
            raise ConfigError(f"--rep {args.rep} does not match the {trained.input_kind} checkpoint")
        rep = trained.input_kind
        decoder = LatentDecoder(trained.model, rep, cfg.screw, cfg.dh)
        dim = trained.model.latent_dim
        print(f"📁 Optimizing the {dim}-dim latent space of {args.checkpoint} (frozen)")

    voo_cfg = replace(cfg.voo, dim=dim)
    seeds = [run_seed(cfg.run.master_seed, i) for i in range(cfg.run.n_runs)]
    jobs = [(i, seed, voo_cfg, decoder, motions, spec, args.search) for i, seed in enumerate(seeds)]

    results, failed = [], 0
    if cfg.run.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.run.workers) as pool:
            futures = [pool.submit(_optimize_run, job) for job in jobs]
            for job, future in zip(jobs, futures):
                try:
                    results.append(future.result())
                except (ObjectiveFailure, BrokenProcessPool) as e:
                    failed += 1
                    print(f"❌ Run {job[0]} (seed {job[1]}) failed: {e}")
    else:
        for job in jobs:
            try:
                results.append(_optimize_run(job))
            except ObjectiveFailure as e:
                failed += 1
                print(f"❌ Run {job[0]} (seed {job[1]}) failed: {e}")

    rows = []
    for run_index, seed, log, best_point, best_value in results:
        _record(out_dir, save_frame(log, os.path.join(out_dir, f"run_{run_index:02d}.csv"), quiet=True))
        structure = decoder(best_point)
        report = evaluate_structure(structure, motions, spec)
        latent = None if args.raw_space else best_point
        doc = structure_document(decoder.vector(best_point), rep, cfg, structure, latent, report)
        _record(out_dir, save_json(doc, os.path.join(out_dir, f"best_{run_index:02d}.json"), quiet=True))
        rows.append({"run": run_index, "seed": seed, "best_value": best_value,
                     "pa_mpjpe": report.pa_mpjpe, "n_tot": report.n_tot})
        print(f"  ✅ Run {run_index} (seed {seed}): best {best_value:.4f} "
              f"(pa_mpjpe {report.pa_mpjpe:.4f}, n_tot {report.n_tot})")

    summary = pd.DataFrame(rows, columns=["run", "seed", "best_value", "pa_mpjpe", "n_tot"])
    _record(out_dir, save_frame(summary, os.path.join(out_dir, "summary.csv")))
    stats = {"processed": len(results), "failed": failed}
    if len(summary):
        stats["best_mean"] = float(summary["best_value"].mean())
        stats["best_std"] = float(summary["best_value"].std(ddof=0))
        print(f"📊 Best within budget: {stats['best_mean']:.4f} ± {stats['best_std']:.4f} "
              f"over {len(summary)} runs")
    return stats


def cmd_eval(cfg: PipelineConfig, args, out_dir: str) -> Dict:
    if not args.structure or not os.path.exists(args.structure):
        raise ConfigError(f"Structure file not found: {args.structure}")
    doc = load_json(args.structure)
    rep = doc.get("representation", "screw")
    if rep not in REPRESENTATIONS:
        raise ConfigError(f"Unknown representation {rep!r} in {args.structure}")
    motions = _load_motions(cfg, args.motions)
    structure = vector_to_structure(np.asarray(doc["vector"], dtype=float), rep, cfg.screw, cfg.dh)
    report = evaluate_structure(structure, motions, _spec(cfg))
    for name, value in report.per_motion.items():
        print(f"  📄 {name}: PA-MPJPE {value:.4f}")
    print(f"📊 PA-MPJPE {report.pa_mpjpe:.4f}, N_tot {report.n_tot}, "
          f"lambda {cfg.retarget.lambda_joint}, total {report.total:.4f}")
    if report.ik_unconverged:
        print(f"⚠️ IK did not converge on {report.ik_unconverged} frames")
    _record(out_dir, save_json(report_to_dict(report), os.path.join(out_dir, "report.json")))
    return {"processed": 1, "failed": 0, "total": report.total}


def cmd_oracle(cfg: PipelineConfig, args, out_dir: str) -> Dict:
    names, matrix, rep = _load_matrix(args.data, args.rep)
    motions = _load_motions(cfg, args.motions)
    spec = _spec(cfg)
    tcp: Dict[str, Optional[np.ndarray]] = {}
    if args.provenance and os.path.exists(args.provenance):
        for name, entry in load_json(args.provenance).get("robots", {}).items():
            tcp[name] = None if entry.get("tcp_right") is None else np.asarray(entry["tcp_right"])

    rows = []
    for name, vector in zip(names, matrix):
        structure = vector_to_structure(vector, rep, cfg.screw, cfg.dh, tcp.get(name))
        report = evaluate_structure(structure, motions, spec)
        rows.append({"name": name, "pa_mpjpe": report.pa_mpjpe, "n_tot": report.n_tot, "total": report.total})
        print(f"  📄 {name}: total {report.total:.4f} (n_tot {report.n_tot})")
    table = pd.DataFrame(rows, columns=["name", "pa_mpjpe", "n_tot", "total"])
    _record(out_dir, save_frame(table, os.path.join(out_dir, "oracle.csv")))
    mean = float(table["total"].mean())
    print(f"📊 Oracle mean objective: {mean:.4f}")
    return {"processed": len(rows), "failed": 0, "oracle_mean": mean}


def _traces_from_dir(runs_dir: str) -> np.ndarray:
    paths = sorted(glob.glob(os.path.join(runs_dir, "run_*.csv")))
    if not paths:
        raise ConfigError(f"No run logs in {runs_dir}")
    return np.array([pd.read_csv(p)["best_so_far"].to_numpy(dtype=float) for p in paths])


def cmd_compare(cfg: PipelineConfig, args, out_dir: str) -> Dict:
    traces: Dict[str, np.ndarray] = {}
    for entry in args.model:
        name, _, runs_dir = entry.partition("=")
        if not runs_dir:
            raise ConfigError(f"Expected NAME=DIR, got {entry!r}")
        traces[name] = _traces_from_dir(runs_dir)

    fig, ax = plt.subplots(figsize=(7, 4.5))
    for name, T in traces.items():
        stats = trace_statistics(T)
        _record(out_dir, save_frame(stats, os.path.join(out_dir, f"trace_{name}.csv")))
        line, = ax.plot(stats["eval_index"], stats["median"], label=name)
        ax.fill_between(stats["eval_index"], stats["q25"], stats["q75"], color=line.get_color(), alpha=0.25)
    if args.oracle:
        mean = float(pd.read_csv(args.oracle)["total"].mean())
        ax.axhline(mean, color="black", linestyle="--", label="oracle mean")
    ax.set_xlabel("evaluation")
    ax.set_ylabel("best-so-far objective")
    ax.legend(loc="best")
    svg = os.path.join(out_dir, "traces.svg")
    try:
        fig.savefig(svg, format="svg")
    except OSError as e:
        raise ExportError(f"Cannot write figure {svg}: {e}")
    finally:
        plt.close(fig)
    _record(out_dir, svg)

    summary = budget_summary(traces)
    _record(out_dir, save_frame(summary, os.path.join(out_dir, "budget_summary.csv")))
    for row in summary.itertuples():
        print(f"  📊 {row.model}: {row.best_mean:.4f} ± {row.best_std:.4f} ({row.runs} runs)")
    return {"processed": len(traces), "failed": 0}


def cmd_latent_map(cfg: PipelineConfig, args, out_dir: str) -> Dict:
    trained = load_checkpoint(args.checkpoint)
    names, matrix, _ = _load_matrix(args.data, trained.input_kind)
    latent_map = build_latent_map(trained.model, matrix, names, cfg.latent.k, args.seed,
                                  cfg.latent.kmeans_max_iters)
    for path in export_map(latent_map, os.path.join(out_dir, "latent_map")).values():
        _record(out_dir, path)
    print(f"📊 {len(names)} designs in {cfg.latent.k} clusters, inertia {latent_map.inertia:.4f}")
    return {"processed": len(names), "failed": 0}


def cmd_interp(cfg: PipelineConfig, args, out_dir: str) -> Dict:
    trained = load_checkpoint(args.checkpoint)
    names, matrix, rep = _load_matrix(args.data, trained.input_kind)
    for name in (args.source, args.target):
        if name not in names:
            raise ConfigError(f"Unknown robot {name!r}; known: {', '.join(names)}")
    coords = encode(trained.model, matrix).reshape(len(names), -1)
    steps = args.steps or cfg.latent.strip_steps
    strip = interpolate_strip(trained.model, coords[names.index(args.source)],
                              coords[names.index(args.target)], steps, rep, cfg.screw, cfg.dh)
    prefix = os.path.join(out_dir, f"strip_{args.source}_{args.target}")
    for path in export_strip(strip, prefix).values():
        _record(out_dir, path)
    for i, structure in enumerate(strip.structures):
        print(f"  🔄 step {i}: {structure.n_joints} joints, born {strip.births[i]}, died {strip.deaths[i]}")
    return {"processed": steps, "failed": 0}


def cmd_synthesize(cfg: PipelineConfig, args, out_dir: str) -> Dict:
    records = synthesize_robots(args.n, args.seed, args.jitter)
    paths = write_records(records, os.path.join(args.out, "robots"))
    for path in paths:
        _record(out_dir, path)
    motions_dir = os.path.join(args.out, "motions")
    os.makedirs(motions_dir, exist_ok=True)
    for pattern in CLIP_PATTERNS:
        path = os.path.join(motions_dir, f"{pattern}.bvh")
        save_bvh(synthesize_clip(pattern, args.frames), path)
        _record(out_dir, path)
    print(f"✅ {len(records)} robot records and {len(CLIP_PATTERNS)} clips written to {args.out}")
    return {"processed": len(records) + len(CLIP_PATTERNS), "failed": 0}


COMMANDS = {
    "curate": (cmd_curate, ("DATA", "SCREW", "DH")),
    "train": (cmd_train, ("TRAIN",)),
    "optimize": (cmd_optimize, ("SCREW", "DH", "IK", "RETARGET", "VOO", "RUN")),
    "eval": (cmd_eval, ("SCREW", "DH", "IK", "RETARGET")),
    "oracle": (cmd_oracle, ("SCREW", "DH", "IK", "RETARGET")),
    "compare": (cmd_compare, ()),
    "latent-map": (cmd_latent_map, ("LATENT",)),
    "interp": (cmd_interp, ("SCREW", "DH", "LATENT")),
    "synthesize": (cmd_synthesize, ()),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Humanoid upper-body design optimization pipeline")
    parser.add_argument("--config", help="Pipeline config file (dotenv syntax)")
    parser.add_argument("--output-root", help="Root of the runs/ directory tree")
    parser.add_argument("--run-name", help="Run directory name (default: timestamp)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("curate", help="Curate robot records into feature matrices")
    p.add_argument("--records", help="Folder of robot record files")

    p = sub.add_parser("train", help="Train the (isometric) autoencoder")
    p.add_argument("--data", help="Curated matrix CSV")
    p.add_argument("--rep", choices=sorted(REPRESENTATIONS))
    p.add_argument("--latent-dim", type=int, choices=(2, 3))
    p.add_argument("--iso-weight", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("optimize", help="Run the seeded optimizer runs")
    p.add_argument("--checkpoint")
    p.add_argument("--motions", nargs="*", default=[])
    p.add_argument("--raw-space", action="store_true", help="Optimize the feature vector directly")
    p.add_argument("--rep", choices=sorted(REPRESENTATIONS))
    p.add_argument("--search", choices=("voo", "random"), default="voo")
    p.add_argument("--runs", type=int)
    p.add_argument("--seed", type=int, help="Master seed")
    p.add_argument("--workers", type=int)
    p.add_argument("--iters", type=int)
    p.add_argument("--lambda", dest="lambda_joint", type=float)

    p = sub.add_parser("eval", help="Evaluate a structure file on motions")
    p.add_argument("--structure")
    p.add_argument("--motions", nargs="*", default=[])
    p.add_argument("--lambda", dest="lambda_joint", type=float)

    p = sub.add_parser("oracle", help="Evaluate every curated robot on motions")
    p.add_argument("--data")
    p.add_argument("--provenance", help="Provenance JSON carrying TCP positions")
    p.add_argument("--rep", choices=sorted(REPRESENTATIONS))
    p.add_argument("--motions", nargs="*", default=[])
    p.add_argument("--lambda", dest="lambda_joint", type=float)

    p = sub.add_parser("compare", help="Trace statistics over optimize runs")
    p.add_argument("--model", action="append", required=True, metavar="NAME=DIR")
    p.add_argument("--oracle", help="oracle.csv for the reference line")

    p = sub.add_parser("latent-map", help="Encode and cluster the curated designs")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data")
    p.add_argument("--k", type=int)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("interp", help="Decode a latent interpolation strip")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data")
    p.add_argument("--from", dest="source", required=True)
    p.add_argument("--to", dest="target", required=True)
    p.add_argument("--steps", type=int)

    p = sub.add_parser("synthesize", help="Write synthetic robot records and clips")
    p.add_argument("--out", default="data/synthetic")
    p.add_argument("--n", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jitter", type=float, default=1.0)
    p.add_argument("--frames", type=int, default=120)
    return parser


FLAG_KEYS = {
    "output_root": "DATA_OUTPUT_ROOT",
    "latent_dim": "TRAIN_LATENT_DIM",
    "iso_weight": "TRAIN_ISO_WEIGHT",
    "epochs": "TRAIN_EPOCHS",
    "runs": "RUN_N_RUNS",
    "workers": "RUN_WORKERS",
    "iters": "VOO_ITERS",
    "lambda_joint": "RETARGET_LAMBDA_JOINT",
    "k": "LATENT_K",
}


def resolve_config(args) -> PipelineConfig:
    """Config file, then environment, then command-line flags"""
    cfg = load_config(args.config)
    overrides = {key: str(getattr(args, flag)) for flag, key in FLAG_KEYS.items()
                 if getattr(args, flag, None) is not None}
    if args.command == "train" and args.seed is not None:
        overrides["TRAIN_SEED"] = str(args.seed)
    if args.command == "optimize" and args.seed is not None:
        overrides["RUN_MASTER_SEED"] = str(args.seed)
    return apply_overrides(cfg, overrides)


def run_command(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    out_dir = None
    try:
        cfg = resolve_config(args)
        handler, sections = COMMANDS[args.command]
        out_dir = stage_dir(cfg.data.output_root, args.run_name or run_timestamp(), args.command)
        seeds = []
        if args.command == "optimize":
            seeds = [run_seed(cfg.run.master_seed, i) for i in range(cfg.run.n_runs)]
        elif args.command == "train":
            seeds = [cfg.train.seed]
        start_manifest(out_dir, args.command, cfg.flat(), seeds, list(argv or sys.argv[1:]))
        _print_config(args.command, cfg, sections)
        stats = handler(cfg, args, out_dir)
    except (PipelineError, ExportError, OSError) as e:
        print(f"❌ {args.command} failed: {e}", file=sys.stderr)
        if out_dir:
            finish_manifest(out_dir, {"error": str(e)})
        return 1

    finish_manifest(out_dir, stats)
    print_summary(args.command, stats, {k: v for k, v in stats.items()
                                        if k not in ("processed", "failed", "skipped")})
    print(f"📁 Outputs: {out_dir}")
    return 2 if stats.get("failed", 0) > 0 else 0


def main():
    sys.exit(run_command())


if __name__ == "__main__":
    main()
