"""``pasta infer|train|eval|bench|pcc``"""

from __future__ import annotations

import argparse
import sys
import warnings
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import bench as bench_mod
from .analysis import subband_pcc, temporal_features, write_pcc
from .config_io import read_kv
from .datasets import load_scene, load_training_set, make_synthetic_scene, scene_dirs
from .hdr_io import GT_FILE, make_inputs, mu_law, write_hdr, write_ppm
from .metrics import scene_metrics, write_metrics_csv
from .model import MODEL_KEYS, SAMPLINGS, ModelConfig, PASTANet, load_checkpoint
from .training import TRAIN_KEYS, TrainConfig, train_loop


# ------------------------------------------------------------------ configuration

def load_config_file(path) -> tuple[dict, dict]:
    """Split a ``key = value`` file into model and training overrides."""
    values = read_kv(path, allowed=set(MODEL_KEYS) | set(TRAIN_KEYS))
    return ({k: v for k, v in values.items() if k in MODEL_KEYS},
            {k: v for k, v in values.items() if k in TRAIN_KEYS})


def resolve_model_config(file_values: Optional[dict] = None, variant: Optional[str] = None,
                         tiny: Optional[bool] = None) -> ModelConfig:
    """Preset row chosen by ``variant``/``tiny`` (flags beat the file), then explicit file overrides."""
    values = dict(file_values or {})
    v = variant or values.pop("variant", "pasta-i")
    t = bool(tiny) if tiny else bool(values.pop("tiny", False))
    values.pop("variant", None)
    values.pop("tiny", None)
    return ModelConfig.preset(v, t, **values)


def resolve_train_config(file_values: Optional[dict] = None, seed: Optional[int] = None,
                         **overrides) -> TrainConfig:
    values = dict(file_values or {})
    if seed is not None:
        values["seed"] = seed
    values.update({k: v for k, v in overrides.items() if v is not None})
    return TrainConfig.desk(**values)


def _explicit_model_config(config_path, variant, tiny) -> Optional[ModelConfig]:
    if config_path is None and variant is None and not tiny:
        return None
    model_values = load_config_file(config_path)[0] if config_path else {}
    return resolve_model_config(model_values, variant, tiny)


def _model(checkpoint, expected: Optional[ModelConfig], seed: int) -> PASTANet:
    if checkpoint is not None:
        return load_checkpoint(checkpoint, expected)[0]
    cfg = expected or ModelConfig.preset()
    warnings.warn("no checkpoint given; using untrained weights", RuntimeWarning, stacklevel=2)
    return PASTANet(cfg, seed=seed)


# ------------------------------------------------------------------ commands

def _predict(model: PASTANet, x: np.ndarray, mem_cap_bytes: Optional[int]) -> np.ndarray:
    if mem_cap_bytes is None:
        return model.predict(x)
    return bench_mod.capped_predict(model, x, mem_cap_bytes)[0]


def cmd_infer(scene_dir, checkpoint=None, out_path=None, config_path=None, variant=None,
              tiny=False, seed: int = 0, mem_cap_bytes: Optional[int] = None) -> tuple[Path, Path]:
    """Write ``<out>/<scene>.pfm`` and a mu-law 8-bit preview ``<out>/<scene>_preview.ppm``."""
    model = _model(checkpoint, _explicit_model_config(config_path, variant, tiny), seed)
    scene = load_scene(scene_dir)
    hdr = _predict(model, scene.inputs[None], mem_cap_bytes)[0]
    out = Path(out_path or ".")
    out.mkdir(parents=True, exist_ok=True)
    hdr_path = out / f"{scene.scene_id}.pfm"
    preview = out / f"{scene.scene_id}_preview.ppm"
    write_hdr(hdr_path, hdr)
    write_ppm(preview, mu_law(hdr), bits=8)
    return hdr_path, preview


def cmd_train(data_dir, config_path=None, out_dir="runs/train", seed=None, variant=None,
              tiny=False, resume=None, iters=None, batch=None, progress=None):
    model_values, train_values = load_config_file(config_path) if config_path else ({}, {})
    tcfg = resolve_train_config(train_values, seed, total_iters=iters, batch=batch)
    mcfg = resolve_model_config(model_values, variant, tiny)
    scenes = load_training_set(data_dir)
    return train_loop(scenes, None, tcfg, out_dir=out_dir, resume=resume, model_config=mcfg,
                      progress=progress)


def cmd_eval(data_dir, checkpoint=None, out_dir="runs/eval", config_path=None, variant=None,
             tiny=False, seed: int = 0, mem_cap_bytes: Optional[int] = None) -> Path:
    """One CSV row per scene plus a mean row; scenes without GT are skipped and marked."""
    model = _model(checkpoint, _explicit_model_config(config_path, variant, tiny), seed)
    rows = []
    for d in scene_dirs(data_dir):
        if not (d / GT_FILE).is_file():
            warnings.warn(f"{d.name}: no {GT_FILE}, skipped", RuntimeWarning, stacklevel=2)
            rows.append({"scene_id": d.name, "status": "skipped: missing gt"})
            continue
        scene = load_scene(d, require_gt=True)
        pred = _predict(model, scene.inputs[None], mem_cap_bytes)[0]
        rows.append({"scene_id": scene.scene_id, "status": "ok", **scene_metrics(pred, scene.gt)})
    return write_metrics_csv(Path(out_dir) / "metrics.csv", rows)


def cmd_bench(config: Optional[ModelConfig] = None, variants: Sequence[str] = SAMPLINGS,
              resolutions=bench_mod.DESK_RESOLUTIONS, trials: int = bench_mod.MIN_TRIALS,
              mem_cap_bytes: Optional[int] = None, out_dir="runs/bench", seed: int = 0,
              progress=None):
    """Run the variant x resolution grid and write ``bench.csv``; returns ``(path, reports)``."""
    config = config or ModelConfig.preset()
    for v in variants:
        if v not in SAMPLINGS:
            raise ValueError(f"unknown sampling variant {v!r}; choose from {SAMPLINGS}")
    reports = bench_mod.run_bench(config, variants, resolutions, trials, mem_cap_bytes, seed, progress)
    return bench_mod.write_bench_csv(Path(out_dir) / "bench.csv", reports), reports


def cmd_pcc(checkpoint_or_random="random", input_dir=None, K: Optional[int] = None,
            out_dir="runs/pcc", config: Optional[ModelConfig] = None, seed: int = 0,
            size: int = 128):
    """Subband correlation of ``F_t``. Without ``input_dir`` a synthetic scene of ``size`` pixels is used."""
    if checkpoint_or_random in (None, "random"):
        model = PASTANet(config or ModelConfig.preset(), seed=seed)
    else:
        model = load_checkpoint(checkpoint_or_random, config)[0]
    if input_dir is not None:
        stack = load_scene(input_dir).inputs
    else:
        stack = make_inputs(make_synthetic_scene(size, size, seed=seed)[0]).as_array()
    depth = model.cfg.K if K is None else K
    report = subband_pcc(temporal_features(model, stack), depth)
    npz, table = write_pcc(out_dir, report)
    return report, npz, table


# ------------------------------------------------------------------ argparse

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value file with model and training settings")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", help="output directory")
    p.add_argument("--variant", choices=["pasta-i", "pasta-u"], default=None)
    p.add_argument("--tiny", action="store_true", help="use the tiny configuration row")
    p.add_argument("--mem-cap-bytes", type=int, default=None,
                   help="soft cap on traced memory; exceeding it is reported as OOM")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pasta", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("infer", help="reconstruct the HDR image of one scene")
    p.add_argument("scene_dir")
    p.add_argument("--checkpoint")
    _common(p)

    p = sub.add_parser("train", help="train on a directory of scenes")
    p.add_argument("data_dir")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--iters", type=int, help="total iterations (overrides the config)")
    p.add_argument("--batch", type=int)
    _common(p)

    p = sub.add_parser("eval", help="PSNR/SSIM over a directory of scenes")
    p.add_argument("data_dir")
    p.add_argument("--checkpoint")
    _common(p)

    p = sub.add_parser("bench", help="latency and peak memory per sampling variant")
    p.add_argument("--variants", default=",".join(SAMPLINGS))
    p.add_argument("--resolutions", default=",".join(f"{h}x{w}" for h, w in bench_mod.DESK_RESOLUTIONS))
    p.add_argument("--trials", type=int, default=bench_mod.MIN_TRIALS)
    _common(p)

    p = sub.add_parser("pcc", help="subband correlation of the temporal features")
    p.add_argument("--checkpoint", default="random")
    p.add_argument("--input", help="scene directory (default: a synthetic scene)")
    p.add_argument("--K", type=int, default=None)
    _common(p)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    seed = 0 if args.seed is None else args.seed
    try:
        if args.command == "infer":
            hdr, preview = cmd_infer(args.scene_dir, args.checkpoint, args.out or ".", args.config,
                                     args.variant, args.tiny, seed, args.mem_cap_bytes)
            print(f"wrote {hdr} and {preview}")
        elif args.command == "train":
            result = cmd_train(args.data_dir, args.config, args.out or "runs/train", args.seed,
                               args.variant, args.tiny, args.resume, args.iters, args.batch,
                               progress=lambda r: print(
                                   f"iter {r['iter']} lr {r['lr']:.3g} total {r['total']:.5f}", flush=True))
            print(f"wrote {result.checkpoint}")
        elif args.command == "eval":
            path = cmd_eval(args.data_dir, args.checkpoint, args.out or "runs/eval", args.config,
                            args.variant, args.tiny, seed, args.mem_cap_bytes)
            print(f"wrote {path}")
        elif args.command == "bench":
            model_values = load_config_file(args.config)[0] if args.config else {}
            cfg = resolve_model_config(model_values, args.variant, args.tiny)
            path, _ = cmd_bench(cfg, [v.strip() for v in args.variants.split(",")],
                                bench_mod.parse_resolutions(args.resolutions), args.trials,
                                args.mem_cap_bytes, args.out or "runs/bench", seed,
                                progress=lambda r: print(
                                    f"{r.variant} {r.height}x{r.width}: {r.status}", flush=True))
            print(f"wrote {path}")
        elif args.command == "pcc":
            cfg = _explicit_model_config(args.config, args.variant, args.tiny)
            report, npz, table = cmd_pcc(args.checkpoint, args.input, args.K, args.out or "runs/pcc",
                                         cfg, seed)
            for row in report.summary:
                print(f"level {row['level']}: mean |PCC| {row['mean_abs_pcc']:.4f}")
            print(f"wrote {npz} and {table}")
    except (ValueError, FileNotFoundError, MemoryError) as exc:
        print(f"pasta {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
