"""Command-line pipeline: data generation, oracle labeling, training, inference, evaluation.

One binary, one seed discipline: all randomness flows through --seed, every
subcommand echoes its fully resolved configuration to stderr as JSON, and all
outputs are deterministic files so a rerun with the same seed is byte-identical.

Exit codes: 0 success, 1 usage error, 2 data/model error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .degrade import (
    ManifestError,
    derive_seed,
    gen_dataset,
    label_manifest,
    read_manifest,
    read_meta,
    resolve_pair,
    synth_clean_image,
    write_meta,
)
from .features import extract_features
from .image_io import ImageError, load_image, save_image
from .metrics import mean_l1, psnr, recon_loss, ssim
from .planner import (
    ModelFormatError,
    ModulatorModel,
    load_modulator,
    load_scheduler,
    modulate,
    run_agent,
    save_model,
    schedule,
)
from .programs import RestorationProgram, category_to_path, execute, execute_fixed, save_program
from .strategies import DEFAULT_STRATEGIES, benchmark_strategies
from .tools import ConfigError, ToolConfig, default_config, load_config
from .training import TrainConfig, grad_check, train_stage1, train_stage2

_DATA_ERRORS = (ImageError, ManifestError, ModelFormatError, ConfigError, ValueError, OSError)


class _Parser(argparse.ArgumentParser):
    # argparse exits with code 2 on usage errors; this artifact reserves 2 for
    # data/model failures, so remap usage problems to exit code 1.
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _echo_config(command: str, resolved: dict) -> None:
    doc = {"command": command, **resolved}
    sys.stderr.write(json.dumps(doc, sort_keys=True, default=str) + "\n")


def _round_floats(obj, digits: int = 4):
    if isinstance(obj, float):
        return round(obj, digits)
    if isinstance(obj, dict):
        return {k: _round_floats(v, digits) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_round_floats(v, digits) for v in obj]
    return obj


def _dump_json(doc: dict, path: str | None, digits: int | None = 4) -> None:
    if digits is not None:
        doc = _round_floats(doc, digits)
    text = json.dumps(doc, sort_keys=True, indent=2) + "\n"
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    sys.stdout.write(text)


def _tool_config(args) -> ToolConfig:
    return load_config(args.tool_config) if args.tool_config else default_config()


def _train_config(args) -> TrainConfig:
    cfg = TrainConfig.from_json_file(args.train_config) if args.train_config else TrainConfig()
    if args.seed is not None:
        cfg = TrainConfig.from_dict({**cfg.to_dict(), "seed": args.seed})
    return cfg.validate()


# --- subcommands -------------------------------------------------------------


def _cmd_synth_clean(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    _echo_config("synth-clean", {"out": args.out, "n": args.n, "size": args.size, "seed": args.seed})
    if args.n < 1:
        raise ValueError(f"number of images must be positive, got {args.n}")
    for i in range(args.n):
        img = synth_clean_image(args.size, derive_seed(args.seed, i, "clean"))
        save_image(img, os.path.join(args.out, f"clean_{i:04d}.png"))
    return 0


def _cmd_gen_data(args) -> int:
    resolved = {
        "clean_dir": args.clean_dir,
        "out": args.out,
        "n": args.n,
        "crop": args.crop,
        "seed": args.seed,
    }
    _echo_config("gen-data", resolved)
    manifest = gen_dataset(args.clean_dir, args.out, args.n, crop=args.crop, seed=args.seed)
    write_meta(manifest, {"gen": resolved})
    sys.stdout.write(manifest + "\n")
    return 0


def _cmd_oracle(args) -> int:
    tool_cfg = _tool_config(args)
    resolved = {
        "manifest": args.manifest,
        "toolbox_size": args.toolbox_size,
        "tool_config_hash": tool_cfg.config_hash(),
    }
    _echo_config("oracle", resolved)
    label_manifest(args.manifest, tool_cfg, toolbox_size=args.toolbox_size)
    meta = read_meta(args.manifest)
    meta["oracle"] = resolved
    write_meta(args.manifest, meta)
    return 0


def _cmd_train_scheduler(args) -> int:
    tool_cfg = _tool_config(args)
    train_cfg = _train_config(args)
    _echo_config(
        "train-scheduler",
        {"manifest": args.manifest, "out": args.out, "train_config": train_cfg.to_dict(),
         "tool_config_hash": tool_cfg.config_hash()},
    )
    records = read_manifest(args.manifest)
    if any(r.gt_category is None for r in records):
        raise ManifestError("manifest has unlabeled rows; run the oracle first")
    feats = []
    labels = []
    for record in records:
        degraded, _ = resolve_pair(args.manifest, record)
        feats.append(extract_features(degraded).pooled)
        labels.append(record.gt_category)
    model, curve = train_stage1(np.asarray(feats), np.asarray(labels), train_cfg)
    save_model(model, args.out)
    _dump_json({"initial_loss": curve[0], "final_loss": curve[-1], "epochs": len(curve) - 1}, None)
    return 0


def _cmd_train_modulator(args) -> int:
    tool_cfg = _tool_config(args)
    train_cfg = _train_config(args)
    _echo_config(
        "train-modulator",
        {"manifest": args.manifest, "scheduler": args.scheduler, "out": args.out,
         "train_config": train_cfg.to_dict(), "tool_config_hash": tool_cfg.config_hash()},
    )
    scheduler = load_scheduler(args.scheduler)
    records = read_manifest(args.manifest)
    samples = [resolve_pair(args.manifest, record) for record in records]
    model, diagnostics = train_stage2(samples, scheduler, train_cfg, tool_cfg)
    save_model(model, args.out)
    _dump_json(
        {
            "final_loss": diagnostics["loss_curve"][-1],
            "final_mean_lambda": diagnostics["mean_lambda_curve"][-1],
            "epochs": len(diagnostics["loss_curve"]),
        },
        None,
    )
    return 0


def _run_one(image_path, out_path, scheduler, modulator, tool_cfg, args) -> dict:
    img = load_image(image_path)
    out, program, trace = run_agent(scheduler, modulator, img, tool_cfg)
    save_image(out, out_path)
    stem, _ = os.path.splitext(out_path)
    if args.dump_program:
        save_program(program, stem + ".program.json")
    if args.dump_trace:
        for i, inter in enumerate(trace.intermediates):
            save_image(inter, f"{stem}.step{i}.png")
    return {"input": str(image_path), "output": str(out_path),
            "path": [t.label for t in program.path]}


def _cmd_run(args) -> int:
    tool_cfg = _tool_config(args)
    _echo_config(
        "run",
        {"input": args.input, "out": args.out, "scheduler": args.scheduler,
         "modulator": args.modulator, "dump_program": args.dump_program,
         "dump_trace": args.dump_trace, "tool_config_hash": tool_cfg.config_hash()},
    )
    scheduler = load_scheduler(args.scheduler)
    modulator = load_modulator(args.modulator)
    results = []
    if args.input.endswith(".jsonl"):
        os.makedirs(args.out, exist_ok=True)
        for record in read_manifest(args.input):
            degraded_path = os.path.join(os.path.dirname(args.input) or ".", record.degraded)
            out_path = os.path.join(args.out, f"{record.id}.png")
            results.append(_run_one(degraded_path, out_path, scheduler, modulator, tool_cfg, args))
    else:
        results.append(_run_one(args.input, args.out, scheduler, modulator, tool_cfg, args))
    _dump_json({"results": results}, None)
    return 0


def _cmd_eval(args) -> int:
    tool_cfg = _tool_config(args)
    _echo_config(
        "eval",
        {"manifest": args.manifest, "scheduler": args.scheduler, "modulator": args.modulator,
         "out": args.out, "tool_config_hash": tool_cfg.config_hash()},
    )
    scheduler = load_scheduler(args.scheduler)
    modulator = load_modulator(args.modulator) if args.modulator else None
    records = read_manifest(args.manifest)
    if not records:
        raise ManifestError(f"empty manifest: {args.manifest}")

    rows = []
    agg = {"input_psnr": 0.0, "fixed1_psnr": 0.0, "fixed1_ssim": 0.0, "fixed1_l1": 0.0,
           "fixed1_recon": 0.0, "mod_psnr": 0.0, "mod_ssim": 0.0, "mod_l1": 0.0,
           "mod_recon": 0.0}
    hits = 0
    labeled = 0
    label_counts: dict[int, int] = {}
    for record in records:
        degraded, clean = resolve_pair(args.manifest, record)
        feats = extract_features(degraded)
        category, _ = schedule(scheduler, feats.pooled)
        path = category_to_path(category, scheduler.toolbox_size)
        fixed1 = execute_fixed(degraded, path, 1.0, tool_cfg)
        row = {
            "id": record.id,
            "category": category,
            "input_psnr": psnr(degraded, clean),
            "fixed1_psnr": psnr(fixed1, clean),
        }
        agg["input_psnr"] += row["input_psnr"]
        agg["fixed1_psnr"] += row["fixed1_psnr"]
        agg["fixed1_ssim"] += ssim(fixed1, clean)
        agg["fixed1_l1"] += mean_l1(fixed1, clean)
        agg["fixed1_recon"] += recon_loss(fixed1, clean)
        if modulator is not None:
            maps = modulate(modulator, feats, category)
            modded, _ = execute(degraded, RestorationProgram(path=path, maps=maps), tool_cfg)
            row["mod_psnr"] = psnr(modded, clean)
            agg["mod_psnr"] += row["mod_psnr"]
            agg["mod_ssim"] += ssim(modded, clean)
            agg["mod_l1"] += mean_l1(modded, clean)
            agg["mod_recon"] += recon_loss(modded, clean)
        if record.gt_category is not None:
            labeled += 1
            hits += int(category == record.gt_category)
            label_counts[record.gt_category] = label_counts.get(record.gt_category, 0) + 1
        rows.append(row)

    n = len(records)
    doc = {
        "n": n,
        "input": {"psnr": agg["input_psnr"] / n},
        "scheduled_fixed1": {
            "psnr": agg["fixed1_psnr"] / n,
            "ssim": agg["fixed1_ssim"] / n,
            "l1": agg["fixed1_l1"] / n,
            "recon_loss": agg["fixed1_recon"] / n,
        },
        "rows": rows,
        "tool_config_hash": tool_cfg.config_hash(),
    }
    if modulator is not None:
        doc["modulated"] = {
            "psnr": agg["mod_psnr"] / n,
            "ssim": agg["mod_ssim"] / n,
            "l1": agg["mod_l1"] / n,
            "recon_loss": agg["mod_recon"] / n,
        }
        doc["psnr_delta_modulated_vs_fixed1"] = doc["modulated"]["psnr"] - doc["scheduled_fixed1"]["psnr"]
    if labeled:
        doc["scheduler_accuracy"] = hits / labeled
        doc["label_majority_freq"] = max(label_counts.values()) / labeled
    _dump_json(doc, args.out)
    return 0


def _cmd_bench_strategies(args) -> int:
    tool_cfg = _tool_config(args)
    strategies = args.strategies.split(",") if args.strategies else list(DEFAULT_STRATEGIES)
    _echo_config(
        "bench-strategies",
        {"manifest": args.manifest, "strategies": strategies, "seed": args.seed,
         "format": args.format, "out": args.out, "tool_config_hash": tool_cfg.config_hash()},
    )
    records = read_manifest(args.manifest)
    pairs = []
    for i, record in enumerate(records):
        degraded, clean = resolve_pair(args.manifest, record)
        pairs.append((degraded, clean, derive_seed(args.seed, record.id, "random")))
    report = benchmark_strategies(pairs, strategies, tool_cfg, seed=args.seed)
    if args.format == "table":
        text = report.to_table() + "\n"
    else:
        text = report.to_json() + "\n"
    sys.stdout.write(text)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    return 0


def _cmd_grad_check(args) -> int:
    tool_cfg = _tool_config(args)
    _echo_config(
        "grad-check",
        {"size": args.size, "seed": args.seed, "epsilon": args.epsilon,
         "category": args.category, "tolerance": args.tolerance},
    )
    clean = synth_clean_image(args.size, derive_seed(args.seed, "gc", "clean"))
    from .degrade import DegradationSpec, degrade

    spec = DegradationSpec(noise_sigma=0.04, blur_sigma=1.0, apply_order=("blur", "noise"))
    degraded = degrade(clean, spec, derive_seed(args.seed, "gc", "degrade"))
    rng = np.random.Generator(np.random.PCG64(args.seed))
    model = ModulatorModel.create(seed=args.seed)
    model.weights += 0.05 * rng.standard_normal(model.weights.shape)
    model.biases += 0.05 * rng.standard_normal(model.biases.shape)
    worst = grad_check(
        model, degraded, clean, args.category, tool_cfg,
        epsilon=args.epsilon, seed=args.seed,
    )
    _dump_json({"max_relative_error": worst, "epsilon": args.epsilon}, None, digits=None)
    if args.tolerance is not None and worst > args.tolerance:
        sys.stderr.write(f"gradient check failed: {worst} > {args.tolerance}\n")
        return 2
    return 0


# --- parser ------------------------------------------------------------------


def _build_parser() -> _Parser:
    parser = _Parser(prog="restoplan", description=__doc__)
    parser.add_argument("--version", action="version", version=f"restoplan {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="subcommand")

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        return p

    p = add("synth-clean", _cmd_synth_clean, "render procedural clean source images")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=24)
    p.add_argument("--size", type=int, default=96)
    p.add_argument("--seed", type=int, default=0)

    p = add("gen-data", _cmd_gen_data, "degrade clean sources into a paired dataset")
    p.add_argument("--clean-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--crop", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)

    p = add("oracle", _cmd_oracle, "label a manifest with exhaustive-search paths")
    p.add_argument("--manifest", required=True)
    p.add_argument("--toolbox-size", type=int, default=3)
    p.add_argument("--tool-config")

    p = add("train-scheduler", _cmd_train_scheduler, "stage 1: fit the path classifier")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--train-config")
    p.add_argument("--tool-config")
    p.add_argument("--seed", type=int)

    p = add("train-modulator", _cmd_train_modulator, "stage 2: fit the strength maps")
    p.add_argument("--manifest", required=True)
    p.add_argument("--scheduler", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--train-config")
    p.add_argument("--tool-config")
    p.add_argument("--seed", type=int)

    p = add("run", _cmd_run, "restore one image or every manifest row")
    p.add_argument("--input", required=True, help="image path or manifest .jsonl")
    p.add_argument("--out", required=True, help="output image path, or directory for manifests")
    p.add_argument("--scheduler", required=True)
    p.add_argument("--modulator", required=True)
    p.add_argument("--tool-config")
    p.add_argument("--dump-program", action="store_true")
    p.add_argument("--dump-trace", action="store_true")

    p = add("eval", _cmd_eval, "score the planner over a labeled manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--scheduler", required=True)
    p.add_argument("--modulator")
    p.add_argument("--out")
    p.add_argument("--tool-config")

    p = add("bench-strategies", _cmd_bench_strategies, "compare search strategies on a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--strategies", help="comma-separated subset of " + ",".join(DEFAULT_STRATEGIES))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("json", "table"), default="json")
    p.add_argument("--out")
    p.add_argument("--tool-config")

    p = add("grad-check", _cmd_grad_check, "verify stage-2 gradients against finite differences")
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epsilon", type=float, default=1e-5)
    p.add_argument("--category", type=int, default=10, help="path category to check")
    p.add_argument("--tolerance", type=float)
    p.add_argument("--tool-config")

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "func", None):
        parser.print_usage(sys.stderr)
        return 1
    try:
        return args.func(args)
    except _DATA_ERRORS as exc:
        sys.stderr.write(f"restoplan: error: {exc}\n")
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
