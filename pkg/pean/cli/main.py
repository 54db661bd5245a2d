"""
pean command line: dataset generation, staged training, evaluation, CKA and
single-image super-resolution.

Usage:
    pean gen-data --out data/toy --n-train 500 --n-test 50 --seed 0
    pean train --stage recognizer --config configs/toy.yaml
    pean train --stage pretrain --config configs/toy.yaml
    pean train --stage finetune --config configs/toy.yaml [--resume]
    pean eval --ckpt runs/toy/finetune/final.pt --data data/toy --prior etp --out report.json
    pean cka --ckpt-a runs/toy/finetune/final.pt --ckpt-b runs/toy/finetune/final.pt \\
        --prior-b tp-hr --data data/toy --out cka.json
    pean sr --ckpt runs/toy/finetune/final.pt --image word_lr.png --out word_sr.png

Every failure maps to a distinct exit status (see ``pean.core.errors``).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

import torch

from pean.core.config import RunConfig, load_run_config, parse_override
from pean.core.errors import PeanError, PriorSourceError, ShapeError
from pean.core.runtime import configure_logging, seed_everything, set_deterministic
from pean.core.types import LR_SIZE, PriorSource, Split, Stage
from pean.data.dataset import PairDataset, build_dataset, load_manifest, read_png, write_png
from pean.evalkit.plots import save_cka_heatmap, save_comparison_grid
from pean.evalkit.study import cka_study, evaluate_split
from pean.recognizer.ctc import ctc_greedy_decode
from pean.recognizer.model import CRNN, recognize
from pean.srnet.model import PeanModel
from pean.trainer.checkpoint import load_checkpoint
from pean.trainer.pipeline import final_checkpoint_path, model_from_checkpoint, require_checkpoint, run_stage
from pean.trainer.recognizer import load_recognizer

logger = logging.getLogger("pean.cli")

PRIOR_CHOICES = ("tp-lr", "tp-hr", "etp")


# ------------------------------------------------------------------
# Shared helpers
# ------------------------------------------------------------------


def _config(args: argparse.Namespace, flags: dict[str, Any] | None = None) -> RunConfig:
    overrides: dict[str, Any] = {}
    for item in getattr(args, "set", None) or []:
        key, value = parse_override(item)
        overrides[key] = value
    overrides.update(flags or {})
    return load_run_config(getattr(args, "config", None), overrides)


def _write_json(path: Path, payload: dict[str, Any]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _load_tpg(cfg: RunConfig, recognizer: str | None, run_dir: str | None) -> CRNN:
    if recognizer:
        return load_recognizer(recognizer)
    path = require_checkpoint(
        final_checkpoint_path(cfg, Stage.RECOGNIZER, run_dir),
        "pass --recognizer or run `pean train --stage recognizer` first",
    )
    return load_recognizer(path)


def _load_model(ckpt_path: str, recognizer: str | None, run_dir: str | None) -> tuple[PeanModel, RunConfig]:
    ckpt = load_checkpoint(ckpt_path)
    cfg = RunConfig.model_validate(ckpt.config)
    set_deterministic(cfg.train.deterministic)
    tpg = _load_tpg(cfg, recognizer, run_dir)
    return model_from_checkpoint(ckpt, tpg), cfg


def _test_split(data: str) -> PairDataset:
    return PairDataset(load_manifest(data), Split.TEST)


# ------------------------------------------------------------------
# Subcommands
# ------------------------------------------------------------------


def cmd_gen_data(args: argparse.Namespace) -> int:
    flags = {
        "data.out_dir": args.out,
        "data.n_train": args.n_train,
        "data.n_test_per_difficulty": args.n_test,
        "data.seed": args.seed,
    }
    cfg = _config(args, flags)
    manifest = build_dataset(
        cfg.data.n_train,
        cfg.data.n_test_per_difficulty,
        cfg.data.seed,
        cfg.data.out_dir,
        min_len=cfg.data.min_len,
        max_len=cfg.data.max_len,
        workers=cfg.data.workers,
    )
    print(json.dumps({"out": cfg.data.out_dir, "counts": manifest.counts}, sort_keys=True))
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    flags = {"train.run_dir": args.run_dir, "data.out_dir": args.data}
    cfg = _config(args, flags)
    ckpt = run_stage(
        cfg,
        Stage(args.stage),
        resume=args.resume,
        from_scratch=args.from_scratch,
        max_steps=args.max_steps,
    )
    print(json.dumps({"stage": ckpt.stage.value, "step": ckpt.step, "checkpoint": str(ckpt.path)}))
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    model, cfg = _load_model(args.ckpt, args.recognizer, args.run_dir)
    seed_everything(args.seed)
    test_set = _test_split(args.data)
    source = PriorSource.parse(args.prior)

    report, samples = evaluate_split(
        model.tpg, test_set, model=model, method="sr", prior_source=source, seed=args.seed, batch_size=args.batch_size
    )
    payload = report.to_dict()
    baselines: dict[str, Any] = {}
    for method in ("bicubic", "hr"):
        base, _ = evaluate_split(model.tpg, test_set, method=method, batch_size=args.batch_size)
        baselines[method] = base.to_dict()
    payload["baselines"] = baselines
    payload["checkpoint"] = args.ckpt
    payload["config"] = cfg.echo()

    out = Path(args.out)
    _write_json(out, payload)
    grid = out.with_name(f"{out.stem}_grid.png")
    save_comparison_grid(samples.lr, samples.sr, samples.hr, grid, samples.labels, samples.preds)
    print(json.dumps({"weighted_average": report.weighted_average, "report": str(out), "grid": str(grid)}))
    return 0


def cmd_cka(args: argparse.Namespace) -> int:
    model_a, cfg = _load_model(args.ckpt_a, args.recognizer, args.run_dir)
    model_b, _ = _load_model(args.ckpt_b, args.recognizer, args.run_dir)
    seed_everything(args.seed)
    result = cka_study(
        model_a,
        model_b,
        _test_split(args.data),
        prior_modes=(PriorSource.parse(args.prior_a), PriorSource.parse(args.prior_b)),
        n=args.n,
        seed=args.seed,
    )
    payload = result.to_dict()
    payload.update({"ckpt_a": args.ckpt_a, "ckpt_b": args.ckpt_b, "config": cfg.echo()})
    out = Path(args.out)
    _write_json(out, payload)
    heatmap = out.with_suffix(".png")
    title = f"CKA {result.prior_modes[0]} vs {result.prior_modes[1]}"
    save_cka_heatmap(result.matrix, heatmap, title=title, split=result.amm_taps)
    print(json.dumps({"group_means": result.group_means(), "report": str(out), "heatmap": str(heatmap)}))
    return 0


@torch.no_grad()
def cmd_sr(args: argparse.Namespace) -> int:
    source = PriorSource.parse(args.prior)
    if source == PriorSource.TP_HR:
        raise PriorSourceError("Single-image super-resolution has no HR image; use --prior etp or tp-lr")
    model, _ = _load_model(args.ckpt, args.recognizer, args.run_dir)
    img = read_png(args.image)
    if tuple(img.shape[:2]) != LR_SIZE:
        raise ShapeError(f"Expected a {LR_SIZE[0]}x{LR_SIZE[1]} image, got {img.shape[0]}x{img.shape[1]} from {args.image!r}")
    dtype = next(model.parameters()).dtype
    lr = torch.from_numpy(img).to(dtype).unsqueeze(0)
    sr = model(lr, source, seed=args.seed).sr[0]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_png(sr.float().numpy(), out)
    print(f"lr: {ctc_greedy_decode(recognize(model.tpg, lr[0]))}")
    print(f"sr: {ctc_greedy_decode(recognize(model.tpg, sr))}")
    return 0


# ------------------------------------------------------------------
# Parser
# ------------------------------------------------------------------


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=None, help="YAML run configuration")
    p.add_argument(
        "--set",
        action="append",
        metavar="SECTION.KEY=VALUE",
        help="Override one config value (repeatable)",
    )


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--recognizer", default=None, help="Recognizer checkpoint (default: from the run directory)")
    p.add_argument("--run-dir", default=None, help="Run directory holding recognizer/final.pt")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pean", description="Text-prior guided scene-text super-resolution")
    parser.add_argument("--log-level", default=None, help="Logging level (default: $PEAN_LOG_LEVEL or INFO)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="Render a synthetic paired dataset")
    _add_config_flags(p)
    p.add_argument("--out", default=None)
    p.add_argument("--n-train", type=int, default=None)
    p.add_argument("--n-test", type=int, default=None, help="Test pairs per difficulty tier")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="Run one training stage")
    _add_config_flags(p)
    p.add_argument("--stage", required=True, choices=[Stage.RECOGNIZER.value, Stage.PRETRAIN.value, Stage.FINETUNE.value])
    p.add_argument("--data", default=None, help="Dataset directory (default: data.out_dir)")
    p.add_argument("--run-dir", default=None)
    p.add_argument("--resume", action="store_true", help="Continue from the latest checkpoint (pretrain and finetune only)")
    p.add_argument("--from-scratch", action="store_true", help="Finetune without the pretrained checkpoint (finetune only)")
    p.add_argument("--max-steps", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="Evaluate a checkpoint on the test split")
    _add_model_flags(p)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--prior", choices=PRIOR_CHOICES, default="etp")
    p.add_argument("--out", required=True)
    p.add_argument("--batch-size", type=int, default=32)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("cka", help="Layer-wise linear CKA between two models")
    _add_model_flags(p)
    p.add_argument("--ckpt-a", required=True)
    p.add_argument("--ckpt-b", required=True)
    p.add_argument("--prior-a", choices=PRIOR_CHOICES, default="etp")
    p.add_argument("--prior-b", choices=PRIOR_CHOICES, default="etp")
    p.add_argument("--data", required=True)
    p.add_argument("--n", type=int, default=None, help="Subsample the test split")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_cka)

    p = sub.add_parser("sr", help="Super-resolve one 16x64 image")
    _add_model_flags(p)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--prior", choices=PRIOR_CHOICES, default="etp")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sr)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        return args.func(args)
    except PeanError as exc:
        logger.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
