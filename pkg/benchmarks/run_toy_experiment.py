"""
PEAN toy experiment: sampler timings and directional checks on synthetic data.

Run:
    python benchmarks/run_toy_experiment.py [--config configs/toy.yaml] [--work-dir runs/experiment] [--quick]

Phases:
  • Sampling    : DDPM over a T sweep and DDIM over an S sweep, same denoiser and prior
  • Pipeline    : gen-data, recognizer, pretrain, finetune, and a finetune from scratch
  • Evaluation  : SR under each prior source, the scratch model, bicubic and HR baselines
  • CKA         : the finetuned model (ETP) against itself run with the HR and LR priors

Each directional check is printed as PASS / FAIL and everything is saved to
benchmarks/results.json. The exit status is 1 when any check fails.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

import torch

# Allow running from repo root without installing
sys.path.insert(0, str(Path(__file__).parent.parent))

from pean.core.config import RunConfig, load_run_config
from pean.core.runtime import Stopwatch, configure_logging, seed_everything
from pean.core.types import PriorSource, Split, Stage
from pean.data.dataset import PairDataset, build_dataset, load_manifest
from pean.evalkit.accuracy import EvalReport
from pean.evalkit.study import cka_study, evaluate_split
from pean.srnet.model import build_model
from pean.tpem.denoiser import DenoiserMLP
from pean.tpem.sampling import ddim_sample, ddpm_sample
from pean.tpem.schedule import make_schedule
from pean.trainer.loop import finetune
from pean.trainer.pipeline import final_checkpoint_path, load_pean, load_tpg, run_stage

_RESULTS_PATH = Path(__file__).parent / "results.json"

T_SWEEP = (50, 100, 200)
S_SWEEP = (1, 5, 20)
SAMPLING_REPEATS = 5
SAMPLING_BATCH = 16

# Reduced sizes for a smoke run of the whole experiment
_QUICK = {
    "data.n_train": 60,
    "data.n_test_per_difficulty": 10,
    "train.epochs": 2,
    "train.recognizer_epochs": 3,
}


# ─────────────────────────────────────────────────────────────────────────────
# Data model
# ─────────────────────────────────────────────────────────────────────────────


@dataclass
class Check:
    name: str
    passed: bool
    detail: str


@dataclass
class ExperimentReport:
    ran_at: str = ""
    config: dict[str, Any] = field(default_factory=dict)
    sampling_ms: dict[str, float] = field(default_factory=dict)
    stage_ms: dict[str, float] = field(default_factory=dict)
    accuracy: dict[str, EvalReport] = field(default_factory=dict)
    cka: dict[str, dict[str, float]] = field(default_factory=dict)
    checks: list[Check] = field(default_factory=list)

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str, passed: bool, detail: str) -> None:
        self.checks.append(Check(name, bool(passed), detail))

    def to_json(self) -> dict[str, Any]:
        return {
            "ran_at": self.ran_at,
            "config": self.config,
            "sampling_ms": {k: round(v, 3) for k, v in self.sampling_ms.items()},
            "stage_ms": {k: round(v, 1) for k, v in self.stage_ms.items()},
            "accuracy": {k: r.to_dict() for k, r in self.accuracy.items()},
            "cka": self.cka,
            "checks": [asdict(c) for c in self.checks],
            "all_passed": self.all_passed,
        }


# ─────────────────────────────────────────────────────────────────────────────
# Phases
# ─────────────────────────────────────────────────────────────────────────────


@torch.no_grad()
def time_samplers(cfg: RunConfig, report: ExperimentReport) -> None:
    """Wall time per sampling call; the denoiser is untrained, only cost matters."""
    torch.manual_seed(cfg.train.seed)
    f_theta = DenoiserMLP().eval()
    p_l = torch.softmax(torch.randn(SAMPLING_BATCH, 26, 37), dim=-1)
    watch = Stopwatch()
    for T in T_SWEEP:
        schedule = make_schedule(T, cfg.schedule.beta_min, cfg.schedule.beta_max)
        for r in range(SAMPLING_REPEATS):
            with watch.measure(f"ddpm_T{T}"):
                ddpm_sample(f_theta, p_l, schedule, seed=r)
    schedule = make_schedule(max(T_SWEEP), cfg.schedule.beta_min, cfg.schedule.beta_max)
    for S in S_SWEEP:
        for r in range(SAMPLING_REPEATS):
            with watch.measure(f"ddim_S{S}"):
                ddim_sample(f_theta, p_l, schedule, S, seed=r)
    report.sampling_ms = {phase: watch.avg_ms(phase) for phase in watch.records}

    ddpm = report.sampling_ms[f"ddpm_T{max(T_SWEEP)}"]
    ddim = report.sampling_ms["ddim_S1"]
    report.check(
        "ddim_s1_at_most_fifth_of_ddpm",
        ddim <= ddpm / 5,
        f"DDIM S=1 {ddim:.2f} ms vs DDPM T={max(T_SWEEP)} {ddpm:.2f} ms",
    )


def run_pipeline(cfg: RunConfig, work_dir: Path, report: ExperimentReport) -> None:
    watch = Stopwatch()
    with watch.measure("gen_data"):
        build_dataset(
            cfg.data.n_train,
            cfg.data.n_test_per_difficulty,
            cfg.data.seed,
            cfg.data.out_dir,
            min_len=cfg.data.min_len,
            max_len=cfg.data.max_len,
            workers=cfg.data.workers,
        )
    for stage in (Stage.RECOGNIZER, Stage.PRETRAIN, Stage.FINETUNE):
        print(f"  Training: {stage.value} …")
        with watch.measure(stage.value):
            run_stage(cfg, stage)

    print("  Training: finetune from scratch …")
    seed_everything(cfg.train.seed)
    tpg = load_tpg(cfg)
    scratch = build_model(cfg.model, cfg.schedule, tpg, with_tpem=True)
    train_set = PairDataset(load_manifest(cfg.data.out_dir), Split.TRAIN)
    with watch.measure("finetune_scratch"):
        finetune(scratch, None, train_set, cfg, run_dir=work_dir / "scratch")
    report.stage_ms = {phase: watch.avg_ms(phase) for phase in watch.records}


def evaluate(cfg: RunConfig, work_dir: Path, report: ExperimentReport) -> None:
    tpg = load_tpg(cfg)
    test_set = PairDataset(load_manifest(cfg.data.out_dir), Split.TEST)
    model = load_pean(final_checkpoint_path(cfg, Stage.FINETUNE), tpg)
    scratch = load_pean(work_dir / "scratch" / Stage.FINETUNE.value / "final.pt", tpg)
    seed = cfg.train.seed

    for source in PriorSource:
        report.accuracy[f"sr_{source.value}"], _ = evaluate_split(
            tpg, test_set, model=model, method="sr", prior_source=source, seed=seed
        )
    report.accuracy["scratch_etp"], _ = evaluate_split(
        tpg, test_set, model=scratch, method="sr", prior_source=PriorSource.ETP, seed=seed
    )
    for method in ("bicubic", "hr"):
        report.accuracy[method], _ = evaluate_split(tpg, test_set, method=method)

    acc = {k: r.weighted_average for k, r in report.accuracy.items()}
    etp, tp_lr, tp_hr = acc["sr_etp"], acc["sr_tp_lr"], acc["sr_tp_hr"]
    report.check("hr_decodes_better_than_lr", acc["hr"] > acc["bicubic"], f"HR {acc['hr']:.1f} vs bicubic LR {acc['bicubic']:.1f}")
    report.check("sr_beats_bicubic_by_10", etp >= acc["bicubic"] + 10, f"SR {etp:.1f} vs bicubic {acc['bicubic']:.1f}")
    report.check("etp_at_least_tp_lr", etp >= tp_lr, f"ETP {etp:.1f} vs TP-LR {tp_lr:.1f}")
    report.check("tp_hr_at_least_etp", tp_hr >= etp, f"TP-HR {tp_hr:.1f} vs ETP {etp:.1f}")
    report.check(
        "pretrain_at_least_scratch", etp >= acc["scratch_etp"], f"pretrained {etp:.1f} vs scratch {acc['scratch_etp']:.1f}"
    )

    for other in (PriorSource.TP_HR, PriorSource.TP_LR):
        result = cka_study(model, model, test_set, prior_modes=(PriorSource.ETP, other), seed=seed)
        report.cka[f"etp_vs_{other.value}"] = result.group_means()
    hr_cka = report.cka["etp_vs_tp_hr"]["all"]
    lr_cka = report.cka["etp_vs_tp_lr"]["all"]
    report.check("cka_closer_to_hr_prior", hr_cka > lr_cka, f"mean CKA with TP-HR {hr_cka:.3f} vs TP-LR {lr_cka:.3f}")


# ─────────────────────────────────────────────────────────────────────────────
# Report rendering
# ─────────────────────────────────────────────────────────────────────────────


def print_report(report: ExperimentReport) -> None:
    bar = "═" * 78
    thin = "─" * 78

    print(f"\n{bar}")
    print("  PEAN TOY EXPERIMENT")
    print(f"  {report.ran_at}")
    print(f"{bar}\n")

    print("  Sampling (avg ms per call)")
    for phase, ms in report.sampling_ms.items():
        print(f"    {phase:<16}{ms:>10.2f}")
    print(f"  {thin}")

    print("  Accuracy (weighted %)      easy   medium     hard     PSNR     SSIM")
    for name, r in report.accuracy.items():
        psnr = f"{r.psnr:8.2f}" if r.psnr is not None and r.psnr != float("inf") else "     inf"
        ssim = f"{r.ssim:8.4f}" if r.ssim is not None else "       -"
        print(
            f"    {name:<14}{r.weighted_average:>8.1f}"
            f"{r.accuracy['easy']:>7.1f}{r.accuracy['medium']:>9.1f}{r.accuracy['hard']:>9.1f}"
            f" {psnr} {ssim}"
        )
    print(f"  {thin}")

    for name, means in report.cka.items():
        print(f"  CKA {name:<16} amm={means['amm']:.3f}  srm={means['srm']:.3f}  all={means['all']:.3f}")
    print(f"  {thin}")

    for c in report.checks:
        print(f"  [{'PASS' if c.passed else 'FAIL'}] {c.name:<32} {c.detail}")
    print(f"{bar}\n")


# ─────────────────────────────────────────────────────────────────────────────
# Main
# ─────────────────────────────────────────────────────────────────────────────


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[1])
    parser.add_argument("--config", default="configs/toy.yaml")
    parser.add_argument("--work-dir", default="runs/experiment")
    parser.add_argument("--quick", action="store_true", help="Small dataset and few epochs")
    parser.add_argument("--skip-training", action="store_true", help="Reuse checkpoints already in --work-dir")
    parser.add_argument("--log-level", default="WARNING")
    args = parser.parse_args(argv)
    configure_logging(args.log_level)

    work_dir = Path(args.work_dir)
    overrides: dict[str, Any] = {
        "data.out_dir": str(work_dir / "data"),
        "train.run_dir": str(work_dir / "run"),
    }
    if args.quick:
        overrides.update(_QUICK)
    cfg = load_run_config(args.config, overrides)

    report = ExperimentReport(
        ran_at=datetime.now(timezone.utc).strftime("%Y-%m-%d %H:%M:%S UTC"),
        config=cfg.echo(),
    )
    print("\n  Running: sampler timings …")
    time_samplers(cfg, report)
    if not args.skip_training:
        run_pipeline(cfg, work_dir, report)
    print("  Running: evaluation and CKA …")
    evaluate(cfg, work_dir, report)

    print_report(report)
    _RESULTS_PATH.parent.mkdir(parents=True, exist_ok=True)
    _RESULTS_PATH.write_text(json.dumps(report.to_json(), indent=2) + "\n")
    print(f"  Results saved → {_RESULTS_PATH}\n")
    return 0 if report.all_passed else 1


if __name__ == "__main__":
    sys.exit(main())
