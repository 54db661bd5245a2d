"""Unit tests for checkpoints, run logs, the stage trainer and stage orchestration."""

from __future__ import annotations

import numpy as np
import pytest
import torch

from pean.core.config import ModelConfig, RunConfig, ScheduleConfig, TrainConfig
from pean.core.errors import (
    CheckpointError,
    ConfigError,
    MissingPrerequisiteError,
    TrainingDivergedError,
)
from pean.core.types import Difficulty, Split, Stage
from pean.data import PairDataset, PairListDataset, build_dataset, pairs_to_batch, render_pair
from pean.data.render import sample_style
from pean.evalkit.study import evaluate_split
from pean.recognizer.model import CRNN
from pean.srnet.model import PeanModel, build_model
from pean.trainer import (
    Checkpoint,
    JsonlLogger,
    Trainer,
    finetune,
    find_latest_checkpoint,
    load_checkpoint,
    load_pean,
    load_recognizer,
    pretrain,
    read_jsonl,
    recognizer_from_checkpoint,
    run_stage,
    save_checkpoint,
    state_hash,
    step_records,
    step_seed,
    train_recognizer,
)

WORDS = ["cat", "dog", "sun", "map", "red", "fox"]


def make_model_cfg() -> ModelConfig:
    return ModelConfig(
        channels=4,
        num_blocks=1,
        ffn_ratio=1,
        gam_qk_dim=8,
        fam_dim=8,
        srm_depth=1,
        recognizer_channels=(4, 4, 4),
        lstm_hidden=4,
    )


def make_config(tmp_path, **train) -> RunConfig:
    defaults = dict(epochs=2, recognizer_epochs=1, batch_size=3, lr=1e-3, seed=0, run_dir=str(tmp_path))
    defaults.update(train)
    return RunConfig(model=make_model_cfg(), schedule=ScheduleConfig(T=10, S=1), train=TrainConfig(**defaults))


def make_pairs(words=WORDS):
    rng = np.random.default_rng(0)
    return [render_pair(w, sample_style(rng, Difficulty.EASY), seed=i) for i, w in enumerate(words)]


def make_tpg() -> CRNN:
    torch.manual_seed(123)
    return CRNN(channels=(4, 4, 4), lstm_hidden=4)


def make_model(config: RunConfig, with_tpem: bool) -> PeanModel:
    torch.manual_seed(0)
    return build_model(config.model, config.schedule, make_tpg(), with_tpem=with_tpem)


def param_snapshot(model: PeanModel) -> dict[str, torch.Tensor]:
    return {n: p.detach().clone() for n, p in model.named_parameters() if p.requires_grad}


# ------------------------------------------------------------------ checkpoints and logs


class TestCheckpoint:
    def test_roundtrip(self, tmp_path):
        ckpt = Checkpoint(
            stage=Stage.PRETRAIN,
            model_state={"w": torch.arange(4.0)},
            config={"a": 1},
            step=7,
            extra={"with_tpem": False},
        )
        path = save_checkpoint(ckpt, tmp_path / "c.pt")
        loaded = load_checkpoint(path, Stage.PRETRAIN)
        assert loaded.step == 7
        assert torch.equal(loaded.model_state["w"], torch.arange(4.0))
        assert loaded.extra == {"with_tpem": False}
        assert loaded.path == path

    def test_wrong_stage(self, tmp_path):
        path = save_checkpoint(Checkpoint(Stage.PRETRAIN, {}, {}), tmp_path / "c.pt")
        with pytest.raises(CheckpointError):
            load_checkpoint(path, Stage.FINETUNE)

    def test_missing_and_foreign_files(self, tmp_path):
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "absent.pt")
        torch.save({"weights": torch.zeros(1)}, tmp_path / "foreign.pt")
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "foreign.pt")

    def test_charset_mismatch(self, tmp_path):
        ckpt = Checkpoint(Stage.PRETRAIN, {}, {}, charset=("-", "a"))
        path = save_checkpoint(ckpt, tmp_path / "c.pt")
        with pytest.raises(CheckpointError, match="charset"):
            load_checkpoint(path)

    def test_find_latest(self, tmp_path):
        assert find_latest_checkpoint(tmp_path) is None
        for step in (3, 12, 5):
            save_checkpoint(Checkpoint(Stage.PRETRAIN, {}, {}, step=step), tmp_path / "checkpoints" / f"step_{step:08d}.pt")
        assert find_latest_checkpoint(tmp_path).name == "step_00000012.pt"

    def test_state_hash_sensitive_to_values(self):
        a = {"w": torch.zeros(3)}
        b = {"w": torch.tensor([0.0, 0.0, 1e-7])}
        assert state_hash(a) == state_hash({"w": torch.zeros(3)})
        assert state_hash(a) != state_hash(b)


class TestJsonlLogger:
    def test_header_then_steps(self, tmp_path):
        path = tmp_path / "log.jsonl"
        with JsonlLogger(path, header={"config": {"x": 1}}) as log:
            log.log({"step": 0, "total": 1.5})
            log.event("resumed", step=0)
        records = read_jsonl(path)
        assert records[0] == {"type": "header", "config": {"x": 1}}
        assert step_records(path) == [{"type": "step", "step": 0, "total": 1.5}]
        assert records[-1]["event"] == "resumed"

    def test_append_keeps_single_header(self, tmp_path):
        path = tmp_path / "log.jsonl"
        with JsonlLogger(path, header={}) as log:
            log.log({"step": 0})
        with JsonlLogger(path, header={}, append=True) as log:
            log.log({"step": 1})
        records = read_jsonl(path)
        assert [r["type"] for r in records] == ["header", "step", "step"]


# ------------------------------------------------------------------ trainer


class TestTrainer:
    def setup_method(self):
        self.pairs = make_pairs()
        self.batch = pairs_to_batch(self.pairs[:3])

    def test_stage_gating(self, tmp_path):
        config = make_config(tmp_path)
        with pytest.raises(ConfigError):
            Trainer(make_model(config, with_tpem=True), config, Stage.PRETRAIN)
        with pytest.raises(ConfigError):
            Trainer(make_model(config, with_tpem=False), config, Stage.FINETUNE)
        with pytest.raises(ConfigError):
            Trainer(make_model(config, with_tpem=False), config, Stage.RECOGNIZER)

    def test_pretrain_terms(self, tmp_path):
        config = make_config(tmp_path)
        trainer = Trainer(make_model(config, with_tpem=False), config, Stage.PRETRAIN)
        result = trainer.train_step(self.batch)
        assert set(result.report.raw) == {"img_mse", "img_sfm", "txt_ctc"}
        assert trainer.step == 1

    def test_finetune_terms(self, tmp_path):
        config = make_config(tmp_path)
        trainer = Trainer(make_model(config, with_tpem=True), config, Stage.FINETUNE)
        result = trainer.train_step(self.batch)
        assert set(result.report.raw) == {"diff_mae", "diff_ctc", "img_mse", "img_sfm", "txt_ctc"}
        assert result.report.total == pytest.approx(sum(result.report.weighted.values()))

    def test_zero_learning_rate_keeps_parameters(self, tmp_path):
        config = make_config(tmp_path, lr=0.0)
        model = make_model(config, with_tpem=True)
        before = param_snapshot(model)
        Trainer(model, config, Stage.FINETUNE).train_step(self.batch)
        after = param_snapshot(model)
        assert all(torch.equal(before[n], after[n]) for n in before)

    def test_gradients_clipped(self, tmp_path):
        config = make_config(tmp_path, grad_clip=1e-3)
        model = make_model(config, with_tpem=False)
        result = Trainer(model, config, Stage.PRETRAIN).train_step(self.batch)
        grads = [p.grad for p in model.parameters() if p.grad is not None]
        total = torch.linalg.vector_norm(torch.stack([torch.linalg.vector_norm(g) for g in grads])).item()
        assert total <= 1e-3 * (1 + 1e-4)
        assert result.grad_norm > 1e-3

    def test_tpg_unchanged_by_finetuning(self, tmp_path):
        config = make_config(tmp_path, epochs=1)
        model = make_model(config, with_tpem=True)
        before = state_hash(model.tpg.state_dict())
        finetune(model, None, PairListDataset(self.pairs), config)
        assert state_hash(model.tpg.state_dict()) == before

    def test_divergence_saves_last_good(self, tmp_path):
        config = make_config(tmp_path)
        trainer = Trainer(make_model(config, with_tpem=False), config, Stage.PRETRAIN)
        bad = dict(self.batch)
        bad["lr"] = torch.full_like(self.batch["lr"], float("nan"))
        with pytest.raises(TrainingDivergedError) as info:
            trainer.train_step(bad)
        assert info.value.exit_code == 5
        last_good = load_checkpoint(info.value.last_good_checkpoint)
        assert last_good.step == 0

    def test_fit_writes_log_and_checkpoints(self, tmp_path):
        config = make_config(tmp_path)
        final = pretrain(make_model(config, with_tpem=False), PairListDataset(self.pairs), config)
        stage_dir = tmp_path / "pretrain"
        assert final.step == 4
        assert (stage_dir / "final.pt").exists()
        assert find_latest_checkpoint(stage_dir).name == "step_00000004.pt"
        records = read_jsonl(stage_dir / "train.jsonl")
        assert records[0]["type"] == "header"
        assert records[0]["config"] == config.echo()
        steps = step_records(stage_dir / "train.jsonl")
        assert [r["step"] for r in steps] == [0, 1, 2, 3]
        for key in ("stage", "epoch", "raw", "weighted", "total", "grad_norm", "skipped", "wall_time_ms"):
            assert key in steps[0]

    def test_resume_matches_uninterrupted_run(self, tmp_path):
        dataset = PairListDataset(self.pairs)
        config_a = make_config(tmp_path / "a")
        golden = finetune(make_model(config_a, with_tpem=True), None, dataset, config_a)

        config_b = make_config(tmp_path / "b")
        partial = finetune(make_model(config_b, with_tpem=True), None, dataset, config_b, max_steps=3)
        assert partial.step == 3
        resumed = finetune(make_model(config_b, with_tpem=True), None, dataset, config_b, resume=True)

        assert resumed.step == golden.step == 4
        assert state_hash(resumed.model_state) == state_hash(golden.model_state)
        log_a = [r["total"] for r in step_records(tmp_path / "a" / "finetune" / "train.jsonl")]
        log_b = [r["total"] for r in step_records(tmp_path / "b" / "finetune" / "train.jsonl")]
        assert log_a == log_b

    def test_step_seed_is_pure(self):
        assert step_seed(3, 10) == step_seed(3, 10)
        assert step_seed(3, 10) != step_seed(3, 11)


# ------------------------------------------------------------------ orchestration


class TestPipeline:
    def setup_method(self):
        self.pairs = make_pairs()

    def test_recognizer_checkpoint_loads_frozen(self, tmp_path):
        config = make_config(tmp_path)
        ckpt = train_recognizer(PairListDataset(self.pairs), config, epochs=1)
        assert ckpt.path == tmp_path / "recognizer" / "final.pt"
        tpg = load_recognizer(ckpt.path)
        assert not tpg.training
        assert all(not p.requires_grad for p in tpg.parameters())
        assert step_records(tmp_path / "recognizer" / "train.jsonl")

    def test_pretrain_requires_recognizer(self, tmp_path):
        build_dataset(3, 0, seed=0, out_dir=tmp_path / "data")
        config = make_config(tmp_path / "run")
        with pytest.raises(MissingPrerequisiteError):
            run_stage(config, Stage.PRETRAIN, data_root=tmp_path / "data")

    def test_finetune_requires_pretrain(self, tmp_path):
        build_dataset(3, 0, seed=0, out_dir=tmp_path / "data")
        config = make_config(tmp_path / "run")
        run_stage(config, Stage.RECOGNIZER, data_root=tmp_path / "data")
        with pytest.raises(MissingPrerequisiteError, match="pretrain"):
            run_stage(config, Stage.FINETUNE, data_root=tmp_path / "data")

    def test_inference_stage_rejected(self, tmp_path):
        build_dataset(3, 0, seed=0, out_dir=tmp_path / "data")
        config = make_config(tmp_path / "run")
        run_stage(config, Stage.RECOGNIZER, data_root=tmp_path / "data")
        with pytest.raises(ConfigError):
            run_stage(config, Stage.INFER, data_root=tmp_path / "data")

    def test_stage_only_flags_rejected(self, tmp_path):
        config = make_config(tmp_path / "run")
        with pytest.raises(ConfigError, match="resume"):
            run_stage(config, Stage.RECOGNIZER, data_root=tmp_path / "absent", resume=True)
        with pytest.raises(ConfigError, match="max_steps"):
            run_stage(config, Stage.RECOGNIZER, data_root=tmp_path / "absent", max_steps=3)
        with pytest.raises(ConfigError, match="finetune"):
            run_stage(config, Stage.PRETRAIN, data_root=tmp_path / "absent", from_scratch=True)
        assert not (tmp_path / "run" / "recognizer").exists()

    def test_full_sequence_and_reload(self, tmp_path):
        build_dataset(6, 0, seed=0, out_dir=tmp_path / "data")
        config = make_config(tmp_path / "run", epochs=1)
        run_stage(config, Stage.RECOGNIZER, data_root=tmp_path / "data")
        run_stage(config, Stage.PRETRAIN, data_root=tmp_path / "data")
        final = run_stage(config, Stage.FINETUNE, data_root=tmp_path / "data")
        tpg = load_recognizer(tmp_path / "run" / "recognizer" / "final.pt")
        model = load_pean(final.path, tpg)
        assert model.with_tpem
        assert not model.training
        assert state_hash(model.trainable_state_dict()) == state_hash(final.model_state)


@pytest.mark.slow
class TestOverfit:
    def test_recognizer_loss_decreases(self, tmp_path):
        config = make_config(tmp_path, batch_size=6, lr=3e-3)
        pairs = make_pairs(WORDS * 8)
        train_recognizer(PairListDataset(pairs), config, epochs=8)
        totals = [r["total"] for r in step_records(tmp_path / "recognizer" / "train.jsonl")]
        assert np.mean(totals[-5:]) < np.mean(totals[:5])

    def test_pretrain_loss_decreases(self, tmp_path):
        config = make_config(tmp_path, epochs=10, lr=3e-3)
        pretrain(make_model(config, with_tpem=False), PairListDataset(make_pairs()), config)
        totals = [r["total"] for r in step_records(tmp_path / "pretrain" / "train.jsonl")]
        assert np.mean(totals[-4:]) < np.mean(totals[:4])

    def test_single_batch_overfits(self, tmp_path):
        config = make_config(tmp_path, lr=5e-3)
        config.model.channels = 16
        config.model.lstm_hidden = 16
        config.model.recognizer_channels = (8, 16, 16)
        trainer = Trainer(make_model(config, with_tpem=False), config, Stage.PRETRAIN)
        batch = pairs_to_batch(make_pairs(WORDS[:2]))
        results = [trainer.train_step(batch) for _ in range(200)]
        assert results[-1].report.total < 0.1 * results[0].report.total

    def test_recognizer_reads_hr_better_than_lr(self, tmp_path):
        manifest = build_dataset(400, 20, seed=0, out_dir=tmp_path / "data", max_len=5)
        config = make_config(tmp_path / "run", batch_size=32, lr=3e-3)
        config.model.recognizer_channels = (16, 32, 64)
        config.model.lstm_hidden = 32
        ckpt = train_recognizer(PairDataset(manifest, Split.TRAIN), config, epochs=15)
        tpg = recognizer_from_checkpoint(ckpt)
        test_set = PairDataset(manifest, Split.TEST)
        hr, _ = evaluate_split(tpg, test_set, method="hr")
        lr, _ = evaluate_split(tpg, test_set, method="bicubic")
        assert hr.weighted_average > lr.weighted_average
