import json
import math
import shutil

import pytest
import torch

from sprite_imputer.exceptions import ContractViolationError, DatasetError, NonFiniteLossError
from sprite_imputer.schemas.domain import DomainId
from sprite_imputer.schemas.sprite import SpriteDataset
from sprite_imputer.schemas.training import EvalRecord, TrainingRun
from sprite_imputer.services.batch_service import build_forward_input, collate, sheet_tensor
from sprite_imputer.services.loss_service import l_reg, total_d, total_g
from sprite_imputer.services.training_service import (
    BEST_CHECKPOINT,
    BEST_GENERATOR,
    FINAL_METRICS,
    METRICS_LOG,
    TrainingService,
    checkpoint_name,
    latest_checkpoint,
    lr_at,
    read_final_reports,
    read_metrics_log,
    select_best,
)


@pytest.fixture
def splits(synth_six):
    return synth_six.subset(range(4), split_tag="train"), synth_six.subset([4, 5], split_tag="test")


def forward_reg(generator, sheet) -> float:
    """Mean regression loss over the four targets, every other pose given."""
    real = sheet_tensor(sheet)
    losses = []
    with torch.no_grad():
        for target in DomainId:
            sources, labels = collate([build_forward_input(sheet, target)])
            losses.append(float(l_reg(real[int(target)].unsqueeze(0), generator(sources, labels))))
    return sum(losses) / len(losses)


class TestLearningRate:
    @pytest.mark.parametrize("step, expected", [
        (0, 1e-4),
        (119_999, 1e-4),
        (120_000, 1e-4),
        (180_000, 5e-5),
        (240_000, 0.0),
    ])
    def test_schedule_values(self, step, expected):
        assert lr_at(step, 240_000, 1e-4) == expected

    def test_monotone_non_increasing(self):
        values = [lr_at(step, 1000, 1e-4) for step in range(0, 1001, 10)]
        assert all(a >= b for a, b in zip(values, values[1:]))

    @pytest.mark.parametrize("step", [-1, 240_001])
    def test_out_of_range(self, step):
        with pytest.raises(ContractViolationError):
            lr_at(step, 240_000, 1e-4)

    def test_optimizer_follows_schedule(self, make_train_config, synth_six):
        service = TrainingService(make_train_config(total_steps=4))
        lrs = [service.current_lr()]
        for _ in range(4):
            service.train_step(list(synth_six.sheets[:2]))
            lrs.append(service.current_lr())
        assert lrs == pytest.approx([1e-4, 1e-4, 1e-4, 5e-5, 0.0])


class TestSelectBest:
    def test_lowest_l1(self):
        records = [EvalRecord(step=s, l1=v) for s, v in [(1, 0.3), (2, 0.1), (3, 0.2)]]
        assert select_best(records).step == 2

    def test_earliest_wins_ties(self):
        records = [EvalRecord(step=s, l1=v) for s, v in [(1, 0.3), (2, 0.1), (3, 0.1)]]
        assert select_best(records).step == 2

    def test_empty(self):
        with pytest.raises(ContractViolationError):
            select_best([])


class TestTrainStep:
    def test_breakdown_is_finite_and_recomposes(self, make_train_config, synth_six):
        config = make_train_config()
        service = TrainingService(config)
        breakdown = service.train_step(list(synth_six.sheets[:2]))
        assert service.step == 1
        assert all(math.isfinite(value) for value in breakdown.model_dump().values())
        assert breakdown.total_g == total_g(breakdown, config.loss_weights)
        assert breakdown.total_d == total_d(breakdown, config.loss_weights)

    def test_non_finite_loss_stops_training(self, make_train_config, synth_six, mocker):
        mocker.patch("sprite_imputer.services.training_service.l_reg",
                     return_value=torch.tensor(float("nan")))
        service = TrainingService(make_train_config())
        with pytest.raises(NonFiniteLossError) as info:
            service.train_step(list(synth_six.sheets[:2]))
        assert info.value.term == "reg"
        assert info.value.step == 0

    def test_frozen_discriminator_is_untouched(self, make_train_config, synth_six):
        service = TrainingService(make_train_config(freeze_discriminator=True))
        before = [p.detach().clone() for p in service.discriminator.parameters()]
        generator_before = [p.detach().clone() for p in service.generator.parameters()]
        service.train_step(list(synth_six.sheets[:2]))
        assert all(torch.equal(a, b) for a, b in zip(before, service.discriminator.parameters()))
        assert not all(torch.equal(a, b) for a, b in zip(generator_before, service.generator.parameters()))

    def test_frozen_discriminator_leaves_its_schedule_alone(self, make_train_config, synth_six, recwarn):
        service = TrainingService(make_train_config(freeze_discriminator=True))
        service.train_step(list(synth_six.sheets[:2]))
        assert not [w for w in recwarn if "lr_scheduler.step()" in str(w.message)]
        assert service.d_scheduler.last_epoch == 0
        assert service.g_scheduler.last_epoch == 1

    def test_regression_alone_descends_on_one_example(self, make_train_config, synth_six):
        config = make_train_config(
            total_steps=200, batch_size=1, freeze_discriminator=True, hue_augmentation=False,
            dropout_strategy="none",
            loss_weights={"lambda_reg": 100.0, "lambda_dmn": 0.0, "lambda_ssim": 0.0, "lambda_mcyc": 0.0},
        )
        service = TrainingService(config)
        sheet = synth_six.sheets[0]
        before = forward_reg(service.generator, sheet)
        for _ in range(100):
            service.train_step([sheet])
        assert forward_reg(service.generator, sheet) < before

    @pytest.mark.parametrize("overrides", [
        {"adversarial_on_forward_output": True},
        {"replacement_strategy": "original", "dropout_strategy": "original"},
        {"dropout_strategy": "curriculum", "hue_augmentation": False},
    ])
    def test_variants_run(self, make_train_config, synth_six, overrides):
        service = TrainingService(make_train_config(**overrides))
        breakdown = service.train_step(list(synth_six.sheets[:3]))
        assert math.isfinite(breakdown.total_g)

    def test_empty_batch(self, make_train_config):
        with pytest.raises(ContractViolationError):
            TrainingService(make_train_config()).train_step([])


class TestTrainLoop:
    def test_run_directory_contents(self, make_train_config, splits, tmp_path):
        train_set, test_set = splits
        run = TrainingService(make_train_config()).train(train_set, test_set, tmp_path)

        assert isinstance(run, TrainingRun)
        assert [record.step for record in run.evaluations] == [2, 4]
        assert run.best_l1 == min(record.l1 for record in run.evaluations)
        assert run.best_checkpoint == tmp_path / BEST_CHECKPOINT
        assert (tmp_path / BEST_GENERATOR).exists()
        assert latest_checkpoint(tmp_path).name == checkpoint_name(4)
        assert [record.step for record in read_metrics_log(tmp_path)] == [2, 4]
        first = json.loads((tmp_path / METRICS_LOG).read_text().splitlines()[0])
        assert first["lr"] == pytest.approx(1e-4) and "rss_bytes" in first
        assert [entry.step for entry in run.loss_history] == [1, 2, 3, 4]

    def test_old_checkpoints_are_pruned(self, make_train_config, splits, tmp_path):
        train_set, test_set = splits
        config = make_train_config(total_steps=6, checkpoint_every=1, keep_checkpoints=2, eval_every=3)
        TrainingService(config).train(train_set, test_set, tmp_path)
        names = sorted(p.name for p in (tmp_path / "checkpoints").glob("*.pt"))
        assert names == [checkpoint_name(5), checkpoint_name(6)]

    def test_seeded_runs_are_identical(self, make_train_config, splits, tmp_path):
        train_set, test_set = splits
        a = TrainingService(make_train_config()).train(train_set, test_set, tmp_path / "a")
        b = TrainingService(make_train_config()).train(train_set, test_set, tmp_path / "b")
        assert a.loss_history == b.loss_history
        assert [r.l1 for r in a.evaluations] == [r.l1 for r in b.evaluations]

    def test_resume_matches_uninterrupted_run(self, make_train_config, splits, tmp_path):
        train_set, test_set = splits
        config = make_train_config(keep_checkpoints=10)
        full_dir = tmp_path / "full"
        full = TrainingService(config).train(train_set, test_set, full_dir)

        resumed_dir = tmp_path / "resumed"
        shutil.copytree(full_dir, resumed_dir)
        service = TrainingService.resume(resumed_dir / "checkpoints" / checkpoint_name(2), config)
        assert service.step == 2
        resumed = service.train(train_set, test_set, resumed_dir)

        assert [r.l1 for r in resumed.evaluations] == [r.l1 for r in full.evaluations]
        assert read_metrics_log(resumed_dir) == read_metrics_log(full_dir)
        final_full = TrainingService.resume(full_dir / "checkpoints" / checkpoint_name(4), config)
        for a, b in zip(final_full.generator.parameters(), service.generator.parameters()):
            assert torch.equal(a, b)

    def test_final_evaluation_writes_reports(self, make_train_config, splits, tmp_path):
        train_set, test_set = splits
        run = TrainingService(make_train_config(final_evaluation=True)).train(train_set, test_set, tmp_path)
        assert (tmp_path / FINAL_METRICS).exists()
        reports = read_final_reports(tmp_path)
        assert [report.sources_available for report in reports] == [3, 2, 1]
        assert all(report.average_fid is not None for report in reports)
        assert all(report.extractor == "random-projection" for report in reports)
        assert [r.model_dump() for r in run.final_reports] == [r.model_dump() for r in reports]

    def test_empty_sets(self, make_train_config, splits, tmp_path):
        train_set, test_set = splits
        with pytest.raises(DatasetError):
            TrainingService(make_train_config()).train(SpriteDataset(), test_set, tmp_path)
        with pytest.raises(DatasetError):
            TrainingService(make_train_config()).train(train_set, SpriteDataset(), tmp_path)
