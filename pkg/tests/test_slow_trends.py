"""
Desk-scale training trends. Minutes to hours on a CPU; run with ``pytest -m slow``.
"""
import statistics

import pytest

from sprite_imputer.schemas.training import TrainConfig
from sprite_imputer.services.dataset_service import split
from sprite_imputer.services.evaluation_service import RandomProjectionExtractor, evaluate_all_scenarios, evaluate_scenarios
from sprite_imputer.services.synth_service import synth_dataset
from sprite_imputer.services.training_service import TrainingService

pytestmark = pytest.mark.slow

SEEDS = (0, 1, 2)


def overfit_config(seed: int, replacement: str = "forward_only", **overrides) -> TrainConfig:
    values = dict(
        total_steps=2_000,
        batch_size=4,
        width_multiplier=0.25,
        eval_every=500,
        eval_subsample=8,
        log_every=100,
        final_evaluation=False,
        seed=seed,
        dropout_strategy="conservative",
        replacement_strategy=replacement,
    )
    values.update(overrides)
    return TrainConfig(**values)


def overfit(seed: int, replacement: str, run_dir) -> TrainingService:
    characters = synth_dataset(8, seed=seed)
    service = TrainingService(overfit_config(seed, replacement))
    service.train(characters, characters, run_dir)
    return service


_trained = {}


def continued(seed: int, replacement: str, tmp_path_factory):
    """Overfit on 8 characters, then 3,000 more steps on a 64-character train split."""
    key = (seed, replacement)
    if key not in _trained:
        base = tmp_path_factory.mktemp(f"trend_{replacement}_{seed}")
        first = overfit(seed, replacement, base / "overfit")
        train_set, test_set = split(synth_dataset(64, seed=seed + 100), 0.85, seed)
        service = TrainingService(overfit_config(seed, replacement, total_steps=3_000, eval_every=1_000),
                                  generator=first.generator, discriminator=first.discriminator)
        service.train(train_set, test_set, base / "continued")
        reports = evaluate_all_scenarios(service.generator, test_set, extractor=RandomProjectionExtractor())
        _trained[key] = {report.sources_available: report for report in reports}
    return _trained[key]


def test_overfits_small_set(tmp_path):
    service = overfit(0, "forward_only", tmp_path)
    characters = synth_dataset(8, seed=0)
    report = evaluate_scenarios(service.generator, characters, 3, compute_fid=False)
    assert report.average_l1 < 0.05


def test_fewer_sources_score_worse(tmp_path_factory):
    runs = [continued(seed, "forward_only", tmp_path_factory) for seed in SEEDS]
    l1 = {k: statistics.fmean(run[k].average_l1 for run in runs) for k in (3, 2, 1)}
    fid = {k: statistics.fmean(run[k].average_fid for run in runs) for k in (3, 1)}
    assert l1[3] <= l1[2] <= l1[1]
    assert fid[3] <= fid[1]


def test_forward_only_replacement_is_no_worse(tmp_path_factory):
    def mean_l1(replacement):
        runs = [continued(seed, replacement, tmp_path_factory) for seed in SEEDS]
        return statistics.fmean(statistics.fmean(run[k].average_l1 for k in (3, 2, 1)) for run in runs)

    assert mean_l1("forward_only") <= mean_l1("original")
