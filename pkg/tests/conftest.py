"""Shared fixtures: tiny networks, small synthetic datasets and run configs."""
import pytest
import torch

from sprite_imputer.models.discriminator import Discriminator
from sprite_imputer.models.generator import Generator
from sprite_imputer.schemas.networks import DiscriminatorConfig, GeneratorConfig
from sprite_imputer.schemas.training import TrainConfig
from sprite_imputer.services.synth_service import synth_dataset

TINY_WIDTH = 0.0625


@pytest.fixture
def tiny_generator() -> Generator:
    torch.manual_seed(0)
    return Generator(GeneratorConfig(width_multiplier=TINY_WIDTH))


@pytest.fixture
def tiny_discriminator() -> Discriminator:
    torch.manual_seed(0)
    return Discriminator(DiscriminatorConfig(width_multiplier=TINY_WIDTH))


@pytest.fixture(scope="session")
def synth_six():
    return synth_dataset(6, seed=0)


@pytest.fixture
def make_train_config():
    def factory(**overrides) -> TrainConfig:
        values = dict(
            total_steps=4,
            batch_size=2,
            width_multiplier=TINY_WIDTH,
            eval_every=2,
            eval_subsample=4,
            log_every=1,
            final_evaluation=False,
            seed=0,
        )
        values.update(overrides)
        return TrainConfig(**values)
    return factory
