import struct

import pytest
import torch

from sprite_imputer.exceptions import WeightContainerError
from sprite_imputer.models import Discriminator, Generator
from sprite_imputer.schemas.networks import DiscriminatorConfig, GeneratorConfig
from sprite_imputer.services.batch_service import build_forward_input, collate
from sprite_imputer.services.checkpoint_service import load_checkpoint, load_generator, save_checkpoint
from sprite_imputer.services.training_service import TrainingService
from sprite_imputer.services.weights_service import (
    MAGIC,
    decode_weights,
    encode_weights,
    load_weights,
    save_weights,
)

from tests.conftest import TINY_WIDTH


def generator_inputs(sheets):
    return collate([build_forward_input(sheet, 3, {1}) for sheet in sheets])


class TestWeightContainer:
    def test_round_trip_reproduces_outputs(self, tiny_generator, synth_six, tmp_path):
        path = save_weights(tiny_generator, tmp_path / "g.spw")
        loaded = load_weights(path)
        tiny_generator.eval()
        loaded.eval()
        inputs = generator_inputs(synth_six.sheets[:2])
        with torch.no_grad():
            assert torch.equal(tiny_generator(*inputs), loaded(*inputs))
        assert loaded.config == tiny_generator.config

    def test_discriminator_round_trip(self, tiny_discriminator):
        loaded = decode_weights(encode_weights(tiny_discriminator))
        assert isinstance(loaded, Discriminator)
        for a, b in zip(tiny_discriminator.parameters(), loaded.parameters()):
            assert torch.equal(a, b)

    def test_header_layout(self, tiny_generator):
        data = encode_weights(tiny_generator)
        magic, version, kind, reserved, _ = struct.unpack_from("<8sHBBI", data, 0)
        assert (magic, version, kind, reserved) == (MAGIC, 1, 1, 0)

    def test_bad_magic(self, tiny_generator):
        data = bytearray(encode_weights(tiny_generator))
        data[:8] = b"NOTMAGIC"
        with pytest.raises(WeightContainerError, match="magic"):
            decode_weights(bytes(data))

    def test_version_mismatch(self, tiny_generator):
        data = bytearray(encode_weights(tiny_generator))
        struct.pack_into("<H", data, 8, 99)
        with pytest.raises(WeightContainerError, match="version 99"):
            decode_weights(bytes(data))

    def test_truncated(self, tiny_generator):
        data = encode_weights(tiny_generator)
        with pytest.raises(WeightContainerError, match="truncated"):
            decode_weights(data[:-10])
        with pytest.raises(WeightContainerError, match="truncated"):
            decode_weights(data[:5])

    def test_corrupt_payload(self, tiny_generator):
        data = bytearray(encode_weights(tiny_generator))
        data[-40] ^= 0xFF
        with pytest.raises(WeightContainerError, match="checksum"):
            decode_weights(bytes(data))

    def test_shape_mismatch_names_layer(self, tiny_generator):
        other = Generator(GeneratorConfig(width_multiplier=TINY_WIDTH * 2))
        with pytest.raises(WeightContainerError, match="layer '"):
            decode_weights(encode_weights(tiny_generator), into=other)

    def test_kind_mismatch(self, tiny_generator):
        with pytest.raises(WeightContainerError, match="kind"):
            decode_weights(encode_weights(tiny_generator),
                           into=Discriminator(DiscriminatorConfig(width_multiplier=TINY_WIDTH)))


class TestCheckpoints:
    def test_checkpoint_restores_everything(self, make_train_config, synth_six, tmp_path):
        service = TrainingService(make_train_config())
        service.train_step(list(synth_six.sheets[:2]))
        checkpoint = service.make_checkpoint()
        path = save_checkpoint(checkpoint, tmp_path / "c.pt")
        restored = load_checkpoint(path)
        assert restored.step == 1
        assert restored.numpy_rng == service.rng.bit_generator.state
        assert torch.equal(restored.torch_rng, checkpoint.torch_rng)
        for a, b in zip(service.generator.parameters(), restored.generator.parameters()):
            assert torch.equal(a, b)
        assert restored.g_optimizer["state"].keys() == service.g_optimizer.state_dict()["state"].keys()

    def test_load_generator_accepts_both_formats(self, make_train_config, synth_six, tmp_path):
        service = TrainingService(make_train_config())
        checkpoint_path = save_checkpoint(service.make_checkpoint(), tmp_path / "c.pt")
        weights_path = save_weights(service.generator, tmp_path / "g.spw")
        inputs = generator_inputs(synth_six.sheets[:1])
        with torch.no_grad():
            a = load_generator(checkpoint_path)(*inputs)
            b = load_generator(weights_path)(*inputs)
        assert torch.equal(a, b)

    def test_garbage_checkpoint(self, tmp_path):
        path = tmp_path / "bad.pt"
        path.write_bytes(b"garbage")
        with pytest.raises(WeightContainerError):
            load_generator(path)
