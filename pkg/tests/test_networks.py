import pytest
import torch
from torch import nn

from sprite_imputer.exceptions import ContractViolationError
from sprite_imputer.models import Discriminator, Generator, param_count
from sprite_imputer.schemas.networks import DiscriminatorConfig, GeneratorConfig
from sprite_imputer.services.batch_service import build_forward_input, collate, sheet_tensor
from sprite_imputer.services.loss_service import adv_d, dmn_loss

REFERENCE_GENERATOR_PARAMS = 104_887_616
REFERENCE_DISCRIMINATOR_PARAMS = 44_726_272


def meta_count(factory) -> int:
    with torch.device("meta"):
        return param_count(factory())


class TestParameterCounts:
    def test_generator_default_width(self):
        count = meta_count(Generator)
        assert count == 104_875_456
        assert abs(count - REFERENCE_GENERATOR_PARAMS) / REFERENCE_GENERATOR_PARAMS < 0.10

    def test_generator_original_width(self):
        assert meta_count(lambda: Generator(GeneratorConfig.original_collagan())) == 6_562_672

    def test_discriminator_default_width(self):
        count = meta_count(Discriminator)
        assert count == 44_709_888
        assert abs(count - REFERENCE_DISCRIMINATOR_PARAMS) / REFERENCE_DISCRIMINATOR_PARAMS < 0.10


class TestGenerator:
    def test_shape_trace(self):
        with torch.device("meta"):
            trace = dict(Generator().shape_trace())
        assert trace["branch_skip_0"] == (64, 64, 64)
        assert trace["branch_skip_1"] == (128, 32, 32)
        assert trace["branch_skip_2"] == (256, 16, 16)
        assert trace["branch_skip_3"] == (512, 8, 8)
        assert trace["branch_output"] == (1024, 4, 4)
        assert trace["bottleneck_input"] == (4096, 4, 4)
        assert trace["output"] == (4, 64, 64)

    def test_forward_shape_and_range(self, tiny_generator, synth_six):
        sources, labels = collate([build_forward_input(sheet, 2, {0}) for sheet in synth_six.sheets[:3]])
        out = tiny_generator(sources, labels)
        assert out.shape == (3, 4, 64, 64)
        assert out.min().item() >= -1.0 and out.max().item() <= 1.0

    def test_target_label_changes_output(self, tiny_generator, synth_six):
        sheet = sheet_tensor(synth_six.sheets[0])
        tiny_generator.eval()
        with torch.no_grad():
            a = tiny_generator(*collate([build_forward_input(sheet, 0)]))
            b = tiny_generator(*collate([build_forward_input(sheet, 3)]))
        assert not torch.equal(a, b)

    def test_zero_slot_content_changes_output(self, tiny_generator, synth_six):
        sheet = sheet_tensor(synth_six.sheets[0])
        sources, labels = collate([build_forward_input(sheet, 3, {1})])
        filled = sources.clone()
        filled[:, 1] = sheet[1]
        tiny_generator.eval()
        with torch.no_grad():
            assert not torch.equal(tiny_generator(sources, labels), tiny_generator(filled, labels))

    def test_first_encoder_block_is_unnormalized(self, tiny_generator):
        for branch in tiny_generator.branches:
            assert not any(isinstance(m, nn.InstanceNorm2d) for m in branch.levels[0].modules())
            assert all(unit[0].bias is not None for unit in branch.levels[0])
            assert all(any(isinstance(m, nn.InstanceNorm2d) for m in level.modules())
                       for level in branch.levels[1:])

    def test_rejects_bad_shapes(self, tiny_generator):
        with pytest.raises(ContractViolationError):
            tiny_generator(torch.zeros(1, 3, 4, 64, 64), torch.zeros(1, 4, 64, 64))
        with pytest.raises(ContractViolationError):
            tiny_generator(torch.zeros(2, 4, 4, 64, 64), torch.zeros(1, 4, 64, 64))

    def test_every_parameter_gets_gradient(self, tiny_generator, synth_six):
        sources, labels = collate([build_forward_input(sheet, 1, {3}) for sheet in synth_six.sheets[:2]])
        target = torch.stack([sheet_tensor(sheet)[1] for sheet in synth_six.sheets[:2]])
        loss = (tiny_generator(sources, labels) - target).abs().mean()
        loss.backward()
        for name, parameter in tiny_generator.named_parameters():
            assert parameter.grad is not None, name
            assert parameter.grad.abs().sum().item() > 0, name

    def test_config_rejects_broken_decoder(self):
        with pytest.raises(ValueError):
            GeneratorConfig(decoder_channels=[1024, 512, 256, 128, 32])


class TestDiscriminator:
    def test_outputs(self, tiny_discriminator):
        out = tiny_discriminator(torch.rand(5, 4, 64, 64) * 2 - 1)
        assert out.adv.shape == (5,)
        assert out.domain_probs.shape == (5, 4)
        assert torch.allclose(out.domain_probs.sum(dim=1), torch.ones(5), atol=1e-6)

    def test_domain_probabilities_are_strictly_positive(self, tiny_discriminator):
        out = tiny_discriminator(torch.rand(8, 4, 64, 64) * 2 - 1)
        assert (out.domain_probs > 0).all()

    def test_every_parameter_gets_gradient(self, tiny_discriminator):
        generator = torch.Generator().manual_seed(0)
        real = torch.rand(4, 4, 64, 64, generator=generator) * 2 - 1
        fake = torch.rand(4, 4, 64, 64, generator=generator) * 2 - 1
        tiny_discriminator.eval()
        scores_real, scores_fake = tiny_discriminator(real), tiny_discriminator(fake)
        loss = adv_d(scores_real.adv, scores_fake.adv) + dmn_loss(scores_real.domain_probs, torch.tensor([0, 1, 2, 3]))
        loss.backward()
        for name, parameter in tiny_discriminator.named_parameters():
            assert parameter.grad is not None, name
            assert parameter.grad.abs().sum().item() > 0, name

    def test_eval_mode_is_deterministic(self, tiny_discriminator):
        images = torch.rand(2, 4, 64, 64) * 2 - 1
        tiny_discriminator.eval()
        first, second = tiny_discriminator(images), tiny_discriminator(images)
        assert torch.equal(first.adv, second.adv)

    def test_rejects_bad_shape(self, tiny_discriminator):
        with pytest.raises(ContractViolationError):
            tiny_discriminator(torch.zeros(1, 3, 64, 64))

    def test_config_requires_six_halvings(self):
        with pytest.raises(ValueError):
            DiscriminatorConfig(image_size=32)
