import math

import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from sprite_imputer.exceptions import ContractViolationError
from sprite_imputer.schemas.training import LossWeights
from sprite_imputer.services.loss_service import (
    DiscriminatorTerms,
    GeneratorTerms,
    adv_d,
    adv_g,
    dmn_loss,
    first_non_finite,
    l_mcyc,
    l_reg,
    l_ssim,
    make_breakdown,
    ssim,
    ssim_term,
    total_d,
    total_g,
)


def seeded(seed: int, *shape) -> torch.Tensor:
    generator = torch.Generator().manual_seed(seed)
    return torch.randn(*shape, generator=generator, dtype=torch.float64)


class TestPixelLosses:
    def test_identical_is_zero(self):
        x = seeded(0, 2, 4, 8, 8)
        assert l_reg(x, x.clone()).item() == 0.0

    def test_opposite_constants(self):
        assert l_reg(-torch.ones(4, 8, 8), torch.ones(4, 8, 8)).item() == pytest.approx(2.0, abs=1e-6)

    def test_small_example(self):
        x = torch.tensor([[0.0, 1.0], [-1.0, 0.5]]).view(1, 2, 2)
        y = torch.tensor([[0.5, 1.0], [-1.0, 0.0]]).view(1, 2, 2)
        assert l_reg(x, y).item() == pytest.approx(0.25, abs=1e-6)

    def test_shape_mismatch(self):
        with pytest.raises(ContractViolationError):
            l_reg(torch.zeros(4, 8, 8), torch.zeros(4, 8, 9))

    def test_mcyc_sums_pairs(self):
        sources = [torch.zeros(4, 8, 8) for _ in range(3)]
        recon = [torch.full((4, 8, 8), 0.1) for _ in range(3)]
        assert l_mcyc(sources, recon).item() == pytest.approx(0.3, abs=1e-6)
        assert l_mcyc(sources, sources).item() == 0.0

    def test_mcyc_single_pair_equals_reg(self):
        x, y = seeded(1, 4, 8, 8), seeded(2, 4, 8, 8)
        assert l_mcyc([x], [y]).item() == l_reg(x, y).item()

    def test_mcyc_rejects_misaligned_lists(self):
        with pytest.raises(ContractViolationError):
            l_mcyc([torch.zeros(1)], [])
        with pytest.raises(ContractViolationError):
            l_mcyc([], [])

    @given(st.integers(min_value=0, max_value=2**31 - 1))
    @settings(max_examples=25, deadline=None)
    def test_reg_nonnegative_and_symmetric(self, seed):
        x, y = seeded(seed, 3, 5, 5), seeded(seed + 1, 3, 5, 5)
        value = l_reg(x, y).item()
        assert value > 0
        assert value == pytest.approx(l_reg(y, x).item(), abs=1e-12)


class TestSsim:
    def test_identical_images(self):
        x = seeded(3, 1, 4, 64, 64)
        assert ssim(x, x).item() == pytest.approx(1.0, abs=1e-6)
        assert ssim_term(x, x).item() == pytest.approx(0.0, abs=1e-6)

    def test_uncorrelated_noise_is_near_ln2(self):
        x, y = seeded(4, 64, 64), seeded(5, 64, 64)
        assert abs(ssim(x, y).item()) < 0.1
        assert ssim_term(x, y).item() == pytest.approx(math.log(2.0), abs=0.1)

    def test_negated_zero_mean_pattern(self):
        # a checkerboard keeps local means at zero, so only the structure term flips sign;
        # negating plain noise would flip the luminance term too and give SSIM near +1
        index = torch.arange(64, dtype=torch.float64)
        x = torch.where((index.view(-1, 1) + index.view(1, -1)) % 2 == 0, 1.0, -1.0)
        assert ssim(x, -x).item() < 0
        assert ssim_term(x, -x).item() > math.log(2.0)

    def test_symmetric(self):
        x, y = seeded(6, 2, 3, 32, 32), seeded(7, 2, 3, 32, 32)
        assert ssim(x, y).item() == pytest.approx(ssim(y, x).item(), abs=1e-12)

    def test_l_ssim_sums_terms(self):
        xs = [seeded(s, 1, 4, 16, 16) for s in (8, 9)]
        ys = [seeded(s, 1, 4, 16, 16) for s in (10, 11)]
        expected = ssim_term(xs[0], ys[0]) + ssim_term(xs[1], ys[1])
        assert l_ssim(xs, ys).item() == pytest.approx(expected.item(), abs=1e-12)

    def test_window_larger_than_image(self):
        with pytest.raises(ContractViolationError):
            ssim(torch.zeros(8, 8), torch.zeros(8, 8))


class TestAdversarialAndDomain:
    def test_adv_d_examples(self):
        assert adv_d(torch.ones(4), torch.zeros(4)).item() == 0.0
        assert adv_d(torch.zeros(4), torch.ones(4)).item() == pytest.approx(2.0)
        assert adv_d(torch.tensor([1.0, 0.0]), torch.tensor([0.5])).item() == pytest.approx(0.75)

    def test_adv_g_examples(self):
        assert adv_g(torch.ones(3)).item() == 0.0
        assert adv_g(torch.zeros(3)).item() == pytest.approx(1.0)
        assert adv_g(torch.tensor([0.5, 1.0])).item() == pytest.approx(0.125)

    def test_empty_scores(self):
        with pytest.raises(ContractViolationError):
            adv_g(torch.zeros(0))

    def test_dmn_examples(self):
        certain = torch.tensor([[0.0, 0.0, 1.0, 0.0]])
        assert dmn_loss(certain, 2).item() == pytest.approx(0.0, abs=1e-6)
        uniform = torch.full((3, 4), 0.25)
        assert dmn_loss(uniform, torch.tensor([0, 1, 3])).item() == pytest.approx(math.log(4), abs=1e-6)
        half = torch.tensor([[0.5, 0.5, 0.0, 0.0]])
        assert dmn_loss(half, 1).item() == pytest.approx(math.log(2), abs=1e-6)

    def test_dmn_zero_probability_is_finite(self):
        value = dmn_loss(torch.tensor([[1.0, 0.0, 0.0, 0.0]]), 3).item()
        assert math.isfinite(value)
        assert value == pytest.approx(-math.log(1e-12), rel=1e-6)


class TestWeightedTotals:
    def test_zero_terms(self):
        weights = LossWeights()
        assert total_g(GeneratorTerms(0.0, 0.0, 0.0, 0.0, 0.0), weights) == 0.0
        assert total_d(DiscriminatorTerms(0.0, 0.0), weights) == 0.0

    def test_unit_terms_with_default_weights(self):
        assert total_g(GeneratorTerms(1.0, 1.0, 1.0, 1.0, 1.0), LossWeights()) == 131.0

    def test_discriminator_total(self):
        value = total_d(DiscriminatorTerms(adv_d=0.75, dmn_real=math.log(4)), LossWeights())
        assert value == 0.75 + 10 * math.log(4)
        assert value == pytest.approx(14.613, abs=1e-3)

    def test_breakdown_recomposes(self):
        g = GeneratorTerms(*(torch.tensor(v) for v in (0.5, 0.06, 0.2, 0.3, 1.1)))
        d = DiscriminatorTerms(torch.tensor(0.4), torch.tensor(0.7))
        breakdown = make_breakdown(g, d, LossWeights())
        recomposed = GeneratorTerms(breakdown.adv_g, breakdown.reg, breakdown.mcyc, breakdown.ssim, breakdown.dmn_fake)
        assert breakdown.total_g == total_g(recomposed, LossWeights())
        assert breakdown.total_d == breakdown.adv_d + 10.0 * breakdown.dmn_real

    def test_first_non_finite(self):
        assert first_non_finite({"a": 1.0, "b": torch.tensor(2.0)}) is None
        assert first_non_finite({"a": 1.0, "b": torch.tensor(float("nan"))}) == "b"


class TestGradients:
    """Analytic gradients against central finite differences, double precision."""

    @staticmethod
    def check(fn, *inputs):
        assert torch.autograd.gradcheck(fn, inputs, eps=1e-4, atol=1e-6, rtol=1e-3)

    @staticmethod
    def separated_pair(seed: int, *shape):
        # keep |x - y| >= 0.1 so no element sits on the L1 kink
        x = seeded(seed, *shape)
        gap = 0.1 + seeded(seed + 1, *shape).abs()
        sign = torch.where(seeded(seed + 2, *shape) > 0, 1.0, -1.0).to(torch.float64)
        return x.requires_grad_(), (x.detach() + sign * gap).requires_grad_()

    def test_l_reg(self):
        self.check(l_reg, *self.separated_pair(20, 1, 2, 16, 16))

    def test_l_mcyc(self):
        x1, y1 = self.separated_pair(30, 1, 1, 16, 16)
        x2, y2 = self.separated_pair(40, 1, 1, 16, 16)
        self.check(lambda a, b, c, d: l_mcyc([a, c], [b, d]), x1, y1, x2, y2)

    def test_ssim_loss(self):
        x = (seeded(50, 1, 1, 16, 16) * 0.5).requires_grad_()
        y = (seeded(51, 1, 1, 16, 16) * 0.5).requires_grad_()
        self.check(lambda a, b: l_ssim([a], [b]), x, y)

    def test_adversarial(self):
        real = seeded(60, 16).requires_grad_()
        fake = seeded(61, 16).requires_grad_()
        self.check(adv_d, real, fake)
        self.check(adv_g, fake)

    def test_domain(self):
        logits = seeded(70, 16, 4).requires_grad_()
        labels = torch.tensor([i % 4 for i in range(16)])
        self.check(lambda z: dmn_loss(torch.softmax(z, dim=1), labels), logits)
