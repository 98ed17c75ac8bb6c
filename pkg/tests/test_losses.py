import math

import pytest
import torch
from torch.autograd import gradcheck

from codedehaze.exceptions.errors import ContractViolationError
from codedehaze.services.losses import (
    loss_adv,
    loss_bce,
    loss_ce,
    loss_l1,
    loss_perceptual,
    temperature_softmax,
)

LN2 = math.log(2.0)


def test_l1_examples():
    assert loss_l1(torch.zeros(1, 3, 4, 4), torch.zeros(1, 3, 4, 4)).item() == 0.0
    assert loss_l1(torch.zeros(1, 3, 4, 4), torch.ones(1, 3, 4, 4)).item() == 1.0
    assert loss_l1(torch.tensor([0.0, 0.5]), torch.tensor([0.5, 0.5])).item() == pytest.approx(0.25)


def test_l1_rejects_shape_mismatch():
    with pytest.raises(ContractViolationError):
        loss_l1(torch.zeros(2), torch.zeros(3))


def test_perceptual_is_feature_l1():
    assert loss_perceptual(torch.zeros(1, 2, 2, 2), torch.full((1, 2, 2, 2), 0.5)).item() == pytest.approx(0.5)


def test_adv_examples():
    zero = torch.zeros(1, 1, 2, 2)
    assert loss_adv(zero, zero, "discriminator").item() == pytest.approx(2 * LN2)
    assert loss_adv(None, zero, "generator").item() == pytest.approx(LN2)
    big = torch.full((1, 1, 2, 2), 50.0)
    assert loss_adv(big, -big, "discriminator").item() < 1e-12


def test_adv_discriminator_needs_real_scores():
    with pytest.raises(ContractViolationError):
        loss_adv(None, torch.zeros(1), "discriminator")


def test_ce_examples():
    targets = torch.tensor([[3, 1]])
    logits = torch.full((1, 2, 128), -1e4)
    logits[0, 0, 3] = 1e4
    logits[0, 1, 1] = 1e4
    assert loss_ce(logits, targets).item() < 1e-6
    assert loss_ce(torch.zeros(1, 2, 128), targets).item() == pytest.approx(math.log(128))


def test_ce_rejects_invalid_label():
    with pytest.raises(ContractViolationError):
        loss_ce(torch.zeros(1, 2, 4), torch.tensor([[0, 4]]))


def test_bce_examples():
    half = torch.full((2,), 0.5)
    assert loss_bce(half, torch.tensor([0.0, 1.0])).item() == pytest.approx(LN2)
    assert loss_bce(half, torch.tensor([0.0, 1.0]), reduction="sum").item() == pytest.approx(2 * LN2)
    saturated = torch.tensor([1e-7, 1 - 1e-7], dtype=torch.float64)
    assert loss_bce(saturated, torch.tensor([0.0, 1.0])).item() < 1e-6


def test_bce_rejects_shape_mismatch():
    with pytest.raises(ContractViolationError):
        loss_bce(torch.full((3,), 0.5), torch.zeros(2))


def test_temperature_softmax_examples():
    logits = torch.tensor([2.0, 0.0])
    assert torch.allclose(temperature_softmax(logits, 1.0), torch.softmax(logits, -1))
    probs = temperature_softmax(logits, 2.0)
    assert probs[0].item() == pytest.approx(math.e / (math.e + 1))
    assert probs[1].item() == pytest.approx(1 / (math.e + 1))
    assert torch.allclose(temperature_softmax(logits, 1e6), torch.tensor([0.5, 0.5]), atol=1e-5)


@pytest.mark.parametrize("temperature", [0.0, -1.0])
def test_temperature_softmax_rejects_nonpositive(temperature):
    with pytest.raises(ContractViolationError):
        temperature_softmax(torch.zeros(3), temperature)


def test_temperature_entropy_is_nondecreasing():
    logits = torch.randn(5, 10, generator=torch.Generator().manual_seed(0), dtype=torch.float64)
    entropies = []
    for temperature in (0.5, 1.0, 2.0, 4.0, 8.0):
        probs = temperature_softmax(logits, temperature)
        entropies.append(-(probs * probs.log()).sum(-1))
    for low, high in zip(entropies, entropies[1:]):
        assert torch.all(high >= low - 1e-12)


def test_losses_match_finite_differences():
    gen = torch.Generator().manual_seed(11)

    def rand(*shape, grad=True, scale=1.0):
        return (torch.rand(*shape, generator=gen, dtype=torch.float64) * scale).requires_grad_(grad)

    for _ in range(20):
        target = rand(1, 3, 4, 4, grad=False)
        # keep |x - y| away from the kink of the absolute value
        pred = (target + 0.2 + rand(1, 3, 4, 4, grad=False) * 0.5).requires_grad_(True)
        assert gradcheck(lambda p: loss_l1(target, p), (pred,), rtol=1e-4)

        labels = torch.randint(0, 6, (1, 5), generator=gen)
        assert gradcheck(lambda lg: loss_ce(lg, labels), (rand(1, 5, 6, scale=4.0),), rtol=1e-4)

        mask = (torch.rand(8, generator=gen) > 0.5).double()
        scores = (rand(8, grad=False) * 0.8 + 0.1).requires_grad_(True)
        assert gradcheck(lambda s: loss_bce(s, mask), (scores,), rtol=1e-4)

        real, fake = rand(1, 1, 2, 2), rand(1, 1, 2, 2)
        assert gradcheck(lambda r, f: loss_adv(r, f, "discriminator"), (real, fake), rtol=1e-4)
        assert gradcheck(lambda f: loss_adv(None, f, "generator"), (fake,), rtol=1e-4)
