import pytest
import torch

from zonocert.attacks import (
    AttackConfig,
    Witness,
    attack_dataset,
    empirical_robust_accuracy,
    fgsm,
    find_strategy_gap_witness,
    frame_mask,
    pgd,
    pgd_batch,
    verify_witness,
    WitnessSearch,
)
from zonocert.cells import CellWeights, OutputLayer, RNNModel, forward_concrete, param_names, param_shape
from zonocert.certifier import PerturbationSpec, certified_accuracy, certify
from zonocert.domains import DTYPE


def data(gen, model, n=10, length=3):
    return [(X, int(forward_concrete(model, X).argmax())) for X in torch.randn(n, length, model.input_size, generator=gen, dtype=DTYPE)]


def linear_like_model():
    """Vanilla cell with zero weights except a direct input path, so logit gaps are monotone in x."""
    d, H = 2, 1
    p = {n: torch.zeros(param_shape(n, d, H), dtype=DTYPE) for n in param_names("vanilla")}
    p["W_x"] = torch.tensor([[1.0, -1.0]], dtype=DTYPE)
    out = OutputLayer(torch.tensor([[1.0], [-1.0]], dtype=DTYPE), torch.zeros(2, dtype=DTYPE))
    return RNNModel(CellWeights("vanilla", d, H, p), out)


def test_config_validation():
    assert AttackConfig(0.1, steps=10).alpha == pytest.approx(0.025)
    for bad in (dict(epsilon=-1), dict(epsilon=0.1, steps=0), dict(epsilon=0.1, restarts=0), dict(epsilon=0.1, step_size=0)):
        with pytest.raises(ValueError):
            AttackConfig(**bad)
    with pytest.raises(ValueError):
        AttackConfig(0.1, strategy="one_frame")


def test_frame_mask():
    assert frame_mask(PerturbationSpec(0.1), 3).flatten().tolist() == [1, 1, 1]
    assert frame_mask(PerturbationSpec(0.1, "one_frame", 1), 3).flatten().tolist() == [0, 1, 0]


def test_fgsm_direction_on_monotone_model():
    m = linear_like_model()
    X = torch.tensor([[0.5, 0.1]], dtype=DTYPE)
    adv = fgsm(m, X, 0, AttackConfig(0.2))
    # lowering the class-0 logit means decreasing x0 and increasing x1
    assert torch.allclose(adv, torch.tensor([[0.3, 0.3]], dtype=DTYPE))


def test_fgsm_respects_frame_and_ball(gen):
    m = RNNModel.random("lstm", 2, 3, 2, gen)
    X = torch.randn(3, 2, generator=gen, dtype=DTYPE)
    adv = fgsm(m, X, 0, AttackConfig(0.1, strategy="one_frame", frame=2))
    assert torch.equal(adv[:2], X[:2])
    assert (adv - X).abs().max() <= 0.1 + 1e-15


@pytest.mark.parametrize("kind", ["vanilla", "lstm", "gru"])
def test_pgd_stays_in_ball(gen, kind):
    m = RNNModel.random(kind, 2, 3, 2, gen, scale=2.0)
    samples = data(gen, m, 8)
    X = torch.stack([x for x, _ in samples])
    y = torch.tensor([l for _, l in samples])
    for spec in (dict(), dict(strategy="one_frame", frame=0)):
        ex, ok = pgd_batch(m, X, y, AttackConfig(0.3, steps=20, restarts=4, **spec))
        assert (ex - X).abs().max() <= 0.3 + 1e-12
        if spec:
            assert torch.equal(ex[:, 1:], X[:, 1:])
        pred = forward_concrete(m, ex).argmax(-1)
        assert torch.equal(pred != y, ok)


def test_zero_epsilon_is_clean(gen):
    m = RNNModel.random("gru", 2, 3, 2, gen)
    X = torch.randn(3, 2, generator=gen, dtype=DTYPE)
    y = int(forward_concrete(m, X).argmax())
    r = pgd(m, X, y, AttackConfig(0.0))
    assert not r.success and torch.equal(r.example, X)
    assert pgd(m, X, 1 - y, AttackConfig(0.0)).success


def test_pgd_deterministic(gen):
    m = RNNModel.random("lstm", 2, 3, 2, gen, scale=2.0)
    samples = data(gen, m, 12)
    cfg = AttackConfig(0.4, steps=15, restarts=3, seed=7)
    assert attack_dataset(m, samples, cfg) == attack_dataset(m, samples, cfg)


def test_attack_breaks_monotone_model_exactly():
    m = linear_like_model()
    X = torch.tensor([[0.25, 0.0]], dtype=DTYPE)  # gap 2*tanh(x0 - x1) hits zero at eps 0.125
    assert not pgd(m, X, 0, AttackConfig(0.12, restarts=2)).success
    assert pgd(m, X, 0, AttackConfig(0.13, restarts=2)).success


def test_one_frame_no_weaker_than_all_frame(gen):
    m = RNNModel.random("vanilla", 2, 3, 2, gen, scale=2.0)
    samples = data(gen, m, 15)
    full = empirical_robust_accuracy(m, samples, AttackConfig(0.3, steps=20, restarts=5))
    for t in range(3):
        one = empirical_robust_accuracy(m, samples, AttackConfig(0.3, steps=20, restarts=5, strategy="one_frame", frame=t))
        assert one >= full


@pytest.mark.parametrize("kind", ["vanilla", "lstm", "gru"])
def test_certified_never_attacked(gen, kind):
    m = RNNModel.random(kind, 2, 3, 2, gen, scale=1.5)
    samples = data(gen, m, 20)
    for eps in (0.05, 0.2):
        spec = PerturbationSpec(eps)
        cert, res = certified_accuracy(m, samples, spec)
        broken = attack_dataset(m, samples, AttackConfig(eps, steps=30, restarts=8))
        assert not any(r.certified and b for r, b in zip(res, broken))
        assert sum(not b for b in broken) / len(samples) >= cert


def test_witness_found_and_verified():
    w = find_strategy_gap_witness(WitnessSearch(trials=20))
    assert w is not None and verify_witness(w)
    for t in range(w.X.shape[0]):
        assert certify(w.model, w.X, w.label, PerturbationSpec(w.epsilon, "one_frame", t)).certified
    assert (w.adversarial - w.X).abs().max() <= w.epsilon + 1e-12


def test_verify_witness_rejects_bad_examples(gen):
    m = RNNModel.random("vanilla", 1, 2, 2, gen)
    X = torch.randn(3, 1, generator=gen, dtype=DTYPE)
    y = int(forward_concrete(m, X).argmax())
    assert not verify_witness(Witness(m, X, y, 0.01, X.clone(), 0))  # example not adversarial
    assert not verify_witness(Witness(m, X, y, 0.0, X.clone(), 0))
    assert not verify_witness(Witness(m, X, y, 0.01, X + 1.0, 0))  # outside the ball
