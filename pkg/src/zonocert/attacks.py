"""FGSM/PGD attacks on embedded sequences, empirical robustness, strategy-gap witnesses."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import torch
import torch.nn.functional as F
from torch import Tensor

from .cells import RNNModel, forward_concrete
from .certifier import PerturbationSpec, Sample, certify, max_certified_radius
from .domains import DTYPE


@dataclass(frozen=True)
class AttackConfig:
    epsilon: float
    steps: int = 40
    step_size: Optional[float] = None  # defaults to 2.5 * epsilon / steps
    restarts: int = 10
    strategy: str = "all_frame"
    frame: Optional[int] = None
    seed: int = 0
    chunk: int = 256  # restarts evaluated together

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")
        if self.steps < 1 or self.restarts < 1:
            raise ValueError("steps and restarts must be at least 1")
        if self.step_size is not None and self.step_size <= 0:
            raise ValueError("step_size must be positive")
        # validates strategy/frame
        PerturbationSpec(self.epsilon, self.strategy, self.frame)

    @property
    def alpha(self) -> float:
        return 2.5 * self.epsilon / self.steps if self.step_size is None else self.step_size

    @property
    def spec(self) -> PerturbationSpec:
        return PerturbationSpec(self.epsilon, self.strategy, self.frame)


@dataclass
class AttackResult:
    example: Tensor
    success: bool


def frame_mask(spec: PerturbationSpec, T: int) -> Tensor:
    """``(T, 1)`` mask of frames the adversary may touch."""
    return torch.tensor(spec.perturbed(T), dtype=DTYPE).unsqueeze(-1)


def _frozen(model: RNNModel) -> RNNModel:
    return model.clone() if any(p.requires_grad for p in model.parameters()) else model


def _input_grad(model: RNNModel, X: Tensor, labels: Tensor) -> Tuple[Tensor, Tensor]:
    """Gradient of summed cross-entropy w.r.t. ``X`` plus the predictions at ``X``."""
    with torch.enable_grad():
        X = X.detach().requires_grad_(True)
        logits = forward_concrete(model, X)
        loss = F.cross_entropy(logits.reshape(-1, logits.shape[-1]), labels.expand(logits.shape[:-1]).reshape(-1), reduction="sum")
        (grad,) = torch.autograd.grad(loss, X)
    return grad, logits.detach().argmax(-1)


def fgsm(model: RNNModel, X: Tensor, label: int, cfg: AttackConfig) -> Tensor:
    """One signed-gradient step of size epsilon; sign(0) = 0."""
    model = _frozen(model)
    X = torch.as_tensor(X, dtype=DTYPE)
    mask = frame_mask(cfg.spec, X.shape[-2])
    grad, _ = _input_grad(model, X, torch.tensor(label))
    return X + cfg.epsilon * torch.sign(grad) * mask


def fgsm_batch(model: RNNModel, X: Tensor, labels: Tensor, cfg: AttackConfig) -> Tensor:
    model = _frozen(model)
    mask = frame_mask(cfg.spec, X.shape[-2])
    grad, _ = _input_grad(model, X, labels)
    return X + cfg.epsilon * torch.sign(grad) * mask


def _pgd_run(model, X, labels, eps, alpha, steps, mask, restarts, gen):
    """PGD from ``restarts`` random starts for a batch ``X`` of shape ``(B, T, d)``.

    Returns ``(examples, success)`` of shapes ``(B, T, d)`` and ``(B,)``; a
    success is recorded at the first iterate (any restart) that misclassifies.
    """
    B = X.shape[0]
    found = torch.zeros(B, dtype=torch.bool)
    best = X.clone()
    lo, hi = X - eps * mask, X + eps * mask
    x = X + (torch.rand((restarts,) + X.shape, generator=gen, dtype=DTYPE) * 2 - 1) * eps * mask
    for step in range(steps + 1):
        grad, pred = _input_grad(model, x, labels)
        wrong = pred != labels  # (R, B)
        hit = wrong.any(0) & ~found
        if hit.any():
            cols = hit.nonzero().squeeze(-1)
            first = wrong.to(torch.int8).argmax(0)
            best[cols] = x[first[cols], cols]
            found |= hit
        if step == steps or found.all():
            break
        x = torch.minimum(torch.maximum(x + alpha * torch.sign(grad) * mask, lo), hi)
    if not found.all():
        best[~found] = x[-1][~found]
    return best, found


def pgd_batch(model: RNNModel, X: Tensor, labels: Tensor, cfg: AttackConfig, generator: Optional[torch.Generator] = None):
    """Batched PGD over samples of equal length; restarts run in chunks of ``cfg.chunk``."""
    model = _frozen(model)
    X = torch.as_tensor(X, dtype=DTYPE)
    labels = torch.as_tensor(labels)
    gen = generator if generator is not None else torch.Generator().manual_seed(cfg.seed)
    mask = frame_mask(cfg.spec, X.shape[-2])
    with torch.no_grad():
        clean_wrong = forward_concrete(model, X).argmax(-1) != labels
    best, found = X.clone(), clean_wrong.clone()
    if cfg.epsilon == 0:
        return best, found
    todo = cfg.restarts
    while todo > 0 and not found.all():
        n = min(todo, cfg.chunk)
        idx = (~found).nonzero().squeeze(-1)
        ex, ok = _pgd_run(model, X[idx], labels[idx], cfg.epsilon, cfg.alpha, cfg.steps, mask, n, gen)
        best[idx] = ex
        found[idx] = ok
        todo -= n
    return best, found


def pgd(model: RNNModel, X: Tensor, label: int, cfg: AttackConfig) -> AttackResult:
    X = torch.as_tensor(X, dtype=DTYPE)
    ex, ok = pgd_batch(model, X.unsqueeze(0), torch.tensor([label]), cfg)
    return AttackResult(ex[0], bool(ok[0]))


def attack_dataset(model: RNNModel, dataset: Sequence[Sample], cfg: AttackConfig) -> List[bool]:
    """PGD success flag per sample (misclassified samples count as broken)."""
    gen = torch.Generator().manual_seed(cfg.seed)
    out: List[Optional[bool]] = [None] * len(dataset)
    groups = {}
    for i, (X, _) in enumerate(dataset):
        groups.setdefault(torch.as_tensor(X).shape[-2], []).append(i)
    for T in sorted(groups):
        idx = groups[T]
        X = torch.stack([torch.as_tensor(dataset[i][0], dtype=DTYPE) for i in idx])
        _, ok = pgd_batch(model, X, torch.tensor([dataset[i][1] for i in idx]), cfg, gen)
        for i, s in zip(idx, ok.tolist()):
            out[i] = s
    return out


def empirical_robust_accuracy(model: RNNModel, dataset: Sequence[Sample], cfg: AttackConfig) -> float:
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    broken = attack_dataset(model, dataset, cfg)
    return sum(not b for b in broken) / len(dataset)


# ---------------------------------------------------------------------------
# one-frame vs all-frame gap


@dataclass(frozen=True)
class WitnessSearch:
    trials: int = 200
    kind: str = "vanilla"
    hidden_size: int = 2
    input_size: int = 1
    length: int = 3
    weight_scale: float = 2.0
    radius_hi: float = 2.0
    radius_tol: float = 1e-3
    shrink: float = 0.99
    restarts: int = 50
    steps: int = 60
    seed: int = 0


@dataclass
class Witness:
    model: RNNModel
    X: Tensor
    label: int
    epsilon: float
    adversarial: Tensor
    trial: int


def verify_witness(w: Witness) -> bool:
    """Certified under every one-frame strategy, yet the stored all-frame example flips the label."""
    if w.epsilon <= 0:
        return False
    T = w.X.shape[-2]
    for t in range(T):
        if not certify(w.model, w.X, w.label, PerturbationSpec(w.epsilon, "one_frame", t)).certified:
            return False
    if (w.adversarial - w.X).abs().max() > w.epsilon + 1e-12:
        return False
    with torch.no_grad():
        return int(forward_concrete(w.model, w.adversarial).argmax()) != w.label


def find_strategy_gap_witness(cfg: WitnessSearch = WitnessSearch()) -> Optional[Witness]:
    """Random search for an instance robust to every one-frame adversary but not to the all-frame one.

    Returns ``None`` when the trial budget runs out.
    """
    gen = torch.Generator().manual_seed(cfg.seed)
    for trial in range(cfg.trials):
        model = RNNModel.random(cfg.kind, cfg.input_size, cfg.hidden_size, 2, gen, cfg.weight_scale)
        X = torch.randn(cfg.length, cfg.input_size, generator=gen, dtype=DTYPE)
        with torch.no_grad():
            label = int(forward_concrete(model, X).argmax())
        radii = [
            max_certified_radius(model, X, label, cfg.radius_hi, cfg.radius_tol, strategy=f"one-frame:{t}").radius
            for t in range(cfg.length)
        ]
        eps = cfg.shrink * min(radii)
        if eps <= 0:
            continue
        attack = AttackConfig(eps, steps=cfg.steps, restarts=cfg.restarts, seed=cfg.seed + trial)
        res = pgd(model, X, label, attack)
        if not res.success:
            continue
        w = Witness(model, X, label, eps, res.example, trial)
        if verify_witness(w):
            return w
    return None
