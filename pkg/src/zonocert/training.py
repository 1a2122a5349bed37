"""Certified training through the abstract forward pass, plus regular and adversarial baselines.

Gradients come from torch autograd in float64: the abstract transformers are
written in differentiable tensor ops, so the recorded graph of one abstract
forward pass is the derivative trace.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import torch
import torch.nn.functional as F
from torch import Tensor

from .attacks import AttackConfig, fgsm_batch, pgd_batch
from .cells import RNNModel, forward_concrete
from .certifier import PerturbationSpec, Sample, abstract_logits, certified_accuracy, clean_accuracy
from .domains import DTYPE, Abstract, bounds_of

MODES = ("regular", "at_fgsm", "at_pgd", "certified")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 16
    learning_rate: float = 0.05
    epsilon_train: float = 0.1
    lambda_max: float = 0.5
    ramp_fraction: float = 0.5
    seed: int = 0
    baseline_mode: str = "certified"
    domain: str = "interzono"
    attack_steps: int = 10
    attack_restarts: int = 1

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epsilon_train < 0:
            raise ValueError("epsilon_train must be non-negative")
        if not 0 <= self.lambda_max <= 1:
            raise ValueError("lambda_max must lie in [0, 1]")
        if not 0 < self.ramp_fraction <= 1:
            raise ValueError("ramp_fraction must lie in (0, 1]")
        mode = self.baseline_mode.replace("-", "_")
        if mode not in MODES:
            raise ValueError(f"unknown baseline_mode {self.baseline_mode!r}; expected one of {MODES}")
        object.__setattr__(self, "baseline_mode", mode)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValueError(f"unknown training options {unknown}")
        return cls(**d)


@dataclass
class LossBreakdown:
    standard_loss: Tensor
    robust_loss: Tensor
    combined_loss: Tensor
    epsilon_used: float
    lambda_used: float


def robustness_loss(logit_domain: Abstract, labels) -> Tensor:
    """Cross-entropy at the worst corner of the logit box: true logit low, others high.

    ``labels`` is an int or a tensor matching the domain's batch shape; the
    result is the mean over the batch.
    """
    b = bounds_of(logit_domain)
    C = b.lower.shape[-1]
    labels = torch.as_tensor(labels).expand(b.lower.shape[:-1])
    if (labels < 0).any() or (labels >= C).any():
        raise ValueError(f"label out of range for {C} classes")
    onehot = F.one_hot(labels, C).to(torch.bool)
    worst = torch.where(onehot, b.lower, b.upper)
    return F.cross_entropy(worst.reshape(-1, C), labels.reshape(-1))


def combined_loss(standard, robust, lam: float):
    if not 0 <= lam <= 1:
        raise ValueError("lambda must lie in [0, 1]")
    return (1 - lam) * standard + lam * robust


def schedule(epoch: int, cfg: TrainConfig) -> Tuple[float, float]:
    """Linear ramp of (epsilon, lambda) from 0 over ``ramp_fraction * epochs`` epochs, then hold."""
    if not 0 <= epoch < cfg.epochs:
        raise ValueError(f"epoch {epoch} outside [0, {cfg.epochs})")
    ramp = cfg.ramp_fraction * cfg.epochs
    frac = min(1.0, epoch / ramp)
    return cfg.epsilon_train * frac, cfg.lambda_max * frac


def _stack(samples: Sequence[Sample]) -> Iterable[Tuple[Tensor, Tensor]]:
    groups: Dict[int, List[Sample]] = {}
    for X, y in samples:
        X = torch.as_tensor(X, dtype=DTYPE)
        groups.setdefault(X.shape[-2], []).append((X, y))
    for T in sorted(groups):
        g = groups[T]
        yield torch.stack([x for x, _ in g]), torch.tensor([y for _, y in g])


def batch_loss(
    model: RNNModel,
    batch: Sequence[Sample],
    epsilon: float,
    lam: float,
    mode: str = "certified",
    domain: str = "interzono",
    attack: Optional[Callable] = None,
) -> LossBreakdown:
    """Mean losses over ``batch``; samples of different lengths are grouped."""
    n = len(batch)
    std = torch.zeros((), dtype=DTYPE)
    rob = torch.zeros((), dtype=DTYPE)
    for X, y in _stack(batch):
        w = X.shape[0] / n
        std = std + w * F.cross_entropy(forward_concrete(model, X), y)
        if lam == 0:
            continue
        if mode == "certified":
            rob = rob + w * robustness_loss(abstract_logits(model, X, PerturbationSpec(epsilon), domain), y)
        elif mode in ("at_fgsm", "at_pgd"):
            X_adv = attack(model, X, y, epsilon) if epsilon > 0 else X
            rob = rob + w * F.cross_entropy(forward_concrete(model, X_adv), y)
    return LossBreakdown(std, rob, combined_loss(std, rob, lam), epsilon, lam)


def _attack_fn(cfg: TrainConfig, gen: torch.Generator):
    if cfg.baseline_mode == "at_fgsm":
        return lambda m, X, y, eps: fgsm_batch(m, X, y, AttackConfig(eps))
    if cfg.baseline_mode == "at_pgd":

        def run(m, X, y, eps):
            acfg = AttackConfig(eps, steps=cfg.attack_steps, restarts=cfg.attack_restarts)
            return _pgd_examples(m, X, y, acfg, gen)

        return run
    return None


def _pgd_examples(model, X, y, acfg, gen):
    ex, _ = pgd_batch(model, X, y, acfg, gen)
    return ex.detach()


class NonFiniteLoss(FloatingPointError):
    pass


@dataclass
class EpochMetrics:
    epoch: int
    standard_loss: float
    robust_loss: float
    combined_loss: float
    epsilon: float
    lam: float
    clean_acc: Optional[float] = None
    certified_acc: Optional[float] = None

    def to_row(self) -> dict:
        row = {
            "epoch": self.epoch,
            "standard_loss": self.standard_loss,
            "robust_loss": self.robust_loss,
            "combined_loss": self.combined_loss,
            "epsilon": self.epsilon,
            "lambda": self.lam,
        }
        if self.clean_acc is not None:
            row["clean_acc"] = self.clean_acc
        if self.certified_acc is not None:
            row["certified_acc"] = self.certified_acc
        return row


class Trainer:
    """SGD with momentum 0.9 over a fixed dataset; all randomness from ``cfg.seed``."""

    def __init__(self, model: RNNModel, cfg: TrainConfig):
        self.model = model.requires_grad_(True)
        self.cfg = cfg
        self.gen = torch.Generator().manual_seed(cfg.seed)
        self.opt = torch.optim.SGD(model.parameters(), lr=cfg.learning_rate, momentum=0.9)
        self.attack = _attack_fn(cfg, self.gen)

    def train_epoch(self, dataset: Sequence[Sample], epoch: int) -> EpochMetrics:
        cfg = self.cfg
        eps, lam = schedule(epoch, cfg)
        if cfg.baseline_mode == "regular":
            lam = 0.0
        order = torch.randperm(len(dataset), generator=self.gen).tolist()
        totals = [0.0, 0.0, 0.0]
        for start in range(0, len(order), cfg.batch_size):
            batch = [dataset[i] for i in order[start : start + cfg.batch_size]]
            loss = batch_loss(self.model, batch, eps, lam, cfg.baseline_mode, cfg.domain, self.attack)
            if not torch.isfinite(loss.combined_loss):
                raise NonFiniteLoss(f"non-finite loss at epoch {epoch}, batch starting {start}")
            self.opt.zero_grad()
            loss.combined_loss.backward()
            self.opt.step()
            w = len(batch) / len(dataset)
            totals[0] += w * float(loss.standard_loss.detach())
            totals[1] += w * float(loss.robust_loss.detach())
            totals[2] += w * float(loss.combined_loss.detach())
        return EpochMetrics(epoch, *totals, eps, lam)


def train(
    model: RNNModel,
    dataset: Sequence[Sample],
    cfg: TrainConfig,
    eval_data: Optional[Sequence[Sample]] = None,
    eval_epsilon: Optional[float] = None,
    on_epoch: Optional[Callable[[EpochMetrics], None]] = None,
) -> Tuple[RNNModel, List[EpochMetrics]]:
    """Train ``model`` in place; evaluation metrics are added when ``eval_data`` is given."""
    if len(dataset) == 0:
        raise ValueError("empty training set")
    trainer = Trainer(model, cfg)
    history = []
    for epoch in range(cfg.epochs):
        m = trainer.train_epoch(dataset, epoch)
        if eval_data:
            m.clean_acc = clean_accuracy(model, eval_data)
            if eval_epsilon is not None:
                m.certified_acc = certified_accuracy(model, eval_data, PerturbationSpec(eval_epsilon), cfg.domain)[0]
        history.append(m)
        if on_epoch is not None:
            on_epoch(m)
    model.requires_grad_(False)
    return model, history


def write_metrics(history: Sequence[EpochMetrics], path) -> None:
    with open(path, "w") as fh:
        for m in history:
            fh.write(json.dumps(m.to_row(), sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# gradient check


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst: List[Tuple[str, Tuple[int, ...], float, float, float]] = field(default_factory=list)
    checked: int = 0
    tol: float = 1e-4

    @property
    def ok(self) -> bool:
        return self.max_rel_error <= self.tol


def grad_check(
    model: RNNModel,
    sample: Sample,
    spec: PerturbationSpec,
    lam: float = 0.5,
    tol: float = 1e-4,
    step: float = 1e-5,
    floor: float = 1e-6,
    domain: str = "interzono",
    max_weights: int = 200,
) -> GradCheckReport:
    """Compare autograd gradients of the combined loss with central differences.

    Relative error is ``|g - fd| / max(|g|, |fd|, floor)``; ``floor`` keeps
    near-zero gradients from producing meaningless ratios.
    """
    model = model.clone()
    params = dict(model.named_parameters())
    total = sum(p.numel() for p in params.values())
    if total > max_weights:
        raise ValueError(f"model has {total} weights; grad_check is meant for at most {max_weights}")
    X, y = torch.as_tensor(sample[0], dtype=DTYPE), int(sample[1])

    def loss_value() -> Tensor:
        std = F.cross_entropy(forward_concrete(model, X).unsqueeze(0), torch.tensor([y]))
        rob = robustness_loss(abstract_logits(model, X, spec, domain), y) if lam > 0 else std
        return combined_loss(std, rob, lam)

    model.requires_grad_(True)
    loss = loss_value()
    grads = torch.autograd.grad(loss, list(params.values()), allow_unused=True)
    model.requires_grad_(False)

    rows = []
    with torch.no_grad():
        for (name, p), g in zip(params.items(), grads):
            g = torch.zeros_like(p) if g is None else g
            flat = p.view(-1)
            for k in range(flat.numel()):
                orig = float(flat[k])
                flat[k] = orig + step
                up = float(loss_value())
                flat[k] = orig - step
                down = float(loss_value())
                flat[k] = orig
                fd = (up - down) / (2 * step)
                an = float(g.view(-1)[k])
                err = abs(an - fd) / max(abs(an), abs(fd), floor)
                idx = tuple(int(i) for i in torch.unravel_index(torch.tensor(k), p.shape))
                rows.append((name, idx, an, fd, err))
    rows.sort(key=lambda r: -r[4])
    worst = rows[0][4] if rows else 0.0
    if not math.isfinite(worst):
        worst = math.inf
    return GradCheckReport(worst, rows[:5], len(rows), tol)
