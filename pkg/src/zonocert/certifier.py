"""Perturbation spaces, certified margins and dataset-level certification."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import torch
from torch import Tensor

from .cells import RNNModel, forward_abstract, forward_concrete
from .domains import (
    DTYPE,
    Abstract,
    InterZono,
    InvertedBounds,
    NoisePool,
    Zonotope,
    apply_affine,
    bounds_of,
    lift_to_interzono,
)

DOMAINS = ("zonotope", "interzono")

Sample = Tuple[Tensor, int]


@dataclass(frozen=True)
class PerturbationSpec:
    epsilon: float
    strategy: str = "all_frame"
    frame: Optional[int] = None

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be non-negative, got {self.epsilon}")
        if self.strategy not in ("all_frame", "one_frame"):
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.strategy == "one_frame" and (self.frame is None or self.frame < 0):
            raise ValueError("one_frame strategy needs a non-negative frame index")

    @classmethod
    def parse(cls, epsilon: float, text: str) -> "PerturbationSpec":
        """Parse ``all-frame`` or ``one-frame:<t>``."""
        text = text.strip().replace("_", "-")
        if text == "all-frame":
            return cls(epsilon)
        if text.startswith("one-frame:"):
            try:
                t = int(text.split(":", 1)[1])
            except ValueError:
                raise ValueError(f"bad frame index in strategy {text!r}") from None
            return cls(epsilon, "one_frame", t)
        raise ValueError(f"unknown strategy {text!r}; use all-frame or one-frame:<t>")

    def perturbed(self, T: int) -> List[bool]:
        if self.strategy == "all_frame":
            return [True] * T
        if self.frame >= T:
            raise IndexError(f"frame {self.frame} out of range for a sequence of length {T}")
        return [t == self.frame for t in range(T)]

    @property
    def label(self) -> str:
        return "all-frame" if self.strategy == "all_frame" else f"one-frame:{self.frame}"


def build_input_domain(
    X: Tensor, spec: PerturbationSpec, pool: NoisePool, domain: str = "interzono"
) -> List[Abstract]:
    """Per-frame domains for ``X`` of shape ``(..., T, d)``.

    Each perturbed frame gets ``d`` fresh axis-aligned symbols of magnitude
    ``epsilon``; unperturbed frames are points.
    """
    if domain not in DOMAINS:
        raise ValueError(f"unknown domain {domain!r}")
    X = torch.as_tensor(X, dtype=DTYPE)
    T, d = X.shape[-2], X.shape[-1]
    out = []
    for t, active in enumerate(spec.perturbed(T)):
        x = X[..., t, :]
        if active and spec.epsilon > 0:
            start = pool.allocate(d)
            gens = torch.zeros(*x.shape[:-1], start + d, d, dtype=DTYPE)
            gens[..., start:, :] = spec.epsilon * torch.eye(d, dtype=DTYPE)
            z = Zonotope(x, gens)
        else:
            z = Zonotope.point(x)
        out.append(lift_to_interzono(z) if domain == "interzono" else z)
    return out


@dataclass
class MarginBounds:
    true_class: int
    classes: List[int]
    lower: Tensor

    def as_dict(self) -> dict:
        return {c: float(v) for c, v in zip(self.classes, self.lower)}

    @property
    def min(self) -> float:
        return float(self.lower.min())


def margin_matrix(classes: int, true_class: int) -> Tuple[Tensor, List[int]]:
    others = [f for f in range(classes) if f != true_class]
    M = torch.zeros(len(others), classes, dtype=DTYPE)
    for row, f in enumerate(others):
        M[row, true_class] = 1.0
        M[row, f] = -1.0
    return M, others


def _margin_lower(logit_domain: Abstract, true_class: int) -> Tuple[List[int], Tensor]:
    M, others = margin_matrix(logit_domain.n, true_class)
    lower = bounds_of(apply_affine(logit_domain, M)).lower
    # Refined logit bounds can beat the correlated difference when the support
    # box is much tighter than the main zonotope; both bounds are sound.
    b = bounds_of(logit_domain)
    return others, torch.maximum(lower, b.lower[..., [true_class]] - b.upper[..., others])


def margin_lower_bounds(logit_domain: Abstract, true_class: int) -> MarginBounds:
    """Lower bounds of ``y_t - y_f`` computed inside the domain (correlation-aware)."""
    C = logit_domain.n
    if not 0 <= true_class < C:
        raise ValueError(f"class {true_class} out of range for {C} logits")
    return MarginBounds(true_class, *_margin_lower(logit_domain, true_class))


def abstract_logits(
    model: RNNModel, X: Tensor, spec: PerturbationSpec, domain: str = "interzono", max_noise: Optional[int] = None
) -> Abstract:
    pool = NoisePool()
    return forward_abstract(model, build_input_domain(X, spec, pool, domain), pool, max_noise)


@dataclass
class CertificationResult:
    certified: bool
    margins: Optional[MarginBounds]
    clean_correct: bool
    elapsed: float
    error: Optional[str] = None

    def to_record(self) -> dict:
        return {
            "certified": self.certified,
            "clean_correct": self.clean_correct,
            "margins": None if self.margins is None else {str(k): v for k, v in self.margins.as_dict().items()},
            "error": self.error,
        }


def certify(
    model: RNNModel,
    X: Tensor,
    label: int,
    spec: PerturbationSpec,
    domain: str = "interzono",
    max_noise: Optional[int] = None,
) -> CertificationResult:
    start = time.perf_counter()
    X = torch.as_tensor(X, dtype=DTYPE)
    with torch.no_grad():
        clean_correct = int(forward_concrete(model, X).argmax()) == label
        try:
            logits = abstract_logits(model, X, spec, domain, max_noise)
            margins = margin_lower_bounds(logits, label)
        except InvertedBounds as exc:
            return CertificationResult(False, None, clean_correct, time.perf_counter() - start, f"InvertedBounds: {exc}")
    certified = clean_correct and bool((margins.lower > 0).all())
    return CertificationResult(certified, margins, clean_correct, time.perf_counter() - start)


def _by_length(dataset: Sequence[Sample]):
    groups = {}
    for i, (X, _) in enumerate(dataset):
        groups.setdefault(torch.as_tensor(X).shape[-2], []).append(i)
    return groups.values()


def certify_batch(
    model: RNNModel,
    X: Tensor,
    labels: Sequence[int],
    spec: PerturbationSpec,
    domain: str = "interzono",
) -> List[CertificationResult]:
    """Certify sequences of equal length ``X`` (shape ``(B, T, d)``) in one propagation.

    Each result reports the batch wall time divided evenly over the batch. If
    the batched run hits :class:`InvertedBounds`, samples are redone one by one
    so the failure is attributed to the right sample.
    """
    start = time.perf_counter()
    X = torch.as_tensor(X, dtype=DTYPE)
    labels = [int(y) for y in labels]
    with torch.no_grad():
        correct = (forward_concrete(model, X).argmax(dim=-1) == torch.tensor(labels)).tolist()
        try:
            logits = abstract_logits(model, X, spec, domain)
            lower = {}
            for t in sorted(set(labels)):
                lower[t] = _margin_lower(logits, t)
        except InvertedBounds:
            return [certify(model, X[i], y, spec, domain) for i, y in enumerate(labels)]
    elapsed = (time.perf_counter() - start) / len(labels)
    results = []
    for i, y in enumerate(labels):
        others, lo = lower[y]
        margins = MarginBounds(y, others, lo[i])
        certified = correct[i] and bool((margins.lower > 0).all())
        results.append(CertificationResult(certified, margins, correct[i], elapsed))
    return results


def certify_dataset(
    model: RNNModel,
    dataset: Sequence[Sample],
    spec: PerturbationSpec,
    domain: str = "interzono",
    batched: bool = True,
) -> List[CertificationResult]:
    """Per-sample results in dataset order; batched runs group samples by length."""
    if not batched:
        return [certify(model, X, y, spec, domain) for X, y in dataset]
    results: List[Optional[CertificationResult]] = [None] * len(dataset)
    for idx in _by_length(dataset):
        X = torch.stack([torch.as_tensor(dataset[i][0], dtype=DTYPE) for i in idx])
        for i, r in zip(idx, certify_batch(model, X, [dataset[i][1] for i in idx], spec, domain)):
            results[i] = r
    return results


def certified_accuracy(
    model: RNNModel,
    dataset: Sequence[Sample],
    spec: PerturbationSpec,
    domain: str = "interzono",
    batched: bool = True,
) -> Tuple[float, List[CertificationResult]]:
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    results = certify_dataset(model, dataset, spec, domain, batched)
    return sum(r.certified for r in results) / len(results), results


def clean_accuracy(model: RNNModel, dataset: Sequence[Sample]) -> float:
    with torch.no_grad():
        hits = [int(forward_concrete(model, torch.as_tensor(X, dtype=DTYPE)).argmax()) == y for X, y in dataset]
    return sum(hits) / len(hits)


@dataclass
class RadiusResult:
    radius: float
    certifiable: bool
    evaluations: int


def max_certified_radius(
    model: RNNModel,
    X: Tensor,
    label: int,
    hi: float,
    tol: float = 1e-3,
    lo: float = 0.0,
    domain: str = "interzono",
    strategy: str = "all-frame",
) -> RadiusResult:
    """Bisection for the largest certifiable radius, assuming monotonicity in epsilon."""

    def ok(eps):
        return certify(model, X, label, PerturbationSpec.parse(eps, strategy), domain).certified

    evals = 1
    if not ok(lo):
        return RadiusResult(0.0, False, evals)
    if hi <= lo:
        return RadiusResult(lo, True, evals)
    evals += 1
    if ok(hi):
        return RadiusResult(hi, True, evals)
    while hi - lo > tol:
        mid = (lo + hi) / 2
        evals += 1
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return RadiusResult(lo, True, evals)


@dataclass
class DomainComparison:
    rows: List[dict] = field(default_factory=list)
    certified_accuracy: dict = field(default_factory=dict)
    wall_time: dict = field(default_factory=dict)

    @property
    def time_ratio(self) -> float:
        return self.wall_time["interzono"] / self.wall_time["zonotope"]


def compare_domains(
    model: RNNModel, dataset: Sequence[Sample], spec: PerturbationSpec, batched: bool = True
) -> DomainComparison:
    """Certify every sample with both domains on identical inputs."""
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    report = DomainComparison()
    per_domain = {}
    for d in DOMAINS:
        start = time.perf_counter()
        per_domain[d] = certify_dataset(model, dataset, spec, d, batched)
        report.wall_time[d] = time.perf_counter() - start
        report.certified_accuracy[d] = sum(r.certified for r in per_domain[d]) / len(dataset)
    for i in range(len(dataset)):
        z, iz = per_domain["zonotope"][i], per_domain["interzono"][i]
        report.rows.append(
            {
                "sample_id": i,
                "zono_certified": z.certified,
                "interzono_certified": iz.certified,
                "zono_ms": z.elapsed * 1e3,
                "interzono_ms": iz.elapsed * 1e3,
            }
        )
    return report
