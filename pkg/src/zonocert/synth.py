"""Synthetic sequence-classification task with a controlled decision margin.

Each sample is a token sequence; its label is the sign of a fixed linear
functional ``w . sum_t x_t`` of the embedded frames, with ``||w||_1 = 1``.
Samples with ``|w . sum_t x_t| < margin`` are rejected, so no per-frame
l_inf perturbation of size below ``margin / T`` can flip the true label.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List

import numpy as np

from .formats import Record, standardize, write_dataset, write_embeddings


@dataclass(frozen=True)
class SynthConfig:
    T: int = 4
    d: int = 4
    classes: int = 2
    train_n: int = 200
    test_n: int = 100
    vocab: int = 64
    margin: float = 0.5
    max_draws: int = 1_000_000

    def __post_init__(self):
        if self.classes != 2:
            raise ValueError("the synthetic task is binary (classes = 2)")
        if min(self.T, self.d, self.vocab) < 1 or min(self.train_n, self.test_n) < 1:
            raise ValueError("T, d, vocab, train_n and test_n must be positive")
        if self.margin < 0:
            raise ValueError("margin must be non-negative")

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        unknown = sorted(set(d) - set(cls.__dataclass_fields__))
        if unknown:
            raise ValueError(f"unknown synthetic-task options {unknown}")
        return cls(**d)


@dataclass
class SynthTask:
    config: SynthConfig
    seed: int
    embeddings: Dict[str, np.ndarray]
    w: np.ndarray
    train: List[Record]
    test: List[Record]

    def score(self, tokens) -> float:
        return float(self.w @ sum(self.embeddings[t] for t in tokens))

    def description(self) -> dict:
        return {
            "config": asdict(self.config),
            "seed": self.seed,
            "rule": "label = 1 if w . sum_t x_t > 0 else 0",
            "w": [float(v) for v in self.w],
            "robust_radius": self.config.margin / self.config.T,
        }


def gen_synth(cfg: SynthConfig, seed: int = 0) -> SynthTask:
    rng = np.random.default_rng(seed)
    tokens = [f"w{i:04d}" for i in range(cfg.vocab)]
    E, _, _ = standardize(rng.standard_normal((cfg.vocab, cfg.d)))
    w = rng.standard_normal(cfg.d)
    w /= np.abs(w).sum()
    proj = E @ w

    def draw(n: int) -> List[Record]:
        want = [n - n // 2, n // 2]
        got: List[List[Record]] = [[], []]
        for _ in range(cfg.max_draws):
            if len(got[0]) >= want[0] and len(got[1]) >= want[1]:
                break
            idx = rng.integers(0, cfg.vocab, cfg.T)
            s = proj[idx].sum()
            if abs(s) < cfg.margin:
                continue
            label = int(s > 0)
            if len(got[label]) < want[label]:
                got[label].append(Record(tuple(tokens[i] for i in idx), label))
        else:
            raise RuntimeError("could not reach the requested class counts; lower the margin")
        out = got[0] + got[1]
        order = rng.permutation(len(out))
        return [out[i] for i in order]

    train = draw(cfg.train_n)
    test = draw(cfg.test_n)
    return SynthTask(cfg, seed, dict(zip(tokens, E)), w, train, test)


def write_synth(task: SynthTask, out_dir) -> Dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "embeddings": out / "embeddings.txt",
        "train": out / "train.jsonl",
        "test": out / "test.jsonl",
        "task": out / "task.json",
    }
    write_embeddings(task.embeddings, paths["embeddings"])
    write_dataset(task.train, paths["train"])
    write_dataset(task.test, paths["test"])
    paths["task"].write_text(json.dumps(task.description(), sort_keys=True, indent=1) + "\n")
    return paths
