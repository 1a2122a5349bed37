import json

import numpy as np
import pytest

from zonocert.formats import load_embeddings, read_dataset
from zonocert.synth import SynthConfig, gen_synth, write_synth


def test_balanced_and_margin_respected():
    cfg = SynthConfig(T=4, d=4, train_n=201, test_n=100, margin=0.5)
    task = gen_synth(cfg, seed=3)
    for split, n in ((task.train, 201), (task.test, 100)):
        assert len(split) == n
        ones = sum(r.label for r in split)
        assert abs(ones - n / 2) <= 0.05 * n
        for r in split:
            s = task.score(r.tokens)
            assert abs(s) >= cfg.margin and r.label == int(s > 0)
            assert len(r.tokens) == cfg.T


def test_weight_vector_and_embeddings():
    task = gen_synth(SynthConfig(d=5, vocab=40), seed=1)
    assert np.abs(task.w).sum() == pytest.approx(1.0)
    E = np.stack(list(task.embeddings.values()))
    assert E.shape == (40, 5)
    assert np.allclose(E.mean(0), 0) and np.allclose(E.std(0), 1)


def test_margin_implies_linear_robust_radius():
    # any per-frame shift of size r changes w . sum_t x_t by at most T * r * ||w||_1 = T * r
    cfg = SynthConfig(margin=0.6)
    task = gen_synth(cfg, seed=0)
    r = task.description()["robust_radius"]
    rng = np.random.default_rng(0)
    for rec in task.train[:50]:
        X = np.stack([task.embeddings[t] for t in rec.tokens])
        delta = rng.choice([-r, r], size=X.shape) * 0.999
        assert int(task.w @ (X + delta).sum(0) > 0) == rec.label


def test_deterministic_per_seed():
    a, b, c = (gen_synth(SynthConfig(train_n=30, test_n=10), s) for s in (4, 4, 5))
    assert a.train == b.train and a.test == b.test and np.array_equal(a.w, b.w)
    assert a.train != c.train


def test_config_validation():
    for bad in (dict(classes=3), dict(T=0), dict(margin=-1), dict(train_n=0)):
        with pytest.raises(ValueError):
            SynthConfig(**bad)
    with pytest.raises(ValueError):
        SynthConfig.from_dict({"depth": 3})
    with pytest.raises(RuntimeError):
        gen_synth(SynthConfig(margin=100.0, max_draws=1000))


def test_written_files_reload(tmp_path):
    task = gen_synth(SynthConfig(train_n=20, test_n=10), seed=2)
    paths = write_synth(task, tmp_path / "syn")
    assert read_dataset(paths["train"]) == task.train
    table = load_embeddings(paths["embeddings"])
    for tok, v in task.embeddings.items():
        assert np.allclose(table[tok], v, atol=1e-12)
    desc = json.loads(paths["task"].read_text())
    assert desc["seed"] == 2 and desc["config"]["train_n"] == 20
