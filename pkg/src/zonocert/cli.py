"""Command-line entry point: certify, compare, train, attack, radius, gen-synth.

Exit codes: 0 success, 1 input error, 2 internal invariant violation.
Reports keep wall-clock measurements under a separate ``timing`` key so the
rest of a report is reproducible byte for byte under a fixed ``--seed``.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import torch

from .attacks import AttackConfig, attack_dataset
from .cells import RNNModel
from .certifier import (
    DOMAINS,
    PerturbationSpec,
    certify,
    certify_dataset,
    clean_accuracy,
    compare_domains,
    max_certified_radius,
)
from .domains import InvertedBounds
from .formats import FormatError, embed_dataset, load_embeddings, load_model, read_dataset, save_model
from .synth import SynthConfig, gen_synth, write_synth
from .training import TrainConfig, train, write_metrics

THREADS_ENV = "ZONOCERT_THREADS"


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise InputError(f"{self.prog}: {message}")


def _dump(obj, path) -> None:
    text = json.dumps(obj, sort_keys=True, indent=1) + "\n"
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _embeddings_path(args) -> Path:
    if args.embeddings:
        return Path(args.embeddings)
    guess = Path(args.data).parent / "embeddings.txt"
    if not guess.exists():
        raise InputError(f"no --embeddings given and {guess} does not exist")
    return guess


def _load_samples(args, classes: Optional[int] = None):
    table = load_embeddings(_embeddings_path(args), seed=args.seed)
    records = read_dataset(args.data, classes)
    samples = embed_dataset(records, table)
    if table.dim != samples[0][0].shape[-1]:
        raise InputError("embedding dimension mismatch")
    return samples


def _load_model_and_data(args):
    model = load_model(args.model)
    samples = _load_samples(args, model.classes)
    if samples[0][0].shape[-1] != model.input_size:
        raise InputError(f"embeddings have dimension {samples[0][0].shape[-1]}, model expects {model.input_size}")
    return model, samples


def _spec(args) -> PerturbationSpec:
    try:
        return PerturbationSpec.parse(args.eps, args.strategy)
    except ValueError as exc:
        raise InputError(str(exc)) from None


# ---------------------------------------------------------------------------
# commands


def cmd_certify(args) -> int:
    model, samples = _load_model_and_data(args)
    spec = _spec(args)
    results = certify_dataset(model, samples, spec, args.domain, batched=not args.per_sample)
    errors = [r.error for r in results if r.error]
    report = {
        "command": "certify",
        "domain": args.domain,
        "epsilon": args.eps,
        "strategy": spec.label,
        "samples": len(samples),
        "certified_accuracy": sum(r.certified for r in results) / len(results),
        "clean_accuracy": clean_accuracy(model, samples),
        "results": [dict(sample_id=i, **r.to_record()) for i, r in enumerate(results)],
        "timing": {"per_sample_s": [r.elapsed for r in results], "total_s": sum(r.elapsed for r in results)},
    }
    _dump(report, args.out)
    if errors:
        print(f"{len(errors)} sample(s) hit an invariant violation: {errors[0]}", file=sys.stderr)
        return 2
    return 0


def cmd_compare(args) -> int:
    model, samples = _load_model_and_data(args)
    spec = _spec(args)
    rep = compare_domains(model, samples, spec, batched=not args.per_sample)
    outcome = [{k: r[k] for k in ("sample_id", "zono_certified", "interzono_certified")} for r in rep.rows]
    report = {
        "command": "compare",
        "epsilon": args.eps,
        "strategy": spec.label,
        "samples": len(samples),
        "certified_accuracy": rep.certified_accuracy,
        "rows": outcome,
        "timing": {
            "wall_s": rep.wall_time,
            "ratio_interzono_over_zonotope": rep.time_ratio,
            "per_sample_ms": [{k: r[k] for k in ("sample_id", "zono_ms", "interzono_ms")} for r in rep.rows],
        },
    }
    _dump(report, args.out)
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.DictWriter(fh, ["sample_id", "zono_certified", "interzono_certified", "zono_ms", "interzono_ms"])
            w.writeheader()
            for r in rep.rows:
                w.writerow(r)
    return 0


def _resolve(base: Path, p) -> Path:
    p = Path(p)
    return p if p.is_absolute() else base / p


def cmd_train(args) -> int:
    path = Path(args.config)
    try:
        conf = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON ({exc.msg})") from None
    if not isinstance(conf, dict):
        raise InputError(f"{path}: expected a JSON object")
    conf = dict(conf)
    base = path.parent
    try:
        kind = conf.pop("kind", "lstm")
        hidden = int(conf.pop("hidden_size", 8))
        classes = int(conf.pop("classes", 2))
        train_path = _resolve(base, conf.pop("train"))
        emb_path = _resolve(base, conf.pop("embeddings", train_path.parent / "embeddings.txt"))
        test_path = conf.pop("test", None)
        eval_eps = conf.pop("eval_epsilon", None)
    except KeyError as exc:
        raise InputError(f"{path}: missing field {exc}") from None
    conf.setdefault("seed", args.seed)
    if args.mode:
        conf["baseline_mode"] = args.mode
    cfg = TrainConfig.from_dict(conf)
    table = load_embeddings(emb_path, seed=cfg.seed)
    data = embed_dataset(read_dataset(train_path, classes), table)
    test = embed_dataset(read_dataset(_resolve(base, test_path), classes), table) if test_path else None
    model = RNNModel.random(kind, table.dim, hidden, classes, torch.Generator().manual_seed(cfg.seed))
    model, history = train(model, data, cfg, test, eval_eps)
    save_model(model, args.out)
    if args.metrics:
        write_metrics(history, args.metrics)
    return 0


def cmd_attack(args) -> int:
    model, samples = _load_model_and_data(args)
    spec = _spec(args)
    cfg = AttackConfig(args.eps, args.steps, args.step_size, args.restarts, spec.strategy, spec.frame, args.seed)
    broken = attack_dataset(model, samples, cfg)
    report = {
        "command": "attack",
        "epsilon": args.eps,
        "strategy": spec.label,
        "steps": cfg.steps,
        "restarts": cfg.restarts,
        "step_size": cfg.alpha,
        "samples": len(samples),
        "clean_accuracy": clean_accuracy(model, samples),
        "empirical_robust_accuracy": sum(not b for b in broken) / len(broken),
        "results": [{"sample_id": i, "attack_success": b} for i, b in enumerate(broken)],
    }
    _dump(report, args.out)
    return 0


def cmd_radius(args) -> int:
    model, samples = _load_model_and_data(args)
    if args.hi < 0 or args.tol <= 0:
        raise InputError("--hi must be non-negative and --tol positive")
    rows = []
    for i, (X, y) in enumerate(samples):
        r = max_certified_radius(model, X, y, args.hi, args.tol, domain=args.domain, strategy=args.strategy)
        rows.append({"sample_id": i, "radius": r.radius, "certifiable": r.certifiable})
    _dump({"command": "radius", "domain": args.domain, "hi": args.hi, "tol": args.tol, "results": rows}, args.out)
    return 0


def cmd_gen_synth(args) -> int:
    conf = {}
    if args.config:
        try:
            conf = json.loads(Path(args.config).read_text())
        except json.JSONDecodeError as exc:
            raise InputError(f"{args.config}:{exc.lineno}:{exc.colno}: invalid JSON ({exc.msg})") from None
    task = gen_synth(SynthConfig.from_dict(conf), args.seed)
    paths = write_synth(task, args.out)
    print(json.dumps({k: str(v) for k, v in paths.items()}, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="zonocert", description="Robustness certification for recurrent classifiers.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, model=True):
        sp.add_argument("--seed", type=int, default=0)
        if model:
            sp.add_argument("--model", required=True)
            sp.add_argument("--data", required=True, help="JSONL dataset of {tokens, label}")
            sp.add_argument("--embeddings", help="GloVe-format text file (default: embeddings.txt next to --data)")
            sp.add_argument("--out", help="report path (default: stdout)")

    sp = sub.add_parser("certify", help="certify a dataset with one domain")
    common(sp)
    sp.add_argument("--eps", type=float, required=True)
    sp.add_argument("--domain", choices=DOMAINS, default="interzono")
    sp.add_argument("--strategy", default="all-frame", help="all-frame or one-frame:<t>")
    sp.add_argument("--per-sample", action="store_true", help="disable batching")
    sp.set_defaults(func=cmd_certify)

    sp = sub.add_parser("compare", help="paired run of both domains")
    common(sp)
    sp.add_argument("--eps", type=float, required=True)
    sp.add_argument("--strategy", default="all-frame")
    sp.add_argument("--csv", help="also write paired rows as CSV")
    sp.add_argument("--per-sample", action="store_true")
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("train", help="train a model from a JSON config")
    common(sp, model=False)
    sp.add_argument("--config", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--metrics", help="JSONL per-epoch metrics")
    sp.add_argument("--mode", choices=["regular", "at-fgsm", "at-pgd", "certified"], help="override baseline_mode")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("attack", help="PGD empirical robustness")
    common(sp)
    sp.add_argument("--eps", type=float, required=True)
    sp.add_argument("--steps", type=int, default=40)
    sp.add_argument("--restarts", type=int, default=10)
    sp.add_argument("--step-size", type=float)
    sp.add_argument("--strategy", default="all-frame")
    sp.set_defaults(func=cmd_attack)

    sp = sub.add_parser("radius", help="largest certified radius per sample")
    common(sp)
    sp.add_argument("--hi", type=float, required=True)
    sp.add_argument("--tol", type=float, default=1e-3)
    sp.add_argument("--domain", choices=DOMAINS, default="interzono")
    sp.add_argument("--strategy", default="all-frame")
    sp.set_defaults(func=cmd_radius)

    sp = sub.add_parser("gen-synth", help="write a synthetic task")
    common(sp, model=False)
    sp.add_argument("--config", help="JSON with T, d, train_n, test_n, vocab, margin")
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_gen_synth)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    threads = os.environ.get(THREADS_ENV)
    if threads:
        try:
            torch.set_num_threads(max(1, int(threads)))
        except ValueError:
            print(f"ignoring non-integer {THREADS_ENV}={threads!r}", file=sys.stderr)
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except InvertedBounds as exc:
        print(f"internal invariant violated: {exc}", file=sys.stderr)
        return 2
    except (FormatError, ValueError, IndexError, KeyError, TypeError, FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
