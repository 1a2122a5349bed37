"""Paired Zonotope vs InterZono certification on random small recurrent models.

For each model the perturbation radius is tuned so the Zonotope certifies
10-60% of the samples; both domains then run on identical inputs.

    python3 scripts/compare_domains.py --models 50 --samples 20 --csv paired.csv
"""

import argparse
import csv
import time

import torch

from zonocert.cells import RNNModel, forward_concrete
from zonocert.certifier import PerturbationSpec, certified_accuracy, compare_domains
from zonocert.domains import DTYPE

KINDS = ("vanilla", "lstm", "gru")


def tune_epsilon(model, data, lo=1e-3, hi=2.0, iters=30):
    for _ in range(iters):
        eps = (lo * hi) ** 0.5
        frac = certified_accuracy(model, data, PerturbationSpec(eps), "zonotope")[0]
        if 0.1 <= frac <= 0.6:
            return eps
        lo, hi = (eps, hi) if frac > 0.6 else (lo, eps)
    return None


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--models", type=int, default=50)
    ap.add_argument("--samples", type=int, default=20)
    ap.add_argument("--hidden", type=int, default=4)
    ap.add_argument("--input-size", type=int, default=3)
    ap.add_argument("--seed", type=int, default=404)
    ap.add_argument("--per-sample", action="store_true", help="time each sample separately instead of batching")
    ap.add_argument("--csv", help="write one row per model")
    args = ap.parse_args()

    gen = torch.Generator().manual_seed(args.seed)
    rows = []
    start = time.perf_counter()
    while len(rows) < args.models:
        kind = KINDS[len(rows) % 3]
        model = RNNModel.random(kind, args.input_size, args.hidden, 2, gen)
        data = []
        for _ in range(args.samples):
            X = torch.randn(int(torch.randint(2, 5, (1,), generator=gen)), args.input_size, generator=gen, dtype=DTYPE)
            data.append((X, int(forward_concrete(model, X).argmax())))
        eps = tune_epsilon(model, data)
        if eps is None:
            continue
        rep = compare_domains(model, data, PerturbationSpec(eps), batched=not args.per_sample)
        rows.append({
            "model": len(rows), "kind": kind, "epsilon": eps,
            "zonotope": rep.certified_accuracy["zonotope"], "interzono": rep.certified_accuracy["interzono"],
            "zonotope_s": rep.wall_time["zonotope"], "interzono_s": rep.wall_time["interzono"],
        })
        r = rows[-1]
        print(f"{r['model']:3d} {kind:8s} eps={eps:.4f}  zonotope {r['zonotope']:.2f}  interzono {r['interzono']:.2f}")

    for kind in KINDS + ("all",):
        sel = [r for r in rows if kind in ("all", r["kind"])]
        z = sum(r["zonotope"] for r in sel) / len(sel)
        i = sum(r["interzono"] for r in sel) / len(sel)
        t = sum(r["interzono_s"] for r in sel) / sum(r["zonotope_s"] for r in sel)
        print(f"{kind:8s} models={len(sel):3d}  mean certified: zonotope {z:.3f}  interzono {i:.3f}  time ratio {t:.2f}")
    print(f"total {time.perf_counter() - start:.1f}s")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.DictWriter(fh, list(rows[0]))
            w.writeheader()
            w.writerows(rows)


if __name__ == "__main__":
    main()
