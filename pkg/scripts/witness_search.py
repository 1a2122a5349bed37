"""Search for an input certified against every one-frame adversary yet broken by an all-frame one.

    python3 scripts/witness_search.py --trials 200 --kind vanilla --out witness.json
"""

import argparse
import json

import torch

from zonocert.attacks import WitnessSearch, find_strategy_gap_witness, verify_witness
from zonocert.cells import forward_concrete
from zonocert.certifier import PerturbationSpec, certify
from zonocert.formats import model_to_dict


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=200)
    ap.add_argument("--kind", default="vanilla", choices=["vanilla", "lstm", "gru"])
    ap.add_argument("--hidden", type=int, default=2)
    ap.add_argument("--length", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", help="write model, input and adversarial example as JSON")
    args = ap.parse_args()

    w = find_strategy_gap_witness(
        WitnessSearch(trials=args.trials, kind=args.kind, hidden_size=args.hidden, length=args.length, seed=args.seed)
    )
    if w is None:
        print(f"no witness in {args.trials} trials")
        raise SystemExit(1)
    print(f"trial {w.trial}, epsilon {w.epsilon:.6f}, label {w.label}, re-verified: {verify_witness(w)}")
    for t in range(w.X.shape[0]):
        m = certify(w.model, w.X, w.label, PerturbationSpec(w.epsilon, "one_frame", t)).margins
        print(f"  one-frame:{t} certified, margin lower bound {m.lower.min().item():+.4f}")
    with torch.no_grad():
        logits = forward_concrete(w.model, w.adversarial)
    print(f"  all-frame example logits {logits.tolist()} -> class {int(logits.argmax())}")
    print(f"  perturbation per frame {(w.adversarial - w.X).abs().amax(-1).tolist()}")
    if args.out:
        doc = {
            "model": model_to_dict(w.model), "input": w.X.tolist(), "label": w.label,
            "epsilon": w.epsilon, "adversarial": w.adversarial.tolist(), "trial": w.trial,
        }
        with open(args.out, "w") as fh:
            json.dump(doc, fh, indent=1)


if __name__ == "__main__":
    main()
