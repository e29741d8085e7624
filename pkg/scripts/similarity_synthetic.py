"""Similarity-vs-distance report from synthetic embeddings with a known answer.

Unmatched speakers get cosine 1 - slope*|d| to the target mean, matched ones a flat value.

    python3 scripts/similarity_synthetic.py --out runs/similarity
"""
import argparse
import json
import math
from pathlib import Path

import numpy as np

from svcaug.cli import main as cli_main
from svcaug.simeval import write_embeddings


def at_similarity(target, sim, rng):
    t = target / np.linalg.norm(target)
    r = rng.normal(size=t.shape)
    r -= np.dot(r, t) * t
    return sim * t + math.sqrt(1 - sim ** 2) * r / np.linalg.norm(r)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("runs/similarity"))
    ap.add_argument("--speakers", type=int, default=12)
    ap.add_argument("--dim", type=int, default=192)
    ap.add_argument("--slope", type=float, default=0.05)
    ap.add_argument("--matched", type=float, default=0.95)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    work = args.out / "inputs"
    (work / "matched").mkdir(parents=True, exist_ok=True)
    (work / "unmatched").mkdir(exist_ok=True)
    target = rng.normal(size=(10, args.dim))
    write_embeddings(work / "target.f0me", target)
    tm = target.mean(axis=0)
    offsets = {"target": 0.0}
    for i in range(args.speakers):
        d = round(float(rng.uniform(-1, 1) * (1 + i)), 3)
        spk = f"spk{i:02d}"
        offsets[spk] = d
        write_embeddings(work / "matched" / f"{spk}.f0me", [at_similarity(tm, args.matched, rng)])
        write_embeddings(work / "unmatched" / f"{spk}.f0me", [at_similarity(tm, 1 - args.slope * abs(d), rng)])
    (work / "plan.json").write_text(json.dumps({"target": "target", "offsets": offsets, "stats": [], "omitted": []}))
    return cli_main(["simeval", "--plan", str(work / "plan.json"), "--target-emb", str(work / "target.f0me"),
                     "--matched-dir", str(work / "matched"), "--unmatched-dir", str(work / "unmatched"),
                     "--out", str(args.out)])


if __name__ == "__main__":
    raise SystemExit(main())
