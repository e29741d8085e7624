"""Pitch estimator accuracy on synthetic sines, sawtooths and vowels.

    python3 scripts/pitch_accuracy.py --n 200 --seed 0
"""
import argparse
import time

import numpy as np

from svcaug.pitch import estimate_f0
from svcaug.synth import sawtooth, sine, vowel

KINDS = {"sine": sine, "saw": sawtooth, "vowel": vowel}
INTERIOR = slice(4, 97)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=200, help="signals per kind")
    ap.add_argument("--fmin", type=float, default=80.0)
    ap.add_argument("--fmax", type=float, default=400.0)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    print(f"{'kind':<6} {'voiced':>7} {'med_err_hz':>10} {'p95_err_hz':>10} {'octave':>7} {'sec':>6}")
    for name, fn in KINDS.items():
        t0 = time.perf_counter()
        voiced, errs, octave = [], [], []
        for f0 in rng.uniform(args.fmin, args.fmax, args.n):
            c = estimate_f0(fn(float(f0)))
            v = c.voiced[INTERIOR]
            f = c.f0[INTERIOR][v]
            voiced.append(v.mean())
            errs.extend(np.abs(f - f0))
            octave.extend(np.abs(12 * np.log2(f / f0)) > 6)
        print(f"{name:<6} {np.mean(voiced):7.3f} {np.median(errs):10.3f} {np.percentile(errs, 95):10.3f} "
              f"{np.mean(octave):7.4f} {time.perf_counter() - t0:6.2f}")


if __name__ == "__main__":
    main()
