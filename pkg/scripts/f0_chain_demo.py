"""Five-speaker F0 matching demo: stats -> plan -> transpose --audio -> re-stats.

    python3 scripts/f0_chain_demo.py --workdir /tmp/f0demo --jobs 4
"""
import argparse
import math
import time
from pathlib import Path

from svcaug.cli import main
from svcaug.f0match import read_stats_csv
from svcaug.synth import write_speaker_corpus

SPEAKERS = {"s110": 110.0, "s150": 150.0, "t200": 200.0, "s280": 280.0, "s380": 380.0}


def run(workdir: Path, jobs: int) -> int:
    manifest = write_speaker_corpus(workdir / "data", SPEAKERS, target="t200")
    out = workdir / "out"
    common = ["--jobs", str(jobs), "--out", str(out)]
    t0 = time.perf_counter()
    steps = [
        ["stats", "--manifest", str(manifest)],
        ["plan", "--stats", str(out / "speaker_stats.csv"), "--target", "t200"],
        ["transpose", "--manifest", str(manifest), "--plan", str(out / "plan.json"), "--audio"],
    ]
    for argv in steps:
        code = main(argv + common)
        if code:
            return code
    code = main(["stats", "--manifest", str(out / "transposed_manifest.jsonl"), "--roles", "converted",
                 "--jobs", str(jobs), "--out", str(out / "after")])
    elapsed = time.perf_counter() - t0
    before = {s.speaker_id: s.mean_of_means_f0 for s in read_stats_csv(out / "speaker_stats.csv")}
    print(f"\n{'speaker':<8} {'before_hz':>10} {'after_hz':>10} {'dev_st':>8}")
    for s in read_stats_csv(out / "after" / "speaker_stats.csv"):
        dev = 12 * math.log2(s.mean_of_means_f0 / SPEAKERS["t200"])
        print(f"{s.speaker_id:<8} {before[s.speaker_id]:10.2f} {s.mean_of_means_f0:10.2f} {dev:+8.4f}")
    print(f"elapsed {elapsed:.1f} s")
    return code


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--workdir", type=Path, default=Path("runs/f0_chain"))
    ap.add_argument("--jobs", type=int, default=1)
    a = ap.parse_args()
    raise SystemExit(run(a.workdir, a.jobs))
