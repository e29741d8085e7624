"""Batch command line: stats, plan, transpose, shift, train-filter, filter, simeval.

Exit codes: 0 success, 1 usage/configuration error, 2 finished with data warnings.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import audio_io, f0match, pitch, shift, simeval, stylefilter
from .audio_io import _atomic_write
from .manifest import ManifestEntry, ManifestError, RunConfig, read_manifest, write_manifest

log = logging.getLogger("svcaug")

EXIT_OK, EXIT_USAGE, EXIT_WARN = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------- workers

def _cache_key(path: Path, cfg: RunConfig) -> str:
    audio = hashlib.sha256(path.read_bytes()).hexdigest()
    settings = json.dumps({"rate": cfg.analysis_rate, "pitch": cfg.pitch.as_dict()}, sort_keys=True)
    return f"{audio}:{hashlib.sha256(settings.encode()).hexdigest()}"


def analyze(path: Path, cfg: RunConfig) -> tuple[pitch.F0Curve, bool]:
    """F0 curve for `path`, reusing the `.f0.csv` sibling when its key matches.

    Fresh results are passed through the CSV text so cold and warm runs see the
    same rounded values.
    """
    csv_path = path.with_name(path.stem + ".f0.csv")
    key_path = path.with_name(path.stem + ".f0.key")
    key = _cache_key(path, cfg)
    if csv_path.is_file() and key_path.is_file() and key_path.read_text().strip() == key:
        return pitch.curve_from_csv(csv_path.read_text()), True
    buf = audio_io.load_for_analysis(path, cfg.analysis_rate)
    text = pitch.curve_to_csv(pitch.estimate_f0(buf, cfg.pitch))
    _atomic_write(csv_path, text.encode())
    _atomic_write(key_path, (key + "\n").encode())
    return pitch.curve_from_csv(text), False


def _stats_job(path: Path, cfg: RunConfig):
    try:
        curve, hit = analyze(path, cfg)
    except Exception as e:  # per-file failures are reported, not fatal
        return None, 0, False, f"{type(e).__name__}: {e}"
    return pitch.utterance_mean_f0(curve, cfg.pitch.min_voiced_frames), curve.voiced_count, hit, None


def _features_job(path: Path, cfg: RunConfig):
    try:
        curve, _ = analyze(path, cfg)
        buf = audio_io.load_for_analysis(path, cfg.analysis_rate)
        feats = stylefilter.extract_features(curve, buf, cfg.pitch.min_voiced_frames, cfg.pitch.frame_length)
    except Exception as e:
        return None, f"{type(e).__name__}: {e}"
    return feats, None


def _shift_job(item: tuple[Path, float], cfg: RunConfig, write_curve: bool, write_audio: bool):
    path, semitones = item
    try:
        if write_curve:
            curve, _ = analyze(path, cfg)
            moved = f0match.transpose_curve(curve, semitones)
            pitch.write_f0_csv(moved, path.with_name(path.stem + ".f0m.csv"))
        clipped = 0
        if write_audio:
            buf = audio_io.load_for_analysis(path, cfg.analysis_rate)
            conf = shift.ShiftConfig(semitones, cfg.shift.wsola_window, cfg.shift.wsola_tolerance)
            clipped = audio_io.write_wav(shift.pitch_shift(buf, conf), path.with_name(path.stem + ".f0m.wav"))
    except Exception as e:
        return f"{type(e).__name__}: {e}", 0
    return None, clipped


def _map(fn: Callable, items: Sequence, jobs: int) -> list:
    """Ordered map; a process pool when jobs > 1."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------- helpers

def _load_entries(path: str) -> list[ManifestEntry]:
    try:
        entries = read_manifest(path)
    except FileNotFoundError:
        raise UsageError(f"manifest not found: {path}")
    except ManifestError as e:
        raise UsageError(f"{path}: {e}")
    if not entries:
        raise UsageError("empty manifest")
    return entries


def _select(entries, roles: Optional[str], neutral_only: bool) -> list[ManifestEntry]:
    if roles:
        wanted = {r.strip() for r in roles.split(",") if r.strip()}
        entries = [e for e in entries if e.dataset_role in wanted]
    if neutral_only:
        entries = [e for e in entries if e.style == "neutral"]
    return entries


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    _atomic_write(path, text.encode("utf-8"))


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------- commands

def cmd_stats(args, cfg: RunConfig) -> int:
    entries = _select(_load_entries(args.manifest), args.roles, cfg.neutral_only and not args.all_styles)
    if not entries:
        raise UsageError("no utterances left after style/role selection")
    results = _map(partial(_stats_job, cfg=cfg), [e.path for e in entries], cfg.jobs)

    out = _out_dir(cfg)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["utterance_id", "speaker_id", "mean_f0_hz", "voiced_frames", "status"])
    errors = hits = 0
    for e, (mean, n_voiced, hit, err) in zip(entries, results):
        hits += hit
        if err:
            errors += 1
            log.error("%s: %s", e.path, err)
            status = "error"
        else:
            status = "ok" if mean is not None else "too_few_voiced"
        w.writerow([e.utterance_id, e.speaker_id, "" if mean is None else f"{mean:.6f}", n_voiced, status])
    _write_text(out / "utterance_means.csv", buf.getvalue())

    stats = f0match.speaker_stats((e.speaker_id, r[0]) for e, r in zip(entries, results))
    _write_text(out / "speaker_stats.csv", f0match.stats_to_csv(stats))
    print(f"analyzed {len(entries)} utterance(s): cache hits {hits}, errors {errors}")
    for s in stats:
        print(f"  {s.speaker_id:<20} {s.mean_of_means_f0:10.2f} Hz  n={s.utterance_count} skipped={s.skipped_count}")
    empty = [s.speaker_id for s in stats if not s.usable]
    if empty:
        log.warning("speakers with no usable utterances: %s", ", ".join(empty))
        return EXIT_WARN
    return EXIT_OK


def cmd_plan(args, cfg: RunConfig) -> int:
    rows: dict[str, f0match.SpeakerF0Stats] = {}
    for p in args.stats:
        if not Path(p).is_file():
            raise UsageError(f"stats file not found: {p}")
        for s in f0match.read_stats_csv(p):
            if s.speaker_id in rows:
                raise UsageError(f"speaker {s.speaker_id!r} appears in more than one stats row")
            rows[s.speaker_id] = s
    if args.target not in rows:
        raise UsageError(f"target speaker {args.target!r} not found in stats")
    round_st = cfg.round_semitones or args.round_semitones
    try:
        plan = f0match.build_plan(rows[args.target], [s for k, s in sorted(rows.items()) if k != args.target],
                                  round_semitones=round_st)
    except f0match.TargetStatsEmpty as e:
        raise UsageError(f"TargetStatsEmpty: {e}")
    out = _out_dir(cfg)
    _write_text(out / "plan.json", plan.to_json())
    print(f"{'speaker':<20} {'mean_hz':>10} {'offset_st':>10}")
    for s in plan.stats:
        off = plan.offsets.get(s.speaker_id)
        shown = "omitted" if off is None else f"{off:+.4f}"
        print(f"{s.speaker_id:<20} {s.mean_of_means_f0:10.2f} {shown:>10}")
    if plan.omitted:
        log.warning("speakers omitted (no usable utterances): %s", ", ".join(plan.omitted))
        return EXIT_WARN
    return EXIT_OK


def _load_plan(path: str) -> f0match.TranspositionPlan:
    if not Path(path).is_file():
        raise UsageError(f"plan file not found: {path}")
    try:
        return f0match.TranspositionPlan.load(path)
    except (ValueError, KeyError) as e:
        raise UsageError(f"{path}: invalid plan ({e})")


def _check_coverage(entries, plan) -> None:
    missing = sorted({e.speaker_id for e in entries} - set(plan.offsets))
    if missing:
        raise UsageError(f"MissingSpeakerInPlan: {', '.join(missing)}")


def _run_shift_batch(entries, plan, cfg, write_curve: bool, write_audio: bool) -> int:
    items = [(e.path, plan.offsets[e.speaker_id]) for e in entries]
    results = _map(partial(_shift_job, cfg=cfg, write_curve=write_curve, write_audio=write_audio),
                   items, cfg.jobs)
    failed = 0
    converted = []
    for e, (err, clipped) in zip(entries, results):
        if err:
            failed += 1
            log.error("%s: %s", e.path, err)
            continue
        if clipped:
            log.warning("%s: %d sample(s) clipped", e.path, clipped)
        if write_audio:
            converted.append(ManifestEntry(e.utterance_id, e.sibling(".f0m.wav"), e.speaker_id, e.style,
                                           "converted"))
    if write_audio:
        write_manifest(converted, _out_dir(cfg) / "transposed_manifest.jsonl")
    print(f"transposed {len(entries) - failed} utterance(s), failed {failed}")
    return EXIT_WARN if failed else EXIT_OK


def cmd_transpose(args, cfg: RunConfig) -> int:
    entries = _load_entries(args.manifest)
    plan = _load_plan(args.plan)
    _check_coverage(entries, plan)
    return _run_shift_batch(entries, plan, cfg, write_curve=True, write_audio=args.audio)


def cmd_shift(args, cfg: RunConfig) -> int:
    if args.plan or args.manifest:
        if not (args.plan and args.manifest):
            raise UsageError("batch mode needs both --plan and --manifest")
        entries = _load_entries(args.manifest)
        plan = _load_plan(args.plan)
        _check_coverage(entries, plan)
        return _run_shift_batch(entries, plan, cfg, write_curve=False, write_audio=True)
    if args.input is None or args.output is None or args.semitones is None:
        raise UsageError("single-file mode needs --input, --output and --semitones")
    try:
        buf = audio_io.load_for_analysis(args.input, cfg.analysis_rate)
    except FileNotFoundError as e:
        raise UsageError(str(e))
    except audio_io.WavError as e:
        raise UsageError(f"{args.input}: {e}")
    conf = shift.ShiftConfig(args.semitones, cfg.shift.wsola_window, cfg.shift.wsola_tolerance)
    clipped = audio_io.write_wav(shift.pitch_shift(buf, conf), args.output)
    print(f"wrote {args.output} ({args.semitones:+.4f} semitones)")
    return EXIT_WARN if clipped else EXIT_OK


def cmd_train_filter(args, cfg: RunConfig) -> int:
    entries = _select(_load_entries(args.manifest), args.roles, neutral_only=False)
    if not entries:
        raise UsageError("no training utterances after role selection")
    results = _map(partial(_features_job, cfg=cfg), [e.path for e in entries], cfg.jobs)
    data, skipped = [], 0
    for e, (feats, err) in zip(entries, results):
        if err:
            skipped += 1
            log.warning("%s: skipped (%s)", e.path, err)
        else:
            data.append((feats, e.style))
    try:
        model = stylefilter.train_classifier(data, cfg.train)
    except stylefilter.DegenerateLabels as e:
        raise UsageError(f"DegenerateLabels: {e}")
    _out_dir(cfg)
    model.save(Path(cfg.out) / "style_model.json")
    correct = sum(stylefilter.predict(model, f)[0] == lbl for f, lbl in data)
    print(f"trained on {len(data)} utterance(s), {len(model.labels)} styles, {model.iterations} iterations; "
          f"training accuracy {correct / len(data):.4f}")
    return EXIT_WARN if skipped else EXIT_OK


def cmd_filter(args, cfg: RunConfig) -> int:
    entries = _load_entries(args.manifest)
    if args.predictions:
        if not Path(args.predictions).is_file():
            raise UsageError(f"predictions file not found: {args.predictions}")
        preds = stylefilter.read_predictions_csv(args.predictions)
        report = stylefilter.filter_predictions(preds, [(e.utterance_id, e.style) for e in entries])
    else:
        if not Path(args.model).is_file():
            raise UsageError(f"model file not found: {args.model}")
        model = stylefilter.StyleClassifier.load(args.model)
        results = _map(partial(_features_job, cfg=cfg), [e.path for e in entries], cfg.jobs)
        report = stylefilter.FilterReport()
        for e, (feats, err) in zip(entries, results):
            if err:
                log.warning("%s: no features (%s)", e.path, err)
                report.add(e.utterance_id, e.style, None, None, reason="no_features")
            else:
                label, conf = stylefilter.predict(model, feats)
                report.add(e.utterance_id, e.style, label, conf)
    out = _out_dir(cfg)
    kept = set(report.kept)
    write_manifest([e for e in entries if e.utterance_id in kept], out / "kept_manifest.jsonl")
    _write_text(out / "filter_report.csv", report.rows_csv())
    _write_text(out / "filter_counts.csv", report.counts_csv())
    sys.stdout.write(report.counts_csv())
    unscored = sum(1 for d in report.dropped if d[2] != "style_changed")
    if unscored:
        log.warning("%d utterance(s) dropped without a prediction", unscored)
        return EXIT_WARN
    return EXIT_OK


def _speaker_files(directory: str) -> dict[str, np.ndarray]:
    d = Path(directory)
    if not d.is_dir():
        raise UsageError(f"embedding directory not found: {directory}")
    out = {}
    for p in sorted(d.iterdir()):
        if p.suffix in (".f0me", ".csv") and p.is_file():
            if p.stem in out:
                raise UsageError(f"speaker {p.stem!r} has more than one embedding file in {directory}")
            out[p.stem] = simeval.read_embeddings(p)
    return out


def cmd_simeval(args, cfg: RunConfig) -> int:
    plan = _load_plan(args.plan)
    if not Path(args.target_emb).is_file():
        raise UsageError(f"target embedding file not found: {args.target_emb}")
    target = simeval.read_embeddings(args.target_emb)
    mode = "cosine-then-mean" if args.cosine_then_mean else "mean-then-cosine"
    reports = []
    for directory, matched in ((args.matched_dir, True), (args.unmatched_dir, False)):
        if directory is None:
            reports.append([])
            continue
        try:
            reports.append(simeval.build_similarity_report(target, _speaker_files(directory), plan, matched, mode))
        except simeval.MissingSpeakerInPlan as e:
            raise UsageError(f"MissingSpeakerInPlan: {e.args[0]}")
        except (simeval.DimensionMismatch, simeval.EmptyInput, simeval.ZeroNormEmbedding) as e:
            raise UsageError(f"{type(e).__name__}: {e}")
    try:
        simeval.emit_report(reports[0], reports[1], cfg.out)
    except ValueError as e:
        raise UsageError(str(e))
    print(f"wrote {Path(cfg.out) / 'similarity.csv'} and {Path(cfg.out) / 'similarity.svg'}")
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _global_flags(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", default=d, help="JSON run configuration")
    p.add_argument("--jobs", type=int, default=d, help="worker processes")
    p.add_argument("--out", default=d, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="svcaug", description=__doc__.splitlines()[0])
    _global_flags(parser, suppress=False)
    parser.add_argument("-v", "--verbose", action="store_true")
    common = _Parser(add_help=False)
    _global_flags(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("stats", parents=[common], help="per-speaker mean-of-means F0")
    p.add_argument("--manifest", required=True)
    p.add_argument("--roles", help="comma-separated dataset roles to include")
    p.add_argument("--all-styles", action="store_true", help="use every style, not only neutral")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("plan", parents=[common], help="semitone offsets toward the target speaker")
    p.add_argument("--stats", required=True, nargs="+")
    p.add_argument("--target", required=True)
    p.add_argument("--round-semitones", action="store_true")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("transpose", parents=[common], help="transpose F0 curves (and audio) by the plan")
    p.add_argument("--manifest", required=True)
    p.add_argument("--plan", required=True)
    p.add_argument("--audio", action="store_true", help="also write pitch-shifted .f0m.wav files")
    p.set_defaults(func=cmd_transpose)

    p = sub.add_parser("shift", parents=[common], help="pitch-shift one file or a planned manifest")
    p.add_argument("--semitones", type=float)
    p.add_argument("--input")
    p.add_argument("--output")
    p.add_argument("--plan")
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_shift)

    p = sub.add_parser("train-filter", parents=[common], help="train the prosodic style classifier")
    p.add_argument("--manifest", required=True)
    p.add_argument("--roles", default="source_expressive")
    p.set_defaults(func=cmd_train_filter)

    p = sub.add_parser("filter", parents=[common], help="keep converted utterances whose style is unchanged")
    p.add_argument("--manifest", required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--model")
    g.add_argument("--predictions", help="CSV utterance_id,predicted_label,confidence")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("simeval", parents=[common], help="similarity vs semitone-distance report")
    p.add_argument("--plan", required=True)
    p.add_argument("--target-emb", required=True)
    p.add_argument("--matched-dir")
    p.add_argument("--unmatched-dir")
    p.add_argument("--cosine-then-mean", action="store_true")
    p.set_defaults(func=cmd_simeval)
    return parser


def _config(args) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        if not Path(args.config).is_file():
            raise UsageError(f"config file not found: {args.config}")
        try:
            cfg = RunConfig.load(args.config)
        except (ValueError, TypeError) as e:
            raise UsageError(f"{args.config}: {e}")
    cfg = cfg.with_overrides(jobs=args.jobs, out=args.out)
    if cfg.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    return cfg


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args, _config(args))
    except UsageError as e:
        print(f"svcaug {args.command}: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
