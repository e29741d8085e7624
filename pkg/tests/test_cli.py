import csv
import json
import math

import numpy as np
import pytest

from helpers import embedding_with_similarity, write_style_corpus
from svcaug.audio_io import load_for_analysis, write_wav
from svcaug.f0match import read_stats_csv
from svcaug.manifest import ManifestEntry, read_manifest, write_manifest
from svcaug.pitch import estimate_f0, read_f0_csv, utterance_mean_f0
from svcaug.simeval import write_embeddings
from svcaug.synth import sine, vowel, write_speaker_corpus


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def corpus(tmp_path):
    manifest = write_speaker_corpus(tmp_path / "data", {"lo": 120.0, "tgt": 200.0}, target="tgt",
                                    spread=(0.95, 1.05), duration=0.6)
    return manifest, tmp_path / "out"


def test_stats_matches_direct_analysis(corpus, run_cli):
    manifest, out = corpus
    code, stdout, _ = run_cli("stats", "--manifest", manifest, "--out", out)
    assert code == 0
    assert "cache hits 0" in stdout
    stats = {s.speaker_id: s for s in read_stats_csv(out / "speaker_stats.csv")}
    for spk in ("lo", "tgt"):
        means = [utterance_mean_f0(estimate_f0(load_for_analysis(e.path)))
                 for e in read_manifest(manifest) if e.speaker_id == spk]
        assert stats[spk].mean_of_means_f0 == pytest.approx(math.fsum(means) / len(means), abs=1e-4)
        assert stats[spk].utterance_count == 2
    assert stats["lo"].mean_of_means_f0 == pytest.approx(120.0, rel=0.01)
    assert len(_rows(out / "utterance_means.csv")) == 4


def test_stats_three_tones_per_speaker(tmp_path, run_cli):
    tones = {"a": (100.0, 120.0, 140.0), "b": (210.0, 250.0, 290.0)}
    entries = []
    for spk, freqs in tones.items():
        for i, f in enumerate(freqs):
            path = tmp_path / f"{spk}{i}.wav"
            write_wav(sine(f), path)
            entries.append(ManifestEntry(f"{spk}{i}", path, spk))
    write_manifest(entries, tmp_path / "m.jsonl")
    assert run_cli("stats", "--manifest", tmp_path / "m.jsonl", "--out", tmp_path / "o")[0] == 0
    stats = {s.speaker_id: s for s in read_stats_csv(tmp_path / "o" / "speaker_stats.csv")}
    assert stats["a"].mean_of_means_f0 == pytest.approx(120.0, abs=0.5)
    assert stats["b"].mean_of_means_f0 == pytest.approx(250.0, abs=0.5)


def test_plan_five_speakers_pairwise_oracle(tmp_path, run_cli):
    manifest = write_speaker_corpus(tmp_path / "d", {"a": 110.0, "b": 150.0, "t": 200.0, "c": 280.0, "e": 380.0},
                                    target="t", spread=(1.0,), duration=0.5)
    out = tmp_path / "o"
    run_cli("stats", "--manifest", manifest, "--out", out)
    assert run_cli("plan", "--stats", out / "speaker_stats.csv", "--target", "t", "--out", out)[0] == 0
    stats = {s.speaker_id: s.mean_of_means_f0 for s in read_stats_csv(out / "speaker_stats.csv")}
    offsets = json.loads((out / "plan.json").read_text())["offsets"]
    for spk, f in stats.items():
        assert offsets[spk] == pytest.approx(12 * math.log(stats["t"] / f) / math.log(2), abs=5e-5)


def test_stats_warm_cache_identical(corpus, run_cli):
    manifest, out = corpus
    run_cli("stats", "--manifest", manifest, "--out", out)
    first = (out / "speaker_stats.csv").read_bytes()
    code, stdout, _ = run_cli("stats", "--manifest", manifest, "--out", out)
    assert code == 0 and "cache hits 4" in stdout
    assert (out / "speaker_stats.csv").read_bytes() == first


def test_stats_empty_manifest(tmp_path, run_cli):
    (tmp_path / "m.jsonl").write_text("")
    code, _, err = run_cli("stats", "--manifest", tmp_path / "m.jsonl", "--out", tmp_path / "o")
    assert code == 1 and "empty manifest" in err


def test_stats_silent_speaker_warns(tmp_path, run_cli):
    manifest = write_speaker_corpus(tmp_path, {"a": 150.0}, spread=(1.0,), duration=0.5)
    entries = read_manifest(manifest)
    silent = tmp_path / "mute.wav"
    write_wav(sine(100.0, duration=0.5, amp=0.0), silent)
    entries.append(ManifestEntry("mute_0", silent, "mute"))
    write_manifest(entries, manifest)
    code, _, _ = run_cli("stats", "--manifest", manifest, "--out", tmp_path / "o")
    assert code == 2
    stats = {s.speaker_id: s for s in read_stats_csv(tmp_path / "o" / "speaker_stats.csv")}
    assert not stats["mute"].usable and stats["a"].usable


def _stats_file(path, rows):
    path.write_text("speaker_id,mean_of_means_hz,utterance_count,skipped_count\n"
                    + "".join(f"{s},{f},{n},0\n" for s, f, n in rows))
    return path


def test_plan_octave_and_rounding(tmp_path, run_cli):
    stats = _stats_file(tmp_path / "s.csv", [("T", 200.0, 3), ("X", 100.0, 2),
                                             ("Y", 200.0 / 2 ** (3.4 / 12), 2)])
    code, stdout, _ = run_cli("plan", "--stats", stats, "--target", "T", "--out", tmp_path / "a")
    assert code == 0 and "+12.0000" in stdout
    doc = json.loads((tmp_path / "a" / "plan.json").read_text())
    assert doc["offsets"] == {"T": 0.0, "X": 12.0, "Y": 3.4}
    run_cli("plan", "--stats", stats, "--target", "T", "--round-semitones", "--out", tmp_path / "b")
    assert json.loads((tmp_path / "b" / "plan.json").read_text())["offsets"]["Y"] == 3.0


def test_plan_unknown_target_and_omitted(tmp_path, run_cli):
    stats = _stats_file(tmp_path / "s.csv", [("T", 200.0, 3), ("E", 0.0, 0)])
    assert run_cli("plan", "--stats", stats, "--target", "nobody", "--out", tmp_path)[0] == 1
    code, _, _ = run_cli("plan", "--stats", stats, "--target", "T", "--out", tmp_path)
    assert code == 2
    assert json.loads((tmp_path / "plan.json").read_text())["omitted"] == ["E"]


def _plan_file(path, offsets, target="tgt"):
    path.write_text(json.dumps({"target": target, "offsets": offsets, "stats": [], "omitted": []}))
    return path


def test_transpose_zero_plan_is_identity(corpus, run_cli, tmp_path):
    manifest, out = corpus
    plan = _plan_file(tmp_path / "p.json", {"lo": 0.0, "tgt": 0.0})
    assert run_cli("transpose", "--manifest", manifest, "--plan", plan, "--out", out)[0] == 0
    for e in read_manifest(manifest):
        a, b = read_f0_csv(e.sibling(".f0.csv")), read_f0_csv(e.sibling(".f0m.csv"))
        np.testing.assert_array_equal(a.f0, b.f0)
        np.testing.assert_array_equal(a.voiced, b.voiced)
    assert not (out / "transposed_manifest.jsonl").exists()


def test_transpose_octave_curves(tmp_path, run_cli):
    manifest = write_speaker_corpus(tmp_path, {"a": 220.0}, spread=(1.0,), vibrato=0.0, duration=0.5)
    plan = _plan_file(tmp_path / "p.json", {"a": 12.0}, target="b")
    assert run_cli("transpose", "--manifest", manifest, "--plan", plan, "--out", tmp_path / "o")[0] == 0
    (e,) = read_manifest(manifest)
    c = read_f0_csv(e.sibling(".f0m.csv"))
    assert c.voiced.sum() > 30
    np.testing.assert_allclose(c.f0[c.voiced], 440.0, atol=2.0)


def test_transpose_audio_reanalysis(corpus, run_cli):
    manifest, out = corpus
    run_cli("stats", "--manifest", manifest, "--out", out)
    run_cli("plan", "--stats", out / "speaker_stats.csv", "--target", "tgt", "--out", out)
    assert run_cli("transpose", "--manifest", manifest, "--plan", out / "plan.json", "--audio", "--out", out)[0] == 0
    converted = read_manifest(out / "transposed_manifest.jsonl")
    assert {e.dataset_role for e in converted} == {"converted"}
    assert all(e.path.name.endswith(".f0m.wav") for e in converted)
    assert run_cli("stats", "--manifest", out / "transposed_manifest.jsonl", "--roles", "converted",
                   "--out", out / "re")[0] == 0
    target = {s.speaker_id: s for s in read_stats_csv(out / "speaker_stats.csv")}["tgt"].mean_of_means_f0
    for s in read_stats_csv(out / "re" / "speaker_stats.csv"):
        assert abs(12 * math.log2(s.mean_of_means_f0 / target)) <= 0.3


def test_transpose_missing_speaker_writes_nothing(corpus, run_cli, tmp_path):
    manifest, out = corpus
    plan = _plan_file(tmp_path / "p.json", {"tgt": 0.0})
    before = sorted(p.name for p in manifest.parent.rglob("*"))
    code, _, err = run_cli("transpose", "--manifest", manifest, "--plan", plan, "--audio", "--out", out)
    assert code == 1 and "MissingSpeakerInPlan" in err and "lo" in err
    assert sorted(p.name for p in manifest.parent.rglob("*")) == before
    assert not out.exists()


def test_shift_single_file(tmp_path, run_cli):
    src = tmp_path / "in.wav"
    write_wav(vowel(150.0), src)
    code, _, _ = run_cli("shift", "--input", src, "--output", tmp_path / "up.wav", "--semitones", "7")
    assert code == 0
    y = load_for_analysis(tmp_path / "up.wav")
    assert len(y) == 16000
    c = estimate_f0(y)
    assert abs(12 * math.log2(np.median(c.f0[c.voiced]) / (150.0 * 2 ** (7 / 12)))) <= 0.3


def test_shift_usage_errors(tmp_path, run_cli):
    assert run_cli("shift", "--input", tmp_path / "x.wav")[0] == 1
    assert run_cli("shift", "--input", tmp_path / "nope.wav", "--output", tmp_path / "y.wav",
                   "--semitones", "1")[0] == 1
    assert run_cli("shift", "--plan", tmp_path / "p.json")[0] == 1


def test_shift_batch(corpus, run_cli, tmp_path):
    manifest, out = corpus
    plan = _plan_file(tmp_path / "p.json", {"lo": 3.0, "tgt": 0.0})
    assert run_cli("shift", "--plan", plan, "--manifest", manifest, "--out", out)[0] == 0
    for e in read_manifest(manifest):
        assert e.sibling(".f0m.wav").is_file()
        assert not e.sibling(".f0m.csv").exists()


def _filter_manifest(tmp_path, styles):
    entries = [ManifestEntry(f"u{i}", tmp_path / f"u{i}.wav", "s", st, "converted") for i, st in enumerate(styles)]
    write_manifest(entries, tmp_path / "conv.jsonl")
    return tmp_path / "conv.jsonl"


def _predictions(path, preds):
    path.write_text("utterance_id,predicted_label,confidence\n"
                    + "".join(f"{u},{lbl},0.9\n" for u, lbl in preds.items()))
    return path


def test_filter_predictions_correct_and_wrong(tmp_path, run_cli):
    styles = ["happy", "sad", "happy", "angry"]
    m = _filter_manifest(tmp_path, styles)
    right = _predictions(tmp_path / "r.csv", {f"u{i}": s for i, s in enumerate(styles)})
    assert run_cli("filter", "--manifest", m, "--predictions", right, "--out", tmp_path / "a")[0] == 0
    assert [e.utterance_id for e in read_manifest(tmp_path / "a" / "kept_manifest.jsonl")] == ["u0", "u1", "u2", "u3"]
    wrong = _predictions(tmp_path / "w.csv", {f"u{i}": "neutral" for i in range(4)})
    assert run_cli("filter", "--manifest", m, "--predictions", wrong, "--out", tmp_path / "b")[0] == 0
    assert read_manifest(tmp_path / "b" / "kept_manifest.jsonl") == []
    counts = {r["style"]: r for r in _rows(tmp_path / "b" / "filter_counts.csv")}
    assert counts["happy"]["total"] == "2" and counts["happy"]["kept"] == "0"


def test_filter_missing_prediction(tmp_path, run_cli):
    m = _filter_manifest(tmp_path, ["happy", "sad"])
    preds = _predictions(tmp_path / "p.csv", {"u0": "happy"})
    assert run_cli("filter", "--manifest", m, "--predictions", preds, "--out", tmp_path / "o")[0] == 2
    rows = {r["utterance_id"]: r for r in _rows(tmp_path / "o" / "filter_report.csv")}
    assert rows["u1"]["reason"] == "no_prediction" and rows["u0"]["kept"] == "1"


def test_train_filter_and_model_filter(tmp_path, run_cli):
    manifest, entries = write_style_corpus(tmp_path / "sty", per_style=3)
    out = tmp_path / "o"
    code, stdout, _ = run_cli("train-filter", "--manifest", manifest, "--out", out)
    assert code == 0 and "training accuracy 1.0000" in stdout
    doc = json.loads((out / "style_model.json").read_text())
    assert doc["labels"] == ["calm", "excited"]
    assert run_cli("filter", "--manifest", manifest, "--model", out / "style_model.json", "--out", out)[0] == 0
    assert len(read_manifest(out / "kept_manifest.jsonl")) == len(entries)


def test_train_filter_single_style_is_usage_error(tmp_path, run_cli):
    manifest, _ = write_style_corpus(tmp_path / "sty", speakers=("s1",), per_style=2)
    entries = [e for e in read_manifest(manifest) if e.style == "calm"]
    write_manifest(entries, manifest)
    code, _, err = run_cli("train-filter", "--manifest", manifest, "--out", tmp_path / "o")
    assert code == 1 and "DegenerateLabels" in err


def _simeval_inputs(tmp_path):
    rng = np.random.default_rng(0)
    target = rng.normal(size=(3, 16))
    tm = target.mean(axis=0)
    dists = {"a": 2.0, "b": -5.0, "c": 8.0}
    write_embeddings(tmp_path / "target.f0me", target)
    for sub, sim_fn in (("m", lambda d: 0.95), ("u", lambda d: 1 - 0.05 * abs(d))):
        (tmp_path / sub).mkdir()
        for s, d in dists.items():
            write_embeddings(tmp_path / sub / f"{s}.f0me", [embedding_with_similarity(tm, sim_fn(d), rng)])
    _plan_file(tmp_path / "plan.json", {"t": 0.0, **dists}, target="t")
    return tmp_path


def test_simeval_missing_plan(tmp_path, run_cli):
    code, _, err = run_cli("simeval", "--plan", tmp_path / "absent.json", "--target-emb", tmp_path / "t.f0me",
                           "--out", tmp_path / "o")
    assert code == 1 and "absent.json" in err


def test_simeval_report_and_stability(tmp_path, run_cli):
    d = _simeval_inputs(tmp_path)
    args = ["simeval", "--plan", d / "plan.json", "--target-emb", d / "target.f0me",
            "--matched-dir", d / "m", "--unmatched-dir", d / "u"]
    assert run_cli(*args, "--out", d / "o1")[0] == 0
    assert run_cli(*args, "--out", d / "o2")[0] == 0
    rows = _rows(d / "o1" / "similarity.csv")
    assert [r["speaker_id"] for r in rows] == ["a", "b", "c"]
    for r in rows:
        # float32 storage bounds the achievable precision
        assert float(r["sim_matched"]) == pytest.approx(0.95, abs=1e-6)
        assert float(r["sim_unmatched"]) == pytest.approx(1 - 0.05 * float(r["abs_semitones"]), abs=1e-6)
    for name in ("similarity.csv", "similarity.svg"):
        assert (d / "o1" / name).read_bytes() == (d / "o2" / name).read_bytes()


def test_simeval_speaker_not_in_plan(tmp_path, run_cli):
    d = _simeval_inputs(tmp_path)
    write_embeddings(d / "u" / "ghost.f0me", [np.ones(16)])
    code, _, err = run_cli("simeval", "--plan", d / "plan.json", "--target-emb", d / "target.f0me",
                           "--unmatched-dir", d / "u", "--out", d / "o")
    assert code == 1 and "ghost" in err


def test_config_file_controls_output(corpus, run_cli, tmp_path):
    manifest, _ = corpus
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"out": str(tmp_path / "from_cfg"), "pitch": {"min_voiced_frames": 5}}))
    assert run_cli("--config", cfg, "stats", "--manifest", manifest)[0] == 0
    assert (tmp_path / "from_cfg" / "speaker_stats.csv").is_file()
    cfg.write_text(json.dumps({"bogus": 1}))
    assert run_cli("--config", cfg, "stats", "--manifest", manifest)[0] == 1


def test_argparse_errors_exit_one(run_cli):
    with pytest.raises(SystemExit) as exc:
        run_cli("stats")
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        run_cli("no-such-command")
    assert exc.value.code == 1
