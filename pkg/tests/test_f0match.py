import json
import math
import random

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from svcaug.f0match import (NonPositiveFrequency, SpeakerF0Stats, TargetStatsEmpty, TranspositionPlan,
                            build_plan, read_stats_csv, round_half_away, semitone_distance, speaker_stats,
                            stats_to_csv, transpose_curve)
from svcaug.pitch import F0Curve

hz = st.floats(50.0, 600.0)


def test_stats_mean_of_means():
    stats = {s.speaker_id: s for s in speaker_stats([("A", 100.0), ("A", 200.0),
                                                     ("B", 150.0), ("B", None), ("B", 250.0)])}
    assert stats["A"].mean_of_means_f0 == 150.0 and stats["A"].utterance_count == 2
    assert stats["B"].mean_of_means_f0 == 200.0 and stats["B"].skipped_count == 1


def test_stats_unusable_speaker_flagged():
    (s,) = speaker_stats([("C", None), ("C", None)])
    assert s.utterance_count == 0 and s.skipped_count == 2 and not s.usable


def test_stats_permutation_invariant():
    rng = random.Random(3)
    items = [(spk, rng.uniform(80, 400) if rng.random() > 0.1 else None)
             for spk in ("x", "y", "z") for _ in range(40)]
    ref = speaker_stats(sorted(items, key=lambda t: (t[0], t[1] or 0)))
    for _ in range(5):
        rng.shuffle(items)
        assert speaker_stats(items) == ref


def test_semitone_examples():
    assert semitone_distance(200, 200) == 0.0
    assert semitone_distance(440, 220) == 12.0
    oracle = float(12 * mpmath.log(mpmath.mpf(196) / 220, 2))
    assert semitone_distance(196.0, 220.0) == pytest.approx(oracle, rel=1e-13)
    assert oracle == pytest.approx(-1.99980, abs=1e-5)
    with pytest.raises(NonPositiveFrequency):
        semitone_distance(0.0, 100.0)
    with pytest.raises(NonPositiveFrequency):
        semitone_distance(100.0, -5.0)


@given(hz, hz)
def test_antisymmetry(a, b):
    assert abs(semitone_distance(a, b) + semitone_distance(b, a)) <= 1e-12


@given(hz, hz, hz)
def test_additivity(a, b, c):
    assert semitone_distance(a, c) == pytest.approx(semitone_distance(a, b) + semitone_distance(b, c), abs=1e-9)


def test_plan_octave_pair():
    plan = build_plan(SpeakerF0Stats("T", 200.0, 3),
                      [SpeakerF0Stats("X", 100.0, 2), SpeakerF0Stats("Y", 400.0, 2), SpeakerF0Stats("Z", 200.0, 1)])
    assert plan.offsets == {"T": 0.0, "X": 12.0, "Y": -12.0, "Z": 0.0}


def test_plan_omits_unusable_and_rejects_empty_target():
    plan = build_plan(SpeakerF0Stats("T", 200.0, 3), [SpeakerF0Stats("E", 0.0, 0, 4)])
    assert "E" not in plan.offsets and plan.omitted == ["E"]
    with pytest.raises(TargetStatsEmpty):
        build_plan(SpeakerF0Stats("T", 0.0, 0, 2), [])


def test_plan_matches_pairwise_oracle():
    rng = np.random.default_rng(7)
    srcs = [SpeakerF0Stats(f"s{i}", float(f), 5) for i, f in enumerate(rng.uniform(80, 350, 10))]
    target = SpeakerF0Stats("lj", 210.5, 12)
    plan = build_plan(target, srcs)
    for s in srcs:
        oracle = 12 * math.log(target.mean_of_means_f0 / s.mean_of_means_f0) / math.log(2)
        assert plan.offsets[s.speaker_id] == pytest.approx(oracle, abs=1e-12)


@given(hz, hz)
def test_plan_transposes_to_target(t, s):
    plan = build_plan(SpeakerF0Stats("T", t, 1), [SpeakerF0Stats("S", s, 1)])
    assert s * 2 ** (plan.offsets["S"] / 12) == pytest.approx(t, rel=1e-9)


def test_round_semitones():
    assert round_half_away(3.4) == 3.0
    assert round_half_away(2.5) == 3.0
    assert round_half_away(-2.5) == -3.0
    target = SpeakerF0Stats("T", 200.0, 1)
    src = SpeakerF0Stats("S", 200.0 / 2 ** (3.4 / 12), 1)
    assert build_plan(target, [src], round_semitones=True).offsets["S"] == 3.0


def _curve():
    return F0Curve(0.01, [100.0, 0.0, 150.0, 220.0], [True, False, True, True], [0.9, 0.1, 0.95, 0.97])


def test_transpose_examples():
    c = _curve()
    same = transpose_curve(c, 0.0)
    np.testing.assert_array_equal(same.f0, c.f0)
    up = transpose_curve(c, 12.0)
    assert up.f0.tolist() == [200.0, 0.0, 300.0, 440.0]
    np.testing.assert_array_equal(up.voiced, c.voiced)
    np.testing.assert_array_equal(up.periodicity, c.periodicity)
    assert up.hop_seconds == c.hop_seconds
    back = transpose_curve(transpose_curve(c, 5.0), -5.0)
    np.testing.assert_allclose(back.f0, c.f0, rtol=1e-9)


@given(st.floats(-24, 24), st.floats(-24, 24))
def test_transpose_composes(x, y):
    c = _curve()
    np.testing.assert_allclose(transpose_curve(transpose_curve(c, x), y).f0,
                               transpose_curve(c, x + y).f0, rtol=1e-9)


def test_serialization(tmp_path):
    stats = [SpeakerF0Stats("T", 200.0, 3), SpeakerF0Stats("X", 123.456789, 2, 1)]
    plan = build_plan(stats[0], stats[1:])
    doc = json.loads(plan.to_json())
    assert doc["target"] == "T"
    assert doc["offsets"]["X"] == round(plan.offsets["X"], 4)
    assert {s["speaker_id"] for s in doc["stats"]} == {"T", "X"}
    back = TranspositionPlan.from_json(plan.to_json())
    assert back.offsets["X"] == pytest.approx(plan.offsets["X"], abs=5e-5)
    p = tmp_path / "s.csv"
    p.write_text(stats_to_csv(stats))
    assert p.read_text().splitlines()[0] == "speaker_id,mean_of_means_hz,utterance_count,skipped_count"
    assert read_stats_csv(p)[1] == SpeakerF0Stats("X", 123.456789, 2, 1)
