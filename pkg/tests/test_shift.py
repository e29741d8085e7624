import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from svcaug.audio_io import AudioBuffer
from svcaug.pitch import BufferTooShort, estimate_f0
from svcaug.shift import ShiftConfig, pitch_shift, wsola_stretch
from svcaug.synth import sawtooth, sine, vowel


def _median_f0(buf):
    c = estimate_f0(buf)
    return float(np.median(c.f0[c.voiced]))


def test_zero_shift_reconstructs_sine():
    x = sine(220.0)
    y = pitch_shift(x, ShiftConfig(0.0))
    err = y.samples - x.samples
    snr = 10 * np.log10(np.sum(x.samples ** 2) / max(np.sum(err ** 2), 1e-300))
    assert snr >= 40.0


def test_octave_up_sine():
    y = pitch_shift(sine(220.0), ShiftConfig(12.0))
    assert _median_f0(y) == pytest.approx(440.0, abs=2.0)


def test_vowel_up_five():
    y = pitch_shift(vowel(130.0), ShiftConfig(5.0))
    target = 130.0 * 2 ** (5 / 12)
    assert abs(12 * np.log2(_median_f0(y) / target)) <= 0.3


def test_duration_preserved():
    x = vowel(150.0, duration=0.73)
    for st_ in (-7.0, 3.3, 12.0):
        assert len(pitch_shift(x, ShiftConfig(st_))) == len(x)


def test_config_and_length_checks():
    with pytest.raises(ValueError):
        ShiftConfig(0.0, wsola_window=512, wsola_tolerance=256)
    with pytest.raises(BufferTooShort):
        pitch_shift(AudioBuffer(np.zeros(1024), 16000), ShiftConfig(2.0))


def test_stretch_lengths_and_pitch():
    x = sawtooth(150.0).samples
    y = wsola_stretch(x, 1.5)
    assert len(y) == 24000
    c = estimate_f0(AudioBuffer(y, 16000))
    assert np.median(c.f0[c.voiced]) == pytest.approx(150.0, abs=1.0)


def test_deterministic():
    x = vowel(170.0)
    a = pitch_shift(x, ShiftConfig(-3.7)).samples
    b = pitch_shift(x, ShiftConfig(-3.7)).samples
    np.testing.assert_array_equal(a, b)


def test_loud_input_is_bounded():
    x = AudioBuffer(0.999 * np.sign(np.sin(2 * np.pi * 120 * np.arange(16000) / 16000)), 16000)
    y = pitch_shift(x, ShiftConfig(4.0))
    assert np.max(np.abs(y.samples)) <= 1.0


@settings(max_examples=12, deadline=None)
@given(st.floats(-12.0, 12.0), st.floats(100.0, 260.0))
def test_shift_accuracy_property(semitones, f0):
    y = pitch_shift(vowel(f0), ShiftConfig(semitones))
    target = f0 * 2 ** (semitones / 12)
    assert abs(12 * np.log2(_median_f0(y) / target)) <= 0.3
