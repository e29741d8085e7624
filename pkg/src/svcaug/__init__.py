"""F0-matched voice-conversion data curation: pitch statistics, semitone plans,
pitch shifting, style filtering and speaker-similarity reports."""

from .audio_io import AudioBuffer, read_wav, write_wav, resample
from .pitch import F0Curve, PitchConfig, estimate_f0, utterance_mean_f0
from .f0match import (SpeakerF0Stats, TranspositionPlan, build_plan, semitone_distance,
                      speaker_stats, transpose_curve)
from .shift import ShiftConfig, pitch_shift
from .stylefilter import StyleClassifier, TrainConfig, extract_features, filter_converted, predict, train_classifier
from .simeval import build_similarity_report, cosine_similarity, emit_report, mean_embedding

__version__ = "0.1.0"
