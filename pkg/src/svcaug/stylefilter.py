"""Prosodic features, a softmax-regression style classifier and the keep-if-style-unchanged filter."""
from __future__ import annotations

import csv
import io
import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .audio_io import AudioBuffer, FrameGrid, _atomic_write
from .pitch import F0Curve

log = logging.getLogger(__name__)

FEATURE_NAMES = (
    "logf0_mean", "logf0_std", "voiced_fraction", "logf0_slope",
    "energy_mean_db", "energy_std_db", "duration_s", "voiced_segments_per_s",
    "logf0_range", "energy_range_db",
)
N_FEATURES = len(FEATURE_NAMES)
MODEL_FORMAT_VERSION = 1
ENERGY_FLOOR = 1e-10


class InsufficientVoicedFrames(ValueError):
    pass


class DegenerateLabels(ValueError):
    pass


class NonFiniteLoss(FloatingPointError):
    def __init__(self, iteration: int):
        super().__init__(f"non-finite loss at iteration {iteration}")
        self.iteration = iteration


class DimensionMismatch(ValueError):
    pass


def frame_energy_db(buffer: AudioBuffer, n_frames: int, frame_length: int, hop_length: int) -> np.ndarray:
    frames = FrameGrid(frame_length, hop_length).frames(buffer.samples)[:n_frames]
    if len(frames) < n_frames:
        frames = np.vstack([frames, np.zeros((n_frames - len(frames), frame_length))])
    return 10.0 * np.log10(np.mean(frames ** 2, axis=1) + ENERGY_FLOOR)


def _spread(v: np.ndarray) -> float:
    p10, p90 = np.percentile(v, [10, 90])
    return float(p90 - p10)


def extract_features(curve: F0Curve, buffer: AudioBuffer, min_voiced_frames: int = 10,
                     frame_length: int = 1024) -> np.ndarray:
    """Ten prosodic descriptors (see FEATURE_NAMES); energy uses the curve's frame grid."""
    v = curve.voiced
    if curve.voiced_count < max(min_voiced_frames, 1):
        raise InsufficientVoicedFrames(f"{curve.voiced_count} voiced frames, need {min_voiced_frames}")
    hop = int(round(curve.hop_seconds * buffer.sample_rate))
    logf0 = np.log(curve.f0[v])
    t = curve.times[v]
    if len(t) > 1 and np.ptp(t) > 0:
        tc = t - t.mean()
        slope = float(np.dot(tc, logf0 - logf0.mean()) / np.dot(tc, tc))
    else:
        slope = 0.0
    energy = frame_energy_db(buffer, len(curve), frame_length, max(hop, 1))
    duration = buffer.duration_seconds
    segments = int(v[0]) + int(np.count_nonzero(v[1:] & ~v[:-1]))
    feats = np.array([
        logf0.mean(),
        logf0.std(),
        curve.voiced_count / len(curve),
        slope,
        energy.mean(),
        energy.std(),
        duration,
        segments / duration if duration > 0 else 0.0,
        _spread(logf0),
        _spread(energy),
    ])
    return feats


@dataclass(frozen=True)
class TrainConfig:
    l2: float = 1e-3
    learning_rate: float = 0.1
    tol: float = 1e-8
    max_iters: int = 10000


@dataclass
class StyleClassifier:
    labels: list[str]
    weights: np.ndarray
    bias: np.ndarray
    feature_mean: np.ndarray
    feature_std: np.ndarray
    iterations: int = 0

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64).reshape(len(self.labels), -1)
        self.bias = np.asarray(self.bias, dtype=np.float64).reshape(-1)
        self.feature_mean = np.asarray(self.feature_mean, dtype=np.float64).reshape(-1)
        self.feature_std = np.asarray(self.feature_std, dtype=np.float64).reshape(-1)
        dim = self.weights.shape[1]
        if len(self.bias) != len(self.labels):
            raise DimensionMismatch("bias length differs from label count")
        if len(self.feature_mean) != dim or len(self.feature_std) != dim:
            raise DimensionMismatch("standardization vectors do not match the weight matrix")

    @property
    def n_features(self) -> int:
        return self.weights.shape[1]

    def scores(self, features) -> np.ndarray:
        x = np.asarray(features, dtype=np.float64)
        if x.shape[-1] != self.n_features:
            raise DimensionMismatch(f"expected {self.n_features} features, got {x.shape[-1]}")
        z = (x - self.feature_mean) / self.feature_std
        return z @ self.weights.T + self.bias

    def to_json(self) -> str:
        doc = {
            "format_version": MODEL_FORMAT_VERSION,
            "labels": list(self.labels),
            "weights": self.weights.tolist(),
            "bias": self.bias.tolist(),
            "feature_mean": self.feature_mean.tolist(),
            "feature_std": self.feature_std.tolist(),
            "feature_names": list(FEATURE_NAMES) if self.n_features == N_FEATURES else None,
            "iterations": self.iterations,
        }
        return json.dumps(doc, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "StyleClassifier":
        doc = json.loads(text)
        if doc.get("format_version") != MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported model format_version {doc.get('format_version')!r}")
        return cls(list(doc["labels"]), doc["weights"], doc["bias"], doc["feature_mean"],
                   doc["feature_std"], int(doc.get("iterations", 0)))

    def save(self, path) -> None:
        _atomic_write(Path(path), self.to_json().encode())

    @classmethod
    def load(cls, path) -> "StyleClassifier":
        return cls.from_json(Path(path).read_text())


def softmax(scores: np.ndarray) -> np.ndarray:
    s = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(s)
    return e / e.sum(axis=-1, keepdims=True)


def loss_and_grad(weights: np.ndarray, bias: np.ndarray, X: np.ndarray, Y: np.ndarray,
                  l2: float) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean cross-entropy plus (l2/2)*||W||^2 and its gradient; Y is one-hot (n, K)."""
    n = len(X)
    scores = X @ weights.T + bias
    shifted = scores - scores.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_p = shifted - log_z
    loss = -np.sum(Y * log_p) / n + 0.5 * l2 * np.sum(weights ** 2)
    resid = (np.exp(log_p) - Y) / n
    return float(loss), resid.T @ X + l2 * weights, resid.sum(axis=0)


def train_classifier(dataset: Sequence[tuple[np.ndarray, str]],
                     config: TrainConfig = TrainConfig()) -> StyleClassifier:
    """Full-batch gradient descent on standardized features.

    The step size halves whenever a step would raise the loss; training stops
    once an accepted step improves the loss by less than `config.tol`.
    """
    X = np.array([np.asarray(f, dtype=np.float64) for f, _ in dataset])
    y = [str(lbl) for _, lbl in dataset]
    counts = Counter(y)
    if len(counts) < 2:
        raise DegenerateLabels("need at least two distinct labels")
    if min(counts.values()) < 2:
        raise DegenerateLabels("need at least two samples per label")
    labels = sorted(counts)
    index = {lbl: i for i, lbl in enumerate(labels)}
    Y = np.zeros((len(y), len(labels)))
    Y[np.arange(len(y)), [index[lbl] for lbl in y]] = 1.0

    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std > 1e-12, std, 1.0)
    Z = (X - mean) / std

    W = np.zeros((len(labels), X.shape[1]))
    b = np.zeros(len(labels))
    lr = config.learning_rate
    loss, gW, gb = loss_and_grad(W, b, Z, Y, config.l2)
    it = 0
    for it in range(1, config.max_iters + 1):
        W_new, b_new = W - lr * gW, b - lr * gb
        new_loss, new_gW, new_gb = loss_and_grad(W_new, b_new, Z, Y, config.l2)
        if not np.isfinite(new_loss):
            raise NonFiniteLoss(it)
        if new_loss > loss:
            lr *= 0.5
            if lr < 1e-12:
                break
            continue
        improvement = loss - new_loss
        W, b, loss, gW, gb = W_new, b_new, new_loss, new_gW, new_gb
        if improvement < config.tol:
            break
    log.info("classifier trained: %d iterations, loss %.6g", it, loss)
    return StyleClassifier(labels, W, b, mean, std, iterations=it)


def predict(classifier: StyleClassifier, features) -> tuple[str, float]:
    """Most probable label (lowest index on ties) and its softmax probability."""
    p = softmax(classifier.scores(features))
    i = int(np.argmax(p))
    return classifier.labels[i], float(p[i])


@dataclass
class FilterReport:
    kept: list[str] = field(default_factory=list)
    dropped: list[tuple[str, Optional[str], str]] = field(default_factory=list)
    per_style_kept: dict[str, int] = field(default_factory=dict)
    per_style_total: dict[str, int] = field(default_factory=dict)
    rows: list[tuple[str, str, Optional[str], Optional[float], bool, str]] = field(default_factory=list)

    @property
    def no_prediction_count(self) -> int:
        return sum(1 for d in self.dropped if d[2] == "no_prediction")

    def add(self, uid: str, truth: str, predicted: Optional[str], confidence: Optional[float],
            reason: Optional[str] = None) -> bool:
        self.per_style_total[truth] = self.per_style_total.get(truth, 0) + 1
        self.per_style_kept.setdefault(truth, 0)
        keep = reason is None and predicted == truth
        if keep:
            self.kept.append(uid)
            self.per_style_kept[truth] += 1
            reason = "kept"
        else:
            reason = reason or "style_changed"
            self.dropped.append((uid, predicted, reason))
        self.rows.append((uid, truth, predicted, confidence, keep, reason))
        return keep

    def rows_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["utterance_id", "true_label", "predicted_label", "confidence", "kept", "reason"])
        for uid, truth, pred, conf, keep, reason in self.rows:
            w.writerow([uid, truth, pred or "", "" if conf is None else f"{conf:.6f}", int(keep), reason])
        return buf.getvalue()

    def counts_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["style", "total", "kept", "dropped"])
        for style in sorted(self.per_style_total):
            tot, kept = self.per_style_total[style], self.per_style_kept[style]
            w.writerow([style, tot, kept, tot - kept])
        tot = sum(self.per_style_total.values())
        w.writerow(["ALL", tot, len(self.kept), tot - len(self.kept)])
        return buf.getvalue()


def filter_converted(classifier: StyleClassifier,
                     converted: Iterable[tuple[str, np.ndarray, str]]) -> FilterReport:
    report = FilterReport()
    for uid, feats, truth in converted:
        label, conf = predict(classifier, feats)
        report.add(uid, truth, label, conf)
    return report


def filter_predictions(predictions: Mapping[str, tuple[str, Optional[float]]],
                       items: Iterable[tuple[str, str]]) -> FilterReport:
    """Same rule over externally computed labels; ids without a prediction drop as 'no_prediction'."""
    report = FilterReport()
    for uid, truth in items:
        if uid not in predictions:
            report.add(uid, truth, None, None, reason="no_prediction")
            continue
        label, conf = predictions[uid]
        report.add(uid, truth, label, conf)
    return report


def read_predictions_csv(path) -> dict[str, tuple[str, Optional[float]]]:
    out = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            conf = row.get("confidence")
            out[row["utterance_id"]] = (row["predicted_label"], float(conf) if conf not in (None, "") else None)
    return out
