"""Inference, per-antenna probability fusion and accuracy reports."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import DataError, NumericError
from .model import ModelState, forward
from .preprocess import CsiRatioFeature, DfsSpectrogram
from .traces import CLASS_NAMES, NUM_CLASSES, DatasetSplit

MODALITIES = ("csi_ratio", "dfs")


def softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise NumericError("non-finite logits")
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def model_input(feature) -> np.ndarray:
    """Feature matrix ``[time, channels]`` as fed to the encoder.

    CSI-Ratio phases are centred per subcarrier (unwrapping leaves an
    arbitrary multiple of 2*pi on each one) and expressed in units of pi.
    """
    if isinstance(feature, CsiRatioFeature):
        x = np.asarray(feature.phase, dtype=np.float64)
        return (x - x.mean(axis=0, keepdims=True)) / np.pi
    if isinstance(feature, DfsSpectrogram):
        return np.asarray(feature.magnitude, dtype=np.float64)
    return np.asarray(feature, dtype=np.float64)


def _argmax_lowest(p: np.ndarray) -> int:
    # np.argmax returns the first maximum, i.e. the lowest class id on ties
    return int(np.argmax(p))


def fuse_probabilities(probs) -> tuple[int, np.ndarray]:
    """Equal-weight mean of per-antenna distributions ``[A, C]`` and its argmax."""
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 2 or p.shape[0] == 0:
        raise DataError(f"expected a non-empty [antennas, classes] array, got {p.shape}")
    # sort each column so the sum does not depend on antenna order
    fused = np.sort(p, axis=0).sum(axis=0) / p.shape[0]
    return _argmax_lowest(fused), fused


def predict_fused(state: ModelState, features: Sequence) -> tuple[int, np.ndarray]:
    """Average per-antenna class distributions of one trace and take the argmax."""
    if len(features) == 0:
        raise DataError("no features to fuse")
    return fuse_probabilities([softmax(forward(state, model_input(f)).logits)
                               for f in features])


def predict_dfs(state: ModelState, spectrogram) -> tuple[int, np.ndarray]:
    p = softmax(forward(state, model_input(spectrogram)).logits)
    return _argmax_lowest(p), p


def predict_trace(state: ModelState, feats, modality: str) -> tuple[int, np.ndarray]:
    if modality == "csi_ratio":
        return predict_fused(state, feats)
    if modality == "dfs":
        return predict_dfs(state, feats)
    raise ValueError(f"unknown modality {modality!r}")


@dataclass
class EvalReport:
    scenario: str
    confusion: np.ndarray
    config_hash: str = ""

    @property
    def n(self) -> int:
        return int(self.confusion.sum())

    @property
    def accuracy(self) -> float:
        return int(np.trace(self.confusion)) / self.n if self.n else 0.0

    @property
    def per_class_accuracy(self) -> list[float | None]:
        rows = self.confusion.sum(axis=1)
        return [int(self.confusion[c, c]) / int(rows[c]) if rows[c] else None
                for c in range(len(rows))]

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "accuracy": self.accuracy,
            "n": self.n,
            "per_class_accuracy": self.per_class_accuracy,
            "confusion": self.confusion.astype(int).tolist(),
            "config_hash": self.config_hash,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def confusion_csv(self) -> str:
        lines = [",".join(CLASS_NAMES)]
        lines += [",".join(str(int(v)) for v in row) for row in self.confusion]
        return "\n".join(lines) + "\n"


def confusion_matrix(y_true, y_pred, num_classes: int = NUM_CLASSES) -> np.ndarray:
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    for t, p in zip(y_true, y_pred):
        cm[int(t), int(p)] += 1
    return cm


def evaluate(state: ModelState, split: DatasetSplit, features: Mapping[int, object],
             modality: str, labels: Mapping[int, int] | None = None,
             config_hash: str = "") -> EvalReport:
    """One prediction per test trace, aggregated in id order.

    ``features`` maps trace id to its per-antenna feature list (csi_ratio) or
    its spectrogram (dfs). Labels come from the features unless given.
    """
    y_true, y_pred = [], []
    for tid in sorted(split.test_ids):
        if tid not in features:
            raise DataError(f"no features for test trace {tid}")
        feats = features[tid]
        pred, _ = predict_trace(state, feats, modality)
        if labels is not None:
            label = labels[tid]
        else:
            label = feats[0].label if modality == "csi_ratio" else feats.label
        y_true.append(label)
        y_pred.append(pred)
    return EvalReport(split.scenario, confusion_matrix(y_true, y_pred, state.num_classes),
                      config_hash)
