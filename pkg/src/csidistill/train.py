"""Mini-batch training of the student encoder under the distillation objective."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields, replace
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from . import losses
from .errors import DataError, NumericError
from .evaluate import evaluate, model_input, softmax
from .model import ModelState, backward, forward, init_params
from .preprocess import CsiRatioFeature, DfsSpectrogram
from .teacher import TeacherBank, teacher_logits
from .traces import DatasetSplit

log = logging.getLogger(__name__)

OPTIMIZERS = ("adam", "sgd_momentum")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 16
    optimizer: str = "adam"
    lr0: float = 4e-5
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    tau_lsdm: float = 0.5
    tau_cls: float = 2.0
    lambda_feat: float = 1.0
    lambda_temp: float = 1.0
    lambda_cls: float = 1.0
    lambda_ce: float = 1.0
    use_lsdm: bool = True
    gamma: float = 5.0
    seed: int = 0
    modality: str = "csi_ratio"
    validate: bool = True

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.lr0 <= 0:
            raise ValueError("lr0 must be > 0")
        if min(self.tau_lsdm, self.tau_cls, self.gamma) <= 0:
            raise ValueError("temperatures and gamma must be > 0")
        if min(self.lambda_feat, self.lambda_temp, self.lambda_cls, self.lambda_ce) < 0:
            raise ValueError("loss weights must be >= 0")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")
        if self.modality not in ("csi_ratio", "dfs"):
            raise ValueError(f"unknown modality {self.modality!r}")

    def baseline(self) -> "TrainConfig":
        """Same run with every distillation term switched off (CE only)."""
        return replace(self, use_lsdm=False, lambda_feat=0.0, lambda_temp=0.0, lambda_cls=0.0)


TRAIN_KEYS = tuple(f.name for f in fields(TrainConfig))


# ----------------------------------------------------------------------------
# schedule and optimizers


def cosine_lr(lr0: float, epoch: int, total_epochs: int) -> float:
    if not 0 <= epoch < total_epochs:
        raise ValueError(f"epoch {epoch} outside [0, {total_epochs})")
    return lr0 * 0.5 * (1.0 + math.cos(math.pi * epoch / total_epochs))


@dataclass
class OptimizerState:
    first: dict[str, np.ndarray] = field(default_factory=dict)
    second: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def _check_finite(grads: Mapping[str, np.ndarray]) -> None:
    for k, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient in {k}")


def sgd_momentum_step(opt: OptimizerState, params, grads, lr: float, momentum: float = 0.9):
    """``v = momentum * v + g``; ``p -= lr * v`` (in place)."""
    _check_finite(grads)
    for k, p in params.items():
        v = opt.first.get(k)
        if v is None:
            v = opt.first[k] = np.zeros_like(p)
        v *= momentum
        v += grads[k]
        p -= lr * v
    opt.step += 1


def adam_step(opt: OptimizerState, params, grads, lr: float, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8):
    _check_finite(grads)
    opt.step += 1
    c1 = 1.0 - beta1 ** opt.step
    c2 = 1.0 - beta2 ** opt.step
    for k, p in params.items():
        g = grads[k]
        m = opt.first.get(k)
        if m is None:
            m = opt.first[k] = np.zeros_like(p)
            opt.second[k] = np.zeros_like(p)
        v = opt.second[k]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


# ----------------------------------------------------------------------------
# samples


class Sample(NamedTuple):
    data: np.ndarray
    label: int
    trace_id: int


def expand_antenna_samples(features: Mapping[int, object], ids: Sequence[int]) -> list[Sample]:
    """One sample per (trace, antenna) for CSI-Ratio; one per trace for DFS.

    Samples are ordered by trace id, then antenna index.
    """
    out = []
    for tid in sorted(ids):
        feats = features[tid]
        if isinstance(feats, DfsSpectrogram):
            out.append(Sample(model_input(feats), int(feats.label), tid))
            continue
        for f in sorted(feats, key=lambda f: f.antenna_index):
            if not isinstance(f, CsiRatioFeature):
                raise DataError(f"unexpected feature type {type(f).__name__}")
            out.append(Sample(model_input(f), int(f.label), tid))
    return out


# ----------------------------------------------------------------------------
# training loop


@dataclass
class TrainingLog:
    steps: list[tuple[int, int, losses.LossReport]] = field(default_factory=list)
    val_accuracy: list[tuple[int, float]] = field(default_factory=list)

    def loss_csv(self) -> str:
        rows = [losses.LOG_HEADER] + [r.csv_row(e, s) for e, s, r in self.steps]
        return "\n".join(rows) + "\n"

    def val_csv(self) -> str:
        rows = ["epoch,val_accuracy"] + [f"{e},{a!r}" for e, a in self.val_accuracy]
        return "\n".join(rows) + "\n"

    def epoch_mean_total(self, epoch: int) -> float:
        vals = [r.total for e, _, r in self.steps if e == epoch]
        return float(np.mean(vals))


def batch_objective(state: ModelState, batch: Sequence[Sample], bank: TeacherBank,
                    config: TrainConfig) -> losses.LossReport:
    """Forward a batch, evaluate every loss term and accumulate gradients."""
    B = len(batch)
    records = [forward(state, s.data) for s in batch]
    y = np.array([s.label for s in batch])
    z = np.stack([r.pooled_embedding for r in records])
    logits = np.stack([r.logits for r in records])
    z_lm = bank.embeddings[y]
    p_lm = np.stack([teacher_logits(bank, c, config.gamma) for c in y])

    if config.use_lsdm:
        lsdm, g_lsdm = losses.lsdm_loss(z, z_lm, config.tau_lsdm)
    else:
        lsdm, g_lsdm = 0.0, np.zeros_like(z)
    feat, g_feat = losses.feat_loss(z, z_lm)
    temps = [losses.temp_loss(r.segment_embeddings) for r in records]
    temp = float(np.mean([t[0] for t in temps]))
    cls, g_cls = losses.cls_loss(logits, p_lm, config.tau_cls)
    ce, g_ce = losses.ce_loss(logits, y)
    report = losses.combine(lsdm, feat, temp, cls, ce, config.lambda_feat,
                            config.lambda_temp, config.lambda_cls, config.lambda_ce)

    g_pooled = g_lsdm + config.lambda_feat * g_feat
    g_logits = config.lambda_cls * g_cls + config.lambda_ce * g_ce
    for i, rec in enumerate(records):
        g_seg = (config.lambda_temp / B) * temps[i][1]
        backward(state, rec, g_seg, g_pooled[i], g_logits[i])
    return report


def train(config: TrainConfig, split: DatasetSplit, bank: TeacherBank,
          features: Mapping[int, object], state: ModelState | None = None
          ) -> tuple[ModelState, TrainingLog]:
    """Train from scratch (or from ``state``) and return the model and its log.

    ``features`` maps trace id to per-antenna CSI-Ratio features or to a DFS
    spectrogram. The split's test ids are evaluated read-only after every
    epoch when ``config.validate`` is set.
    """
    samples = expand_antenna_samples(features, split.train_ids)
    if not samples:
        raise DataError("no training samples")
    labels = {s.label for s in samples}
    if max(labels) >= bank.num_classes:
        raise DataError(f"class {max(labels)} missing from the teacher bank")
    if state is None:
        state = init_params(config.seed, samples[0].data.shape[1], bank.dim, bank.num_classes)
    if state.dim != bank.dim:
        raise DataError(f"embedding dim {state.dim} != teacher dim {bank.dim}")

    rng = np.random.default_rng(config.seed)
    opt = OptimizerState()
    history = TrainingLog()
    step = 0
    for epoch in range(config.epochs):
        lr = cosine_lr(config.lr0, epoch, config.epochs)
        order = rng.permutation(len(samples))
        for start in range(0, len(order), config.batch_size):
            batch = [samples[i] for i in order[start:start + config.batch_size]]
            state.zero_grad()
            report = batch_objective(state, batch, bank, config)
            if not math.isfinite(report.total):
                raise NumericError(f"non-finite loss at epoch {epoch}, step {step}")
            if config.optimizer == "adam":
                adam_step(opt, state.params, state.grads, lr,
                          config.beta1, config.beta2, config.adam_eps)
            else:
                sgd_momentum_step(opt, state.params, state.grads, lr, config.momentum)
            history.steps.append((epoch, step, report))
            step += 1
        if config.validate:
            acc = evaluate(state, split, features, config.modality).accuracy
            history.val_accuracy.append((epoch, acc))
            log.debug("epoch %d lr %.3g val_acc %.4f", epoch, lr, acc)
    state.zero_grad()
    return state, history


def train_accuracy(state: ModelState, samples: Sequence[Sample]) -> float:
    hits = sum(int(np.argmax(softmax(forward(state, s.data).logits)) == s.label)
               for s in samples)
    return hits / len(samples)
