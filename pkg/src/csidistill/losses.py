"""Training objectives, each returning ``(value, gradient)``.

All batch losses use mean reduction. Teacher-side inputs are treated as
constants: no gradient is returned for them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, NumericError

LOG_HEADER = "epoch,step,lsdm,feat,temp,cls,ce,total"


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _as_batch(x, name) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return x[None, :], True
    if x.ndim != 2:
        raise DataError(f"{name} must be a vector or a batch of vectors")
    return x, False


def lsdm_loss(z_csi, z_lm, tau: float = 0.5) -> tuple[float, np.ndarray]:
    """Contrastive (NT-Xent style) distillation toward matched teacher anchors.

    Row ``i`` of ``z_lm`` is the positive for ``z_csi[i]``; every row of
    ``z_lm`` (positive included) appears in the denominator.
    """
    z = np.asarray(z_csi, dtype=np.float64)
    t = np.asarray(z_lm, dtype=np.float64)
    if z.ndim != 2 or z.shape != t.shape:
        raise DataError(f"expected matching [N, d] batches, got {z.shape} and {t.shape}")
    if tau <= 0:
        raise ValueError("tau must be > 0")
    zn = np.linalg.norm(z, axis=1, keepdims=True)
    tn = np.linalg.norm(t, axis=1, keepdims=True)
    if np.any(zn == 0) or np.any(tn == 0):
        raise NumericError("zero-norm embedding: cosine similarity undefined")
    u = z / zn
    v = t / tn
    logits = (u @ v.T) / tau
    N = z.shape[0]
    logp = log_softmax(logits)
    loss = -float(np.mean(np.diag(logp)))
    dlogits = (np.exp(logp) - np.eye(N)) / N
    du = dlogits @ v / tau
    dz = (du - u * np.sum(u * du, axis=1, keepdims=True)) / zn
    return loss, dz


def feat_loss(z_csi, z_lm) -> tuple[float, np.ndarray]:
    """Squared distance between the batch means of student and teacher embeddings."""
    z = np.asarray(z_csi, dtype=np.float64)
    t = np.asarray(z_lm, dtype=np.float64)
    if z.ndim != 2 or z.shape != t.shape:
        raise DataError(f"expected matching [B, d] batches, got {z.shape} and {t.shape}")
    delta = z.mean(axis=0) - t.mean(axis=0)
    grad = np.broadcast_to(2.0 * delta / z.shape[0], z.shape).copy()
    return float(delta @ delta), grad


def temp_loss(segments) -> tuple[float, np.ndarray]:
    """Mean squared step between consecutive segment embeddings ``[T', d]``."""
    s = np.asarray(segments, dtype=np.float64)
    if s.ndim != 2 or s.shape[0] < 2:
        raise DataError(f"need at least two segments, got shape {s.shape}")
    diff = s[1:] - s[:-1]
    n = s.shape[0] - 1
    grad = np.zeros_like(s)
    grad[:-1] -= 2.0 * diff / n
    grad[1:] += 2.0 * diff / n
    return float(np.sum(diff * diff) / n), grad


def cls_loss(student_logits, teacher_logits, tau: float = 2.0) -> tuple[float, np.ndarray]:
    """``KL(softmax(student/tau) || softmax(teacher/tau))``, batch-averaged."""
    a, single = _as_batch(student_logits, "student_logits")
    b, _ = _as_batch(teacher_logits, "teacher_logits")
    if a.shape != b.shape:
        raise DataError(f"logit shapes differ: {a.shape} vs {b.shape}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise NumericError("non-finite logits")
    if tau <= 0:
        raise ValueError("tau must be > 0")
    logp = log_softmax(a / tau)
    logq = log_softmax(b / tau)
    p = np.exp(logp)
    kl = np.sum(p * (logp - logq), axis=1)
    grad = p * ((logp - logq) - kl[:, None]) / tau / a.shape[0]
    # tiny negative values are rounding noise; KL is non-negative
    value = max(float(np.mean(kl)), 0.0)
    return value, grad[0] if single else grad


def ce_loss(student_logits, true_class) -> tuple[float, np.ndarray]:
    """Cross-entropy against integer labels, batch-averaged."""
    a, single = _as_batch(student_logits, "student_logits")
    y = np.atleast_1d(np.asarray(true_class))
    C = a.shape[1]
    if y.shape != (a.shape[0],):
        raise DataError("one label per logit row required")
    if np.any(y < 0) or np.any(y >= C):
        raise DataError(f"class out of range 0..{C - 1}")
    logp = log_softmax(a)
    rows = np.arange(a.shape[0])
    loss = -float(np.mean(logp[rows, y]))
    grad = np.exp(logp)
    grad[rows, y] -= 1.0
    grad /= a.shape[0]
    return loss, grad[0] if single else grad


@dataclass(frozen=True)
class LossReport:
    lsdm: float
    feat: float
    temp: float
    cls: float
    ce: float
    lambda_feat: float
    lambda_temp: float
    lambda_cls: float
    lambda_ce: float
    total: float

    def csv_row(self, epoch: int, step: int) -> str:
        vals = (self.lsdm, self.feat, self.temp, self.cls, self.ce, self.total)
        return ",".join([str(epoch), str(step)] + [repr(float(v)) for v in vals])


def combine(lsdm: float, feat: float, temp: float, cls: float, ce: float,
            lambda_feat: float = 1.0, lambda_temp: float = 1.0,
            lambda_cls: float = 1.0, lambda_ce: float = 1.0) -> LossReport:
    """Total objective ``lsdm + l1*feat + l2*temp + l3*cls + l_ce*ce``."""
    lams = (lambda_feat, lambda_temp, lambda_cls, lambda_ce)
    if any(lam < 0 for lam in lams):
        raise ValueError(f"loss weights must be >= 0, got {lams}")
    total = lsdm + lambda_feat * feat + lambda_temp * temp + lambda_cls * cls + lambda_ce * ce
    return LossReport(lsdm, feat, temp, cls, ce, *lams, total)
