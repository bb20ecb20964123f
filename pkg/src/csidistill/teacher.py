"""Frozen per-class semantic anchors and the teacher logits derived from them."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, FormatError

DUPLICATE_COS = 0.95

DEFAULT_PROMPTS = (
    "a person performing a push and pull gesture",
    "a person performing a sweep gesture",
    "a person performing a clap gesture",
    "a person performing a slide gesture",
    "a person drawing a circle",
    "a person drawing a zigzag",
)


def unit_rows(x: np.ndarray) -> np.ndarray:
    """L2-normalize rows, repeating until normalization is a no-op.

    Iterating to the fixed point makes the operation idempotent, so a bank
    that was written after normalization loads back bit-identical.
    """
    x = np.array(x, dtype=np.float64)
    for _ in range(8):
        norms = np.linalg.norm(x, axis=1, keepdims=True)
        y = x / norms
        if np.array_equal(x, y):
            break
        x = y
    return x


def _max_offdiag_cos(e: np.ndarray) -> float:
    g = e @ e.T
    np.fill_diagonal(g, 0.0)
    return float(np.max(np.abs(g))) if len(e) > 1 else 0.0


@dataclass(frozen=True, eq=False)
class TeacherBank:
    """Unit-norm class embeddings, one row per class id."""

    embeddings: np.ndarray
    prompts: tuple[str, ...] = field(default=())

    def __post_init__(self):
        e = np.asarray(self.embeddings, dtype=np.float64)
        if e.ndim != 2 or e.shape[0] < 1:
            raise DataError("embeddings must be a non-empty [C, d] matrix")
        if not np.all(np.isfinite(e)):
            raise DataError("embeddings contain non-finite values")
        if np.any(np.linalg.norm(e, axis=1) == 0):
            raise DataError("zero-norm embedding")
        e = unit_rows(e)
        if _max_offdiag_cos(e) >= DUPLICATE_COS:
            raise DataError(f"near-duplicate anchors (cosine >= {DUPLICATE_COS})")
        e.setflags(write=False)
        object.__setattr__(self, "embeddings", e)

    @property
    def num_classes(self) -> int:
        return self.embeddings.shape[0]

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]

    def __getitem__(self, c: int) -> np.ndarray:
        return self.embeddings[c]


def synth_teacher_bank(C: int = 6, d: int = 64, seed: int = 0,
                       max_pairwise_cos: float = 0.3) -> TeacherBank:
    """Draw seeded Gaussian anchors with all pairwise ``|cos| <= max_pairwise_cos``.

    A violating row is redrawn a few times, then projected onto the
    orthogonal complement of the rows before it, which always succeeds when
    ``d >= C``.
    """
    if d < C:
        raise ValueError(f"need d >= C, got d={d}, C={C}")
    if not 0.0 <= max_pairwise_cos < DUPLICATE_COS:
        raise ValueError(f"max_pairwise_cos must be in [0, {DUPLICATE_COS})")
    rng = np.random.default_rng(seed)
    tol = max_pairwise_cos + 1e-12
    rows: list[np.ndarray] = []
    for _ in range(C):
        for _attempt in range(20):
            v = rng.standard_normal(d)
            v /= np.linalg.norm(v)
            if all(abs(v @ r) <= tol for r in rows):
                break
        else:
            q, _ = np.linalg.qr(np.stack(rows).T)
            for _pass in range(2):
                v = v - q @ (q.T @ v)
            v /= np.linalg.norm(v)
        rows.append(v)
    e = unit_rows(np.stack(rows))
    if _max_offdiag_cos(e) > tol:
        raise ValueError("could not satisfy the pairwise cosine bound")
    return TeacherBank(e, DEFAULT_PROMPTS[:C] if C == len(DEFAULT_PROMPTS) else ())


def teacher_logits(bank: TeacherBank, c: int, scale: float = 5.0) -> np.ndarray:
    """``scale * cos(anchor_c, anchor_j)`` for every class j."""
    if not 0 <= c < bank.num_classes:
        raise DataError(f"class {c} not in bank of {bank.num_classes}")
    if scale <= 0:
        raise ValueError("scale must be > 0")
    logits = scale * (bank.embeddings @ bank.embeddings[c])
    logits[c] = scale
    return logits


# ----------------------------------------------------------------------------
# text bank files


def format_teacher_bank(bank: TeacherBank) -> str:
    lines = []
    for c, p in enumerate(bank.prompts):
        lines.append(f"# class {c}: {p}")
    lines.append(f"{bank.num_classes} {bank.dim}")
    for c, row in enumerate(bank.embeddings):
        lines.append(" ".join([str(c)] + [repr(float(v)) for v in row]))
    return "\n".join(lines) + "\n"


def write_teacher_bank(bank: TeacherBank, destination) -> None:
    Path(destination).write_text(format_teacher_bank(bank), encoding="utf-8")


def parse_teacher_bank(text: str) -> TeacherBank:
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise FormatError("empty teacher bank")
    try:
        C, d = (int(t) for t in lines[0].split())
    except ValueError:
        raise FormatError(f"bad header line {lines[0]!r}; expected 'C d'") from None
    rows: dict[int, np.ndarray] = {}
    for ln in lines[1:]:
        toks = ln.split()
        try:
            cid = int(toks[0])
            vals = np.array([float(t) for t in toks[1:]])
        except (ValueError, IndexError):
            raise FormatError(f"unparseable row {ln[:40]!r}") from None
        if vals.size != d:
            raise DataError(f"class {cid}: expected {d} values, got {vals.size}")
        if cid in rows:
            raise DataError(f"class {cid} listed twice")
        if not 0 <= cid < C:
            raise DataError(f"class id {cid} outside 0..{C - 1}")
        rows[cid] = vals
    missing = sorted(set(range(C)) - set(rows))
    if missing:
        raise DataError(f"missing classes {missing}")
    return TeacherBank(np.stack([rows[c] for c in range(C)]))


def load_teacher_bank(source: str | os.PathLike) -> TeacherBank:
    return parse_teacher_bank(Path(source).read_text(encoding="utf-8"))
