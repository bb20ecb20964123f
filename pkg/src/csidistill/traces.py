"""CSI trace data model, binary trace files, synthetic gestures and split protocols."""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Sequence, Union

import numpy as np

from .errors import DataError, FormatError, TruncatedError

NUM_CLASSES = 6
CLASS_NAMES = ("PushPull", "Sweep", "Clap", "Slide", "DrawO", "DrawZigZag")

TRACE_MAGIC = b"CSI1"
# magic | T S A | sample_rate | label location orientation subject
_TRACE_HEADER = struct.Struct("<4s3Id4H")
TRACE_HEADER_SIZE = _TRACE_HEADER.size

SCENARIOS = ("in-domain", "cross-location", "cross-orientation")

# (start Hz, end Hz, amplitude rad) of each class's phase chirp
CLASS_CHIRPS = (
    (0.6, 0.6, 3.0),
    (0.8, 2.4, 2.0),
    (2.4, 0.6, 2.5),
    (1.4, 1.4, 1.2),
    (0.4, 1.8, 3.5),
    (3.0, 3.0, 0.8),
)

PathLike = Union[str, os.PathLike]


@dataclass
class CsiTrace:
    """Complex CSI samples indexed ``[time, subcarrier, antenna]`` plus domain tags."""

    samples: np.ndarray
    sample_rate: float
    label: int
    location_id: int = 0
    orientation_id: int = 0
    subject_id: int = 0

    def __post_init__(self):
        self.samples = np.asarray(self.samples)
        if not np.iscomplexobj(self.samples):
            self.samples = self.samples.astype(np.complex128)
        validate_trace(self)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.samples.shape


def validate_trace(trace: CsiTrace) -> None:
    x = trace.samples
    if x.ndim != 3:
        raise DataError(f"samples must be [time, subcarrier, antenna], got ndim={x.ndim}")
    T, S, A = x.shape
    if T < 2 or S < 1 or A < 2:
        raise DataError(f"need T>=2, S>=1, A>=2; got {x.shape}")
    if not np.all(np.isfinite(x.real)) or not np.all(np.isfinite(x.imag)):
        raise DataError("trace contains non-finite samples")
    if not (np.isfinite(trace.sample_rate) and trace.sample_rate > 0):
        raise DataError(f"sample_rate must be positive, got {trace.sample_rate}")
    if not 0 <= int(trace.label) < NUM_CLASSES:
        raise DataError(f"label must be in 0..{NUM_CLASSES - 1}, got {trace.label}")
    for name in ("location_id", "orientation_id", "subject_id"):
        v = int(getattr(trace, name))
        if not 0 <= v <= 0xFFFF:
            raise DataError(f"{name} out of u16 range: {v}")


# ----------------------------------------------------------------------------
# binary trace files


def encode_trace(trace: CsiTrace) -> bytes:
    validate_trace(trace)
    T, S, A = trace.samples.shape
    header = _TRACE_HEADER.pack(
        TRACE_MAGIC, T, S, A, float(trace.sample_rate),
        int(trace.label), int(trace.location_id),
        int(trace.orientation_id), int(trace.subject_id),
    )
    payload = np.ascontiguousarray(trace.samples, dtype="<c8").tobytes()
    return header + payload


def decode_trace(buf: bytes) -> CsiTrace:
    if len(buf) < TRACE_HEADER_SIZE:
        raise TruncatedError(f"trace header needs {TRACE_HEADER_SIZE} bytes, got {len(buf)}")
    magic, T, S, A, rate, label, loc, ori, subj = _TRACE_HEADER.unpack_from(buf)
    if magic != TRACE_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {TRACE_MAGIC!r}")
    n = T * S * A
    need = TRACE_HEADER_SIZE + 8 * n
    if len(buf) < need:
        raise TruncatedError(f"payload truncated: need {need} bytes, got {len(buf)}")
    if len(buf) > need:
        raise FormatError(f"{len(buf) - need} trailing bytes after payload")
    samples = np.frombuffer(buf, dtype="<c8", count=n, offset=TRACE_HEADER_SIZE)
    samples = samples.reshape(T, S, A).astype(np.complex64)
    if label >= NUM_CLASSES:
        raise DataError(f"label {label} >= {NUM_CLASSES}")
    return CsiTrace(samples, rate, label, loc, ori, subj)


def _write_bytes(data: bytes, destination) -> int:
    if hasattr(destination, "write"):
        destination.write(data)
    else:
        with open(destination, "wb") as fh:
            fh.write(data)
    return len(data)


def _read_bytes(source) -> bytes:
    if hasattr(source, "read"):
        return source.read()
    with open(source, "rb") as fh:
        return fh.read()


def write_trace(trace: CsiTrace, destination: PathLike | BinaryIO) -> int:
    """Write ``trace`` in the CSI1 layout and return the number of bytes written.

    Samples are stored as little-endian complex64, so values that are not
    exactly representable in float32 are rounded.
    """
    return _write_bytes(encode_trace(trace), destination)


def read_trace(source: PathLike | BinaryIO) -> CsiTrace:
    return decode_trace(_read_bytes(source))


def write_manifest(paths: Sequence[PathLike], destination: PathLike) -> None:
    text = "".join(f"{os.fspath(p)}\n" for p in paths)
    Path(destination).write_text(text, encoding="utf-8")


def read_manifest(source: PathLike) -> list[Path]:
    """Return the file paths listed in a manifest, resolved against its folder."""
    source = Path(source)
    out = []
    for line in source.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line:
            continue
        p = Path(line)
        out.append(p if p.is_absolute() else source.parent / p)
    return out


# ----------------------------------------------------------------------------
# synthetic gestures


def orientation_factors(orientations: int) -> np.ndarray:
    """Doppler amplitude scaling per orientation; ``{0.6, ..., 1.4}`` for five."""
    if orientations == 1:
        return np.array([1.0])
    return np.linspace(0.6, 1.4, orientations)


def chirp_phase(label: int, t: np.ndarray, duration: float) -> np.ndarray:
    """Phase pattern (radians) of class ``label`` at times ``t`` (seconds)."""
    f0, f1, amp = CLASS_CHIRPS[label]
    sweep = (f1 - f0) / (2.0 * duration)
    return amp * np.sin(2.0 * np.pi * (f0 * t + sweep * t * t))


def synth_dataset(
    n_per_class_per_domain: int,
    locations: int,
    orientations: int,
    T: int = 256,
    S: int = 30,
    A: int = 3,
    noise_sigma: float = 0.05,
    seed: int = 0,
    sample_rate: float = 100.0,
    jitter: float = 0.08,
) -> list[CsiTrace]:
    """Generate a seeded multi-domain gesture dataset.

    Each trace is a static multipath term fixed per location plus one moving
    reflector whose phase follows the class chirp, scaled by the orientation
    factor and shifted by a per-trace timing jitter (``jitter`` is the maximum
    shift as a fraction of the duration). I.i.d. Gaussian noise of std
    ``noise_sigma`` is added to the real and imaginary parts.

    Traces are ordered by (label, location, orientation, repetition) and
    their samples are rounded to complex64 so they survive file round trips.
    """
    for name, v in (("n_per_class_per_domain", n_per_class_per_domain),
                    ("locations", locations), ("orientations", orientations)):
        if v < 1:
            raise ValueError(f"{name} must be positive, got {v}")
    if T < 2 or S < 1 or A < 2:
        raise ValueError(f"need T>=2, S>=1, A>=2; got {(T, S, A)}")
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be >= 0")

    rng = np.random.default_rng(seed)
    sub = np.arange(S) / max(S - 1, 1)

    def cn(shape):
        return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)

    room = cn((S, A))
    room_phase = rng.uniform(0.0, 2.0 * np.pi, size=A)
    static, offsets, reflector_amp = [], [], []
    for _ in range(locations):
        static.append(room + 0.3 * cn((S, A)))
        # reflector path: per-antenna phase plus a delay slope across the band
        phase = room_phase + rng.uniform(-0.6, 0.6, size=A)
        slope = rng.uniform(0.8, 1.5)
        offsets.append(phase[None, :] + slope * sub[:, None])
        reflector_amp.append(rng.uniform(0.55, 0.7))
    # projection of the reflector motion onto each antenna
    antenna_gain = 1.0 + 0.35 * np.arange(A)
    subcarrier_gain = 1.0 + 0.1 * sub
    factors = orientation_factors(orientations)

    duration = T / sample_rate
    t = np.arange(T) / sample_rate
    traces = []
    for label in range(NUM_CLASSES):
        for loc in range(locations):
            for ori in range(orientations):
                for rep in range(n_per_class_per_domain):
                    shift = rng.uniform(-jitter, jitter) * duration
                    phi = factors[ori] * chirp_phase(label, t - shift, duration)
                    psi = (phi[:, None, None] * subcarrier_gain[None, :, None]
                           * antenna_gain[None, None, :] + offsets[loc][None])
                    h = static[loc][None] + reflector_amp[loc] * np.exp(1j * psi)
                    if noise_sigma > 0:
                        h = h + noise_sigma * (rng.standard_normal(h.shape)
                                               + 1j * rng.standard_normal(h.shape))
                    traces.append(CsiTrace(
                        h.astype(np.complex64), sample_rate, label,
                        location_id=loc, orientation_id=ori, subject_id=rep,
                    ))
    return traces


# ----------------------------------------------------------------------------
# evaluation splits


@dataclass(frozen=True)
class DatasetSplit:
    scenario: str
    train_ids: tuple[int, ...]
    test_ids: tuple[int, ...]
    holdout_attr_value: int | None = field(default=None)


def make_splits(
    traces: Sequence[CsiTrace],
    scenario: str,
    holdout_attr_value: int | None = None,
    train_fraction: float = 0.8,
    seed: int = 0,
) -> DatasetSplit:
    """Split trace indices into train and test sets.

    ``in-domain`` draws a class-stratified random split at ``train_fraction``.
    ``cross-location`` / ``cross-orientation`` train on the traces whose
    domain attribute equals ``holdout_attr_value`` and test on all others.
    """
    if not traces:
        raise DataError("no traces to split")
    labels = np.array([t.label for t in traces])
    classes = np.unique(labels)

    if scenario == "in-domain":
        if not 0.0 < train_fraction < 1.0:
            raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
        rng = np.random.default_rng(seed)
        n_total = int(round(train_fraction * len(traces)))
        members = [np.flatnonzero(labels == c) for c in classes]
        exact = np.array([train_fraction * len(m) for m in members])
        quota = np.floor(exact).astype(int)
        # largest remainder, ties to the lower class id
        order = sorted(range(len(members)), key=lambda i: (-(exact[i] - quota[i]), i))
        for i in order[: max(n_total - quota.sum(), 0)]:
            quota[i] += 1
        train, test = [], []
        for m, q in zip(members, quota):
            perm = rng.permutation(m)
            train.extend(perm[:q].tolist())
            test.extend(perm[q:].tolist())
        holdout_attr_value = None
    elif scenario in ("cross-location", "cross-orientation"):
        attr = "location_id" if scenario == "cross-location" else "orientation_id"
        values = np.array([getattr(t, attr) for t in traces])
        if holdout_attr_value is None:
            raise ValueError(f"{scenario} needs holdout_attr_value")
        if not np.any(values == holdout_attr_value):
            raise DataError(f"{attr}={holdout_attr_value} not present in data")
        train = np.flatnonzero(values == holdout_attr_value).tolist()
        test = np.flatnonzero(values != holdout_attr_value).tolist()
    else:
        raise ValueError(f"unknown scenario {scenario!r}; expected one of {SCENARIOS}")

    if not test:
        raise DataError(f"{scenario} split has an empty test set")
    missing = set(classes.tolist()) - set(labels[train].tolist())
    if missing:
        raise DataError(f"classes {sorted(missing)} absent from the train set")
    return DatasetSplit(scenario, tuple(sorted(train)), tuple(sorted(test)), holdout_attr_value)

