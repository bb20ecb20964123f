"""CSI preprocessing: Hampel filtering, unwrapping, resampling, CSI-Ratio and DFS."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DataError, FormatError, TruncatedError
from .traces import CsiTrace, NUM_CLASSES, _read_bytes, _write_bytes

MAD_SCALE = 1.4826
RATIO_EPS = 1e-8

RATIO_MAGIC = b"CRF1"
DFS_MAGIC = b"DFS1"
# magic | L S antenna_index | label location orientation subject
_RATIO_HEADER = struct.Struct("<4s3I4H")
# magic | F B | frame_rate | label location orientation subject
_DFS_HEADER = struct.Struct("<4s2Id4H")


@dataclass
class CsiRatioFeature:
    """Unwrapped CSI-Ratio phase of one antenna pair, shape ``[L, S]``."""

    phase: np.ndarray
    antenna_index: int
    label: int
    location_id: int = 0
    orientation_id: int = 0
    subject_id: int = 0

    @property
    def data(self) -> np.ndarray:
        return self.phase


@dataclass
class DfsSpectrogram:
    """Doppler magnitude map ``[frames, bins]`` with the zero bin at ``bins // 2``."""

    magnitude: np.ndarray
    frame_rate: float
    label: int
    location_id: int = 0
    orientation_id: int = 0
    subject_id: int = 0

    @property
    def data(self) -> np.ndarray:
        return self.magnitude


def _meta(trace) -> dict:
    return dict(label=int(trace.label), location_id=int(trace.location_id),
                orientation_id=int(trace.orientation_id), subject_id=int(trace.subject_id))


# ----------------------------------------------------------------------------
# 1-D building blocks (all operate along axis 0)


def hampel_filter(series, half_window: int = 3, threshold: float = 3.0) -> np.ndarray:
    """Replace outliers by the local median.

    A sample is an outlier when it deviates from the median of the window
    ``[i - half_window, i + half_window]`` (clipped at the edges) by more than
    ``threshold * 1.4826 * MAD``. Extra axes are filtered independently.
    """
    x = np.asarray(series, dtype=np.float64)
    if x.shape[0] < 1:
        raise ValueError("series must not be empty")
    if half_window < 1:
        raise ValueError("half_window must be >= 1")
    if threshold <= 0:
        raise ValueError("threshold must be > 0")
    pad = [(half_window, half_window)] + [(0, 0)] * (x.ndim - 1)
    padded = np.pad(x, pad, constant_values=np.nan)
    windows = sliding_window_view(padded, 2 * half_window + 1, axis=0)
    med = np.nanmedian(windows, axis=-1)
    mad = np.nanmedian(np.abs(windows - med[..., None]), axis=-1)
    outlier = np.abs(x - med) > threshold * MAD_SCALE * mad
    return np.where(outlier, med, x)


def unwrap_phase(series) -> np.ndarray:
    """Remove 2*pi jumps so consecutive differences lie in ``(-pi, pi]``.

    The first sample is kept and every output differs from its input by an
    integer multiple of 2*pi.
    """
    x = np.asarray(series, dtype=np.float64)
    if x.shape[0] < 1:
        raise ValueError("series must not be empty")
    d = np.diff(x, axis=0)
    turns = np.ceil((d - np.pi) / (2.0 * np.pi))
    k = np.concatenate([np.zeros_like(x[:1]), np.cumsum(turns, axis=0)], axis=0)
    return x - 2.0 * np.pi * k


def resample_uniform(series, target_len: int) -> np.ndarray:
    """Linearly interpolate to ``target_len`` samples at ``i * (T-1) / (L-1)``."""
    x = np.asarray(series)
    if not np.iscomplexobj(x):
        x = x.astype(np.float64)
    T = x.shape[0]
    if T < 2 or target_len < 2:
        raise ValueError(f"need input length >= 2 and target_len >= 2, got {T}, {target_len}")
    pos = np.arange(target_len) * (T - 1) / (target_len - 1)
    lo = np.minimum(np.floor(pos).astype(int), T - 2)
    frac = (pos - lo).reshape((-1,) + (1,) * (x.ndim - 1))
    out = x[lo] + frac * (x[lo + 1] - x[lo])
    out[-1] = x[-1]
    return out


def hann_window(window_len: int) -> np.ndarray:
    """Periodic Hann window."""
    n = np.arange(window_len)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / window_len)


def stft(series, window_len: int = 64, hop: int = 16) -> np.ndarray:
    """Hann-windowed DFT of each frame; returns ``[frames, window_len, ...]``.

    ``frames = 1 + (len - window_len) // hop``. Bins follow FFT order.
    """
    x = np.asarray(series)
    if window_len < 2:
        raise ValueError("window_len must be >= 2")
    if not 1 <= hop <= window_len:
        raise ValueError(f"hop must be in [1, window_len], got {hop}")
    if x.shape[0] < window_len:
        raise DataError(f"series length {x.shape[0]} shorter than window {window_len}")
    # [frames, ..., window_len] -> [frames, window_len, ...]
    frames = sliding_window_view(x, window_len, axis=0)[::hop]
    frames = np.moveaxis(frames, -1, 1)
    w = hann_window(window_len).reshape((1, window_len) + (1,) * (x.ndim - 1))
    return np.fft.fft(frames * w, axis=1)


def frame_count(length: int, window_len: int, hop: int) -> int:
    return 1 + (length - window_len) // hop


# ----------------------------------------------------------------------------
# trace-level features


def _check_ref(trace: CsiTrace, ref_antenna: int) -> int:
    A = trace.samples.shape[2]
    if not 0 <= ref_antenna < A:
        raise DataError(f"ref_antenna {ref_antenna} out of range for A={A}")
    return A


def antenna_ratio(trace: CsiTrace, antenna: int, ref_antenna: int) -> np.ndarray:
    """Complex ratio ``H[:, :, antenna] / H[:, :, ref]`` with the denominator
    magnitude floored at ``RATIO_EPS``."""
    h = trace.samples.astype(np.complex128)
    num = h[:, :, antenna]
    den = h[:, :, ref_antenna]
    mag = np.abs(den)
    small = mag < RATIO_EPS
    if np.any(small):
        unit = np.where(mag > 0, den / np.where(mag > 0, mag, 1.0), 1.0)
        den = np.where(small, RATIO_EPS * unit, den)
    return num / den


def _sanitized_phase(ratio, half_window, threshold) -> np.ndarray:
    return unwrap_phase(hampel_filter(np.angle(ratio), half_window, threshold))


def csi_ratio(
    trace: CsiTrace,
    ref_antenna: int = 0,
    L: int = 256,
    half_window: int = 3,
    threshold: float = 3.0,
) -> list[CsiRatioFeature]:
    """Per non-reference antenna: ratio phase, Hampel, unwrap, resample to ``L``."""
    A = _check_ref(trace, ref_antenna)
    out = []
    for a in range(A):
        if a == ref_antenna:
            continue
        phase = _sanitized_phase(antenna_ratio(trace, a, ref_antenna), half_window, threshold)
        out.append(CsiRatioFeature(resample_uniform(phase, L), a, **_meta(trace)))
    return out


def dfs_spectrogram(
    trace: CsiTrace,
    ref_antenna: int = 0,
    L: int = 256,
    window_len: int = 64,
    hop: int = 16,
    half_window: int = 3,
    threshold: float = 3.0,
) -> DfsSpectrogram:
    """Doppler spectrogram averaged over subcarriers and antenna pairs.

    Works on the sanitized CSI-Ratio series (Hampel-filtered, unwrapped phase
    with the original ratio magnitude), resampled to ``L``; the temporal mean
    is removed before the STFT to drop static paths.
    """
    A = _check_ref(trace, ref_antenna)
    if L < window_len:
        raise DataError(f"resampled length {L} shorter than window {window_len}")
    acc = None
    pairs = 0
    for a in range(A):
        if a == ref_antenna:
            continue
        r = antenna_ratio(trace, a, ref_antenna)
        clean = np.abs(r) * np.exp(1j * _sanitized_phase(r, half_window, threshold))
        clean = resample_uniform(clean, L)
        clean = clean - clean.mean(axis=0, keepdims=True)
        spec = np.abs(np.fft.fftshift(stft(clean, window_len, hop), axes=1))
        total = spec.sum(axis=2)
        acc = total if acc is None else acc + total
        pairs += 1
    S = trace.samples.shape[1]
    magnitude = acc / (S * pairs)
    T = trace.samples.shape[0]
    resampled_rate = trace.sample_rate * (L - 1) / (T - 1)
    return DfsSpectrogram(magnitude, resampled_rate / hop, **_meta(trace))


def doppler_frequencies(window_len: int, frame_rate: float, hop: int) -> np.ndarray:
    """Bin centre frequencies (Hz) of a zero-centred DFS map."""
    return np.fft.fftshift(np.fft.fftfreq(window_len, d=1.0 / (frame_rate * hop)))


# ----------------------------------------------------------------------------
# feature files


def _check_label(label):
    if label >= NUM_CLASSES:
        raise DataError(f"label {label} >= {NUM_CLASSES}")


def encode_feature(feature: CsiRatioFeature | DfsSpectrogram) -> bytes:
    """Serialize a feature as CRF1 or DFS1; values are stored as float32."""
    data = np.asarray(feature.data)
    if data.ndim != 2 or not np.all(np.isfinite(data)):
        raise DataError("feature data must be a finite 2-D array")
    meta = (int(feature.label), int(feature.location_id),
            int(feature.orientation_id), int(feature.subject_id))
    if isinstance(feature, CsiRatioFeature):
        header = _RATIO_HEADER.pack(RATIO_MAGIC, data.shape[0], data.shape[1],
                                    int(feature.antenna_index), *meta)
    elif isinstance(feature, DfsSpectrogram):
        header = _DFS_HEADER.pack(DFS_MAGIC, data.shape[0], data.shape[1],
                                  float(feature.frame_rate), *meta)
    else:
        raise TypeError(f"cannot encode {type(feature).__name__}")
    return header + np.ascontiguousarray(data, dtype="<f4").tobytes()


def decode_feature(buf: bytes) -> CsiRatioFeature | DfsSpectrogram:
    magic = buf[:4]
    if magic == RATIO_MAGIC:
        hdr = _RATIO_HEADER
    elif magic == DFS_MAGIC:
        hdr = _DFS_HEADER
    else:
        raise FormatError(f"bad feature magic {magic!r}")
    if len(buf) < hdr.size:
        raise TruncatedError("feature header truncated")
    fields = hdr.unpack_from(buf)
    rows, cols = fields[1], fields[2]
    need = hdr.size + 4 * rows * cols
    if len(buf) != need:
        kind = TruncatedError if len(buf) < need else FormatError
        raise kind(f"feature payload size mismatch: need {need} bytes, got {len(buf)}")
    data = np.frombuffer(buf, dtype="<f4", offset=hdr.size).reshape(rows, cols).astype(np.float64)
    label, loc, ori, subj = fields[4:]
    _check_label(label)
    if magic == RATIO_MAGIC:
        return CsiRatioFeature(data, fields[3], label, loc, ori, subj)
    return DfsSpectrogram(data, fields[3], label, loc, ori, subj)


def write_feature(feature, destination) -> int:
    return _write_bytes(encode_feature(feature), destination)


def read_feature(source):
    return decode_feature(_read_bytes(source))
