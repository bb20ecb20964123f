"""
From raw CSI to model features
==============================

Generate one synthetic gesture trace, then follow it through the two
feature pipelines: the per-antenna CSI-Ratio phase and the Doppler
spectrogram.
"""

import numpy as np

from csidistill.preprocess import (
    antenna_ratio, csi_ratio, dfs_spectrogram, doppler_frequencies, hampel_filter, unwrap_phase,
)
from csidistill.traces import CLASS_NAMES, synth_dataset

# one trace per class, single location and orientation
traces = synth_dataset(1, 1, 1, T=256, S=30, A=3, noise_sigma=0.05, seed=0)
trace = traces[1]
print("class:", CLASS_NAMES[trace.label], "samples:", trace.samples.shape, trace.samples.dtype)

# the raw phase drifts with per-antenna offsets; the antenna ratio cancels
# what the antennas share and leaves the motion-induced part
raw_phase = np.angle(trace.samples[:, 0, 1])
ratio = antenna_ratio(trace, antenna=1, ref_antenna=0)
print("raw phase range   %.2f rad" % np.ptp(raw_phase))
print("ratio phase range %.2f rad (still wrapped)" % np.ptp(np.angle(ratio[:, 0])))

# Hampel outlier rejection, then unwrapping
wrapped = np.angle(ratio)
filtered = hampel_filter(wrapped, half_window=3, threshold=3.0)
print("points replaced by Hampel:", int(np.sum(filtered != wrapped)))
unwrapped = unwrap_phase(filtered)
print("unwrapped range on subcarrier 0: %.2f rad" % np.ptp(unwrapped[:, 0]))

# the whole chain in one call: one [L, S] feature per non-reference antenna
features = csi_ratio(trace, ref_antenna=0, L=64)
for f in features:
    print("antenna", f.antenna_index, "feature", f.phase.shape)

# Doppler spectrogram: frames x bins, zero Doppler in the middle column
spec = dfs_spectrogram(trace, L=256, window_len=64, hop=8)
freqs = doppler_frequencies(64, spec.frame_rate, 8)
peak = freqs[np.argmax(spec.magnitude.mean(axis=0))]
print("spectrogram", spec.magnitude.shape, "dominant Doppler |f| = %.2f Hz" % abs(peak))

# different gestures leave different Doppler signatures: track the
# strongest non-zero bin frame by frame
zero = len(freqs) // 2
for tr in traces:
    mag = dfs_spectrogram(tr, L=256, window_len=64, hop=8).magnitude.copy()
    mag[:, zero] = 0
    track = np.abs(freqs[np.argmax(mag, axis=1)])
    print("%-11s Doppler track (Hz) start %.2f  middle %.2f  end %.2f"
          % (CLASS_NAMES[tr.label], track[:3].mean(), track[11:14].mean(), track[-3:].mean()))
