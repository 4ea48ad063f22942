"""Spectral-flux onset detection.

Novelty is the half-wave-rectified frame-to-frame increase of STFT
magnitude, thresholded against a sliding median so the detector adapts to
the local noise floor instead of a global level.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import median_filter

from .audio import AudioBuffer, stft_magnitude


@dataclass
class OnsetConfig:
    hop_sec: float = 0.010
    win_hops: int = 4
    median_sec: float = 0.20
    delta: float = 0.07
    min_gap_sec: float = 0.05


def onset_novelty(buf: AudioBuffer, config: OnsetConfig = None):
    """Normalized spectral-flux curve and its frame rate."""
    cfg = config or OnsetConfig()
    hop = max(1, int(round(cfg.hop_sec * buf.sample_rate)))
    win = cfg.win_hops * hop
    spec = stft_magnitude(buf, win_samples=win, hop_samples=hop)
    rise = np.maximum(np.diff(spec.mag, axis=1), 0.0).sum(axis=0)
    flux = np.concatenate([[0.0], rise])
    peak = flux.max() if flux.size else 0.0
    if peak > 0:
        flux = flux / peak
    return flux, spec.frame_rate


def detect_onsets(buf: AudioBuffer, config: OnsetConfig = None) -> list:
    """Onset times in seconds, sorted ascending.

    Peaks must clear a sliding-median threshold plus a fixed delta; peaks
    closer than min_gap_sec to an accepted larger peak are suppressed.
    """
    cfg = config or OnsetConfig()
    if len(buf) == 0:
        return []
    flux, frame_rate = onset_novelty(buf, cfg)
    if flux.max() <= 0:
        return []
    median_frames = 2 * max(1, int(round(cfg.median_sec * frame_rate / 2))) + 1
    threshold = median_filter(flux, size=median_frames, mode="nearest") + cfg.delta
    T = flux.size
    cand = [
        t
        for t in range(T)
        if flux[t] > threshold[t]
        and flux[t] >= (flux[t - 1] if t > 0 else -np.inf)
        and flux[t] > (flux[t + 1] if t < T - 1 else -np.inf)
    ]
    cand.sort(key=lambda t: -flux[t])
    min_gap_frames = cfg.min_gap_sec * frame_rate
    accepted = []
    for t in cand:
        if all(abs(t - a) >= min_gap_frames for a in accepted):
            accepted.append(t)
    return sorted(t / frame_rate for t in accepted)
