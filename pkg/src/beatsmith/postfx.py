"""Post-processing chain applied to generated drums before evaluation:
high-band gating, transient enhancement, compression, peak normalization.

All gain computation happens in the dB domain; stages are pure and composed
in a fixed order by apply_post_chain.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import butter, sosfilt

from .audio import AudioBuffer

EPS = 1e-12


@dataclass
class PostChainConfig:
    gate_cutoff_hz: float = 6000.0
    gate_threshold_dbfs: float = -45.0
    gate_attenuation_db: float = 24.0
    gate_frame_ms: float = 10.0
    gate_smooth_ms: float = 5.0
    transient_boost_db: float = 6.0
    transient_fast_ms: float = 1.0
    transient_window_ms: float = 20.0
    comp_threshold_dbfs: float = -18.0
    comp_ratio: float = 3.0
    comp_attack_ms: float = 5.0
    comp_release_ms: float = 100.0
    normalize_peak_dbfs: float = -1.0

    def __post_init__(self):
        if self.comp_ratio < 1:
            raise ValueError("compression ratio must be >= 1")
        if self.gate_attenuation_db < 0:
            raise ValueError("gate attenuation must be nonnegative")


def _crossover(x: np.ndarray, sr: int, cutoff_hz: float):
    """Linkwitz-Riley 4th-order split; the two bands sum back allpass-flat."""
    if cutoff_hz >= sr / 2:
        raise ValueError("gate cutoff at or above Nyquist")
    sos_lo = butter(2, cutoff_hz, btype="low", fs=sr, output="sos")
    sos_hi = butter(2, cutoff_hz, btype="high", fs=sr, output="sos")
    low = sosfilt(sos_lo, sosfilt(sos_lo, x))
    high = sosfilt(sos_hi, sosfilt(sos_hi, x))
    return low, high


def _one_pole(x: np.ndarray, sr: int, tau_ms: float) -> np.ndarray:
    a = float(np.exp(-1.0 / (tau_ms * 1e-3 * sr)))
    from scipy.signal import lfilter

    return lfilter([1.0 - a], [1.0, -a], x)


def gate_high_frequencies(buf: AudioBuffer, config: PostChainConfig = None) -> AudioBuffer:
    """Attenuate the band above gate_cutoff_hz wherever its short-time RMS
    sits below the threshold; the low band passes untouched."""
    cfg = config or PostChainConfig()
    x = buf.samples.astype(np.float64)
    low, high = _crossover(x, buf.sample_rate, cfg.gate_cutoff_hz)
    frame = max(1, int(round(cfg.gate_frame_ms * 1e-3 * buf.sample_rate)))
    n_frames = int(np.ceil(len(x) / frame))
    padded = np.pad(high, (0, n_frames * frame - len(x)))
    rms = np.sqrt(np.mean(padded.reshape(n_frames, frame) ** 2, axis=1))
    rms_db = 20 * np.log10(np.maximum(rms, EPS))
    atten = 10 ** (-cfg.gate_attenuation_db / 20)
    frame_gain = np.where(rms_db < cfg.gate_threshold_dbfs, atten, 1.0)
    gain = np.repeat(frame_gain, frame)[: len(x)]
    gain = _one_pole(gain, buf.sample_rate, cfg.gate_smooth_ms)
    return AudioBuffer(low + high * gain, buf.sample_rate)


def enhance_transients(buf: AudioBuffer, config: PostChainConfig = None) -> AudioBuffer:
    """Boost samples where a fast envelope outruns a slow one.

    Gain rises linearly with the fast/slow ratio's excess over 2 and is
    clamped at transient_boost_db, so steady material is left alone.
    """
    cfg = config or PostChainConfig()
    x = buf.samples.astype(np.float64)
    rect = np.abs(x)
    fast = _one_pole(rect, buf.sample_rate, cfg.transient_fast_ms)
    slow = _one_pole(rect, buf.sample_rate, cfg.transient_window_ms)
    ratio = fast / np.maximum(slow, EPS)
    excess = np.clip(ratio - 2.0, 0.0, 1.0)
    gain = 10 ** (cfg.transient_boost_db * excess / 20)
    return AudioBuffer(x * gain, buf.sample_rate)


def compress(buf: AudioBuffer, config: PostChainConfig = None) -> AudioBuffer:
    """Feed-forward peak compressor.

    The detector holds peaks with the release time constant so a steady
    full-scale tone reads as its true peak level, not its rectified mean;
    the resulting dB gain curve is then smoothed with attack on the way
    down and release on the way up.
    """
    cfg = config or PostChainConfig()
    x = buf.samples.astype(np.float64)
    a_att = float(np.exp(-1.0 / (cfg.comp_attack_ms * 1e-3 * buf.sample_rate)))
    a_rel = float(np.exp(-1.0 / (cfg.comp_release_ms * 1e-3 * buf.sample_rate)))
    rect = np.abs(x)
    env = np.empty_like(x)
    level = 0.0
    for i in range(len(x)):
        level = max(rect[i], a_rel * level)
        env[i] = level
    env_db = 20 * np.log10(np.maximum(env, EPS))
    desired_db = np.maximum(env_db - cfg.comp_threshold_dbfs, 0.0) * (1.0 / cfg.comp_ratio - 1.0)
    gain_db = np.empty_like(x)
    g = 0.0
    for i in range(len(x)):
        a = a_att if desired_db[i] < g else a_rel
        g = a * g + (1.0 - a) * desired_db[i]
        gain_db[i] = g
    return AudioBuffer(x * 10 ** (gain_db / 20), buf.sample_rate)


def normalize_peak(buf: AudioBuffer, config: PostChainConfig = None) -> AudioBuffer:
    cfg = config or PostChainConfig()
    peak = float(np.abs(buf.samples).max()) if len(buf) else 0.0
    if peak <= 0:
        raise ValueError("silent input")
    target = 10 ** (cfg.normalize_peak_dbfs / 20)
    return AudioBuffer(buf.samples.astype(np.float64) * (target / peak), buf.sample_rate)


def apply_post_chain(buf: AudioBuffer, config: PostChainConfig = None) -> AudioBuffer:
    cfg = config or PostChainConfig()
    out = gate_high_frequencies(buf, cfg)
    out = enhance_transients(out, cfg)
    out = compress(out, cfg)
    return normalize_peak(out, cfg)
