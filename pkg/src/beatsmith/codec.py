"""Toy band-energy audio codec.

One token per 20 ms frame: per-frame RMS level in 4 log-spaced bands, each
quantized to 8 dB-domain levels, packed base-8 into a single id in
[0, 4096). Level 0 is reserved for silence and decodes to exact zeros, so
an all-zero token stream is an all-zero waveform.

Decoding excites each band with seeded band-limited noise shaped by the
linearly interpolated dequantized envelope. It is nowhere near a faithful
codec, but it preserves onset timing and coarse spectral balance, which is
all the rhythm pipeline needs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .audio import AudioBuffer, stft_magnitude

DECODE_NOISE_SEED = 9021


@dataclass
class CodecConfig:
    sample_rate: int = 16000
    hop_samples: int = 320
    win_samples: int = 640
    n_bands: int = 4
    n_levels: int = 8
    floor_db: float = -60.0
    ceil_db: float = 0.0
    fmin_hz: float = 50.0

    @property
    def frame_rate(self) -> float:
        return self.sample_rate / self.hop_samples

    @property
    def vocab_size(self) -> int:
        return self.n_levels**self.n_bands

    def band_edges(self) -> np.ndarray:
        return np.geomspace(self.fmin_hz, self.sample_rate / 2, self.n_bands + 1)


def _band_levels(buf: AudioBuffer, cfg: CodecConfig) -> np.ndarray:
    """Per-band per-frame RMS magnitude, [n_bands x n_frames]."""
    spec = stft_magnitude(buf, win_samples=cfg.win_samples, hop_samples=cfg.hop_samples)
    freqs = np.fft.rfftfreq(cfg.win_samples, 1.0 / cfg.sample_rate)
    edges = cfg.band_edges()
    out = np.empty((cfg.n_bands, spec.n_frames))
    for b in range(cfg.n_bands):
        sel = (freqs >= edges[b]) & (freqs < edges[b + 1])
        out[b] = np.sqrt(np.mean(spec.mag[sel] ** 2, axis=0))
    # Normalize by the window gain so a full-scale band signal sits near
    # the top of the [floor_db, ceil_db] quantizer range.
    return out / (cfg.win_samples / 4.0)


def _quantize(levels: np.ndarray, cfg: CodecConfig) -> np.ndarray:
    step = (cfg.ceil_db - cfg.floor_db) / cfg.n_levels
    with np.errstate(divide="ignore"):
        db = 20 * np.log10(levels)
    # Clip before the integer cast: silent bands carry -inf here.
    q = np.clip(np.floor((db - cfg.floor_db) / step), 0, cfg.n_levels - 1)
    return q.astype(np.int64)


def _dequantize(q: np.ndarray, cfg: CodecConfig) -> np.ndarray:
    step = (cfg.ceil_db - cfg.floor_db) / cfg.n_levels
    db = cfg.floor_db + (q + 0.5) * step
    lin = 10 ** (db / 20)
    return np.where(q == 0, 0.0, lin)


def codec_encode(buf: AudioBuffer, config: CodecConfig = None) -> list:
    """Encode a buffer at the codec rate into one token id per frame."""
    cfg = config or CodecConfig()
    if buf.sample_rate != cfg.sample_rate:
        raise ValueError("resample to %d Hz before encoding" % cfg.sample_rate)
    q = _quantize(_band_levels(buf, cfg), cfg)
    weights = cfg.n_levels ** np.arange(cfg.n_bands)
    return [int(t) for t in weights @ q]


def codec_decode(tokens, config: CodecConfig = None, seed: int = DECODE_NOISE_SEED) -> AudioBuffer:
    """Decode token ids to audio; level 0 in a band contributes silence."""
    cfg = config or CodecConfig()
    tokens = np.asarray(list(tokens), dtype=np.int64)
    if tokens.size == 0:
        raise ValueError("empty token stream")
    if tokens.min() < 0 or tokens.max() >= cfg.vocab_size:
        raise ValueError("token id outside codec range [0, %d)" % cfg.vocab_size)
    n_frames = tokens.size
    n = n_frames * cfg.hop_samples
    frame_centers = np.arange(n_frames) * cfg.hop_samples
    positions = np.arange(n)
    edges = cfg.band_edges()
    rng = np.random.default_rng(seed)
    out = np.zeros(n)
    for b in range(cfg.n_bands):
        q = (tokens // cfg.n_levels**b) % cfg.n_levels
        env = np.interp(positions, frame_centers, _dequantize(q, cfg))
        noise = rng.standard_normal(n)
        X = np.fft.rfft(noise)
        f = np.fft.rfftfreq(n, 1.0 / cfg.sample_rate)
        X[(f < edges[b]) | (f >= edges[b + 1])] = 0
        noise = np.fft.irfft(X, n)
        # Rescale so the carrier reads as unity through the same analysis
        # the encoder uses; the envelope then lands in the right quantizer
        # bin on re-encode.
        carrier_level = np.median(_band_levels(AudioBuffer(noise, cfg.sample_rate), cfg)[b])
        noise /= max(carrier_level, 1e-12)
        out += noise * env
    np.clip(out, -4.0, 4.0, out=out)
    return AudioBuffer(out, cfg.sample_rate)
