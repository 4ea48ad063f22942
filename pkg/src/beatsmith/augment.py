"""Paired data augmentation and chunk sampling for (drumless mix, drum stem)
training pairs.

Every augmentation drawn for a pair is applied with identical parameters to
both buffers so the stem stays aligned with its mix; noise realizations are
drawn per buffer, only the SNR is shared.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .audio import AudioBuffer, resample

AUGMENT_PROBABILITY = 0.25
TEMPO_RANGE = (0.9, 1.1)
PITCH_RANGE = (-2.0, 2.0)
SNR_RANGE_DB = (20.0, 40.0)
BANDPASS_CENTER_RANGE = (200.0, 4000.0)
BANDPASS_Q_RANGE = (0.5, 2.0)

STRETCH_WIN_SEC = 0.05


class ChunkRejected(Exception):
    """Source too short to supply a minimum-length chunk."""


@dataclass
class StemPair:
    mix: AudioBuffer
    stem: AudioBuffer

    def __post_init__(self):
        if len(self.mix) != len(self.stem):
            raise ValueError("mix and stem lengths differ")
        if self.mix.sample_rate != self.stem.sample_rate:
            raise ValueError("mix and stem sample rates differ")


@dataclass
class AugmentationSpec:
    tempo_ratio: float = None
    pitch_semitones: float = None
    noise_snr_db: float = None
    bandpass_center_hz: float = None
    bandpass_q: float = None

    def as_dict(self) -> dict:
        return {
            "tempo_ratio": self.tempo_ratio,
            "pitch_semitones": self.pitch_semitones,
            "noise_snr_db": self.noise_snr_db,
            "bandpass_center_hz": self.bandpass_center_hz,
            "bandpass_q": self.bandpass_q,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentationSpec":
        return cls(**{k: d.get(k) for k in cls().as_dict()})


@dataclass
class ChunkSpec:
    start_sec: float
    duration_sec: float


def sample_augmentation(seed) -> AugmentationSpec:
    """Draw an AugmentationSpec; each effect present independently at p=0.25.

    Accepts an int seed or a numpy Generator, so callers can thread one
    generator through a whole corpus build.
    """
    rng = np.random.default_rng(seed)
    spec = AugmentationSpec()
    if rng.random() < AUGMENT_PROBABILITY:
        spec.tempo_ratio = float(rng.uniform(*TEMPO_RANGE))
    if rng.random() < AUGMENT_PROBABILITY:
        spec.pitch_semitones = float(rng.uniform(*PITCH_RANGE))
    if rng.random() < AUGMENT_PROBABILITY:
        spec.noise_snr_db = float(rng.uniform(*SNR_RANGE_DB))
    if rng.random() < AUGMENT_PROBABILITY:
        spec.bandpass_center_hz = float(rng.uniform(*BANDPASS_CENTER_RANGE))
        spec.bandpass_q = float(rng.uniform(*BANDPASS_Q_RANGE))
    return spec


def time_stretch(buf: AudioBuffer, ratio: float) -> AudioBuffer:
    """Overlap-add time stretch; output length = round(len / ratio).

    ratio > 1 speeds the signal up (shorter output). Windowed grains are
    taken at analysis positions ratio times the synthesis hop and summed
    with a Hann window, normalizing by the accumulated window energy.
    """
    if ratio <= 0:
        raise ValueError("ratio must be positive")
    x = buf.samples.astype(np.float64)
    n_out = int(round(len(x) / ratio))
    win = max(64, int(round(STRETCH_WIN_SEC * buf.sample_rate)))
    win -= win % 2
    hop = win // 2
    window = np.hanning(win)
    out = np.zeros(n_out + win)
    norm = np.zeros(n_out + win)
    for i in range(0, n_out // hop + 1):
        syn = i * hop
        ana = int(round(syn * ratio))
        grain = x[ana : ana + win]
        if grain.size < win:
            grain = np.pad(grain, (0, win - grain.size))
        out[syn : syn + win] += grain * window
        norm[syn : syn + win] += window
    out = out[:n_out] / np.maximum(norm[:n_out], 1e-8)
    return AudioBuffer(out, buf.sample_rate)


def pitch_shift(buf: AudioBuffer, semitones: float) -> AudioBuffer:
    """Shift pitch by resampling (which scales both pitch and length) and
    stretching the length back; duration is preserved within one hop."""
    factor = 2.0 ** (semitones / 12.0)
    scaled = resample(buf, max(1, int(round(buf.sample_rate / factor))))
    # Reinterpreting the resampled stream at the original rate realizes the
    # pitch scaling; only the duration is now wrong by 1/factor.
    shifted = AudioBuffer(scaled.samples, buf.sample_rate)
    return time_stretch(shifted, 1.0 / factor)


def add_noise(buf: AudioBuffer, snr_db: float, rng) -> AudioBuffer:
    """Add Gaussian noise at snr_db below the buffer's own RMS."""
    x = buf.samples.astype(np.float64)
    rms = np.sqrt(np.mean(x**2))
    noise_rms = rms / 10 ** (snr_db / 20)
    return AudioBuffer(x + rng.standard_normal(len(x)) * noise_rms, buf.sample_rate)


def bandpass(buf: AudioBuffer, center_hz: float, q: float) -> AudioBuffer:
    """Constant-peak-gain biquad band-pass (RBJ cookbook)."""
    w0 = 2 * np.pi * center_hz / buf.sample_rate
    if not 0 < w0 < np.pi:
        raise ValueError("center frequency outside (0, Nyquist)")
    alpha = np.sin(w0) / (2 * q)
    b = np.array([alpha, 0.0, -alpha])
    a = np.array([1 + alpha, -2 * np.cos(w0), 1 - alpha])
    y = lfilter(b / a[0], a / a[0], buf.samples.astype(np.float64))
    return AudioBuffer(y, buf.sample_rate)


def _apply_one(buf: AudioBuffer, spec: AugmentationSpec, rng) -> AudioBuffer:
    out = buf
    if spec.tempo_ratio is not None:
        out = time_stretch(out, spec.tempo_ratio)
    if spec.pitch_semitones is not None:
        out = pitch_shift(out, spec.pitch_semitones)
    if spec.noise_snr_db is not None:
        out = add_noise(out, spec.noise_snr_db, rng)
    if spec.bandpass_center_hz is not None:
        out = bandpass(out, spec.bandpass_center_hz, spec.bandpass_q)
    return out


def apply_augmentation(pair: StemPair, spec: AugmentationSpec, seed=0) -> StemPair:
    """Apply one spec to both buffers of a pair.

    Length-changing effects are deterministic functions of (length, params),
    so the two outputs stay sample-aligned. The seed feeds only the noise
    realizations, drawn separately for mix and stem.
    """
    if all(v is None for v in spec.as_dict().values()):
        return StemPair(
            mix=AudioBuffer(pair.mix.samples.copy(), pair.mix.sample_rate),
            stem=AudioBuffer(pair.stem.samples.copy(), pair.stem.sample_rate),
        )
    rng = np.random.default_rng(seed)
    return StemPair(mix=_apply_one(pair.mix, spec, rng), stem=_apply_one(pair.stem, spec, rng))


def sample_chunk(source_duration_sec: float, seed) -> ChunkSpec:
    """Log-uniform duration on [10, min(30, source)], uniform start.

    Log-uniform sampling favors shorter chunks; the closed-form mean for a
    full [10, 30] range is 20/ln 3, about 18.2 s.
    """
    if source_duration_sec < 10.0:
        raise ChunkRejected("source %.2f s is shorter than 10 s" % source_duration_sec)
    rng = np.random.default_rng(seed)
    hi = min(30.0, source_duration_sec)
    # exp(log(hi)) can round one ulp above hi, which would push the start
    # range negative on a source of exactly the minimum length.
    duration = float(min(np.exp(rng.uniform(np.log(10.0), np.log(hi))), hi))
    start = float(rng.uniform(0.0, max(source_duration_sec - duration, 0.0)))
    return ChunkSpec(start_sec=start, duration_sec=duration)


def slice_pair(pair: StemPair, chunk: ChunkSpec) -> StemPair:
    sr = pair.mix.sample_rate
    i0 = int(round(chunk.start_sec * sr))
    # start and duration round independently, so their sum can land one
    # sample past the source; clamp rather than reject the draw.
    n = min(int(round(chunk.duration_sec * sr)), len(pair.mix) - i0)
    if n <= 0:
        raise ValueError("chunk outside source")
    return StemPair(
        mix=AudioBuffer(pair.mix.samples[i0 : i0 + n], sr),
        stem=AudioBuffer(pair.stem.samples[i0 : i0 + n], sr),
    )


def build_example(pair: StemPair, seed) -> StemPair:
    """Chunk then augment one pair; fully deterministic for a given seed."""
    out, _, _ = build_example_detailed(pair, seed)
    return out


def build_example_detailed(pair: StemPair, seed):
    """Like build_example but also returns the drawn chunk and spec, which a
    corpus manifest needs for exact regeneration."""
    rng = np.random.default_rng(seed)
    chunk = sample_chunk(pair.mix.duration_sec, rng)
    sliced = slice_pair(pair, chunk)
    spec = sample_augmentation(rng)
    return apply_augmentation(sliced, spec, rng), chunk, spec
