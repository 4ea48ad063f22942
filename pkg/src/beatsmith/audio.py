"""Audio I/O, resampling, and magnitude spectrograms.

Everything downstream consumes mono float32 buffers in [-1, 1], so the
loaders normalize channel count and dtype here and nowhere else.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from scipy.io import wavfile

MAX_WIN_SAMPLES = 1 << 16


@dataclass
class AudioBuffer:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float32)
        if self.samples.ndim != 1:
            raise ValueError("expected mono samples, got shape %r" % (self.samples.shape,))
        if int(self.sample_rate) <= 0:
            raise ValueError("sample_rate must be positive")
        self.sample_rate = int(self.sample_rate)
        if self.samples.size and not np.all(np.isfinite(self.samples)):
            raise ValueError("samples contain NaN or Inf")

    @property
    def duration_sec(self) -> float:
        return self.samples.size / self.sample_rate

    def __len__(self) -> int:
        return self.samples.size


@dataclass
class Spectrogram:
    """Magnitude STFT; mag is [n_bins x n_frames], entrywise >= 0."""

    mag: np.ndarray
    hop_samples: int
    win_samples: int
    sample_rate: int

    @property
    def n_bins(self) -> int:
        return self.mag.shape[0]

    @property
    def n_frames(self) -> int:
        return self.mag.shape[1]

    @property
    def frame_rate(self) -> float:
        return self.sample_rate / self.hop_samples


def load_wav(path) -> AudioBuffer:
    """Read a PCM16 or float32 WAV, mono or stereo, as a mono buffer.

    Integer samples are scaled by 1/32768; stereo is downmixed by channel
    mean. Anything else the file format throws at us is reported as an
    unsupported encoding.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    try:
        rate, data = wavfile.read(path)
    except Exception as exc:
        raise ValueError("unsupported encoding: %s" % exc) from exc
    if data.dtype == np.int16:
        x = data.astype(np.float32) / 32768.0
    elif data.dtype == np.float32:
        x = data
    else:
        raise ValueError("unsupported encoding: dtype %s" % data.dtype)
    if x.ndim == 2:
        if x.shape[1] > 2:
            raise ValueError("unsupported encoding: %d channels" % x.shape[1])
        x = x.mean(axis=1)
    if x.size == 0:
        raise ValueError("zero-length audio")
    return AudioBuffer(x, rate)


def save_wav(buf: AudioBuffer, path) -> None:
    """Write a mono float32 WAV. Round-trips through load_wav bit-exactly."""
    if len(buf) == 0:
        raise ValueError("refusing to write empty buffer")
    wavfile.write(path, buf.sample_rate, buf.samples.astype(np.float32))


def _kaiser_sinc(x: np.ndarray, cutoff: float, half_width: float, beta: float) -> np.ndarray:
    # Kaiser-windowed sinc evaluated at arbitrary (fractional) positions;
    # np.kaiser only tabulates integer grids.
    u = x / half_width
    inside = np.abs(u) < 1.0
    w = np.zeros_like(x)
    w[inside] = np.i0(beta * np.sqrt(1.0 - u[inside] ** 2)) / np.i0(beta)
    return cutoff * np.sinc(cutoff * x) * w


def resample(buf: AudioBuffer, target_rate: int) -> AudioBuffer:
    """Band-limited resampling with a Kaiser-windowed sinc kernel.

    The kernel spans 16 input samples when upsampling and stretches by the
    rate ratio when downsampling so the cutoff tracks the new Nyquist.
    """
    if target_rate <= 0:
        raise ValueError("target_rate must be positive")
    if target_rate == buf.sample_rate:
        return AudioBuffer(buf.samples.copy(), target_rate)
    x = buf.samples.astype(np.float64)
    ratio = target_rate / buf.sample_rate
    n_out = int(round(len(x) * ratio))
    cutoff = min(1.0, ratio)
    half_width = 8.0 / cutoff
    reach = int(np.ceil(half_width))
    offsets = np.arange(-reach, reach + 1)
    out = np.empty(n_out, dtype=np.float64)
    # Position-dependent kernels preclude a plain convolution; chunking keeps
    # the (chunk x taps) weight matrix small.
    for lo in range(0, n_out, 1 << 15):
        hi = min(lo + (1 << 15), n_out)
        t = np.arange(lo, hi) / ratio
        base = np.floor(t).astype(np.int64)
        idx = base[:, None] + offsets[None, :]
        taps = _kaiser_sinc(t[:, None] - idx, cutoff, half_width, beta=8.6)
        valid = (idx >= 0) & (idx < len(x))
        idx = np.clip(idx, 0, len(x) - 1)
        out[lo:hi] = np.sum(x[idx] * taps * valid, axis=1)
    return AudioBuffer(out, target_rate)


def stft_magnitude(buf: AudioBuffer, win_samples: int = 2048, hop_samples: int = 512) -> Spectrogram:
    """Hann-windowed magnitude STFT with frame t centered at t*hop."""
    if hop_samples <= 0 or win_samples < hop_samples:
        raise ValueError("need win_samples >= hop_samples > 0")
    if win_samples > MAX_WIN_SAMPLES:
        raise ValueError("win_samples above hard cap %d" % MAX_WIN_SAMPLES)
    x = buf.samples.astype(np.float64)
    n_frames = int(np.ceil(len(x) / hop_samples)) if len(x) else 0
    pad_left = win_samples // 2
    need = (n_frames - 1) * hop_samples + win_samples if n_frames else 0
    pad_right = max(0, need - (len(x) + pad_left))
    x = np.pad(x, (pad_left, pad_right))
    window = np.hanning(win_samples)
    frames = np.empty((win_samples, n_frames), dtype=np.float64)
    for t in range(n_frames):
        frames[:, t] = x[t * hop_samples : t * hop_samples + win_samples]
    mag = np.abs(np.fft.rfft(frames * window[:, None], axis=0))
    return Spectrogram(mag=mag, hop_samples=hop_samples, win_samples=win_samples, sample_rate=buf.sample_rate)
