"""Shared fixture builders for tests.

make_conditioned_example builds (mix, rhythm, drums) triples for the
conditioning and memorization tests. Design constraints, all load-bearing:

- Every event time is a multiple of the codec frame period (0.02 s), so the
  conditioning grid column for an event lines up exactly with the codec frame
  containing its attack.
- The drum audio is rendered one codec frame later than the conditioning
  track. Prediction of the token at frame f happens from the hidden state at
  frame f-1, so a flag must sit one column before the attack token it
  announces to be causally visible.
- The kit uses sine voices for all three classes. Noise voices draw a fresh
  realization per event, which makes token streams differ across examples
  near quantizer bin edges with no visible cue; deterministic grains make
  every (local history, grid) state continue the same way corpus-wide.
"""

import numpy as np

from beatsmith.audio import AudioBuffer
from beatsmith.nmf import RhythmEvent, RhythmTrack
from beatsmith.synth import DrumVoice, render_rhythm_track

MIX_FREQS = [120.0, 190.0, 300.0, 480.0, 760.0, 1200.0, 1900.0, 3000.0, 4700.0]

CODEC_FRAME_SEC = 0.02

KIT_SINE = {
    0: DrumVoice(0.90, ("sine", 60.0, 0.0), 0.16, 0.012),
    1: DrumVoice(0.80, ("sine", 400.0, 0.0), 0.12, 0.004),
    2: DrumVoice(0.55, ("sine", 2800.0, 0.0), 0.06, 0.002),
}


def make_conditioned_example(i: int, sample_rate: int = 16000):
    """Return (mix AudioBuffer, RhythmTrack, drums AudioBuffer) for example
    i. Patterns vary per example in period, phase, hat offset, and snare
    density, so the corpus covers distinct rhythms while every timing stays
    on the 0.02 s frame grid."""
    rng = np.random.default_rng(1000 + i)

    n = int(0.8 * sample_rate)
    t = np.arange(n) / sample_rate
    half = n // 2
    mix = np.zeros(n)
    for seg, sl in enumerate((slice(0, half), slice(half, n))):
        chord = rng.choice(len(MIX_FREQS), size=3, replace=False)
        for k in chord:
            amp = rng.uniform(0.05, 0.20)
            mix[sl] += amp * np.sin(2 * np.pi * MIX_FREQS[k] * t[sl])
    mix = np.clip(mix, -0.99, 0.99)

    period = float(rng.choice([0.40, 0.44, 0.48]))
    start = float(rng.choice([0.04, 0.06, 0.08]))
    hat_off = float(rng.choice([0.08, 0.10, 0.12]))
    snare_every = int(rng.choice([1, 2]))
    events = []
    tt = start
    j = 0
    while tt < 1.25:
        events.append(RhythmEvent(round(tt, 3), 0, 1.0))
        if j % snare_every == snare_every - 1:
            events.append(RhythmEvent(round(tt + period / 2, 3), 1, 1.0))
        events.append(RhythmEvent(round(tt + period / 2 + hat_off, 3), 2, 1.0))
        tt = round(tt + period, 3)
        j += 1
    last = max(e.onset_sec for e in events)
    track = RhythmTrack(events=events, duration_sec=last + 0.4, n_classes=3)

    shifted = RhythmTrack(
        events=[
            RhythmEvent(round(e.onset_sec + CODEC_FRAME_SEC, 3), e.class_index, e.salience)
            for e in events
        ],
        duration_sec=track.duration_sec + CODEC_FRAME_SEC,
        n_classes=3,
    )
    drums = render_rhythm_track(shifted, sample_rate, KIT_SINE, seed=500 + i)
    return AudioBuffer(mix, sample_rate), track, drums


def lowpassed_noise(n: int, sample_rate: int, cutoff_hz: float, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n)
    X = np.fft.rfft(x)
    f = np.fft.rfftfreq(n, 1 / sample_rate)
    X[f > cutoff_hz] = 0
    y = np.fft.irfft(X, n)
    return y / max(np.abs(y).max(), 1e-9)
