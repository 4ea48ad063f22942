"""NMF rhythm tokenization: factorize a magnitude spectrogram, order the
components by energy, and read onset events off the activation rows.

The factorization minimizes generalized KL divergence with the standard
multiplicative updates. Component index is meaningful only after energy
sorting: 0 is the most energetic voice (typically the kick), then snare,
then hi-hat for K=3.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .audio import AudioBuffer, Spectrogram, stft_magnitude

EPS = 1e-12


@dataclass
class NmfFactors:
    W: np.ndarray
    H: np.ndarray
    K: int
    kl_history: np.ndarray = field(default=None, repr=False)


@dataclass(frozen=True)
class RhythmEvent:
    onset_sec: float
    class_index: int
    salience: float


@dataclass
class RhythmTrack:
    events: list
    duration_sec: float
    n_classes: int

    def __post_init__(self):
        self.events = sorted(self.events, key=lambda e: (e.onset_sec, e.class_index))

    def onsets(self, class_index=None) -> list:
        """Sorted onset times, optionally restricted to one class."""
        if class_index is None:
            return [e.onset_sec for e in self.events]
        return [e.onset_sec for e in self.events if e.class_index == class_index]


@dataclass
class TranscriptionConfig:
    win_samples: int = 2048
    hop_samples: int = 512
    n_iters: int = 300
    seed: int = 0
    threshold_rel: float = 0.1
    min_gap_sec: float = 0.05


def kl_divergence(S: np.ndarray, WH: np.ndarray) -> float:
    """Generalized KL divergence D(S || WH); zero entries of S contribute WH."""
    WH = np.maximum(WH, EPS)
    pos = S > 0
    d = np.sum(WH) - np.sum(S[pos])
    d += np.sum(S[pos] * np.log(S[pos] / WH[pos]))
    return float(d)


def nmf_factorize(spec: Spectrogram, K: int = 3, n_iters: int = 300, seed: int = 0) -> NmfFactors:
    """Multiplicative-update KL NMF of the magnitude spectrogram.

    Deterministic for a given seed: W and H start uniform(0.1, 1) from a
    fresh generator, and each iteration updates W then H. kl_history has
    n_iters + 1 entries, the divergence before any update and after each
    iteration; it is non-increasing up to ~1e-9 slack.
    """
    S = np.asarray(spec.mag, dtype=np.float64)
    if K < 1 or n_iters < 1:
        raise ValueError("need K >= 1 and n_iters >= 1")
    if S.shape[0] < K or S.shape[1] < K:
        raise ValueError("spectrogram smaller than K in one dimension")
    if not S.any():
        raise ValueError("empty prompt")
    rng = np.random.default_rng(seed)
    W = rng.uniform(0.1, 1.0, size=(S.shape[0], K))
    H = rng.uniform(0.1, 1.0, size=(K, S.shape[1]))
    history = np.empty(n_iters + 1)
    history[0] = kl_divergence(S, W @ H)
    for i in range(n_iters):
        WH = np.maximum(W @ H, EPS)
        W *= ((S / WH) @ H.T) / np.maximum(H.sum(axis=1)[None, :], EPS)
        WH = np.maximum(W @ H, EPS)
        H *= (W.T @ (S / WH)) / np.maximum(W.sum(axis=0)[:, None], EPS)
        history[i + 1] = kl_divergence(S, W @ H)
    return NmfFactors(W=W, H=H, K=K, kl_history=history)


def sort_components_by_energy(factors: NmfFactors) -> NmfFactors:
    """Permute components so total energy (sum W col * sum H row) descends.

    W columns and H rows move together, so the product WH is unchanged.
    Equal energies keep their original relative order.
    """
    energy = factors.W.sum(axis=0) * factors.H.sum(axis=1)
    order = np.argsort(-energy, kind="stable")
    return NmfFactors(
        W=factors.W[:, order],
        H=factors.H[order, :],
        K=factors.K,
        kl_history=factors.kl_history,
    )


def events_from_activations(
    factors: NmfFactors,
    frame_rate: float,
    threshold_rel: float = 0.1,
    min_gap_sec: float = 0.05,
) -> RhythmTrack:
    """Pick per-class activation peaks into (onset, class, salience) events.

    A frame is a candidate if it is a local maximum above threshold_rel of
    the row maximum; candidates are then accepted tallest-first, dropping
    any within min_gap_sec of an already accepted peak of the same class.
    """
    if not (0.0 < threshold_rel < 1.0):
        raise ValueError("threshold_rel must lie in (0, 1)")
    if min_gap_sec < 0:
        raise ValueError("min_gap_sec must be nonnegative")
    H = factors.H
    K, T = H.shape
    min_gap_frames = min_gap_sec * frame_rate
    events = []
    for k in range(K):
        row = H[k]
        peak = row.max()
        if peak <= 0:
            continue
        thr = threshold_rel * peak
        cand = [
            t
            for t in range(T)
            if row[t] > thr
            and row[t] >= (row[t - 1] if t > 0 else -np.inf)
            and row[t] > (row[t + 1] if t < T - 1 else -np.inf)
        ]
        cand.sort(key=lambda t: -row[t])
        accepted = []
        for t in cand:
            if all(abs(t - a) >= min_gap_frames for a in accepted):
                accepted.append(t)
        events.extend(RhythmEvent(t / frame_rate, k, float(row[t])) for t in accepted)
    duration = T / frame_rate
    return RhythmTrack(events=events, duration_sec=duration, n_classes=K)


def transcribe_rhythm(buf: AudioBuffer, K: int = 3, config: TranscriptionConfig = None) -> RhythmTrack:
    """Full prompt-to-events pipeline; the basis W is analysis-only and dropped."""
    cfg = config or TranscriptionConfig()
    if buf.duration_sec < 0.25:
        raise ValueError("buffer shorter than 0.25 s")
    spec = stft_magnitude(buf, cfg.win_samples, cfg.hop_samples)
    factors = nmf_factorize(spec, K=K, n_iters=cfg.n_iters, seed=cfg.seed)
    factors = sort_components_by_energy(factors)
    track = events_from_activations(
        factors, spec.frame_rate, threshold_rel=cfg.threshold_rel, min_gap_sec=cfg.min_gap_sec
    )
    track.duration_sec = buf.duration_sec
    return track


def save_track_csv(track: RhythmTrack, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["onset_sec", "class_index", "salience"])
        for e in track.events:
            writer.writerow(["%.6f" % e.onset_sec, e.class_index, "%.6f" % e.salience])


def load_track_csv(path, duration_sec: float = None, n_classes: int = None) -> RhythmTrack:
    """Read the CSV interchange form.

    The CSV does not carry duration or class count, so they are inferred
    (last onset, max class + 1) unless supplied.
    """
    events = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["onset_sec", "class_index", "salience"]:
            raise ValueError("unexpected CSV header %r" % (reader.fieldnames,))
        for row in reader:
            events.append(
                RhythmEvent(float(row["onset_sec"]), int(row["class_index"]), float(row["salience"]))
            )
    if duration_sec is None:
        duration_sec = max((e.onset_sec for e in events), default=0.0)
    if n_classes is None:
        n_classes = max((e.class_index for e in events), default=-1) + 1
    return RhythmTrack(events=events, duration_sec=duration_sec, n_classes=n_classes)


def track_to_json_dict(track: RhythmTrack) -> dict:
    return {
        "duration_sec": track.duration_sec,
        "n_classes": track.n_classes,
        "events": [
            {"onset_sec": e.onset_sec, "class_index": e.class_index, "salience": e.salience}
            for e in track.events
        ],
    }


def track_from_json_dict(d: dict) -> RhythmTrack:
    events = [RhythmEvent(e["onset_sec"], e["class_index"], e["salience"]) for e in d["events"]]
    return RhythmTrack(events=events, duration_sec=d["duration_sec"], n_classes=d["n_classes"])


def save_track_json(track: RhythmTrack, path) -> None:
    with open(path, "w") as fh:
        json.dump(track_to_json_dict(track), fh, indent=2)
        fh.write("\n")


def load_track_json(path) -> RhythmTrack:
    with open(path) as fh:
        return track_from_json_dict(json.load(fh))
