"""Drum accompaniment toolkit: NMF rhythm tokenization, tolerance-matched
rhythm metrics, paired augmentation, and a toy conditioned transformer."""

__version__ = "0.1.0"

from .audio import AudioBuffer, Spectrogram, load_wav, save_wav, resample, stft_magnitude
from .nmf import (
    NmfFactors,
    RhythmEvent,
    RhythmTrack,
    TranscriptionConfig,
    nmf_factorize,
    sort_components_by_energy,
    events_from_activations,
    transcribe_rhythm,
)
from .onsets import OnsetConfig, detect_onsets
from .evaluate import (
    EvalConfig,
    MatchReport,
    SampleSkipped,
    match_onsets,
    evaluate_rhythm_adherence,
    aggregate_reports,
)
from .postfx import PostChainConfig, apply_post_chain
from .augment import (
    AugmentationSpec,
    ChunkSpec,
    StemPair,
    sample_augmentation,
    apply_augmentation,
    sample_chunk,
    build_example,
)
from .codec import CodecConfig, codec_encode, codec_decode
from .model import (
    ModelConfig,
    FreezeSchedule,
    make_freeze_schedule,
    build_sequence,
    make_model,
    train_step,
    generate,
    save_checkpoint,
    load_checkpoint,
)
