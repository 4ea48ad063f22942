"""Command-line entry point.

Subcommands mirror the pipeline stages: rhythm extraction, corpus
evaluation, training-data construction, toy-model training, generation.
Every command writes a RunManifest JSON next to its primary output with
enough resolved state to reproduce the run.

Exit codes: 0 success, 2 usage or config problem, 3 data problem,
4 checkpoint version mismatch.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import asdict

import numpy as np
import torch

from . import __version__
from .audio import AudioBuffer, load_wav, save_wav, resample
from .augment import ChunkRejected, StemPair, build_example_detailed, sample_chunk
from .codec import CodecConfig, codec_decode, codec_encode
from .evaluate import (
    EvalConfig,
    MatchReport,
    SampleSkipped,
    aggregate_reports,
    evaluate_rhythm_adherence,
    macro_f1,
)
from .model import (
    CheckpointVersionError,
    ModelConfig,
    TrainBatch,
    apply_freeze,
    build_sequence,
    generate,
    load_checkpoint,
    make_model,
    save_checkpoint,
    train_step,
)
from .nmf import TranscriptionConfig, load_track_csv, save_track_csv, save_track_json, transcribe_rhythm
from .postfx import apply_post_chain

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_VERSION = 4


class DataError(Exception):
    pass


def _write_json_atomic(obj, path) -> None:
    tmp = "%s.tmp.%d" % (path, os.getpid())
    with open(tmp, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def _write_manifest(out_path, command, config, seed, inputs, outputs, t0) -> None:
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "tool_version": __version__,
        "torch_threads": torch.get_num_threads(),
        "duration_sec": round(time.time() - t0, 3),
    }
    _write_json_atomic(manifest, str(out_path) + ".manifest.json")


def _load_config_file(path) -> dict:
    if path is None:
        return {}
    if not os.path.exists(path):
        raise DataError("config file not found: %s" % path)
    with open(path) as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SystemExit(EXIT_USAGE) from exc
    if not isinstance(cfg, dict):
        raise SystemExit(EXIT_USAGE)
    return cfg


def _merged(args, config_file_keys, key, default):
    """Flag if given, else config-file value, else default."""
    cli_value = getattr(args, key, None)
    if cli_value is not None:
        return cli_value
    if key in config_file_keys:
        return config_file_keys[key]
    return default


def cmd_rhythm_extract(args) -> int:
    t0 = time.time()
    file_cfg = _load_config_file(args.config)
    k = int(_merged(args, file_cfg, "k", 3))
    seed = int(_merged(args, file_cfg, "seed", 0))
    if not os.path.exists(args.infile):
        print("input not found: %s" % args.infile, file=sys.stderr)
        return EXIT_USAGE
    buf = load_wav(args.infile)
    tcfg = TranscriptionConfig(seed=seed)
    try:
        track = transcribe_rhythm(buf, K=k, config=tcfg)
    except ValueError as exc:
        print("cannot transcribe: %s" % exc, file=sys.stderr)
        return EXIT_DATA
    save_track_csv(track, args.out)
    json_path = os.path.splitext(args.out)[0] + ".json"
    save_track_json(track, json_path)
    _write_manifest(
        args.out,
        "rhythm extract",
        {"k": k, "transcription": asdict(tcfg)},
        seed,
        [args.infile],
        [args.out, json_path],
        t0,
    )
    return EXIT_OK


def cmd_eval_rhythm(args) -> int:
    t0 = time.time()
    file_cfg = _load_config_file(args.config)
    seed = int(_merged(args, file_cfg, "seed", 0))
    post = bool(args.post_chain or file_cfg.get("post_chain", False))
    ref_files = {
        os.path.splitext(f)[0]: os.path.join(args.ref, f)
        for f in os.listdir(args.ref)
        if f.endswith(".csv")
    }
    gen_files = {
        os.path.splitext(f)[0]: os.path.join(args.gen, f)
        for f in os.listdir(args.gen)
        if f.endswith(".wav")
    }
    stems = sorted(set(ref_files) & set(gen_files))
    if not stems:
        print("no common file stems between %s and %s" % (args.ref, args.gen), file=sys.stderr)
        return EXIT_USAGE
    cfg = EvalConfig()
    per_file, skipped = {}, []
    for stem in stems:
        track = load_track_csv(ref_files[stem])
        audio = load_wav(gen_files[stem])
        if post:
            audio = apply_post_chain(audio)
        try:
            reports = evaluate_rhythm_adherence(track, audio, cfg)
        except SampleSkipped:
            skipped.append(stem)
            continue
        per_file[stem] = {name: rep.as_dict() for name, rep in reports.items()}
    result = {"files": per_file, "skipped": skipped, "aggregate": {}, "aggregate_macro_f1": {}}
    for metric in ("onset", "kick", "snare"):
        reps = [MatchReport(**per_file[stem][metric]) for stem in per_file]
        if reps:
            result["aggregate"][metric] = aggregate_reports(reps).as_dict()
            result["aggregate_macro_f1"][metric] = macro_f1(reps)
    _write_json_atomic(result, args.out)
    csv_path = os.path.splitext(args.out)[0] + ".csv"
    with open(csv_path, "w") as fh:
        fh.write("file,onset_f1,kick_f1,snare_f1\n")
        for stem in sorted(per_file):
            fh.write(
                "%s,%.6f,%.6f,%.6f\n"
                % (
                    stem,
                    per_file[stem]["onset"]["f1"],
                    per_file[stem]["kick"]["f1"],
                    per_file[stem]["snare"]["f1"],
                )
            )
    _write_manifest(
        args.out,
        "eval rhythm",
        {"post_chain": post, "eval": asdict(cfg)},
        seed,
        [args.ref, args.gen],
        [args.out, csv_path],
        t0,
    )
    return EXIT_OK


def _read_pairs_manifest(path):
    if not os.path.exists(path):
        raise DataError("pairs manifest not found: %s" % path)
    pairs = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                pairs.append(json.loads(line))
    if not pairs:
        raise DataError("pairs manifest is empty")
    return pairs


def cmd_data_build(args) -> int:
    t0 = time.time()
    file_cfg = _load_config_file(args.config)
    seed = int(_merged(args, file_cfg, "seed", 0))
    n = int(_merged(args, file_cfg, "n", 10))
    pairs = _read_pairs_manifest(args.pairs)
    os.makedirs(args.out, exist_ok=True)

    if args.durations_only:
        durations = []
        source_durs = []
        for rec in pairs:
            buf = load_wav(rec["mix_path"])
            source_durs.append(buf.duration_sec)
        for k in range(n):
            rng = np.random.default_rng([seed, k])
            try:
                chunk = sample_chunk(source_durs[k % len(source_durs)], rng)
            except ChunkRejected:
                if args.strict:
                    print("source shorter than 10 s", file=sys.stderr)
                    return EXIT_DATA
                continue
            durations.append(chunk.duration_sec)
        summary = {
            "n": len(durations),
            "mean_sec": float(np.mean(durations)) if durations else None,
            "median_sec": float(np.median(durations)) if durations else None,
        }
        out_path = os.path.join(args.out, "durations.json")
        _write_json_atomic(summary, out_path)
        print(json.dumps(summary))
        _write_manifest(out_path, "data build", {"n": n, "durations_only": True}, seed, [args.pairs], [out_path], t0)
        return EXIT_OK

    loaded = {}
    records = []
    written = []
    for k in range(n):
        rec = pairs[k % len(pairs)]
        key = (rec["mix_path"], rec["stem_path"])
        if key not in loaded:
            loaded[key] = StemPair(mix=load_wav(rec["mix_path"]), stem=load_wav(rec["stem_path"]))
        pair = loaded[key]
        rng = np.random.default_rng([seed, k])
        try:
            out_pair, chunk, spec = build_example_detailed(pair, rng)
        except ChunkRejected as exc:
            if args.strict:
                print(str(exc), file=sys.stderr)
                return EXIT_DATA
            continue
        base = os.path.join(args.out, "example_%04d" % k)
        mix_path, stem_path, events_path = base + ".mix.wav", base + ".stem.wav", base + ".events.csv"
        save_wav(out_pair.mix, mix_path)
        save_wav(out_pair.stem, stem_path)
        try:
            track = transcribe_rhythm(out_pair.stem)
        except ValueError as exc:
            print("stem in example %d failed transcription: %s" % (k, exc), file=sys.stderr)
            return EXIT_DATA
        save_track_csv(track, events_path)
        records.append(
            {
                "index": k,
                "source_mix": rec["mix_path"],
                "source_stem": rec["stem_path"],
                "mix_path": mix_path,
                "stem_path": stem_path,
                "events_path": events_path,
                "seed": [seed, k],
                "chunk": {"start_sec": chunk.start_sec, "duration_sec": chunk.duration_sec},
                "augmentation": spec.as_dict(),
            }
        )
        written += [mix_path, stem_path, events_path]
    manifest_path = os.path.join(args.out, "corpus.jsonl")
    tmp = manifest_path + ".tmp.%d" % os.getpid()
    with open(tmp, "w") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")
    os.replace(tmp, manifest_path)
    _write_manifest(
        manifest_path, "data build", {"n": n, "strict": bool(args.strict)}, seed, [args.pairs], written, t0
    )
    return EXIT_OK


def _model_config_from_dict(d: dict) -> ModelConfig:
    valid = set(ModelConfig().__dataclass_fields__)
    unknown = set(d) - valid
    if unknown:
        raise SystemExit(EXIT_USAGE)
    try:
        return ModelConfig(**d)
    except (TypeError, ValueError) as exc:
        print("bad model config: %s" % exc, file=sys.stderr)
        raise SystemExit(EXIT_USAGE) from exc


def _corpus_to_batch(corpus_dir, config: ModelConfig, codec_cfg: CodecConfig) -> TrainBatch:
    manifest_path = os.path.join(corpus_dir, "corpus.jsonl")
    if not os.path.exists(manifest_path):
        raise DataError("no corpus.jsonl in %s" % corpus_dir)
    examples = []
    with open(manifest_path) as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            mix = load_wav(rec["mix_path"])
            stem = load_wav(rec["stem_path"])
            track = load_track_csv(rec["events_path"])
            if mix.sample_rate != codec_cfg.sample_rate:
                mix = resample(mix, codec_cfg.sample_rate)
            if stem.sample_rate != codec_cfg.sample_rate:
                stem = resample(stem, codec_cfg.sample_rate)
            seq, grid = build_sequence(codec_encode(mix, codec_cfg), codec_encode(stem, codec_cfg), track, config)
            examples.append((seq, grid))
    if not examples:
        raise DataError("corpus manifest has no usable examples")
    return TrainBatch.from_examples(examples, config)


def cmd_model_train(args) -> int:
    t0 = time.time()
    file_cfg = _load_config_file(args.config)
    seed = int(_merged(args, file_cfg, "seed", 0))
    steps = int(_merged(args, file_cfg, "steps", 100))
    lr = float(_merged(args, file_cfg, "lr", 0.5))
    model_keys = set(ModelConfig().__dataclass_fields__)
    unknown = set(file_cfg) - model_keys - {"seed", "steps", "lr", "threads"}
    if unknown:
        print("unknown config keys: %s" % ", ".join(sorted(unknown)), file=sys.stderr)
        return EXIT_USAGE
    config = _model_config_from_dict({k: v for k, v in file_cfg.items() if k in model_keys})
    torch.set_num_threads(int(_merged(args, file_cfg, "threads", 1)))
    batch = _corpus_to_batch(args.corpus, config, CodecConfig())
    model = make_model(config, seed=seed)
    apply_freeze(model)
    losses = []
    for _ in range(steps):
        losses.append(train_step(model, batch, lr=lr))
    save_checkpoint(model, args.out, losses=losses)
    loss_path = os.path.splitext(args.out)[0] + ".losses.json"
    _write_json_atomic({"losses": losses}, loss_path)
    _write_manifest(
        args.out,
        "model train",
        {"steps": steps, "lr": lr, "model": asdict(config)},
        seed,
        [args.corpus],
        [args.out, loss_path],
        t0,
    )
    return EXIT_OK


def cmd_model_generate(args) -> int:
    t0 = time.time()
    file_cfg = _load_config_file(args.config)
    seed = int(_merged(args, file_cfg, "seed", 0))
    temperature = float(_merged(args, file_cfg, "temperature", 0.0))
    torch.set_num_threads(int(_merged(args, file_cfg, "threads", 1)))
    model, _ = load_checkpoint(args.ckpt)
    codec_cfg = CodecConfig()
    mix = load_wav(args.mix)
    if mix.sample_rate != codec_cfg.sample_rate:
        mix = resample(mix, codec_cfg.sample_rate)
    mix_tokens = codec_encode(mix, codec_cfg)
    track = load_track_csv(args.rhythm)
    if args.max_new is not None:
        max_new = int(args.max_new)
    else:
        horizon = track.duration_sec or (max((e.onset_sec for e in track.events), default=0.0) + 0.4)
        max_new = int(round(horizon * codec_cfg.frame_rate))
    max_new = max(1, min(max_new, model.config.max_seq_len - len(mix_tokens) - 1))
    tokens = generate(model, mix_tokens, track, max_new=max_new, seed=seed, temperature=temperature)
    audio = codec_decode(tokens, codec_cfg)
    save_wav(audio, args.out)
    tokens_path = os.path.splitext(args.out)[0] + ".tokens.json"
    _write_json_atomic({"tokens": tokens}, tokens_path)
    _write_manifest(
        args.out,
        "model generate",
        {"temperature": temperature, "max_new": max_new},
        seed,
        [args.ckpt, args.mix, args.rhythm],
        [args.out, tokens_path],
        t0,
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="beatsmith", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="group", required=True)

    rhythm = sub.add_parser("rhythm", help="rhythm feature extraction").add_subparsers(
        dest="cmd", required=True
    )
    ext = rhythm.add_parser("extract", help="transcribe a prompt WAV into events")
    ext.add_argument("--in", dest="infile", required=True)
    ext.add_argument("--out", required=True)
    ext.add_argument("--k", type=int, default=None)
    ext.add_argument("--seed", type=int, default=None)
    ext.add_argument("--config", default=None)
    ext.set_defaults(func=cmd_rhythm_extract)

    ev = sub.add_parser("eval", help="evaluation").add_subparsers(dest="cmd", required=True)
    evr = ev.add_parser("rhythm", help="score generated audio against reference events")
    evr.add_argument("--ref", required=True)
    evr.add_argument("--gen", required=True)
    evr.add_argument("--out", required=True)
    evr.add_argument("--post-chain", action="store_true")
    evr.add_argument("--seed", type=int, default=None)
    evr.add_argument("--config", default=None)
    evr.set_defaults(func=cmd_eval_rhythm)

    data = sub.add_parser("data", help="training data").add_subparsers(dest="cmd", required=True)
    db = data.add_parser("build", help="build an augmented training corpus")
    db.add_argument("--pairs", required=True)
    db.add_argument("--out", required=True)
    db.add_argument("--n", type=int, default=None)
    db.add_argument("--seed", type=int, default=None)
    db.add_argument("--strict", action="store_true")
    db.add_argument("--durations-only", action="store_true")
    db.add_argument("--config", default=None)
    db.set_defaults(func=cmd_data_build)

    model = sub.add_parser("model", help="toy model").add_subparsers(dest="cmd", required=True)
    tr = model.add_parser("train", help="train on a built corpus")
    tr.add_argument("--corpus", required=True)
    tr.add_argument("--config", default=None)
    tr.add_argument("--steps", type=int, default=None)
    tr.add_argument("--lr", type=float, default=None)
    tr.add_argument("--seed", type=int, default=None)
    tr.add_argument("--out", required=True)
    tr.set_defaults(func=cmd_model_train)
    gen = model.add_parser("generate", help="generate drums for a mix and rhythm")
    gen.add_argument("--ckpt", required=True)
    gen.add_argument("--mix", required=True)
    gen.add_argument("--rhythm", required=True)
    gen.add_argument("--out", required=True)
    gen.add_argument("--seed", type=int, default=None)
    gen.add_argument("--temperature", type=float, default=None)
    gen.add_argument("--max-new", type=int, default=None)
    gen.add_argument("--config", default=None)
    gen.set_defaults(func=cmd_model_generate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 on --help; pass both through
        return int(exc.code or 0)
    try:
        return args.func(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except CheckpointVersionError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_VERSION
    except DataError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
