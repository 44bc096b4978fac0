"""Command-line entry point: ``avvad {synth,train,predict,score,plot}``.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import shutil
import sys
from pathlib import Path

import numpy as np

from . import __version__, archive
from . import evaluation as ev
from .config import ConfigError, load_config, override

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4
log = logging.getLogger("avvad")


class UsageError(Exception):
    pass


def _write_manifest(out: Path, command: str, cfg: dict, seed, inputs: dict, outputs: dict,
                    checkpoint_sha256: str | None = None) -> Path:
    manifest = {
        "command": command,
        "argv": sys.argv[1:],
        "version": __version__,
        "config": cfg,
        "seed": seed,
        "inputs": {k: str(v) for k, v in inputs.items()},
        "outputs": {k: str(v) for k, v in outputs.items()},
        "checkpoint_sha256": checkpoint_sha256,
    }
    path = out / "run_manifest.json"
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True))
    return path


def _prepare_out(out: Path, force: bool) -> Path:
    if out.exists() and any(out.iterdir()):
        if not force:
            raise UsageError(f"output directory {out} is not empty (use --force to overwrite)")
        shutil.rmtree(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------- synth

def dataset_hash(root: Path) -> str:
    return hashlib.sha256((root / "manifest.json").read_bytes()).hexdigest()


def cmd_synth(args) -> int:
    from .corpus import CorpusConfig, class_durations, background_voice_fraction, generate_corpus, write_dataset

    cfg = override(load_config(args.config), "corpus", seed=args.seed, n_train=args.n_train,
                   n_val=args.n_val, n_test=args.n_test, duration=args.duration)
    c = cfg["corpus"]
    if min(c["n_train"], c["n_val"], c["n_test"]) < 0 or c["n_train"] + c["n_val"] + c["n_test"] <= 0:
        raise UsageError("corpus config must request at least one clip and no negative counts")
    if c["duration"] <= 0:
        raise UsageError("clip duration must be positive")
    out = _prepare_out(Path(args.out), args.force)
    clips = generate_corpus(CorpusConfig(**c))
    write_dataset(clips, out)
    digest = dataset_hash(out)
    durations = class_durations(clips)
    print(f"wrote {len(clips)} clips to {out} (sha256 {digest[:16]})")
    for split in ("train", "val", "test"):
        print(f"  {split}: {sum(1 for x in clips if x.split == split)} clips")
    for space, table in durations.items():
        print(f"  {space:6s} " + "  ".join(f"{k} {v:7.1f}s" for k, v in table.items()))
    print(f"  background share of voiced time: {100 * background_voice_fraction(clips):.1f}%")
    _write_manifest(out, "synth", cfg, c["seed"], {}, {"dataset": out}, None)
    return 0


# ---------------------------------------------------------------- train

def cmd_train(args) -> int:
    from .corpus import read_dataset
    from .model import save_checkpoint
    from .training import TrainConfig, train, write_history

    cfg = override(load_config(args.config), "train", seed=args.seed, operator=args.operator, epochs=args.epochs)
    try:
        tcfg = TrainConfig(**{k: (tuple(v) if isinstance(v, list) else v) for k, v in cfg["train"].items()})
    except (ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from exc
    out = _prepare_out(Path(args.out), args.force)
    clips = read_dataset(args.data, splits=("train", "val"))
    tr = [c for c in clips if c.split == "train"]
    va = [c for c in clips if c.split == "val"]
    if not tr or not va:
        raise UsageError("dataset needs non-empty train and val splits")
    result = train(tr, va, tcfg, on_epoch=lambda r: print(
        f"epoch {r['epoch']:3d}  train {r['train_total']:.4f}  val {r['val_total']:.4f}  "
        f"audio F {r['val_audio_f']:.1f}  A-V F {r['val_av_f']:.1f}"))
    ckpt = out / "checkpoint"
    digest = save_checkpoint(result.model, ckpt, {"train": tcfg.to_dict(), "best_epoch": result.best_epoch})
    write_history(out / "history.csv", result.history)
    print(f"best epoch {result.best_epoch}; checkpoint {ckpt} (sha256 {digest[:16]})")
    _write_manifest(out, "train", cfg, tcfg.seed, {"data": args.data},
                    {"checkpoint": ckpt, "history": out / "history.csv"}, digest)
    return 0


# ---------------------------------------------------------------- predict

AUDIO_NAMES = ("Silence", "Speech", "Singing", "Others")
VISUAL_NAMES = ("Vocalizing", "NonVocalizing")


def write_probs(path, probs: np.ndarray, hop: float, names) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame", "time", *names])
        for i, row in enumerate(probs):
            w.writerow([i, f"{i * hop:.6f}", *(f"{x:.8f}" for x in row)])


def read_probs(path) -> tuple[np.ndarray, float, list[str]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ev.EvaluationError(f"{path}: empty probability track")
    names = rows[0][2:]
    data = np.array([[float(x) for x in r[2:]] for r in rows[1:]])
    hop = float(rows[2][1]) - float(rows[1][1]) if len(rows) > 2 else 0.0
    return data, hop, names


def _load_clip_inputs(args):
    from .corpus import FaceSequence, VIDEO_FPS
    from .frontend import load_audio

    clip = Path(args.clip)
    faces_path = Path(args.faces) if args.faces else None
    labels_path = None
    if clip.is_dir():
        audio_path = clip / "audio.wav"
        if faces_path is None and (clip / "faces.avta").exists():
            faces_path = clip / "faces.avta"
        if (clip / "labels.jsonl").exists():
            labels_path = clip / "labels.jsonl"
    else:
        audio_path = clip
    if not audio_path.exists():
        raise FileNotFoundError(f"no audio at {audio_path}")
    wave = load_audio(audio_path, args.sample_rate)
    faces = None
    if faces_path is not None:
        t = archive.load(faces_path)
        faces = FaceSequence(t["frames"], float(t.get("fps", VIDEO_FPS)))
    return wave, faces, labels_path


def cmd_predict(args) -> int:
    import torch

    from .corpus import read_labels
    from .frontend import extract
    from .model import align_index, load_checkpoint, lut_combine

    cfg = load_config(args.config)
    dec = cfg["decode"]
    model = load_checkpoint(args.checkpoint)
    wave, faces, labels_path = _load_clip_inputs(args)
    if args.branch in ("av", "lut") and faces is None:
        raise FileNotFoundError(f"--branch {args.branch} needs face frames; none found for {args.clip}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    mel = extract(wave)
    hop = mel.frame_hop
    x = torch.from_numpy(mel.frames.astype(np.float32))[None]
    written = {}
    with torch.no_grad():
        if args.branch == "audio":
            res = model(x, branches=("audio",))
        else:
            idx = align_index(mel.n_frames, hop, len(faces), faces.fps)
            res = model(x, torch.from_numpy(faces.frames)[None], torch.from_numpy(idx)[None],
                        branches=("audio", "image") if args.branch == "lut" else ("audio", "image", "av"))
    tracks = {"audio": res["audio_probs"][0].numpy()}
    if "visual_probs" in res:
        tracks["visual"] = res["visual_probs"][0].numpy()
    if args.branch == "lut":
        tracks["lut"] = lut_combine(tracks["audio"], tracks["visual"], model.cfg.fusion.lut_threshold, model.rules)
    elif args.branch == "av":
        tracks["av"] = res["av_probs"][0].numpy()
    for name, tr in tracks.items():
        p = out / f"{name}_probs.csv"
        write_probs(p, tr, hop, VISUAL_NAMES if name == "visual" else AUDIO_NAMES)
        written[f"{name}_probs"] = p
    events = ev.probs_to_events(tracks[args.branch], hop, AUDIO_NAMES, dec["threshold"], dec["median_len"],
                                dec["min_dur"])
    ev.write_events(out / f"{args.branch}_events.csv", events)
    written["events"] = out / f"{args.branch}_events.csv"
    if labels_path is not None:
        labels = read_labels(labels_path, hop)
        ev.write_events(out / "reference_events.csv", ev.labels_to_events(labels.target, hop))
        written["reference_events"] = out / "reference_events.csv"
    print(f"{len(events)} {args.branch} events over {mel.n_frames} frames -> {out}")
    manifest = json.loads((Path(args.checkpoint) / "config.json").read_text())
    _write_manifest(out, "predict", cfg, None, {"checkpoint": args.checkpoint, "clip": args.clip,
                                                "branch": args.branch}, written, manifest["params_sha256"])
    return 0


# ---------------------------------------------------------------- score

def cmd_score(args) -> int:
    cfg = override(load_config(args.config), "score", collar=args.collar, segment_len=args.segment_len)
    ref, hyp = ev.read_events(args.ref), ev.read_events(args.hyp)
    classes = args.classes.split(",") if args.classes else None
    if args.mode == "event":
        report = ev.event_based_metrics(ref, hyp, cfg["score"]["collar"], classes)
    else:
        report = ev.segment_based_metrics(ref, hyp, cfg["score"]["segment_len"], classes=classes)
    print(report.summary())
    if report.note:
        print(report.note)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        ev.write_report(out / f"{args.mode}_report.json", report)
        _write_manifest(out, "score", cfg, None, {"ref": args.ref, "hyp": args.hyp, "mode": args.mode},
                        {"report": out / f"{args.mode}_report.json"})
    else:
        print(json.dumps(report.to_json()))
    return 0


# ---------------------------------------------------------------- plot

def cmd_plot(args) -> int:
    from .corpus import read_labels
    from .plotting import plot_timeline

    audio, hop, _ = read_probs(args.audio)
    visual, _, _ = read_probs(args.visual)
    av, _, _ = read_probs(args.av)
    labels = read_labels(Path(args.labels), hop) if args.labels else None
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    plot_timeline(audio, visual, av, hop, out, labels=labels, title=args.title)
    print(f"wrote {out}")
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="avvad", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic train/val/test corpus")
    s.add_argument("--config")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)
    s.add_argument("--force", action="store_true")
    s.add_argument("--n-train", type=int)
    s.add_argument("--n-val", type=int)
    s.add_argument("--n-test", type=int)
    s.add_argument("--duration", type=float)
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", help="train the three-branch model")
    t.add_argument("--config")
    t.add_argument("--data", required=True, help="dataset directory written by synth")
    t.add_argument("--out", required=True)
    t.add_argument("--seed", type=int)
    t.add_argument("--operator", choices=("sc", "mm", "hp", "lut"))
    t.add_argument("--epochs", type=int)
    t.add_argument("--force", action="store_true")
    t.set_defaults(func=cmd_train)

    r = sub.add_parser("predict", help="frame probabilities and events for one clip")
    r.add_argument("checkpoint")
    r.add_argument("clip", help="clip directory (audio.wav [faces.avta labels.jsonl]) or audio file")
    r.add_argument("--branch", choices=("audio", "av", "lut"), default="av")
    r.add_argument("--faces", help="face-frame tensor archive, overrides the clip directory")
    r.add_argument("--sample-rate", type=int, help="sample rate of raw float32 input")
    r.add_argument("--config")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_predict)

    c = sub.add_parser("score", help="score hypothesis events against reference events")
    c.add_argument("ref")
    c.add_argument("hyp")
    c.add_argument("--mode", choices=("event", "segment"), default="event")
    c.add_argument("--collar", type=float)
    c.add_argument("--segment-len", type=float)
    c.add_argument("--classes", help="comma-separated classes to score (default: all)")
    c.add_argument("--config")
    c.add_argument("--out")
    c.set_defaults(func=cmd_score)

    g = sub.add_parser("plot", help="render audio / visual / A-V timeline panels")
    g.add_argument("--audio", required=True)
    g.add_argument("--visual", required=True)
    g.add_argument("--av", required=True)
    g.add_argument("--labels")
    g.add_argument("--title")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    from .corpus import CorpusError, DatasetError
    from .model import ModelError, NumericError
    from .plotting import PlotError
    from .training import TrainingDiverged

    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"avvad {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingDiverged, NumericError) as exc:
        print(f"avvad {args.command}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DatasetError, CorpusError, FileNotFoundError, archive.ArchiveError, ev.EvaluationError,
            ModelError, PlotError, ValueError) as exc:
        print(f"avvad {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
