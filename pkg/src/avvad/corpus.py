"""Synthetic audio-visual clips with exact frame labels, and the on-disk dataset format.

Audio proxies stand in for real sources: band-limited noise bursts for
speech, harmonic stacks with vibrato for singing, drum/chord loops for
music. Faces are rendered grayscale glyphs whose mouth aperture follows the
anchor's vocal activity.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.signal import butter, fftconvolve, sosfilt

from . import archive
from .frontend import SAMPLE_RATE, Waveform, frame_params, n_frames_for, read_wav, write_wav
from .taxonomy import DEFAULT_RULES, AudioClass, RuleTable, TargetClass, VisualClass

log = logging.getLogger(__name__)

VIDEO_FPS = 25.0
FACE_SIZE = 64

ANCHOR_SOURCES = ("anchor-speech", "anchor-singing", "anchor-nonverbal")
BACKGROUND_SOURCES = ("background-speech", "background-singing", "music", "noise")
SOURCES = ANCHOR_SOURCES + BACKGROUND_SOURCES

_SOURCE_CLASS = {
    "anchor-speech": AudioClass.SPEECH,
    "background-speech": AudioClass.SPEECH,
    "anchor-singing": AudioClass.SINGING,
    "background-singing": AudioClass.SINGING,
    "anchor-nonverbal": AudioClass.OTHERS,
    "music": AudioClass.OTHERS,
    "noise": AudioClass.OTHERS,
}
# overlap tie-break: Singing > Speech > Others > Silence
_PRIORITY = {AudioClass.SINGING: 3, AudioClass.SPEECH: 2, AudioClass.OTHERS: 1, AudioClass.SILENCE: 0}


class CorpusError(ValueError):
    pass


class DatasetError(IOError):
    pass


@dataclass(frozen=True)
class SourceEvent:
    onset: float
    offset: float
    source: str


@dataclass(frozen=True)
class ClipSpec:
    duration: float
    events: tuple[SourceEvent, ...]
    seed: int

    def validate(self) -> None:
        if self.duration <= 0:
            raise CorpusError("duration must be positive")
        for ev in self.events:
            if ev.source not in SOURCES:
                raise CorpusError(f"unknown source {ev.source!r}")
            if not 0 <= ev.onset < ev.offset <= self.duration + 1e-9:
                raise CorpusError(f"span {ev.onset}-{ev.offset} outside [0, {self.duration}]")
        anchor = sorted((e for e in self.events if e.source in ANCHOR_SOURCES), key=lambda e: e.onset)
        for a, b in zip(anchor, anchor[1:]):
            if b.onset < a.offset and a.source != b.source:
                raise CorpusError(f"anchor cannot do {a.source} and {b.source} at once "
                                  f"({b.onset:.3f}s < {a.offset:.3f}s)")

    def to_json(self) -> dict:
        return {"duration_s": self.duration, "seed": self.seed,
                "events": [[e.onset, e.offset, e.source] for e in self.events]}

    @classmethod
    def from_json(cls, d: dict) -> "ClipSpec":
        return cls(d["duration_s"], tuple(SourceEvent(*e) for e in d.get("events") or ()), d["seed"])


@dataclass
class FaceSequence:
    frames: np.ndarray  # (Tv, H, W) uint8
    fps: float = VIDEO_FPS

    def __post_init__(self):
        if self.frames.ndim != 3 or self.frames.dtype != np.uint8:
            raise CorpusError(f"face frames must be (T, H, W) uint8, got {self.frames.shape} {self.frames.dtype}")

    def __len__(self):
        return self.frames.shape[0]


@dataclass
class FrameLabelTrack:
    hop: float
    audio: np.ndarray
    visual: np.ndarray
    target: np.ndarray

    def __post_init__(self):
        self.audio = np.asarray(self.audio, dtype=np.int64)
        self.visual = np.asarray(self.visual, dtype=np.int64)
        self.target = np.asarray(self.target, dtype=np.int64)
        if not (len(self.audio) == len(self.visual) == len(self.target)):
            raise CorpusError("label tracks differ in length")

    def __len__(self):
        return len(self.audio)

    def consistent_with(self, rules: RuleTable = DEFAULT_RULES) -> bool:
        return bool(np.array_equal(self.target, rules.apply_frames(self.audio, self.visual)))


@dataclass
class Clip:
    clip_id: str
    waveform: Waveform
    faces: FaceSequence
    labels: FrameLabelTrack
    spec: ClipSpec | None = None
    split: str = "train"

    @property
    def duration(self) -> float:
        return self.waveform.duration


# ---------------------------------------------------------------- scenario sampling

@dataclass(frozen=True)
class SceneProfile:
    """Sampling weights for the anchor and background layers of a clip."""

    anchor: tuple[float, float, float, float] = (0.45, 0.2, 0.22, 0.13)  # silent, speech, singing, nonverbal
    background: tuple[float, ...] = (0.05, 0.35, 0.35, 0.15, 0.1)  # none, bg-speech, bg-singing, music, noise
    segment: tuple[float, float] = (0.8, 2.4)
    idle_mouth_rate: float = 0.3  # non-vocal mouth openings per second


_ANCHOR_STATES = (None, "anchor-speech", "anchor-singing", "anchor-nonverbal")
_BG_STATES = (None, "background-speech", "background-singing", "music", "noise")


def _layer(rng, duration, states, weights, segment, short=()):
    events = []
    t = float(rng.uniform(0.0, 0.4))
    p = np.asarray(weights, dtype=float) / np.sum(weights)
    while t < duration - 0.25:
        state = states[rng.choice(len(states), p=p)]
        length = rng.uniform(0.3, 0.8) if state in short else rng.uniform(*segment)
        end = min(t + length, duration)
        if state is not None:
            events.append(SourceEvent(round(t, 3), round(end, 3), state))
        t = end + float(rng.uniform(0.0, 0.3))
    return events


def _subtract(ev: SourceEvent, holes: Sequence[SourceEvent], min_len=0.2) -> list[SourceEvent]:
    pieces = [(ev.onset, ev.offset)]
    for h in holes:
        nxt = []
        for a, b in pieces:
            if h.offset <= a or h.onset >= b:
                nxt.append((a, b))
                continue
            if h.onset - a >= min_len:
                nxt.append((a, h.onset))
            if b - h.offset >= min_len:
                nxt.append((h.offset, b))
        pieces = nxt
    return [SourceEvent(a, b, ev.source) for a, b in pieces]


def random_clip_spec(seed: int, duration: float = 8.0, profile: SceneProfile = SceneProfile()) -> ClipSpec:
    rng = np.random.default_rng([seed, 1])
    anchor = _layer(rng, duration, _ANCHOR_STATES, profile.anchor, profile.segment, short=("anchor-nonverbal",))
    background = _layer(rng, duration, _BG_STATES, profile.background, profile.segment)
    # background voices may sit under the anchor's singing, never under its speech or non-verbal sounds
    holes = [e for e in anchor if e.source in ("anchor-speech", "anchor-nonverbal")]
    kept = []
    for ev in background:
        if ev.source in ("background-speech", "background-singing"):
            kept.extend(_subtract(ev, holes))
        else:
            kept.append(ev)
    events = tuple(sorted(anchor + kept, key=lambda e: (e.onset, e.source)))
    return ClipSpec(duration, events, seed)


# ---------------------------------------------------------------- audio proxies

def _band(rng, n, lo, hi, sr=SAMPLE_RATE, order=2):
    sos = butter(order, [lo, min(hi, 0.45 * sr)], btype="bandpass", fs=sr, output="sos")
    return sosfilt(sos, rng.standard_normal(n))


def _envelope(n, attack, release):
    env = np.ones(n)
    a, r = min(attack, n // 2), min(release, n // 2)
    if a:
        env[:a] = np.linspace(0, 1, a)
    if r:
        env[n - r:] = np.linspace(1, 0, r)
    return env


def _rms_norm(x):
    rms = np.sqrt(np.mean(x ** 2)) if x.size else 0.0
    return x / rms if rms > 0 else x


@dataclass(frozen=True)
class Voice:
    f0: tuple[float, float]
    formant: tuple[float, float]
    gain: float
    far: bool  # background voices are lowpassed and reverberant


def _speech(rng, n, voice: Voice, sr=SAMPLE_RATE):
    out, env = np.zeros(n), np.zeros(n)
    pos = int(rng.uniform(0, 0.04) * sr)
    while pos < n:
        syl = int(rng.uniform(0.08, 0.25) * sr)
        seg = min(syl, n - pos)
        if seg < 64:
            break
        fc = rng.uniform(*voice.formant)
        burst = _band(rng, seg, fc * 0.6, fc * 1.5) + 0.5 * _band(rng, seg, 2.2 * fc, 3.2 * fc)
        shape = np.sin(np.pi * np.arange(seg) / seg) ** 0.7
        out[pos:pos + seg] = _rms_norm(burst) * shape
        env[pos:pos + seg] = shape
        pos += syl + int(rng.uniform(0.03, 0.12) * sr)
    return out, env


def _singing(rng, n, voice: Voice, sr=SAMPLE_RATE):
    out, env = np.zeros(n), np.zeros(n)
    pos = 0
    phase = 0.0
    while pos < n:
        note = min(int(rng.uniform(0.3, 0.8) * sr), n - pos)
        f0 = rng.uniform(*voice.f0)
        t = np.arange(note) / sr
        vib = 1.0 + rng.uniform(0.015, 0.03) * np.sin(2 * np.pi * rng.uniform(5.0, 6.5) * t)
        inst = np.cumsum(2 * np.pi * f0 * vib / sr) + phase
        phase = inst[-1] if note else phase
        fc = rng.uniform(*voice.formant)
        tone = np.zeros(note)
        for h in range(1, 9):
            if h * f0 > 0.45 * sr:
                break
            tone += np.exp(-((h * f0 - fc) / 900.0) ** 2) / h * np.sin(h * inst)
        shape = _envelope(note, int(0.03 * sr), int(0.05 * sr))
        out[pos:pos + note] = _rms_norm(tone) * shape
        env[pos:pos + note] = shape
        pos += note
    return out, env


def _music(rng, n, sr=SAMPLE_RATE):
    loop_len = int(rng.uniform(1.0, 2.0) * sr)
    loop = np.zeros(loop_len)
    beats = int(rng.integers(4, 9))
    step = loop_len // beats
    for b in range(beats):
        start = b * step
        k = np.arange(min(int(0.15 * sr), loop_len - start)) / sr
        if b % 2 == 0:
            loop[start:start + k.size] += np.sin(2 * np.pi * 55 * k) * np.exp(-k * 25) * 2.0
        hat = min(int(0.04 * sr), loop_len - start)
        loop[start:start + hat] += _band(rng, hat, 5000, 7500) * np.exp(-np.arange(hat) / (0.01 * sr)) * 0.8
    t = np.arange(loop_len) / sr
    root = rng.uniform(90, 180)
    for ratio in (1.0, 1.25, 1.5):
        loop += 0.25 * np.sin(2 * np.pi * root * ratio * t) + 0.08 * np.sin(4 * np.pi * root * ratio * t)
    reps = -(-n // loop_len)
    return _rms_norm(np.tile(loop, reps)[:n])


def _noise(rng, n, sr=SAMPLE_RATE):
    hiss = sosfilt(butter(1, 1500, fs=sr, output="sos"), rng.standard_normal(n))
    t = np.arange(n) / sr
    return _rms_norm(hiss + 0.3 * np.sin(2 * np.pi * 50 * t))


def _nonverbal(rng, n, sr=SAMPLE_RATE):
    out, env = np.zeros(n), np.zeros(n)
    rate = rng.uniform(4.0, 6.0)
    period = int(sr / rate)
    for start in range(0, n, period):
        seg = min(int(period * 0.6), n - start)
        if seg < 32:
            break
        shape = np.exp(-np.arange(seg) / (0.03 * sr))
        out[start:start + seg] = _band(rng, seg, 800, 6000) * shape
        env[start:start + seg] = shape
    return _rms_norm(out), env


def _room(rng, x, sr=SAMPLE_RATE):
    ir_len = int(0.06 * sr)
    ir = rng.standard_normal(ir_len) * np.exp(-np.arange(ir_len) / (0.015 * sr))
    ir[0] = 3.0
    y = fftconvolve(x, ir)[: x.size]
    y = sosfilt(butter(4, 2500, fs=sr, output="sos"), y)
    return _rms_norm(y) if np.any(x) else y


# ---------------------------------------------------------------- face rendering

def _render_faces(rng, aperture: np.ndarray, size=FACE_SIZE) -> np.ndarray:
    tv = aperture.size
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    s = size / 64.0
    jitter = np.cumsum(rng.normal(0, 0.4, (tv, 2)), axis=0)
    jitter = np.clip(jitter - np.linspace(0, 1, tv)[:, None] * jitter[-1:], -3, 3) * s
    bg = rng.uniform(40, 90)
    skin = rng.uniform(150, 200)
    blink = rng.random(tv) < 0.04
    frames = np.empty((tv, size, size), dtype=np.uint8)
    for j in range(tv):
        cx, cy = 32 * s + jitter[j, 0], 30 * s + jitter[j, 1]
        img = np.full((size, size), bg)
        face = ((xx - cx) / (20 * s)) ** 2 + ((yy - cy) / (26 * s)) ** 2 <= 1
        img[face] = skin
        eye_h = 0.6 if blink[j] else 2.5
        for ex in (-8, 8):
            eye = ((xx - cx - ex * s) / (2.5 * s)) ** 2 + ((yy - cy + 6 * s) / (eye_h * s)) ** 2 <= 1
            img[eye] = 30
        mouth_h = (1.0 + 10.0 * aperture[j]) * s
        mouth = ((xx - cx) / (12 * s)) ** 2 + ((yy - cy - 14 * s) / mouth_h) ** 2 <= 1
        img[mouth] = 35
        img = img * rng.uniform(0.97, 1.03) + rng.normal(0, 5, img.shape)
        frames[j] = np.clip(np.round(img), 0, 255).astype(np.uint8)
    return frames


# ---------------------------------------------------------------- clip synthesis

def frame_times(n_frames: int, hop_s: float) -> np.ndarray:
    """Centre time of each label frame; frame i spans [i*hop, (i+1)*hop)."""
    return (np.arange(n_frames) + 0.5) * hop_s


def label_frames(spec: ClipSpec, n_frames: int, hop_s: float,
                 rules: RuleTable = DEFAULT_RULES) -> FrameLabelTrack:
    t = frame_times(n_frames, hop_s)
    audio = np.zeros(n_frames, dtype=np.int64)
    prio = np.zeros(n_frames, dtype=np.int64)
    visual = np.full(n_frames, int(VisualClass.NON_VOCALIZING), dtype=np.int64)
    for ev in spec.events:
        on = (t >= ev.onset) & (t < ev.offset)
        cls = _SOURCE_CLASS[ev.source]
        upd = on & (_PRIORITY[cls] > prio)
        audio[upd] = int(cls)
        prio[upd] = _PRIORITY[cls]
        if ev.source in ANCHOR_SOURCES:
            visual[on] = int(VisualClass.VOCALIZING)
    return FrameLabelTrack(hop_s, audio, visual, rules.apply_frames(audio, visual))


def synth_clip(spec: ClipSpec, clip_id: str = "", split: str = "train",
               rules: RuleTable = DEFAULT_RULES, profile: SceneProfile = SceneProfile()) -> Clip:
    """Render audio, faces and exact labels for ``spec``; bit-identical for equal specs."""
    spec.validate()
    sr = SAMPLE_RATE
    rng = np.random.default_rng([spec.seed, 2])
    n = int(round(spec.duration * sr))
    mix = np.zeros(n)
    anchor_env = np.zeros(n)
    anchor_mode = np.zeros(n, dtype=np.int8)  # 1 speech, 2 singing, 3 nonverbal
    high = rng.random() < 0.5
    anchor_voice = Voice(f0=(220, 420) if high else (110, 220),
                         formant=(500, 1400) if high else (350, 1100),
                         gain=rng.uniform(0.25, 0.45), far=False)
    for ev in spec.events:
        a, b = int(round(ev.onset * sr)), min(n, int(round(ev.offset * sr)))
        if b <= a:
            continue
        m = b - a
        env = None
        if ev.source.endswith("speech") or ev.source.endswith("singing"):
            if ev.source.startswith("anchor"):
                voice = anchor_voice
            else:
                hi = rng.random() < 0.5
                voice = Voice(f0=(200, 400) if hi else (100, 200), formant=(400, 1300),
                              gain=rng.uniform(0.1, 0.3), far=True)
            sig, env = (_speech if ev.source.endswith("speech") else _singing)(rng, m, voice)
            if voice.far:
                sig = _room(rng, sig)
            sig = sig * voice.gain
        elif ev.source == "anchor-nonverbal":
            sig, env = _nonverbal(rng, m)
            sig = sig * anchor_voice.gain * 0.8
        elif ev.source == "music":
            sig = _music(rng, m) * rng.uniform(0.05, 0.15)
        else:
            sig = _noise(rng, m) * rng.uniform(0.03, 0.08)
        fade = _envelope(m, int(0.01 * sr), int(0.01 * sr))
        mix[a:b] += sig * fade
        if ev.source in ANCHOR_SOURCES:
            anchor_env[a:b] = np.maximum(anchor_env[a:b], env)
            anchor_mode[a:b] = ANCHOR_SOURCES.index(ev.source) + 1
    mix += rng.normal(0, 1e-4, n)
    peak = np.max(np.abs(mix))
    if peak > 0.98:
        mix *= 0.98 / peak
    # store on the 16-bit grid so the WAV round trip is lossless
    mix = np.clip(np.round(mix * 32768.0), -32768, 32767) / 32768.0
    waveform = Waveform(mix, sr)

    tv = int(np.ceil(spec.duration * VIDEO_FPS))
    tvid = np.arange(tv) / VIDEO_FPS
    idx = np.minimum((tvid * sr).astype(np.int64), n - 1)
    win = int(0.02 * sr)
    smooth = np.convolve(anchor_env, np.ones(win) / win, mode="same")[idx]
    mode = anchor_mode[idx]
    aperture = 0.05 + np.abs(rng.normal(0, 0.03, tv))
    speech = mode == 1
    aperture[speech] = 0.25 + 0.6 * smooth[speech]
    sing = mode == 2
    aperture[sing] = 0.5 + 0.3 * smooth[sing] + rng.normal(0, 0.05, sing.sum())
    nonverbal = mode == 3
    aperture[nonverbal] = 0.45 + 0.4 * np.abs(np.sin(2 * np.pi * 5 * tvid[nonverbal]))
    # idle mouth openings (smiles, breaths) while the anchor is silent
    n_idle = rng.poisson(profile.idle_mouth_rate * spec.duration)
    for _ in range(n_idle):
        start = rng.uniform(0, spec.duration)
        span = (tvid >= start) & (tvid < start + rng.uniform(0.3, 1.2)) & (mode == 0)
        aperture[span] = rng.uniform(0.3, 0.6) + rng.normal(0, 0.02, span.sum())
    faces = FaceSequence(_render_faces(rng, np.clip(aperture, 0, 1)), VIDEO_FPS)

    _, hop = frame_params(sr)
    labels = label_frames(spec, n_frames_for(n, frame_params(sr)[0], hop), hop / sr, rules)
    return Clip(clip_id or f"clip-{spec.seed}", waveform, faces, labels, spec, split)


@dataclass
class CorpusConfig:
    n_train: int = 120
    n_val: int = 20
    n_test: int = 60
    duration: float = 8.0
    seed: int = 0
    profile: SceneProfile = field(default_factory=SceneProfile)

    def splits(self) -> dict[str, int]:
        return {"train": self.n_train, "val": self.n_val, "test": self.n_test}


def clip_seed(seed: int, split: str, index: int) -> int:
    return int(np.random.SeedSequence([seed, ("train", "val", "test").index(split), index]).generate_state(1)[0])


def generate_corpus(cfg: CorpusConfig, rules: RuleTable = DEFAULT_RULES) -> list[Clip]:
    if sum(cfg.splits().values()) <= 0:
        raise CorpusError("corpus config requests zero clips")
    clips = []
    for split, count in cfg.splits().items():
        for i in range(count):
            spec = random_clip_spec(clip_seed(cfg.seed, split, i), cfg.duration, cfg.profile)
            clips.append(synth_clip(spec, f"{split}-{i:04d}", split, rules, cfg.profile))
    return clips


def background_voice_fraction(clips: Iterable[Clip]) -> float:
    """Share of voiced frames where the voice is not the anchor's."""
    voiced = bg = 0
    for c in clips:
        v = np.isin(c.labels.audio, (AudioClass.SPEECH, AudioClass.SINGING))
        voiced += int(v.sum())
        bg += int((v & (c.labels.visual == VisualClass.NON_VOCALIZING)).sum())
    return bg / voiced if voiced else 0.0


def class_durations(clips: Iterable[Clip]) -> dict[str, dict[str, float]]:
    out = {"audio": {c.label: 0.0 for c in AudioClass}, "target": {c.label: 0.0 for c in TargetClass}}
    for clip in clips:
        hop = clip.labels.hop
        for cls in AudioClass:
            out["audio"][cls.label] += float(np.sum(clip.labels.audio == cls)) * hop
        for cls in TargetClass:
            out["target"][cls.label] += float(np.sum(clip.labels.target == cls)) * hop
    return out


# ---------------------------------------------------------------- dataset directory

MANIFEST = "manifest.json"


def write_labels(path: Path, labels: FrameLabelTrack) -> None:
    with open(path, "w") as fh:
        for i, (a, v, t) in enumerate(zip(labels.audio, labels.visual, labels.target)):
            fh.write(json.dumps({"frame": i, "audio": AudioClass(a).label,
                                 "visual": VisualClass(v).label, "target": TargetClass(t).label}) + "\n")


def read_labels(path: Path, hop: float) -> FrameLabelTrack:
    audio, visual, target = [], [], []
    with open(path) as fh:
        for i, line in enumerate(fh):
            row = json.loads(line)
            if row["frame"] != i:
                raise DatasetError(f"{path}: frame index {row['frame']} out of order at line {i + 1}")
            audio.append(AudioClass.parse(row["audio"]))
            visual.append(VisualClass.parse(row["visual"]))
            target.append(TargetClass.parse(row["target"]))
    return FrameLabelTrack(hop, audio, visual, target)


def write_dataset(clips: Sequence[Clip], root, rules: RuleTable = DEFAULT_RULES) -> dict:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    entries = []
    for clip in clips:
        cdir = root / clip.clip_id
        cdir.mkdir(exist_ok=True)
        paths = {"audio": f"{clip.clip_id}/audio.wav", "faces": f"{clip.clip_id}/faces.avta",
                 "labels": f"{clip.clip_id}/labels.jsonl"}
        write_wav(root / paths["audio"], clip.waveform)
        archive.save(root / paths["faces"], {"frames": clip.faces.frames,
                                             "fps": np.array(clip.faces.fps, dtype=np.float64)})
        write_labels(root / paths["labels"], clip.labels)
        entries.append({
            "clip_id": clip.clip_id,
            "duration_s": clip.spec.duration if clip.spec else clip.duration,
            "seed": clip.spec.seed if clip.spec else None,
            "split": clip.split,
            "paths": paths,
            "sha256": {k: archive.sha256_file(root / p) for k, p in paths.items()},
            "hop_s": clip.labels.hop,
            "events": clip.spec.to_json()["events"] if clip.spec else None,
        })
    manifest = {"format": "avvad-dataset", "version": 1, "sample_rate": SAMPLE_RATE,
                "video_fps": VIDEO_FPS, "rules": rules.to_dict(), "clips": entries}
    (root / MANIFEST).write_text(json.dumps(manifest, indent=1))
    return manifest


def read_manifest(root) -> dict:
    path = Path(root) / MANIFEST
    if not path.exists():
        raise DatasetError(f"no {MANIFEST} in {root}")
    return json.loads(path.read_text())


def read_dataset(root, splits: Iterable[str] | None = None, verify: bool = True) -> list[Clip]:
    """Load clips back; a missing or corrupted file raises naming the clip."""
    root = Path(root)
    manifest = read_manifest(root)
    wanted = set(splits) if splits is not None else None
    clips = []
    for e in manifest["clips"]:
        if wanted is not None and e["split"] not in wanted:
            continue
        cid = e["clip_id"]
        for kind, rel in e["paths"].items():
            p = root / rel
            if not p.exists():
                raise DatasetError(f"clip {cid}: missing {kind} file {rel}")
            if verify and "sha256" in e and archive.sha256_file(p) != e["sha256"][kind]:
                raise DatasetError(f"clip {cid}: checksum mismatch for {kind} file {rel}")
        try:
            faces = archive.load(root / e["paths"]["faces"])
        except archive.ArchiveError as exc:
            raise DatasetError(f"clip {cid}: {exc}") from exc
        spec = None
        if e.get("events") is not None and e.get("seed") is not None:
            spec = ClipSpec.from_json({"duration_s": e["duration_s"], "seed": e["seed"], "events": e["events"]})
        clips.append(Clip(cid, read_wav(root / e["paths"]["audio"]),
                          FaceSequence(faces["frames"], float(faces.get("fps", VIDEO_FPS))),
                          read_labels(root / e["paths"]["labels"], e["hop_s"]), spec, e["split"]))
    return clips


def ingest_external(root) -> list[Clip]:
    """Ingest an externally provided corpus laid out like ours (no generator specs needed).

    Audio is resampled to the canonical rate on load; no data ships with the package.
    """
    from .frontend import to_canonical

    clips = read_dataset(root, verify=False)
    return [replace(c, waveform=to_canonical(c.waveform)) for c in clips]
