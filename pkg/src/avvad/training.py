"""Joint training of the three branches with the ten-term weighted BCE loss."""
from __future__ import annotations

import copy
import csv
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
import torch

from . import evaluation as ev
from .corpus import Clip, FrameLabelTrack
from .frontend import extract
from .model import AVVAD, ArchConfig, FusionConfig, NumericError, align_index
from .taxonomy import AV_HEADS, AUDIO_HEADS, VISUAL_HEADS, AudioClass, TargetClass, VisualClass

log = logging.getLogger(__name__)

LOSS_TERMS = ("a-sil", "a-spe", "a-sin", "a-oth", "v-voc", "v-non-voc", "av-sil", "av-spe", "av-sin", "av-oth")
EPS = 1e-7


class TrainingDiverged(RuntimeError):
    def __init__(self, msg, model=None, history=None):
        super().__init__(msg)
        self.model = model
        self.history = history


@dataclass(frozen=True)
class LossWeights:
    values: tuple = (1.0,) * 10

    def __post_init__(self):
        vals = tuple(float(x) for x in self.values)
        if len(vals) != 10:
            raise ValueError(f"need 10 loss weights, got {len(vals)}")
        if any(x < 0 or not math.isfinite(x) for x in vals):
            raise ValueError("loss weights must be finite and non-negative")
        object.__setattr__(self, "values", vals)

    @classmethod
    def only(cls, *groups: str) -> "LossWeights":
        """Unit weight on terms whose branch prefix is listed ('a', 'v', 'av')."""
        return cls(tuple(1.0 if t.split("-")[0] in groups else 0.0 for t in LOSS_TERMS))


@dataclass
class LossBreakdown:
    terms: dict
    total: object

    def as_floats(self) -> dict[str, float]:
        out = {k: float(torch.as_tensor(v).detach()) for k, v in self.terms.items()}
        out["total"] = float(torch.as_tensor(self.total).detach())
        return out


def bce(p, y):
    p = p.clamp(EPS, 1 - EPS)
    return -(y * torch.log(p) + (1 - y) * torch.log(1 - p)).mean()


def _targets(labels, device=None):
    """Class tracks -> one-hot tensors (…, T, K) per label space."""
    if isinstance(labels, FrameLabelTrack):
        labels = {"audio": labels.audio, "visual": labels.visual, "target": labels.target}
    out = {}
    for key, n in (("audio", len(AudioClass)), ("visual", len(VisualClass)), ("target", len(TargetClass))):
        idx = torch.as_tensor(np.asarray(labels[key]), dtype=torch.long)
        out[key] = torch.nn.functional.one_hot(idx, n).to(torch.get_default_dtype())
    return out


def total_loss(outputs: dict, targets, w: LossWeights = LossWeights()) -> LossBreakdown:
    """Per-head mean frame BCE, weighted sum over the ten heads.

    ``outputs`` holds audio_probs (…,4), visual_probs (…,2) and av_probs (…,4);
    ``targets`` is a FrameLabelTrack or dict of integer class tracks.
    """
    y = _targets(targets)
    cols = [("audio_probs", "audio", k) for k in range(4)] + \
           [("visual_probs", "visual", k) for k in range(2)] + \
           [("av_probs", "target", k) for k in range(4)]
    terms = {}
    total = 0.0
    for name, lam, (okey, tkey, k) in zip(LOSS_TERMS, w.values, cols):
        p = torch.as_tensor(outputs[okey])[..., k]
        term = bce(p, y[tkey][..., k].to(p.dtype))
        terms[name] = term
        total = total + lam * term
    return LossBreakdown(terms, total)


# ---------------------------------------------------------------- data preparation

@dataclass
class Prepared:
    clip_id: str
    mel: np.ndarray  # (T, 64) float32
    faces: np.ndarray  # (Tv, H, W) uint8
    index: np.ndarray  # (T,) video frame per audio frame
    labels: FrameLabelTrack


def prepare(clip: Clip) -> Prepared:
    mel = extract(clip.waveform)
    t = mel.n_frames
    if len(clip.labels) != t:
        raise ValueError(f"{clip.clip_id}: {len(clip.labels)} label frames vs {t} feature frames")
    idx = align_index(t, mel.frame_hop, len(clip.faces), clip.faces.fps)
    return Prepared(clip.clip_id, mel.frames.astype(np.float32), clip.faces.frames, idx, clip.labels)


def _batch(items: Sequence[tuple[Prepared, int, int]]):
    """Slice (prepared, start, length) chunks into one padded batch."""
    mels, idxs, windows, labs = [], [], [], {"audio": [], "visual": [], "target": []}
    for p, s, n in items:
        vidx = p.index[s:s + n]
        v0, v1 = int(vidx.min()), int(vidx.max())
        windows.append(p.faces[v0:v1 + 1])
        idxs.append(vidx - v0)
        mels.append(p.mel[s:s + n])
        for k in labs:
            labs[k].append(getattr(p.labels, k)[s:s + n])
    tv = max(w.shape[0] for w in windows)
    faces = np.stack([np.concatenate([w, np.repeat(w[-1:], tv - w.shape[0], 0)]) for w in windows])
    return (torch.from_numpy(np.stack(mels)), torch.from_numpy(faces),
            torch.from_numpy(np.stack(idxs)), {k: np.stack(v) for k, v in labs.items()})


def chunks(data: Sequence[Prepared], length: int, rng: np.random.Generator) -> list[tuple[Prepared, int, int]]:
    out = []
    for p in data:
        t = p.mel.shape[0]
        if t <= length:
            out.append((p, 0, t))
            continue
        starts = list(range(int(rng.integers(0, length)), t - length + 1, length)) or [t - length]
        out.extend((p, s, length) for s in starts)
    order = rng.permutation(len(out))
    return [out[k] for k in order]


# ---------------------------------------------------------------- training

@dataclass
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 8
    epochs: int = 15
    dropout: float = 0.3
    seed: int = 0
    operator: str = "hp"
    loss_weights: tuple = (1.0,) * 10
    chunk_frames: int = 96
    threads: int = 1
    betas: tuple = (0.9, 0.999)

    def __post_init__(self):
        if self.lr <= 0 or self.batch_size < 1 or self.epochs < 1 or self.chunk_frames < 1:
            raise ValueError("learning rate, batch size, epochs and chunk length must be positive")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must lie in [0, 1)")
        FusionConfig(operator=self.operator)
        LossWeights(self.loss_weights)

    def to_dict(self):
        return asdict(self)


@dataclass
class TrainResult:
    model: AVVAD
    history: list = field(default_factory=list)
    best_epoch: int = 0


def predict(model: AVVAD, p: Prepared, branches=("audio", "image", "av")) -> dict[str, np.ndarray]:
    """Full-length inference on one prepared clip; (T, K) numpy arrays."""
    model.eval()
    with torch.no_grad():
        mel = torch.from_numpy(p.mel)[None]
        if branches == ("audio",):
            out = model(mel, branches=branches)
        else:
            out = model(mel, torch.from_numpy(p.faces)[None], torch.from_numpy(p.index)[None], branches=branches)
    return {k: v[0].numpy() for k, v in out.items() if k.endswith("probs")}


def score_branch(probs: Sequence[np.ndarray], labels: Sequence[FrameLabelTrack], mode: str = "event",
                 classes=ev.VOICE_CLASSES, **decode) -> ev.MetricReport:
    """Decode (T, 4) target-space tracks and score against the anchor-attributed labels."""
    reports = []
    for pr, lab in zip(probs, labels):
        hyp = ev.probs_to_events(pr, lab.hop, **decode)
        ref = ev.labels_to_events(lab.target, lab.hop)
        if mode == "event":
            reports.append(ev.event_based_metrics(ref, hyp, classes=classes))
        else:
            reports.append(ev.segment_based_metrics(ref, hyp, duration=len(lab) * lab.hop, classes=classes))
    return ev.combine(reports)


def evaluate(model: AVVAD, data: Sequence[Prepared], w: LossWeights = LossWeights()) -> dict:
    terms = {k: 0.0 for k in LOSS_TERMS + ("total",)}
    frames = 0
    outs = []
    for p in data:
        out = predict(model, p)
        outs.append(out)
        lb = total_loss({k: torch.from_numpy(v) for k, v in out.items()}, p.labels, w).as_floats()
        n = p.mel.shape[0]
        for k in terms:
            terms[k] += lb[k] * n
        frames += n
    res = {f"val_{k}": v / frames for k, v in terms.items()}
    labels = [p.labels for p in data]
    res["val_audio_f"] = score_branch([o["audio_probs"] for o in outs], labels).f
    res["val_av_f"] = score_branch([o["av_probs"] for o in outs], labels).f
    return res


def train(train_clips: Sequence, val_clips: Sequence, cfg: TrainConfig = TrainConfig(),
          arch: ArchConfig | None = None, on_epoch: Callable[[dict], None] | None = None) -> TrainResult:
    """Adam on the composite loss; keeps the parameters of the best validation epoch."""
    if not train_clips or not val_clips:
        raise ValueError("training needs non-empty train and validation splits")
    torch.set_num_threads(cfg.threads)
    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    tr = [c if isinstance(c, Prepared) else prepare(c) for c in train_clips]
    va = [c if isinstance(c, Prepared) else prepare(c) for c in val_clips]
    arch = copy.deepcopy(arch) if arch is not None else ArchConfig()
    arch.dropout = cfg.dropout
    arch.fusion = FusionConfig(cfg.operator, arch.fusion.wiring, arch.fusion.lut_threshold)
    model = AVVAD(arch)
    w = LossWeights(cfg.loss_weights)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr, betas=cfg.betas)

    history = []
    best = (math.inf, 0, copy.deepcopy(model.state_dict()))
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.time()
        model.train()
        sums = {k: 0.0 for k in LOSS_TERMS + ("total",)}
        batches = chunks(tr, cfg.chunk_frames, rng)
        n_batches = 0
        for b in range(0, len(batches), cfg.batch_size):
            mel, faces, index, labs = _batch(batches[b:b + cfg.batch_size])
            try:
                out = model(mel, faces, index)
            except NumericError as exc:
                model.load_state_dict(best[2])
                raise TrainingDiverged(f"epoch {epoch}: {exc}", model, history) from exc
            lb = total_loss(out, labs, w)
            if not torch.isfinite(lb.total):
                model.load_state_dict(best[2])
                raise TrainingDiverged(f"epoch {epoch}: non-finite loss", model, history)
            opt.zero_grad()
            lb.total.backward()
            opt.step()
            for k, v in lb.as_floats().items():
                sums[k] += v
            n_batches += 1
        row = {"epoch": epoch}
        row.update({f"train_{k}": v / n_batches for k, v in sums.items()})
        row.update(evaluate(model, va, w))
        row["seconds"] = round(time.time() - t0, 2)
        history.append(row)
        if row["val_total"] < best[0]:
            best = (row["val_total"], epoch, copy.deepcopy(model.state_dict()))
        log.info("epoch %d train %.4f val %.4f audio-F %.1f av-F %.1f (%.0fs)", epoch, row["train_total"],
                 row["val_total"], row["val_audio_f"], row["val_av_f"], row["seconds"])
        if on_epoch:
            on_epoch(row)
    model.load_state_dict(best[2])
    model.eval()
    return TrainResult(model, history, best[1])


def write_history(path, history: Sequence[dict]) -> None:
    if not history:
        return
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(history[0]))
        w.writeheader()
        for row in history:
            w.writerow(row)


# ---------------------------------------------------------------- gradient check

def tiny_arch(operator: str = "hp") -> ArchConfig:
    """Down-scaled architecture (a few thousand parameters) for finite-difference checks."""
    return ArchConfig(audio_channels=(2, 2, 2), gru_hidden=4, emb_dim=4, image_size=16,
                      image_channels=(2, 2, 2), image_context=3, dropout=0.0,
                      fusion=FusionConfig(operator=operator))


def n_params(model: torch.nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


def random_sample(arch: ArchConfig, n_frames: int = 12, seed: int = 0):
    g = np.random.default_rng(seed)
    tv = n_frames // 2 + 1
    mel = torch.from_numpy(g.normal(0, 1, (1, n_frames, arch.n_mels)))
    faces = torch.from_numpy(g.integers(0, 256, (1, tv, arch.image_size, arch.image_size), dtype=np.uint8))
    index = torch.from_numpy(np.minimum(np.arange(n_frames) // 2, tv - 1))[None]
    labels = {"audio": g.integers(0, 4, (1, n_frames)), "visual": g.integers(0, 2, (1, n_frames))}
    labels["target"] = g.integers(0, 4, (1, n_frames))
    return mel, faces, index, labels


def model_loss(model: AVVAD, sample, w: LossWeights = LossWeights()):
    mel, faces, index, labels = sample
    return total_loss(model(mel, faces, index), labels, w).total


def gradient_check(model: AVVAD, loss: Callable, sample, n_probes: int = 10, step: float = 1e-5,
                   seed: int = 0, min_grad: float = 1e-6) -> float:
    """Max relative error between autograd and central differences over random parameter entries.

    Runs in float64, eval mode. Entries whose analytic gradient is below
    ``min_grad`` are not drawn as probes (relative error is meaningless there).
    """
    model = copy.deepcopy(model).double().eval()
    sample = tuple(s.double() if torch.is_tensor(s) and s.is_floating_point() else s for s in sample)
    params = [p for p in model.parameters() if p.requires_grad]
    model.zero_grad()
    loss(model, sample).backward()
    grads = torch.cat([p.grad.reshape(-1) for p in params])
    candidates = torch.nonzero(grads.abs() >= min_grad).squeeze(-1).numpy()
    if candidates.size == 0:
        raise ValueError("no parameter has a usable gradient")
    rng = np.random.default_rng(seed)
    probes = rng.choice(candidates, size=min(n_probes, candidates.size), replace=False)
    offsets = np.cumsum([0] + [p.numel() for p in params])
    worst = 0.0
    with torch.no_grad():
        for flat in probes:
            k = int(np.searchsorted(offsets, flat, side="right") - 1)
            entry = params[k].view(-1)
            j = int(flat - offsets[k])
            orig = entry[j].item()
            entry[j] = orig + step
            up = loss(model, sample).item()
            entry[j] = orig - step
            down = loss(model, sample).item()
            entry[j] = orig
            fd = (up - down) / (2 * step)
            g = grads[flat].item()
            worst = max(worst, abs(g - fd) / max(abs(g), abs(fd)))
    return worst
