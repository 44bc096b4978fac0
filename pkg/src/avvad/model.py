"""Three-branch network: audio CRNN, image CNN and the rule-wired A-V fusion branch."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from . import archive
from .taxonomy import AUDIO_HEADS, AV_HEADS, DEFAULT_RULES, VISUAL_HEADS, RuleTable, TargetClass

OPERATORS = ("sc", "mm", "hp", "lut")


class ModelError(ValueError):
    pass


class NumericError(ArithmeticError):
    pass


def rule_wiring(rules: RuleTable = DEFAULT_RULES) -> dict[str, list[tuple[str, str]]]:
    """One (audio head, visual head) pair per rule-table cell, grouped by target head."""
    return {AV_HEADS[t]: [(AUDIO_HEADS[a], VISUAL_HEADS[v]) for a, v in rules.cells(t)]
            for t in TargetClass}


@dataclass
class FusionConfig:
    operator: str = "hp"
    wiring: dict = field(default_factory=rule_wiring)
    lut_threshold: float = 0.5

    def __post_init__(self):
        self.operator = self.operator.lower()
        if self.operator not in OPERATORS:
            raise ModelError(f"unknown fusion operator {self.operator!r}; choose from {OPERATORS}")
        if not 0 < self.lut_threshold < 1:
            raise ModelError("LuT threshold must lie in (0, 1)")
        self.wiring = {h: [tuple(p) for p in pairs] for h, pairs in self.wiring.items()}
        for head in AV_HEADS:
            pairs = self.wiring.get(head)
            if not pairs:
                raise ModelError(f"A-V head {head} has no wired (audio, visual) pair")
            for a, v in pairs:
                if a not in AUDIO_HEADS or v not in VISUAL_HEADS:
                    raise ModelError(f"bad wiring pair ({a}, {v}) for {head}")


@dataclass
class ArchConfig:
    """Every layer size lives here; checkpoints store it as their manifest."""

    n_mels: int = 64
    audio_channels: tuple = (16, 32, 64)
    kernel: int = 3
    gru_hidden: int = 128
    emb_dim: int = 128
    image_size: int = 64
    image_channels: tuple = (8, 16, 32)
    image_context: int = 5
    dropout: float = 0.3
    fusion: FusionConfig = field(default_factory=FusionConfig)

    def __post_init__(self):
        if isinstance(self.fusion, dict):
            self.fusion = FusionConfig(**self.fusion)
        self.audio_channels = tuple(self.audio_channels)
        self.image_channels = tuple(self.image_channels)
        if not 0 <= self.dropout < 1:
            raise ModelError("dropout must lie in [0, 1)")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["fusion"]["wiring"] = {h: [list(p) for p in pairs] for h, pairs in self.fusion.wiring.items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ArchConfig":
        return cls(**d)


# ---------------------------------------------------------------- building blocks

def glu_conv(x, w_lin, b_lin, w_gate, b_gate):
    """Gated linear unit convolution on (B, C, T, F) maps: lin(x) * sigmoid(gate(x))."""
    if x.shape[1] != w_lin.shape[1] or w_lin.shape != w_gate.shape:
        raise ModelError(f"GLU weights {tuple(w_lin.shape)} / {tuple(w_gate.shape)} "
                         f"do not match input with {x.shape[1]} channels")
    pad = (w_lin.shape[2] // 2, w_lin.shape[3] // 2)
    return F.conv2d(x, w_lin, b_lin, padding=pad) * torch.sigmoid(F.conv2d(x, w_gate, b_gate, padding=pad))


class GLUConv(nn.Module):
    def __init__(self, cin, cout, k=3):
        super().__init__()
        self.linear = nn.Conv2d(cin, cout, k, padding=k // 2)
        self.gate = nn.Conv2d(cin, cout, k, padding=k // 2)

    def forward(self, x):
        return glu_conv(x, self.linear.weight, self.linear.bias, self.gate.weight, self.gate.bias)


class PoolConv(nn.Module):
    """Strided conv that halves frequency (ceil) and leaves time untouched."""

    def __init__(self, channels, k=3):
        super().__init__()
        self.conv = nn.Conv2d(channels, channels, k, stride=(1, 2), padding=k // 2)

    def forward(self, x):
        if x.shape[-1] < 2:
            raise ModelError(f"cannot pool a frequency axis of size {x.shape[-1]}")
        return self.conv(x)


def pooled_bins(n: int, times: int) -> int:
    for _ in range(times):
        n = math.ceil(n / 2)
    return n


class Head(nn.Module):
    """Dense embedding layer followed by a single sigmoid unit."""

    def __init__(self, din, emb):
        super().__init__()
        self.embed = nn.Linear(din, emb)
        self.out = nn.Linear(emb, 1)

    def forward(self, x):
        e = F.relu(self.embed(x))
        return e, torch.sigmoid(self.out(e)).squeeze(-1)


def _check(x, path):
    if not torch.isfinite(x).all():
        raise NumericError(f"non-finite activation at {path}")
    return x


class AudioBranch(nn.Module):
    def __init__(self, cfg: ArchConfig):
        super().__init__()
        self.bn0 = nn.BatchNorm2d(cfg.n_mels)
        layers, cin = [], 1
        for c in cfg.audio_channels:
            layers += [GLUConv(cin, c, cfg.kernel), PoolConv(c, cfg.kernel), nn.BatchNorm2d(c), nn.Dropout(cfg.dropout)]
            cin = c
        self.convs = nn.Sequential(*layers)
        feat = cin * pooled_bins(cfg.n_mels, len(cfg.audio_channels))
        self.grus = nn.ModuleList(nn.GRU(feat, cfg.gru_hidden, batch_first=True) for _ in AUDIO_HEADS)
        self.heads = nn.ModuleList(Head(cfg.gru_hidden, cfg.emb_dim) for _ in AUDIO_HEADS)
        self.n_mels = cfg.n_mels

    def forward(self, mel):
        """(B, T, n_mels) log-mel -> probs (B, T, 4), embeddings (B, T, 4, E)."""
        if mel.shape[-1] != self.n_mels:
            raise ModelError(f"expected {self.n_mels} mel bands, got {mel.shape[-1]}")
        x = self.bn0(mel.transpose(1, 2).unsqueeze(-1)).squeeze(-1).transpose(1, 2)
        x = _check(self.convs(x.unsqueeze(1)), "audio/convs")  # (B, C, T, F')
        b, c, t, f = x.shape
        x = x.permute(0, 2, 1, 3).reshape(b, t, c * f)
        embs, probs = [], []
        for name, gru, head in zip(AUDIO_HEADS, self.grus, self.heads):
            h, _ = gru(x)
            e, p = head(_check(h, f"audio/{name}/gru"))
            embs.append(e)
            probs.append(_check(p, f"audio/{name}/out"))
        return torch.stack(probs, -1), torch.stack(embs, -2)


def context_stack(frames, k):
    """(B, Tv, H, W) -> (B, Tv, k, H, W) of neighbouring frames, edges repeated."""
    half = k // 2
    tv = frames.shape[1]
    idx = (torch.arange(tv)[:, None] + torch.arange(-half, half + 1)[None, :]).clamp(0, tv - 1)
    return frames[:, idx]


class ImageBranch(nn.Module):
    def __init__(self, cfg: ArchConfig):
        super().__init__()
        layers, cin = [], cfg.image_context
        for c in cfg.image_channels:
            layers += [nn.Conv2d(cin, c, 3, stride=2, padding=1), nn.BatchNorm2d(c), nn.ReLU()]
            cin = c
        self.convs = nn.Sequential(*layers)
        self.drop = nn.Dropout(cfg.dropout)
        self.heads = nn.ModuleList(Head(cin, cfg.emb_dim) for _ in VISUAL_HEADS)
        self.size = cfg.image_size
        self.context = cfg.image_context

    def forward(self, faces):
        """(B, Tv, H, W) face crops -> probs (B, Tv, 2), embeddings (B, Tv, 2, E), per video frame."""
        if faces.shape[-2:] != (self.size, self.size):
            raise ModelError(f"face crops must be {self.size}x{self.size}, got {tuple(faces.shape[-2:])}")
        b, tv = faces.shape[:2]
        dtype = self.heads[0].embed.weight.dtype
        x = faces.to(dtype) / 255.0
        # per-frame standardisation: lighting and skin tone vary between clips
        x = (x - x.mean(dim=(-2, -1), keepdim=True)) / (x.std(dim=(-2, -1), keepdim=True) + 1e-3)
        x = context_stack(x, self.context).reshape(b * tv, self.context, self.size, self.size)
        x = _check(self.convs(x), "image/convs").mean(dim=(2, 3))
        x = self.drop(x)
        embs, probs = [], []
        for name, head in zip(VISUAL_HEADS, self.heads):
            e, p = head(x)
            embs.append(e.reshape(b, tv, -1))
            probs.append(_check(p, f"image/{name}/out").reshape(b, tv))
        return torch.stack(probs, -1), torch.stack(embs, -2)


def align_index(n_audio: int, hop_s: float, n_video: int, fps: float) -> np.ndarray:
    """Nearest video frame for the centre of every audio frame."""
    t = (np.arange(n_audio) + 0.5) * hop_s
    return np.clip(np.rint(t * fps).astype(np.int64), 0, n_video - 1)


# ---------------------------------------------------------------- fusion

def fuse(a, v, operator: str):
    """Fuse acoustic and visual embeddings along the last axis.

    sc -> concat (2E), mm -> flattened outer product a v^T (E*E), hp -> a * v (E).
    """
    op = operator.lower()
    if op == "lut":
        raise ModelError("LuT combines branch decisions, not embeddings; use lut_combine")
    to_np = isinstance(a, np.ndarray)
    a_t, v_t = torch.as_tensor(a), torch.as_tensor(v)
    if a_t.shape[-1] != v_t.shape[-1]:
        raise ModelError(f"embedding sizes differ: {a_t.shape[-1]} vs {v_t.shape[-1]}")
    if op == "sc":
        out = torch.cat([a_t, v_t], -1)
    elif op == "mm":
        out = (a_t.unsqueeze(-1) * v_t.unsqueeze(-2)).flatten(-2)
    elif op == "hp":
        out = a_t * v_t
    else:
        raise ModelError(f"unknown fusion operator {operator!r}")
    return out.numpy() if to_np else out


def lut_combine(audio_probs, visual_probs, threshold: float = 0.5, rules: RuleTable = DEFAULT_RULES):
    """Rule-table decision on branch outputs: one-hot target per frame, no parameters.

    ``audio_probs`` (..., 4) and ``visual_probs`` (..., 2); returns (..., 4).
    """
    is_torch = isinstance(audio_probs, torch.Tensor)
    ap = audio_probs.detach().cpu().numpy() if is_torch else np.asarray(audio_probs)
    vp = visual_probs.detach().cpu().numpy() if is_torch else np.asarray(visual_probs)
    a = np.argmax(ap, axis=-1)
    v = np.where(vp[..., 0] >= threshold, 0, 1)
    target = rules.apply_frames(a, v)
    out = np.eye(len(TargetClass), dtype=np.float32)[target]
    return torch.as_tensor(out, dtype=audio_probs.dtype) if is_torch else out


class AVBranch(nn.Module):
    """One sigmoid head per target class, reading the fused embedding pairs it is wired to."""

    def __init__(self, cfg: ArchConfig):
        super().__init__()
        self.op = cfg.fusion.operator
        self.pairs = [[(AUDIO_HEADS.index(a), VISUAL_HEADS.index(v)) for a, v in cfg.fusion.wiring[h]]
                      for h in AV_HEADS]
        e = cfg.emb_dim
        if self.op == "mm":
            # dense layer over flattened a v^T, stored as one E x E block per pair
            self.weights = nn.ParameterList()
            self.biases = nn.ParameterList()
            for pairs in self.pairs:
                bound = 1.0 / math.sqrt(len(pairs) * e * e)
                self.weights.append(nn.Parameter(torch.empty(len(pairs), e, e).uniform_(-bound, bound)))
                self.biases.append(nn.Parameter(torch.empty(1).uniform_(-bound, bound)))
        elif self.op in ("sc", "hp"):
            width = 2 * e if self.op == "sc" else e
            self.dense = nn.ModuleList(nn.Linear(len(p) * width, 1) for p in self.pairs)

    def forward(self, a_emb, v_emb):
        """a_emb (B, T, 4, E), v_emb (B, T, 2, E) -> probs (B, T, 4)."""
        outs = []
        for h, pairs in enumerate(self.pairs):
            if self.op == "mm":
                w = self.weights[h]
                logit = self.biases[h] + sum(
                    torch.einsum("bti,ij,btj->bt", a_emb[..., ai, :], w[k], v_emb[..., vi, :])
                    for k, (ai, vi) in enumerate(pairs))
            else:
                fused = torch.cat([fuse(a_emb[..., ai, :], v_emb[..., vi, :], self.op) for ai, vi in pairs], -1)
                logit = self.dense[h](fused).squeeze(-1)
            outs.append(torch.sigmoid(_check(logit, f"av/{AV_HEADS[h]}")))
        return torch.stack(outs, -1)

    def dense_equivalent(self, h: int) -> tuple[torch.Tensor, torch.Tensor]:
        """MM head as an explicit dense layer over the concatenated flattened outer products."""
        return self.weights[h].reshape(1, -1), self.biases[h]


class AVVAD(nn.Module):
    def __init__(self, cfg: ArchConfig | None = None, rules: RuleTable = DEFAULT_RULES):
        super().__init__()
        self.cfg = cfg or ArchConfig()
        self.rules = rules
        self.audio = AudioBranch(self.cfg)
        self.image = ImageBranch(self.cfg)
        self.av = AVBranch(self.cfg)

    @property
    def operator(self) -> str:
        return self.cfg.fusion.operator

    def forward(self, mel, faces=None, index=None, branches=("audio", "image", "av")):
        """mel (B, T, 64); faces (B, Tv, H, W); index (B, T) video frame per audio frame.

        Returns a dict of probability / embedding tensors, all on the audio frame grid.
        """
        out = {}
        a_p, a_e = self.audio(mel)
        out["audio_probs"], out["audio_emb"] = a_p, a_e
        if "image" not in branches and "av" not in branches:
            return out
        if faces is None:
            raise ModelError("face frames are required for the image and A-V branches")
        if index is None:
            raise ModelError("audio-to-video frame index is required")
        v_p, v_e = self.image(faces)
        gather = index.unsqueeze(-1)
        out["visual_probs"] = torch.gather(v_p, 1, gather.expand(-1, -1, v_p.shape[-1]))
        out["visual_emb"] = torch.gather(v_e, 1, gather.unsqueeze(-1).expand(-1, -1, *v_e.shape[-2:]))
        if "av" in branches:
            if self.operator == "lut":
                out["av_probs"] = lut_combine(out["audio_probs"], out["visual_probs"],
                                              self.cfg.fusion.lut_threshold, self.rules)
            else:
                out["av_probs"] = self.av(out["audio_emb"], out["visual_emb"])
        return out


# ---------------------------------------------------------------- checkpoints

CONFIG_FILE = "config.json"
PARAMS_FILE = "params.avta"


def save_checkpoint(model: AVVAD, path, extra: dict | None = None) -> str:
    """Write config manifest + parameter archive; returns the parameter archive hash."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    tensors = {k: v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    digest = archive.save(path / PARAMS_FILE, tensors)
    manifest = {"arch": model.cfg.to_dict(), "rules": model.rules.to_dict(), "params_sha256": digest}
    if extra:
        manifest.update(extra)
    (path / CONFIG_FILE).write_text(json.dumps(manifest, indent=1))
    return digest


def load_checkpoint(path) -> AVVAD:
    path = Path(path)
    manifest = json.loads((path / CONFIG_FILE).read_text())
    model = AVVAD(ArchConfig.from_dict(manifest["arch"]), RuleTable.from_dict(manifest["rules"]))
    tensors = archive.load(path / PARAMS_FILE)
    state = model.state_dict()
    if set(tensors) != set(state):
        raise ModelError(f"checkpoint parameters do not match architecture: "
                         f"{sorted(set(tensors) ^ set(state))[:5]}")
    model.load_state_dict({k: torch.from_numpy(v).to(state[k].dtype) for k, v in tensors.items()})
    model.eval()
    return model
