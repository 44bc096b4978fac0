"""Timeline figures: audio, visual and A-V head probabilities over time."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

AUDIO_COLORS = {"Singing": "tab:red", "Speech": "tab:blue", "Others": "tab:gray", "Silence": "tab:green"}
VISUAL_COLORS = {"Vocalizing": "0.55", "NonVocalizing": "black"}
AV_COLORS = {"Singing": "tab:red", "Speech": "tab:blue", "Others": "tab:gray"}

STYLE = {
    "font.family": "DejaVu Sans",
    "font.size": 8,
    "axes.labelsize": 8,
    "axes.titlesize": 9,
    "legend.fontsize": 7,
    "xtick.labelsize": 7,
    "ytick.labelsize": 7,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "lines.linewidth": 1.0,
    "svg.hashsalt": "avvad",
}


class PlotError(ValueError):
    pass


def _truth_spans(ax, track, names, colors, hop):
    track = np.asarray(track)
    edges = np.flatnonzero(np.diff(track)) + 1
    starts = np.concatenate([[0], edges])
    ends = np.concatenate([edges, [track.size]])
    for a, b in zip(starts, ends):
        name = names[track[a]]
        if name in colors and name != "Silence":
            ax.axvspan(a * hop, b * hop, color=colors[name], alpha=0.12, lw=0)


def plot_timeline(audio: np.ndarray, visual: np.ndarray, av: np.ndarray, hop: float, path,
                  labels=None, title: str | None = None, dpi: int = 120):
    """Three stacked panels: audio heads, visual heads, A-V heads; ground truth shaded.

    ``labels`` is an optional FrameLabelTrack of the same length.
    """
    tracks = [np.asarray(audio, float), np.asarray(visual, float), np.asarray(av, float)]
    if any(t.ndim != 2 or t.shape[0] == 0 for t in tracks):
        raise PlotError("every probability track must be a non-empty (T, K) array")
    if tracks[0].shape[1] != 4 or tracks[1].shape[1] != 2 or tracks[2].shape[1] != 4:
        raise PlotError("expected 4 audio, 2 visual and 4 A-V columns")
    n = tracks[0].shape[0]
    if any(t.shape[0] != n for t in tracks) or (labels is not None and len(labels) != n):
        raise PlotError("track lengths differ")
    t = np.arange(n) * hop
    audio_names = ("Silence", "Speech", "Singing", "Others")
    visual_names = ("Vocalizing", "NonVocalizing")
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(3, 1, figsize=(7.0, 4.6), sharex=True)
        panels = [
            (axes[0], tracks[0], audio_names, AUDIO_COLORS, "(a) audio branch", "audio"),
            (axes[1], tracks[1], visual_names, VISUAL_COLORS, "(b) image branch", "visual"),
            (axes[2], tracks[2], audio_names, AV_COLORS, "(c) A-V branch", "target"),
        ]
        for ax, tr, names, colors, label, key in panels:
            if labels is not None:
                _truth_spans(ax, getattr(labels, key), names, colors, hop)
            for k, name in enumerate(names):
                if name in colors:
                    ax.plot(t, tr[:, k], color=colors[name], label=name)
            ax.set_ylim(-0.05, 1.05)
            ax.set_ylabel("prob.")
            ax.set_title(label, loc="left")
            ax.legend(loc="upper right", ncol=len(colors), frameon=False)
        axes[-1].set_xlabel("time (s)")
        if title:
            fig.suptitle(title)
        fig.tight_layout()
        fig.savefig(path, dpi=dpi, metadata={"Software": None})
        plt.close(fig)
    return path
