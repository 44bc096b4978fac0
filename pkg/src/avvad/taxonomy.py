"""Label spaces and the (audio, visual) -> target rule table."""
from __future__ import annotations

from enum import IntEnum
from typing import Iterable, Mapping

import numpy as np


class _Labelled(IntEnum):
    @property
    def label(self) -> str:
        return _LABELS[type(self)][int(self)]

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        if isinstance(name, (int, np.integer)):
            return cls(int(name))
        try:
            return cls(_LABELS[cls].index(name))
        except ValueError:
            raise ValueError(f"unknown {cls.__name__} label {name!r}") from None


class AudioClass(_Labelled):
    SILENCE = 0
    SPEECH = 1
    SINGING = 2
    OTHERS = 3


class VisualClass(_Labelled):
    VOCALIZING = 0
    NON_VOCALIZING = 1


class TargetClass(_Labelled):
    """Anchor-attributed classes: SPEECH/SINGING only ever mean the anchor's voice."""

    SILENCE = 0
    SPEECH = 1
    SINGING = 2
    OTHERS = 3


_LABELS = {
    AudioClass: ("Silence", "Speech", "Singing", "Others"),
    VisualClass: ("Vocalizing", "NonVocalizing"),
    TargetClass: ("Silence", "Speech", "Singing", "Others"),
}

AUDIO_HEADS = ("a_sil", "a_spe", "a_sin", "a_oth")
VISUAL_HEADS = ("v_voc", "v_nonvoc")
AV_HEADS = ("av_sil", "av_spe", "av_sin", "av_oth")

A, V, T = AudioClass, VisualClass, TargetClass

CANONICAL_RULES: dict[tuple[AudioClass, VisualClass], TargetClass] = {
    (A.SILENCE, V.VOCALIZING): T.SILENCE,
    (A.SILENCE, V.NON_VOCALIZING): T.SILENCE,
    (A.SPEECH, V.VOCALIZING): T.SPEECH,
    (A.SPEECH, V.NON_VOCALIZING): T.OTHERS,
    (A.SINGING, V.VOCALIZING): T.SINGING,
    (A.SINGING, V.NON_VOCALIZING): T.OTHERS,
    (A.OTHERS, V.VOCALIZING): T.OTHERS,
    (A.OTHERS, V.NON_VOCALIZING): T.OTHERS,
}


class RuleTable:
    """Total mapping from every (audio, visual) pair to a target class.

    The canonical table masks voices with the anchor's face: a voice only
    counts as the anchor's when the face shows vocalizing.
    """

    def __init__(self, mapping: Mapping | None = None):
        mapping = CANONICAL_RULES if mapping is None else mapping
        table = {}
        for (a, v), t in mapping.items():
            table[AudioClass.parse(a), VisualClass.parse(v)] = TargetClass.parse(t)
        missing = [(a, v) for a in AudioClass for v in VisualClass if (a, v) not in table]
        if missing:
            raise ValueError(f"rule table is not total, missing {missing}")
        self._table = table
        self._lut = np.zeros((len(AudioClass), len(VisualClass)), dtype=np.int64)
        for (a, v), t in table.items():
            self._lut[a, v] = t

    def __call__(self, a, v) -> TargetClass:
        return self._table[AudioClass.parse(a), VisualClass.parse(v)]

    def __eq__(self, other):
        return isinstance(other, RuleTable) and self._table == other._table

    def apply_frames(self, audio: np.ndarray, visual: np.ndarray) -> np.ndarray:
        """Vectorised rule over integer class tracks."""
        return self._lut[np.asarray(audio, dtype=np.int64), np.asarray(visual, dtype=np.int64)]

    def cells(self, target) -> list[tuple[AudioClass, VisualClass]]:
        """All (audio, visual) cells mapping to ``target``."""
        target = TargetClass.parse(target)
        return [k for k, t in self._table.items() if t == target]

    def to_dict(self) -> dict[str, str]:
        return {f"{a.label}/{v.label}": t.label for (a, v), t in self._table.items()}

    @classmethod
    def from_dict(cls, d: Mapping[str, str]) -> "RuleTable":
        mapping = {}
        for key, t in d.items():
            a, v = key.split("/")
            mapping[a, v] = t
        return cls(mapping)


DEFAULT_RULES = RuleTable()


def apply_rule(a, v, rules: RuleTable = DEFAULT_RULES) -> TargetClass:
    return rules(a, v)


def one_hot(track: Iterable[int], n: int) -> np.ndarray:
    track = np.asarray(track, dtype=np.int64)
    out = np.zeros((track.size, n), dtype=np.float32)
    out[np.arange(track.size), track] = 1.0
    return out
