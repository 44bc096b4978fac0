"""Waveform I/O and log-mel feature extraction."""
from __future__ import annotations

import math
import wave
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.signal import resample_poly

SAMPLE_RATE = 16000
N_MELS = 64
WINDOW_S = 0.044
OVERLAP = 0.5
ENERGY_FLOOR = 1e-10


class FrontendError(ValueError):
    pass


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise FrontendError("waveform must be mono (1-d)")
        if self.sample_rate <= 0:
            raise FrontendError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(samples)):
            raise FrontendError("waveform contains non-finite samples")
        object.__setattr__(self, "samples", samples)

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class MelSpectrogram:
    frames: np.ndarray  # (T, n_mels), natural-log energy
    frame_hop: float
    frame_length: float

    def __post_init__(self):
        if self.frames.ndim != 2 or self.frames.shape[1] != N_MELS or self.frames.shape[0] < 1:
            raise FrontendError(f"expected (T>=1, {N_MELS}) matrix, got {self.frames.shape}")
        if not np.all(np.isfinite(self.frames)):
            raise FrontendError("non-finite log-mel value")

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


def frame_params(sample_rate: int, window_s: float = WINDOW_S, overlap: float = OVERLAP) -> tuple[int, int]:
    """Frame length (floored to an even sample count) and hop in samples."""
    if not 0 <= overlap < 1:
        raise FrontendError(f"overlap must be in [0, 1), got {overlap}")
    n = int(math.floor(window_s * sample_rate + 1e-9))
    n -= n % 2
    if n < 2:
        raise FrontendError("window shorter than two samples")
    hop = max(1, int(round(n * (1.0 - overlap))))
    return n, hop


def n_frames_for(n_samples: int, frame_len: int, hop: int) -> int:
    # the last frame is zero-padded, so any leftover samples open one more frame
    if n_samples <= 0:
        raise FrontendError("empty waveform")
    if n_samples <= frame_len:
        return 1
    return -(-(n_samples - frame_len) // hop) + 1


def frame_and_window(w: Waveform, window_s: float = WINDOW_S, overlap: float = OVERLAP) -> np.ndarray:
    """Slice into Hamming-windowed frames, shape (T, frame_len)."""
    if w.samples.size == 0:
        raise FrontendError("empty waveform")
    n, hop = frame_params(w.sample_rate, window_s, overlap)
    t = n_frames_for(w.samples.size, n, hop)
    padded = np.zeros((t - 1) * hop + n)
    padded[: w.samples.size] = w.samples
    idx = np.arange(n)[None, :] + hop * np.arange(t)[:, None]
    return padded[idx] * np.hamming(n)[None, :]


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_band_edges(sample_rate: int, n_mels: int = N_MELS) -> np.ndarray:
    """n_mels + 2 edge frequencies in Hz; band k peaks at edges[k + 1]."""
    return mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate / 2.0), n_mels + 2))


def mel_filterbank(sample_rate: int, n_fft: int, n_mels: int = N_MELS) -> np.ndarray:
    """Triangular filters with unit peak, shape (n_mels, n_fft // 2 + 1)."""
    edges = mel_band_edges(sample_rate, n_mels)
    freqs = np.fft.rfftfreq(n_fft, 1.0 / sample_rate)
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    up = (freqs[None, :] - lo) / (mid - lo)
    down = (hi - freqs[None, :]) / (hi - mid)
    return np.maximum(0.0, np.minimum(up, down))


def fft_size(frame_len: int) -> int:
    return 1 << (frame_len - 1).bit_length()


def log_mel(framed: np.ndarray, sample_rate: int, n_mels: int = N_MELS, floor: float = ENERGY_FLOOR,
            hop_s: float | None = None) -> MelSpectrogram:
    if n_mels != N_MELS:
        raise FrontendError(f"n_mels is fixed at {N_MELS}")
    if floor <= 0:
        raise FrontendError("floor must be positive")
    framed = np.atleast_2d(np.asarray(framed, dtype=np.float64))
    n_fft = fft_size(framed.shape[1])
    with np.errstate(invalid="ignore", over="ignore"):
        power = np.abs(np.fft.rfft(framed, n=n_fft, axis=1)) ** 2
        energy = power @ mel_filterbank(sample_rate, n_fft, n_mels).T
    if not np.all(np.isfinite(energy)):
        raise FrontendError("non-finite mel energy")
    frame_length = framed.shape[1] / sample_rate
    if hop_s is None:
        hop_s = frame_length / 2
    return MelSpectrogram(np.log(np.maximum(energy, floor)), hop_s, frame_length)


def extract(w: Waveform, window_s: float = WINDOW_S, overlap: float = OVERLAP,
            floor: float = ENERGY_FLOOR) -> MelSpectrogram:
    """Waveform -> (T, 64) log-mel matrix at the canonical sample rate."""
    w = to_canonical(w)
    _, hop = frame_params(w.sample_rate, window_s, overlap)
    framed = frame_and_window(w, window_s, overlap)
    return log_mel(framed, w.sample_rate, floor=floor, hop_s=hop / w.sample_rate)


def to_canonical(w: Waveform, sample_rate: int = SAMPLE_RATE) -> Waveform:
    if w.sample_rate == sample_rate:
        return w
    ratio = Fraction(sample_rate, w.sample_rate).limit_denominator(1000)
    return Waveform(resample_poly(w.samples, ratio.numerator, ratio.denominator), sample_rate)


def read_wav(path) -> Waveform:
    with wave.open(str(path), "rb") as fh:
        if fh.getsampwidth() != 2:
            raise FrontendError(f"{path}: only 16-bit PCM is supported")
        rate, channels = fh.getframerate(), fh.getnchannels()
        raw = fh.readframes(fh.getnframes())
    pcm = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    if channels > 1:
        pcm = pcm.reshape(-1, channels).mean(axis=1)
    return Waveform(pcm, rate)


def quantize_pcm16(samples: np.ndarray) -> np.ndarray:
    return np.clip(np.round(np.asarray(samples) * 32768.0), -32768, 32767).astype("<i2")


def write_wav(path, w: Waveform) -> None:
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(int(w.sample_rate))
        fh.writeframes(quantize_pcm16(w.samples).tobytes())


def read_raw_f32(path, sample_rate: int) -> Waveform:
    """Headerless little-endian float32 mono stream."""
    return Waveform(np.fromfile(Path(path), dtype="<f4").astype(np.float64), sample_rate)


def load_audio(path, sample_rate: int | None = None) -> Waveform:
    path = Path(path)
    if path.suffix.lower() in (".f32", ".raw"):
        if sample_rate is None:
            raise FrontendError("raw float32 input needs an explicit sample rate")
        w = read_raw_f32(path, sample_rate)
    else:
        w = read_wav(path)
    return to_canonical(w)
