import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from avvad import frontend as fe
from avvad.frontend import FrontendError, Waveform


def brute_force_frame_count(n_samples, frame_len, hop):
    # walk frame starts until one frame reaches the end of the signal
    start, count = 0, 1
    while start + frame_len < n_samples:
        start += hop
        count += 1
    return count


def test_frame_params_at_16k():
    assert fe.frame_params(16000, 0.044, 0.5) == (704, 352)


def test_one_second_gives_45_frames():
    framed = fe.frame_and_window(Waveform(np.ones(16000), 16000))
    assert framed.shape == (45, 704)
    assert brute_force_frame_count(16000, 704, 352) == 45


@settings(max_examples=200, deadline=None)
@given(n=st.integers(1, 40000), window=st.sampled_from([0.02, 0.025, 0.044, 0.064]),
       overlap=st.sampled_from([0.0, 0.25, 0.5, 0.75]))
def test_frame_count_matches_brute_force(n, window, overlap):
    frame_len, hop = fe.frame_params(16000, window, overlap)
    assert hop == round(frame_len * (1 - overlap))
    assert fe.n_frames_for(n, frame_len, hop) == brute_force_frame_count(n, frame_len, hop)


def test_frames_are_hamming_windowed_and_hop_spaced(rng):
    x = rng.normal(size=3000)
    framed = fe.frame_and_window(Waveform(x, 16000))
    win = np.hamming(704)
    assert np.allclose(framed[0], x[:704] * win)
    assert np.allclose(framed[3], x[3 * 352:3 * 352 + 704] * win)
    tail = framed[-1]
    start = (framed.shape[0] - 1) * 352
    assert np.allclose(tail[: 3000 - start], x[start:] * win[: 3000 - start])
    assert np.all(tail[3000 - start:] == 0)


def test_zero_waveform_gives_zero_frames():
    assert np.all(fe.frame_and_window(Waveform(np.zeros(5000), 16000)) == 0)


def test_empty_and_invalid_waveforms_rejected():
    with pytest.raises(FrontendError, match="empty"):
        fe.frame_and_window(Waveform(np.zeros(0), 16000))
    with pytest.raises(FrontendError):
        Waveform(np.array([0.0, np.nan]), 16000)
    with pytest.raises(FrontendError):
        Waveform(np.zeros(10), 0)
    with pytest.raises(FrontendError):
        fe.frame_params(16000, 0.044, 1.0)


def test_silence_sits_on_the_floor():
    mel = fe.log_mel(np.zeros((7, 704)), 16000, floor=1e-10)
    assert mel.frames.shape == (7, 64)
    assert np.all(mel.frames == np.log(1e-10))


def test_fft_size_is_next_power_of_two():
    assert fe.fft_size(704) == 1024
    assert fe.fft_size(512) == 512


@pytest.mark.parametrize("band", [0, 5, 13, 31, 47, 63])
def test_sine_at_band_centre_peaks_in_that_band(band):
    centre = fe.mel_band_edges(16000)[band + 1]
    t = np.arange(16000) / 16000
    mel = fe.extract(Waveform(0.5 * np.sin(2 * np.pi * centre * t), 16000))
    # edge frames include zero padding / onset transients
    assert np.all(mel.frames[1:-1].argmax(axis=1) == band)


def test_gain_shifts_log_mel_by_log_gain_squared(rng):
    x = 0.1 * rng.normal(size=16000)
    g = 3.0
    a = fe.extract(Waveform(x, 16000)).frames
    b = fe.extract(Waveform(g * x, 16000)).frames
    assert np.all(a > np.log(1e-10))
    assert np.max(np.abs((b - a) - np.log(g ** 2))) < 1e-6


@settings(max_examples=25, deadline=None)
@given(c=st.floats(0.05, 5.0), seed=st.integers(0, 1000))
def test_scaling_is_additive_in_log_domain(c, seed):
    x = 0.05 * np.random.default_rng(seed).normal(size=4000)
    a = fe.extract(Waveform(x, 16000)).frames
    b = fe.extract(Waveform(c * x, 16000)).frames
    assert b.shape[1] == 64
    assert np.allclose(b - a, 2 * np.log(c), atol=1e-6)


def test_filterbank_spans_zero_to_nyquist():
    edges = fe.mel_band_edges(16000)
    assert edges[0] == 0 and np.isclose(edges[-1], 8000)
    fb = fe.mel_filterbank(16000, 1024)
    assert fb.shape == (64, 513)
    assert np.all(fb >= 0) and np.all(fb <= 1)


def test_log_mel_rejects_bad_arguments():
    with pytest.raises(FrontendError):
        fe.log_mel(np.zeros((2, 704)), 16000, n_mels=40)
    with pytest.raises(FrontendError):
        fe.log_mel(np.zeros((2, 704)), 16000, floor=0)
    with pytest.raises(FrontendError, match="non-finite"):
        fe.log_mel(np.full((2, 704), np.inf), 16000)


def test_wav_round_trip_and_resampling(tmp_path, rng):
    pcm = rng.integers(-32768, 32767, 8000).astype(np.float64) / 32768
    fe.write_wav(tmp_path / "a.wav", Waveform(pcm, 16000))
    back = fe.read_wav(tmp_path / "a.wav")
    assert back.sample_rate == 16000 and np.array_equal(back.samples, pcm)

    t = np.arange(44100) / 44100
    fe.write_wav(tmp_path / "b.wav", Waveform(0.3 * np.sin(2 * np.pi * 440 * t), 44100))
    w = fe.load_audio(tmp_path / "b.wav")
    assert w.sample_rate == 16000 and abs(w.samples.size - 16000) <= 1


def test_raw_float32_stream(tmp_path, rng):
    x = rng.uniform(-1, 1, 1000).astype("<f4")
    x.tofile(tmp_path / "s.f32")
    w = fe.load_audio(tmp_path / "s.f32", sample_rate=16000)
    assert np.array_equal(w.samples, x.astype(np.float64))
    with pytest.raises(FrontendError):
        fe.load_audio(tmp_path / "s.f32")
