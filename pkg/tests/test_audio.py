import numpy as np
import pytest
from scipy.io import wavfile

from beatsmith.audio import AudioBuffer, load_wav, resample, save_wav, stft_magnitude
from helpers import lowpassed_noise


def test_buffer_validates_finite_and_rate():
    with pytest.raises(ValueError):
        AudioBuffer(np.array([0.0, np.nan]), 44100)
    with pytest.raises(ValueError):
        AudioBuffer(np.zeros(4), 0)
    buf = AudioBuffer(np.zeros(441), 44100)
    assert buf.duration_sec == pytest.approx(0.01)


def test_load_int16_fullscale_peak(tmp_path):
    path = tmp_path / "full.wav"
    data = np.array([32767, -32768, 0], dtype=np.int16)
    wavfile.write(path, 44100, data)
    buf = load_wav(path)
    assert buf.samples.max() == pytest.approx(32767 / 32768)
    assert buf.samples.min() == -1.0


def test_load_stereo_downmix_mean(tmp_path):
    path = tmp_path / "st.wav"
    wavfile.write(path, 8000, np.array([[0.5, -0.5], [0.25, 0.25]], dtype=np.float32))
    buf = load_wav(path)
    assert buf.samples[0] == 0.0
    assert buf.samples[1] == pytest.approx(0.25)


@pytest.mark.filterwarnings("ignore::scipy.io.wavfile.WavFileWarning")
def test_load_corrupt_header_unsupported(tmp_path):
    path = tmp_path / "bad.wav"
    path.write_bytes(b"RIFF\x10\x00\x00\x00WAVEjunk")
    with pytest.raises(ValueError, match="unsupported encoding"):
        load_wav(path)


def test_load_unsupported_dtype(tmp_path):
    path = tmp_path / "i32.wav"
    wavfile.write(path, 8000, np.array([1, 2, 3], dtype=np.int32))
    with pytest.raises(ValueError, match="unsupported encoding"):
        load_wav(path)


def test_load_missing_file():
    with pytest.raises(FileNotFoundError):
        load_wav("/nonexistent/file.wav")


def test_load_zero_length(tmp_path):
    path = tmp_path / "empty.wav"
    wavfile.write(path, 8000, np.zeros(0, dtype=np.float32))
    with pytest.raises(ValueError, match="zero-length"):
        load_wav(path)


def test_save_load_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    buf = AudioBuffer(rng.uniform(-1, 1, 1000).astype(np.float32), 22050)
    path = tmp_path / "rt.wav"
    save_wav(buf, path)
    back = load_wav(path)
    assert back.sample_rate == 22050
    assert np.array_equal(back.samples, buf.samples)


def test_save_empty_errors(tmp_path):
    with pytest.raises(ValueError):
        save_wav(AudioBuffer(np.zeros(0), 44100), tmp_path / "x.wav")


def test_resample_identity_same_rate():
    buf = AudioBuffer(np.random.default_rng(1).uniform(-1, 1, 500), 16000)
    out = resample(buf, 16000)
    assert out.sample_rate == 16000
    assert np.array_equal(out.samples, buf.samples)


def test_resample_length_arithmetic():
    buf = AudioBuffer(np.zeros(44100), 44100)
    out = resample(buf, 22050)
    assert abs(len(out) - 22050) <= 1
    out = resample(buf, 16000)
    assert abs(len(out) - 16000) <= 1


def test_resample_sine_bin_preserved():
    sr = 44100
    t = np.arange(sr) / sr
    buf = AudioBuffer(0.5 * np.sin(2 * np.pi * 440 * t), sr)
    out = resample(buf, 22050)
    X = np.abs(np.fft.rfft(out.samples.astype(np.float64)))
    freqs = np.fft.rfftfreq(len(out), 1 / 22050)
    assert abs(freqs[np.argmax(X)] - 440.0) <= freqs[1] + 1e-9


def test_resample_roundtrip_correlation():
    sr = 44100
    x = lowpassed_noise(sr, sr, cutoff_hz=0.4 * (sr / 2) * 0.9, seed=3)
    buf = AudioBuffer(x, sr)
    back = resample(resample(buf, 30000), sr)
    n = min(len(back), len(buf))
    a = buf.samples[:n].astype(np.float64)
    b = back.samples[:n].astype(np.float64)
    corr = np.dot(a, b) / np.sqrt(np.dot(a, a) * np.dot(b, b))
    assert corr >= 0.99


def test_resample_rejects_bad_rate():
    with pytest.raises(ValueError):
        resample(AudioBuffer(np.zeros(10), 8000), 0)


def test_stft_shapes_and_silence():
    buf = AudioBuffer(np.zeros(5000), 44100)
    spec = stft_magnitude(buf, 2048, 512)
    assert spec.n_bins == 1025
    assert spec.n_frames == int(np.ceil(5000 / 512))
    assert np.all(spec.mag == 0)


def test_stft_impulse_support():
    sr = 44100
    x = np.zeros(4096)
    k = 2000
    x[k] = 1.0
    spec = stft_magnitude(AudioBuffer(x, sr), 1024, 256)
    energy = spec.mag.sum(axis=0)
    for t in range(spec.n_frames):
        covers = abs(t * 256 - k) < 512
        if energy[t] > 1e-12:
            assert covers
    assert energy.max() > 0


def test_stft_1khz_bin():
    sr = 44100
    t = np.arange(sr) / sr
    spec = stft_magnitude(AudioBuffer(np.sin(2 * np.pi * 1000 * t), sr), 2048, 512)
    mid = spec.mag[:, 10:-10]
    assert np.all(np.argmax(mid, axis=0) == 46)


def test_stft_scale_linearity_and_nonnegativity():
    rng = np.random.default_rng(7)
    for _ in range(5):
        # Power-of-two scale stays exact through float32 sample storage, so
        # this checks the transform, not input quantization.
        x = rng.uniform(-1, 1, rng.integers(2000, 8000))
        spec1 = stft_magnitude(AudioBuffer(x, 44100), 1024, 256)
        spec2 = stft_magnitude(AudioBuffer(4.0 * x, 44100), 1024, 256)
        assert np.all(spec1.mag >= 0)
        assert np.allclose(spec2.mag, 4.0 * spec1.mag, rtol=1e-6, atol=1e-12)


def test_stft_window_validation():
    buf = AudioBuffer(np.zeros(100), 44100)
    with pytest.raises(ValueError):
        stft_magnitude(buf, 256, 512)
    with pytest.raises(ValueError):
        stft_magnitude(buf, (1 << 16) + 2, 512)
