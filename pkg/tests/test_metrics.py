import math

import numpy as np
import pytest

from nmfdereverb.metrics import CD_SCALE, MetricReport, cepstral_distortion, import_pesq
from nmfdereverb.signal_io import Waveform
from nmfdereverb.spectrogram import StftConfig

SMALL = StftConfig(64, 16, 64)


def oracle_cd(ref, test, cfg, n_cep=12, gate_db=-60.0):
    """Direct DFT / cosine-sum cepstra, no FFT routines."""
    M = cfg.fft_size
    w = cfg.window()
    n_frames = (len(ref) - cfg.window_len) // cfg.hop + 1
    k = np.arange(M // 2 + 1)
    dft = np.exp(-2j * np.pi * np.outer(k, np.arange(cfg.window_len)) / M)

    def cepstra(x):
        out, energy = [], []
        frames = [x[i * cfg.hop:i * cfg.hop + cfg.window_len] * w for i in range(n_frames)]
        mags = [np.abs(dft @ f) for f in frames]
        floor = 1e-8 * max(m.max() for m in mags)
        for f, m in zip(frames, mags):
            logm = np.log(np.maximum(m, floor))
            c = []
            for q in range(1, n_cep + 1):
                # real, even spectrum: inverse DFT reduces to a cosine sum
                s = logm[0] + logm[M // 2] * math.cos(math.pi * q)
                s += 2 * sum(logm[j] * math.cos(2 * math.pi * j * q / M) for j in range(1, M // 2))
                c.append(s / M)
            out.append(c)
            energy.append(float(np.sum(f ** 2)))
        return np.array(out), np.array(energy)

    c1, e1 = cepstra(ref)
    c2, e2 = cepstra(test)
    g = 10 ** (gate_db / 10)
    keep = (e1 > g * e1.max()) & (e2 > g * e2.max())
    d = [10 / math.log(10) * math.sqrt(2 * np.sum((a - b) ** 2)) for a, b in zip(c1[keep], c2[keep])]
    return float(np.mean(d))


def test_scale_constant():
    assert CD_SCALE == pytest.approx(4.342944819, rel=1e-9)


def test_matches_hand_oracle(rng):
    ref = rng.standard_normal(400)
    test = np.convolve(ref, [1.0, 0.6, -0.2])[:400] + 0.05 * rng.standard_normal(400)
    got = cepstral_distortion(Waveform(ref, 16000), Waveform(test, 16000), SMALL)
    assert got == pytest.approx(oracle_cd(ref, test, SMALL), abs=1e-9)


def test_identity_and_gain_invariance(noise_wave):
    assert cepstral_distortion(noise_wave, noise_wave) == 0.0
    scaled = Waveform(3.7 * noise_wave.samples, 16000)
    assert cepstral_distortion(noise_wave, scaled) == pytest.approx(0.0, abs=1e-9)


def test_positive_for_filtered(noise_wave):
    y = Waveform(np.convolve(noise_wave.samples, [1.0, 0.9])[:len(noise_wave)], 16000)
    assert cepstral_distortion(noise_wave, y) > 0.5


def test_silent_frames_gated(noise_wave):
    x = noise_wave.samples.copy()
    x[:4000] = 0.0
    ref = Waveform(x, 16000)
    assert np.isfinite(cepstral_distortion(ref, noise_wave))


def test_errors(noise_wave):
    with pytest.raises(ValueError):
        cepstral_distortion(noise_wave, Waveform(noise_wave.samples, 8000))
    with pytest.raises(ValueError):
        cepstral_distortion(Waveform(np.ones(100), 16000), Waveform(np.ones(100), 16000))
    with pytest.raises(ValueError):
        z = Waveform(np.zeros(4000), 16000)
        cepstral_distortion(z, z)


def test_metric_report():
    rep = MetricReport(3.0, 2.5, "500ms", 2.0, 2.4)
    assert rep.cd_db == 2.5
    assert rep.cd_improvement_db == 0.5
    assert rep.pesq_improvement == pytest.approx(0.4)
    assert MetricReport(1.0, 1.0).pesq_improvement is None


def test_import_pesq(tmp_path):
    p = tmp_path / "p.csv"
    p.write_text("id,pesq_in,pesq_out\n")
    assert import_pesq(p) == {}
    p.write_text("id,pesq_in,pesq_out\na,1.5,2.0\nb,2.25,\n")
    assert import_pesq(p) == {"a": (1.5, 2.0), "b": (2.25, None)}


@pytest.mark.parametrize("text", [
    "id,pesq_in,pesq_out\na,1,2\na,2,3\n",
    "id,score\na,1\n",
    "id,pesq_in,pesq_out\na,1\n",
    "id,pesq_in,pesq_out\na,x,2\n",
    "",
])
def test_import_pesq_errors(tmp_path, text):
    p = tmp_path / "p.csv"
    p.write_text(text)
    with pytest.raises(ValueError):
        import_pesq(p)
