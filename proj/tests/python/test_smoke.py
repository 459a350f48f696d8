"""Smoke tests for the python bindings."""

import math

import numpy as np
import pytest

import nnspeaker as nns


def test_short_term_energy():
    assert nns.short_term_energy([1.0, -1.0, 2.0, 0.0]) == pytest.approx(1.5)


def test_normalize_amplitude():
    out = nns.normalize_amplitude(np.array([0.5, -0.25]))
    assert out == pytest.approx([1.0, -0.5])


def test_spectral_centroid_sinusoid():
    n, k0 = 400, 50
    frame = np.sin(2 * np.pi * k0 * np.arange(n) / n)
    assert nns.spectral_centroid(frame) == pytest.approx(k0, abs=0.05)


def test_median_smooth_kills_spike():
    assert nns.median_smooth([0, 0, 9, 0, 0], step=3, order=1) == [0, 0, 0, 0, 0]


def test_duration_from_frames():
    assert nns.duration_from_frames(37) == pytest.approx(1.18)
    assert nns.duration_from_frames(13.55) == pytest.approx(0.4765)


def test_gaussian_intersection_symmetric():
    assert nns.gaussian_intersection(-1, 1, 0.5, 1, 1) == pytest.approx(0.0, abs=1e-12)


def test_normalize_scores():
    out = nns.normalize_scores(np.array([-1.0, -1.0, -2.0]))
    assert out == pytest.approx([0.25, 0.25, 0.5])
    assert out.sum() == pytest.approx(1.0, abs=1e-12)


def test_gradient_check_small_net():
    assert nns.gradient_check([9, 5, 4], n_samples=7, seed=1, lambda_=0.0) < 1e-6


def test_roc_perfect_separation():
    scores = [0.1] * 20 + [0.9] * 60
    labels = [True] * 20 + [False] * 60
    curve = nns.roc(scores, labels)
    assert curve["eer_pct"] == 0.0
    assert curve["auc_pct"] == 100.0


def test_wav_roundtrip(tmp_path):
    samples = np.sin(2 * np.pi * 440 * np.arange(8000) / 8000) * 0.8
    path = tmp_path / "tone.wav"
    nns.write_wav(path, samples, 8000)
    back, rate = nns.read_wav(path)
    assert rate == 8000
    assert np.abs(back - samples).max() <= 1 / 32768


def test_mfcc_shape_and_deltas():
    rng = np.random.default_rng(7)
    samples = rng.uniform(-1, 1, 8000)
    feats = nns.mfcc(samples, 8000)
    assert feats.shape == (98, 13)
    full = nns.add_deltas(feats)
    assert full.shape == (98, 39)
    stacked = nns.concatenate_frames(full, win_frames=10, hop_frames=3)
    assert stacked.shape == ((98 - 10) // 3 + 1, 390)


def test_vad_on_synthetic_voicing(tmp_path):
    entries = nns.generate_synthetic_corpus(
        seed=3, n_speakers=2, files_per_speaker=2, duration_s=1.5, out_dir=tmp_path
    )
    assert len(entries) == 4
    samples, rate = nns.read_wav(entries[0][3])
    mask = nns.detect_voice(nns.normalize_amplitude(samples), rate)
    kept = nns.extract_voiced(samples, mask["sample_mask"])
    assert 0 < len(kept) < len(samples)


def test_pipeline_end_to_end(tmp_path):
    config = {
        "corpus.root": str(tmp_path / "corpus"),
        "run.out": str(tmp_path / "out"),
        "synth.enabled": "true",
        "synth.seed": "5",
        "synth.speakers": "4",
        "synth.files": "6",
        "synth.duration_s": "1.2",
        "corpus.n_in_domain": "3",
        "train.hidden": "10",
        "train.schedule": "1,0",
        "train.max_total_iters": "30",
    }
    result = nns.run_pipeline(config, [])
    assert result["ok"], result
    assert (tmp_path / "out" / "verify_report.json").exists()
    again = nns.run_pipeline(config, [])
    assert all(stage["skipped"] for stage in again["stages"])
