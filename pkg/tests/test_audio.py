import struct

import numpy as np
import pytest
from scipy.io import wavfile

from earshot.audio import (
    AudioClip,
    SceneSpec,
    default_scene_specs,
    frame_samples,
    frame_segment,
    load_wav,
    save_wav,
    segment_snippet,
    synth_scene,
)
from earshot.errors import DataError, SampleRateError, UnsupportedWavError

RATE = 22050


def write_pcm16(path, samples, rate=RATE):
    wavfile.write(path, rate, (np.asarray(samples) * 32767).astype(np.int16))


def test_load_wav_30s_sample_count(tmp_path):
    path = tmp_path / "a.wav"
    write_pcm16(path, np.zeros(30 * RATE))
    clip = load_wav(path)
    assert clip.samples.shape[0] == 661500
    assert clip.sample_rate == RATE


def test_load_wav_all_zero_ok(tmp_path):
    path = tmp_path / "z.wav"
    write_pcm16(path, np.zeros(RATE))
    clip = load_wav(path)
    assert np.all(clip.samples == 0.0)


def test_load_wav_normalizes_to_unit_range(tmp_path):
    path = tmp_path / "f.wav"
    rng = np.random.default_rng(0)
    write_pcm16(path, rng.uniform(-1, 1, RATE))
    clip = load_wav(path)
    assert np.max(np.abs(clip.samples)) <= 1.0


def test_load_wav_stereo_averaged(tmp_path):
    path = tmp_path / "st.wav"
    left = np.full(RATE, 0.5, dtype=np.float32)
    right = np.full(RATE, -0.5, dtype=np.float32)
    wavfile.write(path, RATE, np.stack([left, right], axis=1))
    clip = load_wav(path)
    assert np.allclose(clip.samples, 0.0, atol=1e-6)


def test_load_wav_float32_supported(tmp_path):
    path = tmp_path / "f32.wav"
    wavfile.write(path, RATE, np.linspace(-0.9, 0.9, RATE).astype(np.float32))
    clip = load_wav(path)
    assert clip.samples.shape[0] == RATE


def test_load_wav_mulaw_rejected(tmp_path):
    # Minimal RIFF container claiming WAVE_FORMAT_MULAW (7).
    path = tmp_path / "ulaw.wav"
    data = bytes(64)
    fmt = struct.pack("<HHIIHH", 7, 1, 8000, 8000, 1, 8)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"data" + struct.pack("<I", len(data)) + data
    path.write_bytes(b"RIFF" + struct.pack("<I", len(body)) + body)
    with pytest.raises(UnsupportedWavError):
        load_wav(path)


def test_load_wav_missing_file():
    with pytest.raises(DataError):
        load_wav("/nonexistent/nope.wav")


def test_load_wav_off_rate_rejected_unless_waived(tmp_path):
    path = tmp_path / "r16.wav"
    write_pcm16(path, np.zeros(16000), rate=16000)
    with pytest.raises(SampleRateError):
        load_wav(path)
    clip = load_wav(path, allow_any_rate=True)
    assert clip.sample_rate == 16000


def test_save_load_roundtrip(tmp_path):
    rng = np.random.default_rng(3)
    clip = AudioClip(samples=rng.uniform(-0.8, 0.8, RATE).astype(np.float32),
                     sample_rate=RATE, source_id="rt")
    path = tmp_path / "rt.wav"
    save_wav(path, clip)
    loaded = load_wav(path)
    assert np.allclose(loaded.samples, clip.samples, atol=1e-4)


def make_clip(duration_s, fill=None, seed=0):
    n = int(duration_s * RATE)
    if fill is None:
        samples = np.random.default_rng(seed).uniform(-0.5, 0.5, n).astype(np.float32)
    else:
        samples = np.full(n, fill, dtype=np.float32)
    return AudioClip(samples=samples, sample_rate=RATE, source_id="clip")


class TestSegmentSnippet:
    def test_30s_gives_8_segments_with_final_overlap(self):
        segs = segment_snippet(make_clip(30))
        assert len(segs) == 8
        assert [s.start_s for s in segs] == [0.0, 4.0, 8.0, 12.0, 16.0, 20.0, 24.0, 26.0]
        for s in segs:
            assert s.end_s - s.start_s == pytest.approx(4.0, abs=1.0 / RATE)

    def test_16s_exact_division(self):
        segs = segment_snippet(make_clip(16))
        assert [s.start_s for s in segs] == [0.0, 4.0, 8.0, 12.0]

    def test_too_short_clip_errors(self):
        with pytest.raises(DataError):
            segment_snippet(make_clip(3))

    def test_reassembly_of_nonfinal_segments(self):
        clip = make_clip(30, seed=5)
        segs = segment_snippet(clip)
        glued = np.concatenate([s.samples for s in segs[:-1]])
        assert np.array_equal(glued, clip.samples[: 7 * 4 * RATE])

    def test_exact_division_has_no_overlap(self):
        segs = segment_snippet(make_clip(16, seed=6))
        for a, b in zip(segs, segs[1:]):
            assert a.end_s == b.start_s

    def test_segments_are_slices_of_parent(self):
        clip = make_clip(30, seed=7)
        for s in segment_snippet(clip):
            start = int(round(s.start_s * RATE))
            assert np.array_equal(s.samples, clip.samples[start : start + 4 * RATE])


class TestFraming:
    def test_4s_segment_has_31_frames(self):
        seg = segment_snippet(make_clip(4))[0]
        assert frame_segment(seg).T == 31

    def test_250ms_segment_has_1_frame(self):
        fs = frame_samples(np.zeros(5512, dtype=np.float32), RATE)
        assert fs.T == 1

    def test_30s_snippet_framed_whole_has_239_frames(self):
        fs = frame_samples(make_clip(30).samples, RATE)
        assert fs.T == 239

    def test_consecutive_frames_share_2756_samples(self):
        fs = frame_samples(make_clip(4, seed=9).samples, RATE)
        for t in range(fs.T - 1):
            assert np.array_equal(fs.frames[t, 2756:], fs.frames[t + 1, :2756])

    def test_too_short_errors(self):
        with pytest.raises(DataError):
            frame_samples(np.zeros(5000, dtype=np.float32), RATE)


class TestSynthScene:
    SPEC = SceneSpec(category="lab", noise_color=1.0, event_rate=0.8,
                     event_band=(400.0, 800.0))

    def test_deterministic(self):
        a = synth_scene(self.SPEC, 30, 42)
        b = synth_scene(self.SPEC, 30, 42)
        assert np.array_equal(a.samples, b.samples)

    def test_different_seeds_differ(self):
        a = synth_scene(self.SPEC, 8, 1)
        b = synth_scene(self.SPEC, 8, 2)
        assert not np.array_equal(a.samples, b.samples)

    def test_zero_event_rate_is_pure_colored_noise(self):
        quiet = SceneSpec(category="q", noise_color=1.0, event_rate=0.0,
                          event_band=(400.0, 800.0))
        clip = synth_scene(quiet, 8, 11)
        # Reconstruct the event-free signal from the same generator path.
        from earshot.audio import _colored_noise

        rng = np.random.default_rng(np.uint64(11))
        gain = rng.uniform(0.7, 1.3)
        x = 0.08 * gain * _colored_noise(rng, clip.samples.shape[0], 1.0, RATE)
        assert rng.poisson(0.0) == 0
        peak = np.max(np.abs(x))
        if peak > 0.97:
            x = x * (0.97 / peak)
        assert np.array_equal(clip.samples, x.astype(np.float32))

    def test_amplitudes_in_range(self):
        clip = synth_scene(self.SPEC, 8, 3)
        assert np.max(np.abs(clip.samples)) <= 1.0

    def test_duration_below_4s_rejected(self):
        with pytest.raises(DataError):
            synth_scene(self.SPEC, 3.5, 0)


def test_default_scene_specs_unique_cue_combos():
    specs = default_scene_specs([f"c{i}" for i in range(8)])
    combos = {(s.noise_color, s.event_rate, s.event_band) for s in specs}
    assert len(combos) == 8


@pytest.mark.slow
def test_disjoint_band_categories_separable_by_pipeline_svm():
    """Two categories with disjoint event bands: a linear SVM on mean
    gammatone features gets > 90% training accuracy."""
    from earshot.features import gammatone_coeffs, power_spectrum
    from earshot.fusion import train_linear_svm

    spec_a = SceneSpec(category="a", noise_color=1.0, event_rate=2.0,
                       event_band=(300.0, 500.0))
    spec_b = SceneSpec(category="b", noise_color=1.0, event_rate=2.0,
                       event_band=(3000.0, 5000.0))
    rows, labels = [], []
    for label, spec in enumerate((spec_a, spec_b)):
        for i in range(100):
            clip = synth_scene(spec, 4, 1000 + 7 * i + label)
            frames = frame_samples(clip.samples, RATE).frames
            rows.append(gammatone_coeffs(power_spectrum(frames)).mean(axis=0))
            labels.append(label)
    x = np.asarray(rows)
    y = np.asarray(labels)
    svm = train_linear_svm(x, y, epochs=100, seed=0)
    preds = svm.scores(x).argmax(axis=1)
    assert (preds == y).mean() > 0.90
