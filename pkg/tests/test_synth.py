import numpy as np
import pytest
from hypothesis import given, strategies as st

from rcamotion.errors import GenerationError, ParameterError
from rcamotion.synth import (BackgroundSpec, SynthConfig, TargetSpec, gaussian_noise, generate,
                             preset, splitmix64, uniform01)


def splitmix_scalar(seed, counter):
    m = (1 << 64) - 1
    z = (seed + (counter + 1) * 0x9E3779B97F4A7C15) & m
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & m
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & m
    return z ^ (z >> 31)


def test_splitmix_matches_integer_oracle():
    # seed 0, counter 0 is the first output of the classic splitmix64 stream
    assert splitmix_scalar(0, 0) == 0xE220A8397B1DCDAF
    counters = np.array([0, 1, 2, 12345, 2 ** 40], dtype=np.uint64)
    for seed in (0, 7, 2 ** 63 + 5):
        got = splitmix64(counters, seed)
        assert [int(v) for v in got] == [splitmix_scalar(seed, int(c)) for c in counters]
        u = uniform01(counters, seed)
        assert [float(v) for v in u] == [(splitmix_scalar(seed, int(c)) >> 11) * 2.0 ** -53 for c in counters]


def test_noise_layout_and_moments():
    n = gaussian_noise(7, 3, 40, 50)
    assert n.shape == (40, 50)
    idx = 3 * 40 * 50 + 17 * 50 + 9
    ua = (splitmix_scalar(7, 2 * idx) >> 11) * 2.0 ** -53
    ub = (splitmix_scalar(7, 2 * idx + 1) >> 11) * 2.0 ** -53
    expected = np.sqrt(-2.0 * np.log(1.0 - ua)) * np.cos(2.0 * np.pi * ub)
    assert abs(n[17, 9] - expected) <= 1e-15
    big = gaussian_noise(1, 0, 200, 200)
    assert abs(big.mean()) < 0.02 and abs(big.std() - 1.0) < 0.02


def test_empty_scene_is_constant():
    cfg = SynthConfig(height=32, width=40, num_frames=3, background=BackgroundSpec(level=0.3))
    frames, boxes = generate(cfg)
    assert all(np.array_equal(f, np.full((32, 40), 0.3)) for f in frames)
    assert boxes == [[], [], []]


def test_linear_motion_center():
    tg = TargetSpec(start=(10.0, 20.0), velocity=(2.0, 0.0))
    assert tg.center(5) == (20.0, 20.0)
    cfg = SynthConfig(height=40, width=64, num_frames=8, targets=(tg,))
    frames, boxes = generate(cfg)
    assert np.unravel_index(np.argmax(frames[5]), frames[5].shape) == (20, 20)
    b = boxes[5][0]
    assert (b.x_min, b.y_min, b.x_max, b.y_max) == (16.0, 16.0, 24.0, 24.0)


def test_determinism_and_seed_dependence():
    a = generate(preset("moving-blob", num_frames=4, height=64, width=96,
                        targets=(TargetSpec((20.0, 30.0), (2.0, 1.0)),)))
    b = generate(preset("moving-blob", num_frames=4, height=64, width=96,
                        targets=(TargetSpec((20.0, 30.0), (2.0, 1.0)),)))
    c = generate(preset("moving-blob", num_frames=4, height=64, width=96, seed=8,
                        targets=(TargetSpec((20.0, 30.0), (2.0, 1.0)),)))
    assert all(np.array_equal(x, y) for x, y in zip(a[0], b[0]))
    assert not np.array_equal(a[0][0], c[0][0])
    assert a[1] == c[1]


def test_preset_matches_scenario():
    cfg = preset("moving-blob")
    tg, = cfg.targets
    assert (cfg.height, cfg.width, cfg.num_frames, cfg.seed) == (256, 256, 50, 7)
    assert tg.amplitude == 0.6 and tg.velocity == (2.0, 0.0)
    assert cfg.background.noise_sigma == 0.05
    with pytest.raises(ParameterError):
        preset("nope")


def test_validation():
    with pytest.raises(GenerationError):
        generate(SynthConfig(width=64, height=64, num_frames=50,
                             targets=(TargetSpec((10.0, 10.0), (3.0, 0.0)),)))
    with pytest.raises(ParameterError):
        generate(SynthConfig(height=16))
    with pytest.raises(ParameterError):
        generate(SynthConfig(num_frames=0))
    with pytest.raises(ParameterError):
        generate(SynthConfig(targets=(TargetSpec((10.0, 10.0), (0.0, 0.0), sigma=0.0),)))
    with pytest.raises(ParameterError):
        generate(SynthConfig(targets=(TargetSpec((10.0, 10.0), (0.0, 0.0), amplitude=1.5),)))


def test_boxes_clip_at_border():
    cfg = SynthConfig(height=32, width=32, num_frames=1, targets=(TargetSpec((1.0, 30.0), (0.0, 0.0)),))
    b = generate(cfg)[1][0][0]
    assert (b.x_min, b.y_min, b.x_max, b.y_max) == (0.0, 26.0, 5.0, 32.0)


@given(st.floats(5, 58), st.floats(5, 58), st.floats(-1, 1), st.floats(-1, 1),
       st.floats(0.5, 4), st.floats(0.05, 1.0), st.floats(0, 1), st.floats(0, 0.3),
       st.integers(0, 2 ** 32))
def test_frames_in_range_and_boxes_in_bounds(x, y, vx, vy, sigma, amp, level, noise, seed):
    cfg = SynthConfig(height=64, width=64, num_frames=4, seed=seed,
                      targets=(TargetSpec((x, y), (vx, vy), sigma, amp),),
                      background=BackgroundSpec(level=level, noise_sigma=noise))
    frames, boxes = generate(cfg)
    for f, bs in zip(frames, boxes):
        assert f.min() >= 0.0 and f.max() <= 1.0
        for b in bs:
            assert 0 <= b.x_min <= b.x_max <= 64 and 0 <= b.y_min <= b.y_max <= 64


def test_difference_confined_to_target_support():
    tg = TargetSpec((20.0, 30.0), (3.0, 0.0), sigma=1.5, amplitude=0.5)
    cfg = SynthConfig(height=64, width=64, num_frames=3, targets=(tg,))
    frames, _ = generate(cfg)
    ys, xs = np.mgrid[0:64, 0:64]
    for t in range(2):
        diff = np.abs(frames[t + 1] - frames[t])
        # blob energy is below 1e-12 beyond ~ 7.5 sigma of either centre
        support = np.zeros((64, 64), dtype=bool)
        for c in (tg.center(t), tg.center(t + 1)):
            support |= (xs - c[0]) ** 2 + (ys - c[1]) ** 2 <= (7.5 * tg.sigma) ** 2
        assert diff[~support].max() <= 1e-12
        assert diff[support].max() > 0.1
