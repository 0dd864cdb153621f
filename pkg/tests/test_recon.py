import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spikefield.recon import long_term_rate, tfi, tfp
from spikefield.sim import SpikeCameraModel, simulate_stream
from spikefield.stream import SpikeStream


def train_1px(times, steps):
    bits = np.zeros((steps, 1, 1), dtype=np.uint8)
    bits[list(times), 0, 0] = 1
    return SpikeStream.from_dense(bits)


def constant(level, steps, theta=1.0, shape=(3, 4)):
    return simulate_stream(np.full(shape, level), SpikeCameraModel.ideal(*shape, theta=theta), steps)


def test_tfi_interval_arithmetic():
    s = train_1px([3, 7], 10)
    assert tfi(s, 5, 1.0)[0, 0] == 0.25


def test_tfi_pair_selection():
    s = train_1px([2, 4, 9], 12)
    assert tfi(s, 3, 1.0)[0, 0] == 0.5          # inside (2, 4)
    assert tfi(s, 4, 1.0)[0, 0] == 0.5          # on a spike: earlier pair wins
    assert tfi(s, 5, 1.0)[0, 0] == 0.2          # inside (4, 9)
    assert tfi(s, 0, 1.0)[0, 0] == 0.5          # before the first spike
    assert tfi(s, 11, 1.0)[0, 0] == 0.2         # after the last spike


def test_tfi_constant_half():
    s = constant(0.5, 64)
    for t in (0, 17, 32, 63):
        assert np.all(tfi(s, t, 1.0) == 0.5)


def test_tfi_degenerate_pixels_masked():
    bits = np.zeros((10, 1, 3), dtype=np.uint8)
    bits[4, 0, 1] = 1
    bits[[1, 6], 0, 2] = 1
    out, mask = tfi(SpikeStream.from_dense(bits), 5, 2.0, return_mask=True)
    assert out.tolist() == [[0.0, 0.0, 0.4]]
    assert mask.tolist() == [[False, False, True]]


def test_tfi_bounds_check():
    with pytest.raises(IndexError):
        tfi(train_1px([1, 2], 4), 4, 1.0)


def test_tfp_examples():
    s = train_1px([0, 2], 4)
    assert tfp(s, 2, 4, 1.0)[0, 0] == 0.5
    z = SpikeStream.from_dense(np.zeros((16, 2, 2)))
    assert np.all(tfp(z, 8, 8, 1.0) == 0)
    s = constant(0.5, 256)
    assert np.all(np.abs(tfp(s, 128, 256, 1.0) - 0.5) <= 1 / 256)


def test_tfp_clips_window():
    s = train_1px([0, 1, 2], 10)
    # window [0, 4) after clipping at t=0, w=8
    assert tfp(s, 0, 8, 1.0)[0, 0] == pytest.approx(3 / 4)


def test_long_term_rate():
    s = constant(0.5, 256)
    assert np.all(long_term_rate(s, 1.0) == 0.5)
    assert np.all(long_term_rate(SpikeStream.from_dense(np.zeros((5, 1, 1))), 1.0) == 0)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000), steps=st.integers(1, 64))
def test_long_term_rate_equals_full_window_tfp(seed, steps):
    s = SpikeStream.from_dense(np.random.default_rng(seed).random((steps, 2, 3)) < 0.4)
    assert np.array_equal(long_term_rate(s, 1.3), tfp(s, steps // 2, steps, 1.3))


@pytest.mark.parametrize("level", [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9])
@pytest.mark.parametrize("w", [32, 256])
def test_constant_scene_error_bounds(level, w):
    theta = 1.0
    s = constant(level, 256, theta, shape=(1, 1))
    L_tfi = tfi(s, 128, theta)[0, 0]
    # intervals alternate between floor and ceil of theta / level ticks
    bound = max(theta / np.floor(theta / level) - level, level - theta / np.ceil(theta / level))
    assert abs(L_tfi - level) <= bound + 1e-12
    L_tfp = tfp(s, 128, w, theta)[0, 0]
    assert abs(L_tfp - level) <= theta / w + level / w + 1e-12


def test_outputs_nonnegative_and_finite():
    s = SpikeStream.from_dense(np.random.default_rng(2).random((40, 5, 5)) < 0.2)
    for img in (tfi(s, 20, 1.0), tfp(s, 20, 8, 1.0), long_term_rate(s, 1.0)):
        assert np.all(img >= 0) and np.all(np.isfinite(img))


def test_tfp_translation_invariance_for_periodic_stream():
    s = constant(0.25, 128)   # period 4
    assert np.array_equal(tfp(s, 40, 32, 1.0), tfp(s, 80, 32, 1.0))
