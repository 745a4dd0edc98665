import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fusion_graphs.errors import ConfigError, DataError
from fusion_graphs.features.wavelets import (
    WAVELETS,
    ImageChip,
    dwt2_level,
    dwt2_subbands,
    idwt2_level,
    normalize_chip,
)


def test_haar_on_a_two_by_two_chip():
    ll, lh, hl, hh = dwt2_level(np.array([[1.0, 2.0], [3.0, 4.0]]), 'haar')
    assert ll[0, 0] == pytest.approx(5.0)
    assert lh[0, 0] == pytest.approx(-2.0)
    assert hl[0, 0] == pytest.approx(-1.0)
    assert hh[0, 0] == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize('levels', [1, 2, 3])
def test_constant_chip_has_no_detail(levels):
    chip = ImageChip(np.full((16, 16), 0.75))
    bands = dwt2_subbands(chip, levels, 'haar')
    np.testing.assert_allclose(bands.ll, 0.75 * 2 ** levels, atol=1e-12)
    np.testing.assert_allclose(bands.lh, 0.0, atol=1e-12)
    np.testing.assert_allclose(bands.hl, 0.0, atol=1e-12)
    assert bands.ll.shape == ((16 // 2 ** levels) ** 2,)


@pytest.mark.parametrize('wavelet', WAVELETS)
def test_constant_chip_has_no_detail_for_every_wavelet(wavelet):
    bands = dwt2_subbands(ImageChip(np.full((16, 16), -1.5)), 2, wavelet)
    np.testing.assert_allclose(bands.lh, 0.0, atol=1e-10)
    np.testing.assert_allclose(bands.hl, 0.0, atol=1e-10)


@pytest.mark.parametrize('wavelet', WAVELETS)
def test_one_level_reconstructs_the_chip(rng, wavelet):
    data = rng.standard_normal((16, 16))
    np.testing.assert_allclose(idwt2_level(*dwt2_level(data, wavelet), wavelet=wavelet), data, atol=1e-9)


def test_haar_preserves_energy(rng):
    data = rng.standard_normal((32, 32))
    energy = sum(float(np.sum(band ** 2)) for band in dwt2_level(data, 'haar'))
    assert energy == pytest.approx(float(np.sum(data ** 2)), rel=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(-10.0, 10.0, allow_nan=False), st.sampled_from(WAVELETS))
def test_decomposition_is_linear(seed, scale, wavelet):
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal((8, 8)), rng.standard_normal((8, 8))
    combined = dwt2_level(scale * x + y, wavelet)
    for band, bx, by in zip(combined, dwt2_level(x, wavelet), dwt2_level(y, wavelet)):
        np.testing.assert_allclose(band, scale * bx + by, atol=1e-9)


def test_constant_image_normalizes_to_zeros():
    chip = normalize_chip(np.full((40, 40), 0.3), target=32)
    assert chip.pixels.shape == (32, 32)
    np.testing.assert_array_equal(chip.pixels, 0.0)


def test_normalized_chip_is_standardized(rng):
    chip = normalize_chip(rng.random((128, 128)), target=64)
    assert (chip.height, chip.width) == (64, 64)
    assert chip.pixels.mean() == pytest.approx(0.0, abs=1e-12)
    assert chip.pixels.var() == pytest.approx(1.0, abs=1e-9)


def test_center_crop_ignores_the_margins(rng):
    image = rng.random((100, 75))
    base = normalize_chip(image, target=64)
    perturbed = image.copy()
    perturbed[0, 0] += 50.0
    perturbed[99, 74] -= 50.0
    np.testing.assert_array_equal(normalize_chip(perturbed, target=64).pixels, base.pixels)


def test_normalization_is_idempotent(rng):
    once = normalize_chip(rng.random((90, 90)), target=64)
    twice = normalize_chip(once.pixels, target=64)
    assert np.max(np.abs(twice.pixels - once.pixels)) < 1e-9


def test_non_finite_pixels_are_rejected():
    image = np.zeros((8, 8))
    image[2, 3] = np.nan
    with pytest.raises(DataError, match='non-finite'):
        normalize_chip(image, target=8)


def test_subband_argument_errors():
    with pytest.raises(DataError, match='non-dyadic'):
        dwt2_subbands(ImageChip(np.zeros((12, 12))), 3, 'haar')
    with pytest.raises(ConfigError, match='unknown wavelet'):
        dwt2_subbands(ImageChip(np.zeros((8, 8))), 1, 'db4')
    with pytest.raises(ConfigError):
        dwt2_subbands(ImageChip(np.zeros((8, 8))), 0, 'haar')
