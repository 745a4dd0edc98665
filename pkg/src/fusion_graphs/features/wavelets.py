"""Image chips and 2-D wavelet sub-band features.

Sub-band naming follows PyWavelets: LH is the horizontal detail (low-pass along rows, high-pass
down the columns), HL the vertical detail. For a 2x2 chip [[a, b], [c, d]] and Haar:
LL = (a+b+c+d)/2, LH = (a+b-c-d)/2, HL = (a-b+c-d)/2. Boundaries use periodization, which is
exact on dyadic sizes.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple
import logging

import numpy as np
import pywt
from scipy import ndimage

from fusion_graphs.config import settings
from fusion_graphs.errors import ConfigError, DataError

logger = logging.getLogger(__name__)

WAVELETS = ('haar', 'bior2.2', 'rbio2.2')
VARIANCE_FLOOR = 1e-12
MODE = 'periodization'


@dataclass(frozen=True)
class ImageChip:
    pixels: np.ndarray

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])


@dataclass(frozen=True)
class SubbandFeatures:
    ll: np.ndarray
    lh: np.ndarray
    hl: np.ndarray
    levels: int
    wavelet: str

    def blocks(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.ll, self.lh, self.hl


def normalize_chip(image: np.ndarray, target: int = settings.CHIP_SIZE) -> ImageChip:
    """Center-crop to a square, resample bilinearly to target x target, standardize intensities."""
    img = np.asarray(image, dtype=float)
    if img.ndim != 2 or img.shape[0] < 1 or img.shape[1] < 1:
        raise DataError(f'image must be a non-empty 2-D grid, got shape {img.shape}')
    if not np.all(np.isfinite(img)):
        raise DataError('non-finite pixels in image')
    side = min(img.shape)
    top = (img.shape[0] - side) // 2
    left = (img.shape[1] - side) // 2
    square = img[top:top + side, left:left + side]
    if side != target:
        square = ndimage.zoom(square, target / side, order=1, mode='nearest', grid_mode=False)
        if square.shape != (target, target):
            square = square[:target, :target]
            square = np.pad(square, ((0, target - square.shape[0]), (0, target - square.shape[1])), mode='edge')
    centered = square - square.mean()
    variance = centered.var()
    if variance > VARIANCE_FLOOR:
        centered = centered / np.sqrt(variance)
    return ImageChip(pixels=centered)


def _check_wavelet(wavelet: str) -> str:
    if wavelet not in WAVELETS:
        raise ConfigError(f'unknown wavelet {wavelet!r}; choose one of {", ".join(WAVELETS)}')
    return wavelet


def dwt2_level(data: np.ndarray, wavelet: str = 'haar') -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """One separable 2-D DWT step: (LL, LH, HL, HH)."""
    data = np.asarray(data, dtype=float)
    if data.shape[0] % 2 or data.shape[1] % 2:
        raise DataError(f'non-dyadic size {data.shape} for one decomposition level')
    ll, (lh, hl, hh) = pywt.dwt2(data, _check_wavelet(wavelet), mode=MODE)
    return ll, lh, hl, hh


def idwt2_level(ll: np.ndarray, lh: np.ndarray, hl: np.ndarray, hh: np.ndarray, wavelet: str = 'haar') -> np.ndarray:
    return pywt.idwt2((ll, (lh, hl, hh)), _check_wavelet(wavelet), mode=MODE)


def dwt2_subbands(chip: ImageChip, levels: int = settings.FUSION_LEVELS, wavelet: str = settings.FUSION_WAVELET) -> SubbandFeatures:
    """Decompose the LL band `levels` times; return the final LL, LH, HL flattened row-major."""
    _check_wavelet(wavelet)
    if levels < 1:
        raise ConfigError(f'levels must be >= 1, got {levels}')
    factor = 2 ** levels
    if chip.height % factor or chip.width % factor:
        raise DataError(f'non-dyadic size {chip.height}x{chip.width} for {levels} levels')
    band = chip.pixels
    lh = hl = None
    for _ in range(levels):
        band, lh, hl, _hh = dwt2_level(band, wavelet)
    return SubbandFeatures(ll=band.ravel(), lh=lh.ravel(), hl=hl.ravel(), levels=levels, wavelet=wavelet)
