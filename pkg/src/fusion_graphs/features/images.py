"""PGM decoding and batch sub-band extraction from an image manifest (columns path,label)."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Optional, Tuple
import logging

import numpy as np
import pandas as pd
from PIL import Image, UnidentifiedImageError

from fusion_graphs.classify.fusion import FeatureLayout
from fusion_graphs.config import settings
from fusion_graphs.errors import DataError
from fusion_graphs.features.tabular import FeatureTable
from fusion_graphs.features.wavelets import SubbandFeatures, dwt2_subbands, normalize_chip

logger = logging.getLogger(__name__)

MANIFEST_COLUMNS = ('path', 'label')


def read_pgm(path: Path) -> np.ndarray:
    """Decode an 8- or 16-bit PGM (P2 or P5) into intensities in [0, 1]."""
    path = Path(path)
    try:
        with Image.open(path) as img:
            img.load()
            mode = img.mode
            pixels = np.asarray(img, dtype=np.float64)
    except FileNotFoundError:
        raise DataError(f'image not found: {path}') from None
    except (UnidentifiedImageError, OSError) as exc:
        raise DataError(f'cannot decode image {path}: {exc}') from exc
    if pixels.ndim != 2:
        raise DataError(f'{path}: expected a grayscale image, got mode {mode}')
    scale = 255.0 if mode in ('L', 'P', '1') else 65535.0
    return pixels / scale


def subband_layout(target: int = settings.CHIP_SIZE, levels: int = settings.FUSION_LEVELS) -> FeatureLayout:
    side = target // (2 ** levels)
    return FeatureLayout((side * side,) * 3)


def image_features(path: Path, wavelet: str = settings.FUSION_WAVELET, levels: int = settings.FUSION_LEVELS,
                   target: int = settings.CHIP_SIZE) -> SubbandFeatures:
    chip = normalize_chip(read_pgm(path), target)
    return dwt2_subbands(chip, levels, wavelet)


def is_image_manifest(path: Path) -> bool:
    try:
        header = pd.read_csv(path, nrows=0)
    except (pd.errors.EmptyDataError, pd.errors.ParserError, FileNotFoundError):
        return False
    return tuple(header.columns) == MANIFEST_COLUMNS


def load_manifest(path: Path) -> List[Tuple[Path, str]]:
    """Entries as (resolved image path, label); relative paths resolve against the manifest folder."""
    path = Path(path)
    if not path.exists():
        raise DataError(f'manifest not found: {path}')
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        raise DataError(f'{path}: no samples') from None
    except pd.errors.ParserError as exc:
        raise DataError(f'{path}: ragged rows ({exc})') from exc
    missing = [c for c in MANIFEST_COLUMNS if c not in frame.columns]
    if missing:
        raise DataError(f'{path}: manifest needs columns path,label (missing {", ".join(missing)})')
    if frame.empty:
        raise DataError(f'{path}: no samples')
    entries = []
    for idx, row in frame.iterrows():
        image = Path(row['path'].strip())
        if not row['path'].strip():
            raise DataError(f'{path}: line {idx + 2}: empty image path')
        entries.append((image if image.is_absolute() else path.parent / image, row['label'].strip()))
    return entries


def extract_manifest_features(path: Path, wavelet: str = settings.FUSION_WAVELET,
                              levels: int = settings.FUSION_LEVELS, target: int = settings.CHIP_SIZE,
                              workers: int = settings.FUSION_WORKERS,
                              known_labels: Optional[List[str]] = None) -> FeatureTable:
    """LL, LH and HL sub-band vectors of every manifest image as three feature sets."""
    entries = load_manifest(path)
    if known_labels is not None:
        allowed = set(known_labels)
        for idx, (_, label) in enumerate(entries):
            if label not in allowed:
                raise DataError(f'{path}: line {idx + 2}: unknown label {label!r}')
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        features = list(pool.map(lambda entry: image_features(entry[0], wavelet, levels, target), entries))
    layout = subband_layout(target, levels)
    blocks = [np.vstack([f.blocks()[b] for f in features]) for b in range(3)]
    labels = np.array([label for _, label in entries], dtype=str)
    logger.info('Extracted %s sub-band features from %d images (%s, %d levels)', layout, len(entries), wavelet, levels)
    return FeatureTable(blocks=blocks, labels=labels, layout=layout)
