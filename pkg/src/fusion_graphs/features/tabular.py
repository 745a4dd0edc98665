"""Comma-delimited feature tables: one label column, the remaining columns numeric."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Sequence
import logging

import numpy as np
import pandas as pd

from fusion_graphs.classify.fusion import FeatureLayout
from fusion_graphs.errors import DataError

logger = logging.getLogger(__name__)

LABEL_COLUMN = 'label'


@dataclass(frozen=True)
class FeatureTable:
    """Row-aligned feature blocks (one N x m_i matrix per feature set) and labels."""

    blocks: List[np.ndarray]
    labels: Optional[np.ndarray]
    layout: FeatureLayout

    @property
    def size(self) -> int:
        return int(self.blocks[0].shape[0])

    def matrix(self) -> np.ndarray:
        return np.hstack(self.blocks)

    def subset(self, rows: Sequence[int]) -> 'FeatureTable':
        rows = np.asarray(rows, dtype=np.int64)
        labels = None if self.labels is None else self.labels[rows]
        return FeatureTable(blocks=[b[rows] for b in self.blocks], labels=labels, layout=self.layout)

    def class_names(self) -> List[str]:
        if self.labels is None:
            return []
        return list(dict.fromkeys(self.labels.tolist()))


def _line(idx: int) -> int:
    # header is line 1
    return idx + 2


def _describe(cell: str) -> str:
    try:
        value = float(cell)
    except ValueError:
        return 'non-numeric'
    return 'non-numeric' if np.isfinite(value) else 'non-finite'


def _parse_values(frame: pd.DataFrame, columns: List[str]) -> np.ndarray:
    cells = frame[columns].apply(lambda col: col.str.strip())
    parsed = cells.apply(pd.to_numeric, errors='coerce').to_numpy(dtype=float)
    bad = ~np.isfinite(parsed)
    if bad.any():
        r, c = (int(k) for k in np.argwhere(bad)[0])
        cell = cells.iat[r, c]
        raise DataError(f'line {_line(r)}: {_describe(cell)} value {cell!r} in column {columns[c]!r}')
    # float() on the text is correctly rounded, so written tables read back bit-identically
    return cells.to_numpy(dtype=float)


def load_tabular_features(path: Path, layout: Optional[FeatureLayout] = None, label_column: str = LABEL_COLUMN,
                          known_labels: Optional[Iterable[str]] = None,
                          require_labels: bool = True) -> FeatureTable:
    """Read a feature table and split its numeric columns into the layout's blocks.

    Without a layout all numeric columns form a single feature set.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f'feature file not found: {path}')
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        raise DataError(f'{path}: no samples') from None
    except pd.errors.ParserError as exc:
        raise DataError(f'{path}: ragged rows ({exc})') from exc
    if frame.empty:
        raise DataError(f'{path}: no samples')

    has_labels = label_column in frame.columns
    if require_labels and not has_labels:
        raise DataError(f'{path}: missing label column {label_column!r}')
    incomplete = frame.isna().any(axis=1).to_numpy()
    if incomplete.any():
        first = int(np.flatnonzero(incomplete)[0])
        raise DataError(f'{path}: line {_line(first)}: expected {frame.shape[1]} fields (ragged row)')

    feature_columns = [c for c in frame.columns if c != label_column]
    if layout is None:
        layout = FeatureLayout((len(feature_columns),))
    if len(feature_columns) != layout.n_total:
        raise DataError(f'{path}: layout {layout} needs {layout.n_total} feature columns, found {len(feature_columns)}')
    try:
        values = _parse_values(frame, feature_columns)
    except DataError as exc:
        raise DataError(f'{path}: {exc}') from None

    labels = None
    if has_labels:
        labels = frame[label_column].astype(str).str.strip().to_numpy()
        if known_labels is not None:
            allowed = set(known_labels)
            for idx, label in enumerate(labels):
                if label not in allowed:
                    raise DataError(f'{path}: line {_line(idx)}: unknown label {label!r}')
    logger.info('Loaded %d samples with layout %s from %s', values.shape[0], layout, path)
    return FeatureTable(blocks=layout.split(values), labels=labels, layout=layout)


def write_tabular_features(path: Path, table: FeatureTable, label_column: str = LABEL_COLUMN) -> None:
    """Write the table with 17 significant digits, which reads back bit-identically."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    matrix = table.matrix()
    frame = pd.DataFrame(matrix, columns=[f'f{i}' for i in range(matrix.shape[1])])
    if table.labels is not None:
        frame.insert(0, label_column, table.labels)
    frame.to_csv(path, index=False, float_format='%.17g')
    logger.info('Wrote %d samples to %s', matrix.shape[0], path)
