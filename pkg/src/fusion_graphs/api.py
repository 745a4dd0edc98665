import logging
import math
from typing import Any, Dict, List, Optional

import numpy as np
from fastapi import Depends, FastAPI, HTTPException
from pydantic import BaseModel

from fusion_graphs import __version__
from fusion_graphs.classify.fusion import MulticlassModel, predict_batch
from fusion_graphs.classify.store import ModelCache
from fusion_graphs.config import settings
from fusion_graphs.errors import DataError

logger = logging.getLogger(__name__)

MODEL_CACHE = ModelCache(settings.MODEL_PATH)


class ClassifyRequest(BaseModel):
    sample: List[List[float]]
    tau_out: Optional[float] = None


class BatchRequest(BaseModel):
    samples: List[List[List[float]]]
    tau_out: Optional[float] = None


def _finite(value: float) -> Optional[float]:
    # JSON responses cannot carry infinities
    return float(value) if math.isfinite(value) else None


def get_model_cache() -> ModelCache:
    return MODEL_CACHE


def _require_model(cache: ModelCache) -> MulticlassModel:
    if not cache.path.exists():
        raise HTTPException(status_code=503, detail=f'No trained model at {cache.path}')
    try:
        return cache.get()
    except DataError as exc:
        logger.exception('Unable to load model from %s', cache.path)
        raise HTTPException(status_code=503, detail=str(exc)) from exc


def _as_blocks(model: MulticlassModel, samples: List[List[List[float]]]) -> List[np.ndarray]:
    if not samples:
        raise HTTPException(status_code=400, detail='No samples given')
    blocks = []
    for i in range(model.layout.m):
        try:
            blocks.append(np.asarray([s[i] for s in samples], dtype=float))
        except (IndexError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=f'Feature set {i}: {exc}') from exc
    return blocks


def _classify(model: MulticlassModel, samples: List[List[List[float]]], tau_out: Optional[float]) -> List[Dict[str, Any]]:
    if any(len(s) != model.layout.m for s in samples):
        raise HTTPException(status_code=400,
                            detail=f'Each sample needs {model.layout.m} feature vectors (layout {model.layout})')
    threshold = model.tau_out if tau_out is None else tau_out
    try:
        winners, scores = predict_batch(model, _as_blocks(model, samples))
    except DataError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc
    results = []
    for k, row in zip(winners, scores):
        rejected = bool(row.max() < threshold)
        results.append({
            'label': None if rejected else model.class_names[int(k)],
            'best': model.class_names[int(k)],
            'rejected': rejected,
            'scores': {name: float(s) for name, s in zip(model.class_names, row)},
        })
    return results


app = FastAPI(title='fusion-graphs', version=__version__)


@app.get('/health', response_model=Dict[str, Any])
def health(cache: ModelCache = Depends(get_model_cache)):
    return {'status': 'ok', 'model_available': cache.path.exists()}


@app.get('/model', response_model=Dict[str, Any])
def model_summary(cache: ModelCache = Depends(get_model_cache)):
    _require_model(cache)
    summary = cache.summary()
    summary['tau_out'] = _finite(summary['tau_out'])
    for entry in summary['classes']:
        entry['tau'] = _finite(entry['tau'])
    return summary


@app.post('/classify', response_model=Dict[str, Any])
def classify_sample(payload: ClassifyRequest, cache: ModelCache = Depends(get_model_cache)):
    model = _require_model(cache)
    return _classify(model, [payload.sample], payload.tau_out)[0]


@app.post('/classify/batch', response_model=Dict[str, Any])
def classify_samples(payload: BatchRequest, cache: ModelCache = Depends(get_model_cache)):
    model = _require_model(cache)
    results = _classify(model, payload.samples, payload.tau_out)
    return {'results': results, 'rejected': sum(r['rejected'] for r in results)}
