"""Command-line entry point: fusion-graphs <subcommand> [options].

Exit codes: 0 success, 2 data error, 3 configuration error.
"""
from __future__ import annotations

from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence
import argparse
import json
import logging
import sys

import numpy as np
import pandas as pd

from fusion_graphs import __version__
from fusion_graphs.classify.fusion import (
    FeatureLayout,
    add_class,
    class_features,
    predict_batch,
    train_multiclass,
)
from fusion_graphs.classify.store import load_model, save_model
from fusion_graphs.config import FusionConfig, settings
from fusion_graphs.errors import ConfigError, DataError, FusionError
from fusion_graphs.evaluation.metrics import binary_roc, evaluate, rejection_roc
from fusion_graphs.evaluation.sweep import DEFAULT_SEEDS, holdout_split, training_size_sweep
from fusion_graphs.evaluation.synth import load_synth_spec, synth_fusion_generator
from fusion_graphs.features.images import extract_manifest_features, is_image_manifest
from fusion_graphs.features.tabular import FeatureTable, load_tabular_features, write_tabular_features

logger = logging.getLogger('fusion_graphs.cli')


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:
        raise ConfigError(message)


def _write_json(path: Path, payload: Dict[str, Any]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('w', encoding='utf-8') as fh:
        json.dump(payload, fh, indent=2)
    logger.info('Wrote %s', path)


def _write_frame(path: Path, frame: pd.DataFrame, **kwargs: Any) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, float_format='%.17g', **kwargs)
    logger.info('Wrote %s', path)


def _layout(text: Optional[str]) -> Optional[FeatureLayout]:
    if text is None:
        return None
    try:
        return FeatureLayout.parse(text)
    except DataError as exc:
        raise ConfigError(str(exc)) from exc


def _load_table(args: argparse.Namespace, path: Path, layout: Optional[FeatureLayout] = None,
                known_labels: Optional[List[str]] = None, require_labels: bool = True) -> FeatureTable:
    """Feature table from a CSV or, when the file is a path,label manifest, from its images."""
    if is_image_manifest(path):
        return extract_manifest_features(path, wavelet=args.wavelet, levels=args.levels, target=args.chip_size,
                                         workers=getattr(args, 'workers', None) or settings.FUSION_WORKERS,
                                         known_labels=known_labels)
    layout = layout or _layout(getattr(args, 'layout', None))
    if layout is None:
        raise ConfigError(f'--layout is required for tabular data ({path})')
    return load_tabular_features(path, layout, known_labels=known_labels, require_labels=require_labels)


def _config(args: argparse.Namespace) -> FusionConfig:
    return FusionConfig.build(
        bins=args.bins,
        alpha=args.alpha,
        t_max=args.tmax,
        j_tol=args.j_tol,
        clamp=args.clamp,
        margin=args.margin,
        allow_forest=args.allow_forest or None,
        forest_tol=args.forest_tol,
        init_structure=args.init_structure,
        rebalance=args.rebalance or None,
        resample=args.resample or None,
        workers=args.workers,
        seed=args.seed,
        tau=args.tau,
        tau_out=args.tau_out,
    )


def _model_with_thresholds(args: argparse.Namespace):
    model = load_model(args.model)
    if args.tau_out is not None:
        model = model.with_tau_out(args.tau_out)
    return model


# --- subcommands -------------------------------------------------------------------------------

def cmd_train(args: argparse.Namespace) -> int:
    config = _config(args)
    table = _load_table(args, args.data)
    features = class_features(table.blocks, table.labels, table.class_names())
    model = train_multiclass(features, config)
    save_model(model, args.out)
    return 0


def cmd_predict(args: argparse.Namespace) -> int:
    model = _model_with_thresholds(args)
    table = _load_table(args, args.data, layout=model.layout, require_labels=False)
    winners, scores = predict_batch(model, table.blocks)
    best = scores.max(axis=1)
    frame = pd.DataFrame({
        'predicted': [model.class_names[k] for k in winners],
        'rejected': best < model.tau_out,
    })
    tau = args.tau if args.tau is not None else 0.0
    for k, name in enumerate(model.class_names):
        frame[f'score_{name}'] = scores[:, k]
        frame[f'accept_{name}'] = scores[:, k] > tau
    if table.labels is not None:
        frame.insert(0, 'label', table.labels)
    _write_frame(args.out, frame, index_label='sample')
    logger.info('Predicted %d samples (%d rejected as outliers)', len(frame), int(frame['rejected'].sum()))
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    model = _model_with_thresholds(args)
    table = _load_table(args, args.data, layout=model.layout, known_labels=list(model.class_names))
    matrix = evaluate(model, table.blocks, table.labels)
    report = matrix.report()
    if np.isfinite(model.tau_out):
        _, scores = predict_batch(model, table.blocks)
        report['tau_out'] = model.tau_out
        report['rejected'] = int((scores.max(axis=1) < model.tau_out).sum())
    print(f'accuracy {matrix.accuracy:.4f} on {matrix.total} samples')
    if args.report:
        _write_json(args.report, report)
    if args.confusion:
        _write_frame(args.confusion, matrix.to_frame(normalized=args.normalized))
    return 0


def cmd_roc(args: argparse.Namespace) -> int:
    model = load_model(args.model)
    if args.rejection:
        table = _load_table(args, args.data, layout=model.layout)
        inliers = np.isin(table.labels, list(model.class_names))
        curve = rejection_roc(model, table.blocks, inliers)
    else:
        if not args.positive:
            raise ConfigError('roc needs --positive <class> (or --rejection)')
        table = _load_table(args, args.data, layout=model.layout, known_labels=list(model.class_names))
        curve = binary_roc(model, table.blocks, table.labels, args.positive)
    print(f'auc {curve.auc():.4f} over {len(curve.thresholds)} thresholds')
    _write_frame(args.out, curve.to_frame(), index=False)
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    config = _config(args)
    try:
        sizes = [int(s) for s in args.sizes.split(',') if s.strip()]
    except ValueError as exc:
        raise ConfigError(f'invalid --sizes {args.sizes!r}') from exc
    table = _load_table(args, args.data)
    if args.test:
        train = table
        test = _load_table(args, args.test, layout=table.layout, known_labels=table.class_names())
    else:
        train, test = holdout_split(table, args.holdout, seed=config.seed)
    result = training_size_sweep(train, test, sizes, seeds=args.seeds, config=config, seed=config.seed)
    for point in result.points:
        print(f'{point.size}\t{point.mean:.4f}\t{point.std:.4f}')
    _write_frame(args.out, result.to_frame(), index=False)
    return 0


def cmd_extract(args: argparse.Namespace) -> int:
    table = extract_manifest_features(args.images, wavelet=args.wavelet, levels=args.levels, target=args.chip_size,
                                      workers=args.workers or settings.FUSION_WORKERS)
    write_tabular_features(args.out, table)
    print(f'layout {table.layout}')
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    spec = load_synth_spec(args.spec)
    table = synth_fusion_generator(spec, args.seed)
    write_tabular_features(args.out, table)
    print(f'layout {table.layout}')
    return 0


def cmd_add_class(args: argparse.Namespace) -> int:
    config = _config(args)
    model = load_model(args.model)
    table = _load_table(args, args.data, layout=model.layout)
    features = class_features(table.blocks, table.labels, table.class_names())
    if args.name not in features:
        raise DataError(f'no samples of new class {args.name!r} in {args.data}')
    new_features = features.pop(args.name)
    updated = add_class(model, features, args.name, new_features, config, retrain=args.retrain)
    save_model(updated, args.out or args.model)
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    if args.model:
        settings.MODEL_PATH = Path(args.model)
    uvicorn.run('fusion_graphs.api:app', host=args.host, port=args.port, log_level=args.log_level.lower())
    return 0


# --- parser ------------------------------------------------------------------------------------

def _add_learning_options(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group('learning')
    group.add_argument('--bins', type=int, help=f'quantizer bins per dimension (default {settings.FUSION_BINS})')
    group.add_argument('--tmax', type=int, help=f'boosting rounds after the forest (default {settings.FUSION_TMAX})')
    group.add_argument('--alpha', type=float, help='additive smoothing per table')
    group.add_argument('--j-tol', type=float, help='relative J-divergence change that stops boosting')
    group.add_argument('--clamp', type=float, help='clamp for per-round log-likelihood ratios')
    group.add_argument('--margin', choices=('sign', 'llr'), help='margin used in the weight update')
    group.add_argument('--allow-forest', action='store_true', help='drop light edges (trees become forests)')
    group.add_argument('--forest-tol', type=float,
                       help=f'edge weight at or below which --allow-forest cuts (default {settings.FUSION_FOREST_TOL:g})')
    group.add_argument('--init-structure', choices=('discriminative', 'chow_liu'),
                       help='how the per-set initial trees are learned')
    group.add_argument('--rebalance', action='store_true', help='start boosting with equal class mass')
    group.add_argument('--resample', action='store_true', help='fit each round on a seeded resample')
    group.add_argument('--workers', type=int, help='parallel submodel training')
    group.add_argument('--seed', type=int, help='seed for all randomness')
    group.add_argument('--tau', type=float, help='binary decision threshold')
    group.add_argument('--tau-out', type=float, help='outlier rejection threshold')


def _add_feature_options(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group('features')
    group.add_argument('--layout', help='feature-set dimensions, e.g. 16,16,16 (tabular data)')
    group.add_argument('--wavelet', default=settings.FUSION_WAVELET, help='wavelet for image manifests')
    group.add_argument('--levels', type=int, default=settings.FUSION_LEVELS, help='decomposition levels')
    group.add_argument('--chip-size', type=int, default=settings.CHIP_SIZE, help='normalized chip side')


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog='fusion-graphs', description='Feature fusion with boosted discriminative trees')
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    parser.add_argument('--log-level', default=settings.LOG_LEVEL, help='logging level (default from LOG_LEVEL)')
    sub = parser.add_subparsers(dest='command', required=True, parser_class=_Parser)

    p = sub.add_parser('train', help='train a one-vs-all fusion model')
    p.add_argument('--data', type=Path, required=True, help='feature CSV or image manifest (path,label)')
    p.add_argument('--out', type=Path, default=settings.MODEL_PATH)
    _add_learning_options(p)
    _add_feature_options(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser('predict', help='classify samples')
    p.add_argument('--model', type=Path, default=settings.MODEL_PATH)
    p.add_argument('--data', type=Path, required=True)
    p.add_argument('--tau', type=float, help='per-class acceptance threshold (default 0)')
    p.add_argument('--tau-out', type=float)
    p.add_argument('--out', type=Path, required=True)
    _add_feature_options(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser('eval', help='confusion matrix and accuracy on labelled data')
    p.add_argument('--model', type=Path, default=settings.MODEL_PATH)
    p.add_argument('--data', type=Path, required=True)
    p.add_argument('--tau-out', type=float)
    p.add_argument('--report', type=Path)
    p.add_argument('--confusion', type=Path)
    p.add_argument('--normalized', action='store_true', help='row-normalize the confusion CSV')
    _add_feature_options(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser('roc', help='ROC curve of one class or of outlier rejection')
    p.add_argument('--model', type=Path, default=settings.MODEL_PATH)
    p.add_argument('--data', type=Path, required=True)
    p.add_argument('--positive', help='class treated as the positive hypothesis')
    p.add_argument('--rejection', action='store_true',
                   help='sweep tau_out; samples with labels outside the model are outliers')
    p.add_argument('--out', type=Path, required=True)
    _add_feature_options(p)
    p.set_defaults(func=cmd_roc)

    p = sub.add_parser('sweep', help='accuracy as a function of training size')
    p.add_argument('--data', type=Path, required=True)
    p.add_argument('--test', type=Path, help='fixed held-out set (default: stratified split of --data)')
    p.add_argument('--holdout', type=float, default=0.3)
    p.add_argument('--sizes', default='50,100,200,400', help='samples per class')
    p.add_argument('--seeds', type=int, default=DEFAULT_SEEDS)
    p.add_argument('--out', type=Path, required=True)
    _add_learning_options(p)
    _add_feature_options(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser('extract-features', help='LL/LH/HL sub-band features from an image manifest')
    p.add_argument('--images', type=Path, required=True)
    p.add_argument('--workers', type=int)
    p.add_argument('--out', type=Path, required=True)
    _add_feature_options(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser('synth', help='synthetic fusion dataset from a JSON spec')
    p.add_argument('--spec', type=Path, required=True)
    p.add_argument('--seed', type=int, default=settings.FUSION_SEED)
    p.add_argument('--out', type=Path, required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser('add-class', help='include a new class in a trained model')
    p.add_argument('--model', type=Path, default=settings.MODEL_PATH)
    p.add_argument('--data', type=Path, required=True, help='training data of the existing and the new class')
    p.add_argument('--name', required=True)
    p.add_argument('--retrain', action='store_true', help='relearn every submodel')
    p.add_argument('--out', type=Path, help='defaults to overwriting --model')
    _add_learning_options(p)
    _add_feature_options(p)
    p.set_defaults(func=cmd_add_class)

    p = sub.add_parser('serve', help='run the HTTP API')
    p.add_argument('--model', type=Path)
    p.add_argument('--host', default='0.0.0.0')
    p.add_argument('--port', type=int, default=settings.BACKEND_PORT)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as exc:
        print(f'error: {exc}', file=sys.stderr)
        return exc.exit_code
    level = logging.getLevelName(args.log_level.upper())
    if not isinstance(level, int):
        print(f'error: unknown log level {args.log_level!r}', file=sys.stderr)
        return ConfigError.exit_code
    logging.basicConfig(level=level, format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    try:
        return args.func(args)
    except FusionError as exc:
        logger.error('%s', exc)
        return exc.exit_code


if __name__ == '__main__':
    sys.exit(main())
