"""Command-line front end: one subcommand per pipeline stage.

Option precedence is defaults < --config file < explicit flags. Every
subcommand prints a single-line JSON summary to stdout on success;
diagnostics and per-epoch progress go to stderr. Exit codes: 0 success,
1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import mlp, pipeline, synth
from .dwt import active_backend, build_filter, decompose2d, reconstruct2d
from .features import default_config
from .imageio import (
    AugmentConfig,
    MaskConfig,
    PreprocessConfig,
    load_image,
    preprocess_image,
    resize_bilinear,
    save_pgm,
)

WAVELETS = ("haar", "db4")
_DEFAULT_LEVELS = {"haar": 2, "db4": 3}


class _Conf:
    """Config-file lookup honoring the defaults < config < flags order."""

    def __init__(self, path):
        self.doc = {}
        if path:
            with open(path, "r", encoding="utf-8") as fh:
                self.doc = json.load(fh)
            if not isinstance(self.doc, dict):
                raise ValueError(f"config file {path} must hold a JSON object")

    def get(self, flag_value, section, key, default):
        if flag_value is not None:
            return flag_value
        sec = self.doc.get(section, {})
        return sec.get(key, default)


def _add_common(p):
    p.add_argument("--config", help="JSON config file (sections: preprocess, "
                                    "wavelet, features, mlp, train, io)")
    p.add_argument("--seed", type=int, help="base seed (default 42)")
    p.add_argument("--jobs", type=int, help="parallel workers for per-image stages")


def _add_mask_flags(p):
    p.add_argument("--margin", type=int, help="mask border band width in pixels")
    p.add_argument("--threshold", type=float, help="mask intensity threshold in [0,1]")


def _add_wavelet_flags(p):
    p.add_argument("--wavelet", choices=WAVELETS, help="wavelet filter (haar or db4)")
    p.add_argument("--levels", type=int, help="decomposition levels (haar: 2, db4: 3)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="strokewave",
        description="Wavelet-feature stroke classification pipeline",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a seeded phantom dataset")
    p.add_argument("--n", type=int, help="images per class (default 200)")
    p.add_argument("--out", required=True, help="output dataset directory")
    _add_common(p)

    p = sub.add_parser("preprocess", help="mask and resize one image or a directory")
    p.add_argument("--in", dest="inp", required=True, help="input image or directory")
    p.add_argument("--out", required=True, help="output PGM file or directory")
    p.add_argument("--size", type=int, help="output side length (default 256)")
    _add_mask_flags(p)
    _add_common(p)

    p = sub.add_parser("features", help="extract feature rows for a dataset")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--out-csv", required=True, help="feature CSV to write")
    p.add_argument("--augment", type=int, help="augmented copies per image (default 0)")
    _add_wavelet_flags(p)
    _add_mask_flags(p)
    _add_common(p)

    p = sub.add_parser("train", help="train the classifier on a dataset")
    p.add_argument("--data", help="dataset directory")
    p.add_argument("--cache", help="feature cache CSV (reused when its config matches)")
    p.add_argument("--ratios", help="train,val,test ratios (default 0.70,0.15,0.15)")
    p.add_argument("--augment-copies", type=int, help="augmented copies per training image (default 3)")
    p.add_argument("--lr", type=float, help="Adam learning rate (default 1e-3)")
    p.add_argument("--batch-size", type=int, help="minibatch size (default 32)")
    p.add_argument("--epochs", type=int, help="training epochs (default 100)")
    p.add_argument("--model-out", help="model JSON path (default model.json)")
    p.add_argument("--history-out", help="per-epoch CSV path (default history.csv)")
    p.add_argument("--metrics-out", help="test metrics JSON path (default metrics.json)")
    _add_wavelet_flags(p)
    _add_mask_flags(p)
    _add_common(p)

    p = sub.add_parser("eval", help="evaluate a model on every image in a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--metrics-out", help="metrics JSON path (default metrics.json)")
    _add_mask_flags(p)
    _add_common(p)

    p = sub.add_parser("predict", help="classify one image")
    p.add_argument("--model", required=True)
    p.add_argument("--image", required=True)
    _add_mask_flags(p)
    _add_common(p)

    p = sub.add_parser("dwt-roundtrip", help="decompose/reconstruct an image and "
                                             "report error and energy diagnostics")
    p.add_argument("--image", required=True)
    _add_wavelet_flags(p)
    _add_common(p)

    p = sub.add_parser("info", help="summarize a saved model")
    p.add_argument("--model", required=True)
    _add_common(p)

    return ap


def _emit(summary: dict) -> None:
    print(json.dumps(summary))


def _resolve_common(args, conf):
    seed = int(conf.get(getattr(args, "seed", None), "train", "seed", 42))
    jobs = int(conf.get(getattr(args, "jobs", None), "io", "jobs", 1))
    return seed, jobs


def _resolve_pre(args, conf) -> PreprocessConfig:
    mask = MaskConfig(
        margin=int(conf.get(getattr(args, "margin", None), "preprocess", "margin", 32)),
        threshold=float(conf.get(getattr(args, "threshold", None),
                                 "preprocess", "threshold", 200.0 / 255.0)),
    )
    size = int(conf.get(getattr(args, "size", None), "preprocess", "size", 256))
    return PreprocessConfig(mask=mask, size=size)


def _resolve_wavelet(args, conf):
    wavelet = conf.get(getattr(args, "wavelet", None), "wavelet", "name", "haar")
    if wavelet not in WAVELETS:
        raise ValueError(f"unknown wavelet {wavelet!r} (choose from {WAVELETS})")
    levels = conf.get(getattr(args, "levels", None), "wavelet", "levels",
                      _DEFAULT_LEVELS[wavelet])
    return wavelet, int(levels)


def _resolve_aug(conf) -> AugmentConfig:
    g = lambda key, dflt: conf.get(None, "features", key, dflt)
    return AugmentConfig(
        max_rotation_deg=float(g("max_rotation_deg", 10.0)),
        hflip_prob=float(g("hflip_prob", 0.5)),
        brightness_range=tuple(g("brightness_range", (0.9, 1.1))),
    )


def _cmd_synth(args, conf):
    seed, _ = _resolve_common(args, conf)
    n = int(conf.get(args.n, "io", "synth_n", 200))
    dataset = synth.gen_dataset(n, seed, args.out)
    _emit({
        "command": "synth", "out": args.out, "seed": seed,
        "per_class": n, "files": len(dataset.samples),
    })
    return 0


def _cmd_preprocess(args, conf):
    pre = _resolve_pre(args, conf)
    if os.path.isdir(args.inp):
        os.makedirs(args.out, exist_ok=True)
        names = sorted(
            f for f in os.listdir(args.inp)
            if os.path.splitext(f)[1].lower() in pipeline.RASTER_EXTS
        )
        if not names:
            raise ValueError(f"no raster images under {args.inp}")
        for name in names:
            img = preprocess_image(load_image(os.path.join(args.inp, name)), pre)
            save_pgm(img, os.path.join(args.out, os.path.splitext(name)[0] + ".pgm"))
        _emit({"command": "preprocess", "in": args.inp, "out": args.out,
               "files": len(names), "size": pre.size})
    else:
        img = preprocess_image(load_image(args.inp), pre)
        save_pgm(img, args.out)
        _emit({"command": "preprocess", "in": args.inp, "out": args.out,
               "files": 1, "size": pre.size})
    return 0


def _cmd_features(args, conf):
    seed, jobs = _resolve_common(args, conf)
    pre = _resolve_pre(args, conf)
    wavelet, levels = _resolve_wavelet(args, conf)
    n_aug = int(conf.get(args.augment, "features", "augment", 0))
    dataset = pipeline.scan_dataset(args.data)
    rows = pipeline.featurize_samples(
        dataset.samples, wavelet, levels, pre,
        aug_cfg=_resolve_aug(conf), augment_copies=n_aug, seed=seed, jobs=jobs,
    )
    meta = pipeline.cache_meta(dataset.samples, wavelet, levels, pre,
                               _resolve_aug(conf), n_aug, seed, (1.0,))
    pipeline.write_feature_cache(args.out_csv, rows, meta)
    _emit({
        "command": "features", "data": args.data, "out_csv": args.out_csv,
        "wavelet": wavelet, "levels": levels, "rows": len(rows), "dims": 128,
    })
    return 0


def _parse_ratios(text) -> tuple:
    if isinstance(text, (list, tuple)):
        vals = [float(v) for v in text]
    else:
        vals = [float(v) for v in str(text).split(",")]
    if len(vals) != 3:
        raise ValueError("ratios must be three comma-separated numbers")
    return tuple(vals)


def _rows_from_cache(cache_rows, split, augment_copies):
    """Look cached rows up by key; None when any needed row is missing."""
    by_key = {key: (label, vec) for key, label, vec in cache_rows}

    def fetch(key):
        got = by_key.get(key)
        return None if got is None else (key, got[0], got[1])

    train_rows, val_rows = [], []
    for path, _ in split.train:
        keys = [path] + [f"{path}#aug{k}" for k in range(augment_copies)]
        for key in keys:
            row = fetch(key)
            if row is None:
                return None
            train_rows.append(row)
    for path, _ in split.val:
        row = fetch(path)
        if row is None:
            return None
        val_rows.append(row)
    return train_rows, val_rows


def _cmd_train(args, conf):
    seed, jobs = _resolve_common(args, conf)
    pre = _resolve_pre(args, conf)
    wavelet, levels = _resolve_wavelet(args, conf)
    aug = _resolve_aug(conf)
    ratios = _parse_ratios(conf.get(args.ratios, "train", "ratios", "0.70,0.15,0.15"))
    n_aug = int(conf.get(args.augment_copies, "features", "augment_copies", 3))
    tc = mlp.TrainConfig(
        learning_rate=float(conf.get(args.lr, "train", "learning_rate", 1e-3)),
        batch_size=int(conf.get(args.batch_size, "train", "batch_size", 32)),
        epochs=int(conf.get(args.epochs, "train", "epochs", 100)),
        dropout=(float(conf.get(None, "mlp", "dropout1", 0.3)),
                 float(conf.get(None, "mlp", "dropout2", 0.1))),
        seed=seed,
    )
    model_out = conf.get(args.model_out, "io", "model_out", "model.json")
    history_out = conf.get(args.history_out, "io", "history_out", "history.csv")
    metrics_out = conf.get(args.metrics_out, "io", "metrics_out", "metrics.json")

    if not args.data and not args.cache:
        raise ValueError("train needs --data or --cache")

    cache_rows = None
    meta = None
    if args.cache and os.path.exists(args.cache):
        stored = pipeline.read_cache_meta(args.cache)
        if stored is not None:
            samples = [(p, int(l)) for p, l in stored.get("samples", [])]
            want = pipeline.cache_meta(samples, wavelet, levels, pre, aug,
                                       n_aug, seed, ratios)
            if stored.get("hash") == want["hash"]:
                cache_rows = pipeline.read_feature_cache(args.cache)
                dataset = pipeline.Dataset(samples=samples)
                print(f"reusing feature cache {args.cache}", file=sys.stderr)
        if cache_rows is None:
            print(f"feature cache {args.cache} is stale, recomputing", file=sys.stderr)

    if cache_rows is None:
        if not args.data:
            raise ValueError("feature cache unusable and no --data directory given")
        dataset = pipeline.scan_dataset(args.data)

    split = pipeline.split_stratified(dataset, ratios=ratios, seed=seed)

    rows = None
    if cache_rows is not None:
        rows = _rows_from_cache(cache_rows, split, n_aug)
        if rows is None:
            print("cache rows incomplete, recomputing features", file=sys.stderr)
    if rows is None:
        train_rows = pipeline.featurize_samples(
            split.train, wavelet, levels, pre, aug,
            augment_copies=n_aug, seed=seed, jobs=jobs,
        )
        val_rows = pipeline.featurize_samples(split.val, wavelet, levels, pre, jobs=jobs)
        if args.cache:
            test_rows = pipeline.featurize_samples(split.test, wavelet, levels,
                                                   pre, jobs=jobs)
            meta = pipeline.cache_meta(dataset.samples, wavelet, levels, pre,
                                       aug, n_aug, seed, ratios)
            pipeline.write_feature_cache(args.cache, train_rows + val_rows + test_rows,
                                         meta)
    else:
        train_rows, val_rows = rows

    def progress(rec):
        print(
            f"epoch {rec.epoch}/{tc.epochs} "
            f"train_loss={rec.train_loss:.4f} train_acc={rec.train_acc:.4f} "
            f"val_loss={rec.val_loss:.4f} val_acc={rec.val_acc:.4f}",
            file=sys.stderr,
        )

    model, history = pipeline.train_on_features(
        train_rows, val_rows, wavelet, levels, tc, progress=progress,
    )
    metrics = pipeline.evaluate(model, split.test, pre, jobs=jobs)

    mlp.save_model(model, model_out)
    pipeline.write_history(history, history_out)
    pipeline.write_metrics(metrics, metrics_out)

    best = max(history, key=lambda r: (r.val_acc, -r.epoch))
    _emit({
        "command": "train", "wavelet": wavelet, "levels": levels,
        "backend": active_backend(),
        "train_rows": len(train_rows), "val_samples": len(split.val),
        "test_samples": len(split.test),
        "best_epoch": best.epoch, "best_val_acc": best.val_acc,
        "test_accuracy": metrics.accuracy,
        "stroke_sensitivity": metrics.stroke_sensitivity,
        "model": model_out, "history": history_out, "metrics": metrics_out,
    })
    return 0


def _cmd_eval(args, conf):
    _, jobs = _resolve_common(args, conf)
    pre = _resolve_pre(args, conf)
    model = mlp.load_model(args.model)
    dataset = pipeline.scan_dataset(args.data)
    metrics = pipeline.evaluate(model, dataset.samples, pre, jobs=jobs)
    metrics_out = conf.get(args.metrics_out, "io", "metrics_out", "metrics.json")
    pipeline.write_metrics(metrics, metrics_out)
    _emit({
        "command": "eval", "model": args.model, "data": args.data,
        "samples": len(dataset.samples), "accuracy": metrics.accuracy,
        "stroke_sensitivity": metrics.stroke_sensitivity,
        "metrics": metrics_out,
    })
    return 0


def _cmd_predict(args, conf):
    pre = _resolve_pre(args, conf)
    model = mlp.load_model(args.model)
    f = build_filter(model.wavelet)
    cfg = default_config(model.wavelet, model.levels)
    img = preprocess_image(load_image(args.image), pre)
    from .features import extract

    feats = extract(decompose2d(img, f, model.levels), img, cfg)
    cls, probs = mlp.predict(model, feats)
    _emit({
        "command": "predict", "image": args.image,
        "class_name": pipeline.CLASS_NAMES[cls], "class_index": cls,
        "probs": [float(p) for p in probs],
    })
    return 0


def _cmd_dwt_roundtrip(args, conf):
    wavelet, levels = _resolve_wavelet(args, conf)
    f = build_filter(wavelet)
    img = load_image(args.image)
    size = 256
    if img.shape != (size, size):
        img = resize_bilinear(img, size, size)
    pyramid = decompose2d(img, f, levels)
    recon = reconstruct2d(pyramid, f)
    max_err = float(np.max(np.abs(recon - img)))
    pix_energy = float((img * img).sum())
    ratio = pyramid.energy() / pix_energy if pix_energy else 0.0
    _emit({
        "command": "dwt-roundtrip", "image": args.image,
        "wavelet": wavelet, "levels": levels, "backend": active_backend(),
        "max_reconstruction_error": max_err, "energy_ratio": ratio,
    })
    return 0


def _cmd_info(args, conf):
    model = mlp.load_model(args.model)
    n_params = sum(int(np.prod(v.shape)) for v in model.params().values())
    _emit({
        "command": "info", "model": args.model,
        "format_version": mlp.MODEL_FORMAT_VERSION,
        "wavelet": model.wavelet, "levels": model.levels,
        "feature_config_id": model.feature_config_id,
        "trainable_parameters": n_params,
    })
    return 0


_HANDLERS = {
    "synth": _cmd_synth,
    "preprocess": _cmd_preprocess,
    "features": _cmd_features,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "predict": _cmd_predict,
    "dwt-roundtrip": _cmd_dwt_roundtrip,
    "info": _cmd_info,
}


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        conf = _Conf(getattr(args, "config", None))
        return _HANDLERS[args.command](args, conf)
    except BrokenPipeError:
        return 1
    except Exception as exc:  # runtime failures exit 1, with context on stderr
        print(f"strokewave: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
