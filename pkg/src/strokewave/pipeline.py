"""Dataset scanning, stratified splitting, training and evaluation.

Class indices are alphabetical: hemorrhagic=0, ischemic=1, normal=2.
Reports follow that order. Every stage is deterministic for a fixed seed;
per-sample work (feature extraction) runs in parallel when jobs > 1 with
results gathered in sample order, so parallelism never changes output.
"""

from __future__ import annotations

import concurrent.futures
import csv
import hashlib
import json
import math
import os
from dataclasses import dataclass

import numpy as np

from . import mlp
from .dwt import build_filter, decompose2d
from .features import (
    FEATURE_DIM,
    default_config,
    extract,
    fit_normalizer,
    normalize,
)
from .imageio import AugmentConfig, PreprocessConfig, augment, load_image, preprocess_image
from .rng import RngStream, derive_seed

CLASS_NAMES = ("hemorrhagic", "ischemic", "normal")
RASTER_EXTS = (".png", ".jpg", ".jpeg", ".pgm")

_TAG_SPLIT = 0x51
_TAG_AUG = 0xA7
_TAG_SHUFFLE = 0x5F


@dataclass
class Dataset:
    samples: list  # [(path, label), ...] sorted by path

    def per_class(self) -> list:
        counts = [0, 0, 0]
        for _, label in self.samples:
            counts[label] += 1
        return counts


def scan_dataset(root: str) -> Dataset:
    """Collect (path, label) pairs from root/{Hemorrhagic,Ischemic,Normal}."""
    if not os.path.isdir(root):
        raise ValueError(f"dataset root {root!r} is not a directory")
    subdirs = {name.lower(): name for name in os.listdir(root)
               if os.path.isdir(os.path.join(root, name))}
    samples = []
    for label, cls in enumerate(CLASS_NAMES):
        if cls not in subdirs:
            raise ValueError(f"missing class directory {cls!r} under {root}")
        cls_dir = os.path.join(root, subdirs[cls])
        files = sorted(
            os.path.join(cls_dir, f)
            for f in os.listdir(cls_dir)
            if os.path.splitext(f)[1].lower() in RASTER_EXTS
        )
        if not files:
            raise ValueError(f"class directory {cls!r} contains no images")
        samples.extend((f, label) for f in files)
    samples.sort(key=lambda s: s[0])
    return Dataset(samples=samples)


@dataclass
class Split:
    train: list
    val: list
    test: list


def split_stratified(d: Dataset, ratios=(0.70, 0.15, 0.15), seed: int = 42) -> Split:
    """Per-class seeded shuffle; floor(n*val), floor(n*test), rest to train."""
    if any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError("split ratios must be positive and sum to 1")
    rng = RngStream(derive_seed(seed, _TAG_SPLIT))
    train, val, test = [], [], []
    for label in range(len(CLASS_NAMES)):
        items = [s for s in d.samples if s[1] == label]
        if len(items) < 3:
            raise ValueError(
                f"class {CLASS_NAMES[label]!r} has only {len(items)} samples, need >= 3"
            )
        rng.shuffle(items)
        n = len(items)
        n_val = math.floor(n * ratios[1])
        n_test = math.floor(n * ratios[2])
        val.extend(items[:n_val])
        test.extend(items[n_val : n_val + n_test])
        train.extend(items[n_val + n_test :])
    for part in (train, val, test):
        part.sort(key=lambda s: s[0])
    return Split(train=train, val=val, test=test)


# --- feature extraction ------------------------------------------------------

def _featurize_sample(args):
    (path, label, idx, wavelet, levels, pre_cfg, aug_cfg, n_aug, seed) = args
    f = build_filter(wavelet)
    cfg = default_config(wavelet, levels)
    img = preprocess_image(load_image(path), pre_cfg)

    def feats(im):
        return extract(decompose2d(im, f, levels), im, cfg)

    rows = [(path, label, feats(img))]
    for k in range(n_aug):
        rng = RngStream(derive_seed(seed, _TAG_AUG, idx, k))
        rows.append((f"{path}#aug{k}", label, feats(augment(img, aug_cfg, rng))))
    return rows


def _map_ordered(fn, work, jobs):
    if jobs <= 1:
        return [fn(w) for w in work]
    with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
        chunk = max(1, len(work) // (jobs * 4))
        return list(pool.map(fn, work, chunksize=chunk))


def featurize_samples(samples, wavelet, levels, pre_cfg, aug_cfg=None,
                      augment_copies=0, seed=42, jobs=1):
    """Feature rows (key, label, vector) for samples, plus augmented copies.

    Augmented copies are keyed ``path#augK``; their randomness derives from
    (seed, sample index, copy index) so order of execution cannot matter.
    """
    work = [
        (path, label, idx, wavelet, levels, pre_cfg,
         aug_cfg if augment_copies else None, augment_copies, seed)
        for idx, (path, label) in enumerate(samples)
    ]
    rows = []
    for chunk in _map_ordered(_featurize_sample, work, jobs):
        rows.extend(chunk)
    return rows


# --- training ----------------------------------------------------------------

@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float


def _matrixify(rows):
    x = np.stack([vec for _, _, vec in rows])
    y = np.array([label for _, label, _ in rows], dtype=np.int64)
    return x, y


def train_on_features(train_rows, val_rows, wavelet, levels, train_cfg,
                      progress=None):
    """Fit the classifier on prepared feature rows; returns (model, history).

    The returned model carries the parameters of the epoch with the highest
    validation accuracy (earliest epoch on ties) plus the normalizer fitted
    on the training rows. Train loss/accuracy are the batch-size-weighted
    averages seen during the epoch on the (augmented) training set.
    """
    if not train_rows or not val_rows:
        raise ValueError("training needs non-empty train and val feature rows")
    cfg = default_config(wavelet, levels)
    xt_raw, yt = _matrixify(train_rows)
    xv_raw, yv = _matrixify(val_rows)
    norm = fit_normalizer(xt_raw)
    xt = normalize(xt_raw, norm)
    xv = normalize(xv_raw, norm)

    model = mlp.init(train_cfg.seed, normalizer=norm,
                     feature_config_id=cfg.config_id,
                     wavelet=wavelet, levels=levels)
    state = mlp.init_adam_state(model)
    drop_rng = RngStream(derive_seed(train_cfg.seed, _TAG_SHUFFLE, 0xD0))
    history = []
    best = None  # (val_acc, epoch, model)
    t = 0
    n = len(train_rows)
    for epoch in range(1, train_cfg.epochs + 1):
        order = list(range(n))
        RngStream(derive_seed(train_cfg.seed, _TAG_SHUFFLE, epoch)).shuffle(order)
        seen = 0
        loss_sum = 0.0
        hit_sum = 0.0
        for start in range(0, n, train_cfg.batch_size):
            idx = order[start : start + train_cfg.batch_size]
            if len(idx) < 2:  # batch norm needs batch statistics
                continue
            xb, yb = xt[idx], yt[idx]
            probs, cache = mlp.forward(
                model, xb, mode="train", rng=drop_rng,
                dropout=train_cfg.dropout, bn_momentum=train_cfg.bn_momentum,
                bn_eps=train_cfg.bn_eps,
            )
            loss = mlp.loss_ce(probs, yb)
            grads = mlp.backward(model, cache, yb)
            t += 1
            model, state = mlp.adam_step(model, grads, state, t, train_cfg)
            loss_sum += loss * len(idx)
            hit_sum += mlp.accuracy(probs, yb) * len(idx)
            seen += len(idx)
        val_probs, _ = mlp.forward(model, xv, mode="infer", bn_eps=train_cfg.bn_eps)
        rec = EpochRecord(
            epoch=epoch,
            train_loss=loss_sum / seen,
            train_acc=hit_sum / seen,
            val_loss=mlp.loss_ce(val_probs, yv),
            val_acc=mlp.accuracy(val_probs, yv),
        )
        history.append(rec)
        if best is None or rec.val_acc > best[0]:
            best = (rec.val_acc, epoch, model.clone())
        if progress is not None:
            progress(rec)
    return best[2], history


def train(split: Split, wavelet: str, levels: int, pre_cfg: PreprocessConfig,
          aug_cfg: AugmentConfig, train_cfg: mlp.TrainConfig,
          augment_copies: int = 3, jobs: int = 1, progress=None):
    """End-to-end: featurize the split (train side augmented), then fit."""
    train_rows = featurize_samples(
        split.train, wavelet, levels, pre_cfg, aug_cfg,
        augment_copies=augment_copies, seed=train_cfg.seed, jobs=jobs,
    )
    val_rows = featurize_samples(split.val, wavelet, levels, pre_cfg, jobs=jobs)
    return train_on_features(train_rows, val_rows, wavelet, levels, train_cfg,
                             progress=progress)


# --- metrics -----------------------------------------------------------------

@dataclass
class Metrics:
    confusion: np.ndarray  # 3x3 ints, rows true, cols predicted
    per_class: dict        # name -> {"precision", "recall", "f1"}
    accuracy: float
    stroke_sensitivity: float

    def to_doc(self) -> dict:
        return {
            "class_order": list(CLASS_NAMES),
            "confusion": self.confusion.tolist(),
            "per_class": {k: dict(v) for k, v in self.per_class.items()},
            "accuracy": self.accuracy,
            "stroke_sensitivity": self.stroke_sensitivity,
        }


def _ratio(num, den) -> float:
    return num / den if den else 0.0


def class_metrics(confusion: np.ndarray, cls: int):
    """(precision, recall, f1) for one class; 0/0 cases are defined as 0."""
    c = np.asarray(confusion)
    tp = float(c[cls, cls])
    precision = _ratio(tp, float(c[:, cls].sum()))
    recall = _ratio(tp, float(c[cls, :].sum()))
    f1 = _ratio(2.0 * precision * recall, precision + recall)
    return precision, recall, f1


def stroke_sensitivity(confusion: np.ndarray) -> float:
    """Fraction of true stroke samples predicted as either stroke class."""
    c = np.asarray(confusion)
    detected = float(c[:2, :2].sum())
    total = float(c[:2, :].sum())
    return _ratio(detected, total)


def metrics_from_confusion(confusion: np.ndarray) -> Metrics:
    c = np.asarray(confusion, dtype=np.int64)
    if c.shape != (3, 3) or np.any(c < 0):
        raise ValueError("confusion matrix must be 3x3 and non-negative")
    per_class = {}
    for i, name in enumerate(CLASS_NAMES):
        p, r, f1 = class_metrics(c, i)
        per_class[name] = {"precision": p, "recall": r, "f1": f1}
    return Metrics(
        confusion=c,
        per_class=per_class,
        accuracy=_ratio(float(np.trace(c)), float(c.sum())),
        stroke_sensitivity=stroke_sensitivity(c),
    )


def _predict_sample(args):
    path, wavelet, levels, pre_cfg = args
    f = build_filter(wavelet)
    cfg = default_config(wavelet, levels)
    img = preprocess_image(load_image(path), pre_cfg)
    return extract(decompose2d(img, f, levels), img, cfg)


def evaluate(model: mlp.MlpModel, samples, pre_cfg: PreprocessConfig,
             jobs: int = 1) -> Metrics:
    """Preprocess, extract and classify each sample; derive the metric suite."""
    if not samples:
        raise ValueError("evaluate needs a non-empty sample list")
    cfg = default_config(model.wavelet, model.levels)
    if model.feature_config_id and cfg.config_id != model.feature_config_id:
        raise ValueError(
            "model feature_config_id does not match this build's feature config"
        )
    work = [(path, model.wavelet, model.levels, pre_cfg) for path, _ in samples]
    feats = _map_ordered(_predict_sample, work, jobs)
    confusion = np.zeros((3, 3), dtype=np.int64)
    for (path, label), vec in zip(samples, feats):
        try:
            pred, _ = mlp.predict(model, vec)
        except ValueError as exc:
            raise ValueError(f"{path}: {exc}") from exc
        confusion[label, pred] += 1
    return metrics_from_confusion(confusion)


# --- file emission -----------------------------------------------------------

def write_history(history, path) -> None:
    from .serialize import fmt_g

    with open(path, "w", encoding="ascii", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "train_acc", "val_loss", "val_acc"])
        for rec in history:
            w.writerow([rec.epoch, fmt_g(rec.train_loss), fmt_g(rec.train_acc),
                        fmt_g(rec.val_loss), fmt_g(rec.val_acc)])


def write_metrics(m: Metrics, path) -> None:
    from . import serialize

    serialize.dump(m.to_doc(), path)


# --- feature cache -----------------------------------------------------------

def cache_meta(samples, wavelet, levels, pre_cfg, aug_cfg, augment_copies,
               seed, ratios) -> dict:
    cfg = default_config(wavelet, levels)
    doc = {
        "config_id": cfg.config_id,
        "wavelet": wavelet,
        "levels": levels,
        "preprocess": {"margin": pre_cfg.mask.margin,
                       "threshold": pre_cfg.mask.threshold,
                       "size": pre_cfg.size},
        "augment": {"max_rotation_deg": aug_cfg.max_rotation_deg,
                    "hflip_prob": aug_cfg.hflip_prob,
                    "brightness_range": list(aug_cfg.brightness_range)},
        "augment_copies": augment_copies,
        "seed": seed,
        "ratios": list(ratios),
        "samples": [[p, l] for p, l in samples],
    }
    blob = json.dumps(doc, sort_keys=True)
    doc["hash"] = hashlib.sha256(blob.encode()).hexdigest()
    return doc


def write_feature_cache(path, rows, meta=None) -> None:
    from .serialize import fmt_g

    with open(path, "w", encoding="ascii", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path", "label"] + [f"f{i}" for i in range(FEATURE_DIM)])
        for key, label, vec in rows:
            w.writerow([key, label] + [fmt_g(x) for x in vec])
    if meta is not None:
        with open(str(path) + ".meta.json", "w", encoding="ascii", newline="\n") as fh:
            json.dump(meta, fh, sort_keys=True, indent=1)
            fh.write("\n")


def read_feature_cache(path):
    rows = []
    with open(path, "r", encoding="ascii", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        expected = ["path", "label"] + [f"f{i}" for i in range(FEATURE_DIM)]
        if header != expected:
            raise ValueError(f"{path}: not a feature cache (bad header)")
        for rec in reader:
            if len(rec) != 2 + FEATURE_DIM:
                raise ValueError(f"{path}: malformed cache row")
            rows.append((rec[0], int(rec[1]), np.array([float(x) for x in rec[2:]])))
    return rows


def read_cache_meta(path):
    meta_path = str(path) + ".meta.json"
    if not os.path.exists(meta_path):
        return None
    with open(meta_path, "r", encoding="ascii") as fh:
        return json.load(fh)
