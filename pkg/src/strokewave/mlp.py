"""Fully-connected 128-128-64-3 classifier trained from scratch.

Each hidden block is linear -> ReLU -> batch norm -> inverted dropout; the
output block is linear -> softmax. Batch norm uses population statistics of
the current batch in training and running statistics (momentum 0.99) in
inference, with a shared epsilon inside the square root. All training
arithmetic is float64; the finite-difference harness in grad_check probes
the loss in extended precision so its own noise stays far below the 1e-5
verification tolerance.

Gradients of the mean cross-entropy are fully analytic, including the
batch-statistic terms of batch norm. The model serializes to a single JSON
document that round-trips every parameter bit-exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .features import FEATURE_DIM, Normalizer, normalize
from .rng import RngStream
from . import serialize

DIM_IN = FEATURE_DIM
DIM_H1 = 128
DIM_H2 = 64
DIM_OUT = 3

INIT_STD = 0.05
_PROB_FLOOR = 1e-12
MODEL_FORMAT_VERSION = 1

_PARAM_NAMES = ("w1", "b1", "gamma1", "beta1", "w2", "b2", "gamma2", "beta2", "w3", "b3")


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 32
    epochs: int = 100
    dropout: tuple = (0.3, 0.1)
    bn_momentum: float = 0.99
    bn_eps: float = 1e-5
    seed: int = 42

    def __post_init__(self):
        if not all(0.0 <= p < 1.0 for p in self.dropout):
            raise ValueError("dropout rates must lie in [0, 1)")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 (batch norm needs statistics)")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


@dataclass
class BnState:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray

    def clone(self) -> "BnState":
        return BnState(*(a.copy() for a in (self.gamma, self.beta,
                                            self.running_mean, self.running_var)))


@dataclass
class MlpModel:
    w1: np.ndarray
    b1: np.ndarray
    bn1: BnState
    w2: np.ndarray
    b2: np.ndarray
    bn2: BnState
    w3: np.ndarray
    b3: np.ndarray
    normalizer: Normalizer | None = None
    feature_config_id: str = ""
    wavelet: str = ""
    levels: int = 0

    def params(self) -> dict:
        """Trainable tensors keyed by canonical name."""
        return {
            "w1": self.w1, "b1": self.b1,
            "gamma1": self.bn1.gamma, "beta1": self.bn1.beta,
            "w2": self.w2, "b2": self.b2,
            "gamma2": self.bn2.gamma, "beta2": self.bn2.beta,
            "w3": self.w3, "b3": self.b3,
        }

    def clone(self) -> "MlpModel":
        return MlpModel(
            w1=self.w1.copy(), b1=self.b1.copy(), bn1=self.bn1.clone(),
            w2=self.w2.copy(), b2=self.b2.copy(), bn2=self.bn2.clone(),
            w3=self.w3.copy(), b3=self.b3.copy(),
            normalizer=self.normalizer,
            feature_config_id=self.feature_config_id,
            wavelet=self.wavelet,
            levels=self.levels,
        )


def init(seed: int, normalizer: Normalizer | None = None,
         feature_config_id: str = "", wavelet: str = "", levels: int = 0) -> MlpModel:
    """Fresh model: weights ~ Normal(0, 0.05) in w1, w2, w3 draw order."""
    rng = RngStream(seed)

    def weights(n_in, n_out):
        return rng.normals(n_in * n_out, 0.0, INIT_STD).reshape(n_in, n_out)

    def bn(dim):
        return BnState(gamma=np.ones(dim), beta=np.zeros(dim),
                       running_mean=np.zeros(dim), running_var=np.ones(dim))

    return MlpModel(
        w1=weights(DIM_IN, DIM_H1), b1=np.zeros(DIM_H1), bn1=bn(DIM_H1),
        w2=weights(DIM_H1, DIM_H2), b2=np.zeros(DIM_H2), bn2=bn(DIM_H2),
        w3=weights(DIM_H2, DIM_OUT), b3=np.zeros(DIM_OUT),
        normalizer=normalizer, feature_config_id=feature_config_id,
        wavelet=wavelet, levels=levels,
    )


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def forward(model: MlpModel, batch: np.ndarray, mode: str = "infer",
            rng: RngStream | None = None, dropout: tuple = (0.0, 0.0),
            bn_momentum: float = 0.99, bn_eps: float = 1e-5,
            update_running: bool = True):
    """Run a batch through the network.

    Returns (probs, cache); cache holds everything backward() needs. In
    train mode batch-norm uses the batch statistics and, unless
    update_running is False, folds them into the running statistics.
    Inference never mutates the model.
    """
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != DIM_IN:
        raise ValueError(f"batch must be B x {DIM_IN}")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite input batch")
    if mode not in ("train", "infer"):
        raise ValueError(f"unknown mode {mode!r}")
    train = mode == "train"
    if train and x.shape[0] < 2:
        raise ValueError("train mode needs a batch of at least 2")
    if train and any(p > 0 for p in dropout) and rng is None:
        raise ValueError("train mode with dropout needs an rng")

    cache = {"x": x, "dropout": dropout, "bn_eps": bn_eps, "mode": mode}
    h = x
    for li, (w, b, bn, p_drop) in enumerate(
        ((model.w1, model.b1, model.bn1, dropout[0]),
         (model.w2, model.b2, model.bn2, dropout[1])), start=1
    ):
        z = h @ w + b
        a = np.maximum(z, 0.0)
        if train:
            mu = a.mean(axis=0)
            var = a.var(axis=0)
            if update_running:
                bn.running_mean[:] = bn_momentum * bn.running_mean + (1 - bn_momentum) * mu
                bn.running_var[:] = bn_momentum * bn.running_var + (1 - bn_momentum) * var
        else:
            mu = bn.running_mean
            var = bn.running_var
        s = np.sqrt(var + bn_eps)
        xh = (a - mu) / s
        hb = bn.gamma * xh + bn.beta
        if train and p_drop > 0:
            u = rng.uniforms(hb.size).reshape(hb.shape)
            mask = (u >= p_drop) / (1.0 - p_drop)
            hd = hb * mask
        else:
            mask = None
            hd = hb
        cache[f"z{li}"] = z
        cache[f"s{li}"] = s
        cache[f"xh{li}"] = xh
        cache[f"mask{li}"] = mask
        cache[f"h{li}"] = hd
        h = hd

    logits = h @ model.w3 + model.b3
    probs = _softmax(logits)
    cache["probs"] = probs
    return probs, cache


def loss_ce(probs: np.ndarray, labels: np.ndarray) -> float:
    """Mean cross-entropy with the true-class probability floored at 1e-12."""
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() >= probs.shape[1]:
        raise ValueError("label out of range")
    p = probs[np.arange(len(labels)), labels]
    return float(-np.log(np.maximum(p, _PROB_FLOOR)).mean())


def accuracy(probs: np.ndarray, labels: np.ndarray) -> float:
    return float((probs.argmax(axis=1) == np.asarray(labels)).mean())


def _bn_backward(dh, xh, s):
    dgamma = (dh * xh).sum(axis=0)
    dbeta = dh.sum(axis=0)
    return dgamma, dbeta


def _bn_input_grad(dxh, xh, s):
    # Full batch-statistic terms for population-variance batch norm.
    return (dxh - dxh.mean(axis=0) - xh * (dxh * xh).mean(axis=0)) / s


def backward(model: MlpModel, cache: dict, labels: np.ndarray) -> dict:
    """Analytic gradients of loss_ce w.r.t. every trainable tensor."""
    if cache.get("mode") != "train":
        raise ValueError("backward needs a cache from a train-mode forward")
    probs = cache["probs"]
    labels = np.asarray(labels)
    n = probs.shape[0]
    if labels.shape != (n,):
        raise ValueError("labels do not match the cached batch")

    dlogits = probs.copy()
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n

    grads = {}
    grads["w3"] = cache["h2"].T @ dlogits
    grads["b3"] = dlogits.sum(axis=0)
    dh = dlogits @ model.w3.T

    for li, (w, bn, prev) in (
        (2, (model.w2, model.bn2, cache["h1"])),
        (1, (model.w1, model.bn1, cache["x"])),
    ):
        if cache[f"mask{li}"] is not None:
            dh = dh * cache[f"mask{li}"]
        xh, s = cache[f"xh{li}"], cache[f"s{li}"]
        grads[f"gamma{li}"], grads[f"beta{li}"] = _bn_backward(dh, xh, s)
        da = _bn_input_grad(dh * bn.gamma, xh, s)
        dz = da * (cache[f"z{li}"] > 0)
        grads[f"w{li}"] = prev.T @ dz
        grads[f"b{li}"] = dz.sum(axis=0)
        dh = dz @ w.T

    return grads


def init_adam_state(model: MlpModel) -> dict:
    return {k: (np.zeros_like(v), np.zeros_like(v)) for k, v in model.params().items()}


def adam_step(model: MlpModel, grads: dict, state: dict, t: int,
              cfg: TrainConfig):
    """One bias-corrected Adam update; inputs are left untouched."""
    if t < 1:
        raise ValueError("step count t starts at 1")
    new_model = model.clone()
    new_state = {}
    params = new_model.params()
    bc1 = 1.0 - cfg.beta1**t
    bc2 = 1.0 - cfg.beta2**t
    for name, theta in params.items():
        g = grads[name]
        m, v = state[name]
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g
        theta -= cfg.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + cfg.adam_eps)
        new_state[name] = (m, v)
    return new_model, new_state


def predict(model: MlpModel, feats: np.ndarray):
    """Classify one raw feature vector; ties break to the lowest index."""
    feats = np.asarray(feats, dtype=np.float64)
    if feats.shape != (DIM_IN,):
        raise ValueError(f"expected {DIM_IN} features")
    if not np.all(np.isfinite(feats)):
        raise ValueError("non-finite features")
    if model.normalizer is not None:
        feats = normalize(feats, model.normalizer)
    probs, _ = forward(model, feats[None, :], mode="infer")
    row = probs[0]
    return int(row.argmax()), row


# --- finite-difference verification harness ---------------------------------

def _loss_probe(model: MlpModel, x, labels, bn_eps):
    """Train-mode loss in extended precision, plus the ReLU activation masks.

    The probe dtype (x86 80-bit longdouble) keeps the rounding noise of the
    two central-difference evaluations well below the comparison tolerance;
    the masks let the caller detect kink crossings, where a finite
    difference is not a derivative estimate.
    """
    ld = np.longdouble
    h = x
    masks = []
    for w, b, bn in ((model.w1, model.b1, model.bn1),
                     (model.w2, model.b2, model.bn2)):
        z = h @ w.astype(ld) + b.astype(ld)
        masks.append(z > 0)
        a = np.maximum(z, 0)
        xh = (a - a.mean(axis=0)) / np.sqrt(a.var(axis=0) + ld(bn_eps))
        h = bn.gamma.astype(ld) * xh + bn.beta.astype(ld)
    logits = h @ model.w3.astype(ld) + model.b3.astype(ld)
    e = np.exp(logits - logits.max(axis=1, keepdims=True))
    probs = e / e.sum(axis=1, keepdims=True)
    p = probs[np.arange(len(labels)), labels]
    loss = -np.log(np.maximum(p, ld(_PROB_FLOOR))).mean()
    return loss, masks


def grad_check(model: MlpModel, batch: np.ndarray, labels: np.ndarray,
               eps: float = 7e-6, sample_per_tensor: int = 500,
               seed: int = 0, corrupt: str | None = None,
               bn_eps: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    Dropout is forced off and batch norm runs in train mode on the fixed
    batch. Tensors larger than sample_per_tensor are probed at a seeded
    random subset of coordinates. Coordinates whose ReLU masks differ
    between the +eps and -eps probes are skipped (the loss is not
    differentiable across the kink). `corrupt` scales one analytic gradient
    tensor by 2, for testing that the harness catches wrong gradients.
    """
    model = model.clone()
    x = np.asarray(batch, dtype=np.float64)
    labels = np.asarray(labels)
    _, cache = forward(model, x, mode="train", dropout=(0.0, 0.0),
                       bn_eps=bn_eps, update_running=False)
    grads = backward(model, cache, labels)
    if corrupt is not None:
        grads[corrupt] = grads[corrupt] * 2.0

    xl = x.astype(np.longdouble)
    params = model.params()
    picker = np.random.default_rng(seed)
    worst = 0.0
    for name in _PARAM_NAMES:
        tensor = params[name]
        flat = tensor.reshape(-1)
        gflat = grads[name].reshape(-1)
        if flat.size <= sample_per_tensor:
            idx = np.arange(flat.size)
        else:
            idx = picker.choice(flat.size, sample_per_tensor, replace=False)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + eps
            lp, masks_p = _loss_probe(model, xl, labels, bn_eps)
            flat[i] = orig - eps
            lm, masks_m = _loss_probe(model, xl, labels, bn_eps)
            flat[i] = orig
            if any(not np.array_equal(a, b) for a, b in zip(masks_p, masks_m)):
                continue
            numeric = float((lp - lm) / np.longdouble(2.0 * eps))
            analytic = float(gflat[i])
            rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)
            worst = max(worst, rel)
    return worst


# --- persistence -------------------------------------------------------------

def _bn_to_doc(bn: BnState) -> dict:
    return {
        "gamma": bn.gamma, "beta": bn.beta,
        "running_mean": bn.running_mean, "running_var": bn.running_var,
    }


def save_model(model: MlpModel, path) -> None:
    """Write the model as a single JSON document (17-significant-digit floats)."""
    for name, arr in model.params().items():
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"refusing to save non-finite parameter {name}")
    if model.normalizer is None:
        raise ValueError("model has no feature normalizer attached")
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "wavelet": model.wavelet,
        "levels": model.levels,
        "feature_config_id": model.feature_config_id,
        "normalizer": {"mean": model.normalizer.mean, "std": model.normalizer.std},
        "layers": {
            "w1": model.w1, "b1": model.b1, "bn1": _bn_to_doc(model.bn1),
            "w2": model.w2, "b2": model.b2, "bn2": _bn_to_doc(model.bn2),
            "w3": model.w3, "b3": model.b3,
        },
    }
    serialize.dump(doc, path)


def _as_array(doc, key, shape) -> np.ndarray:
    try:
        arr = np.asarray(doc[key], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed model file: bad field {key!r}") from exc
    if arr.shape != shape:
        raise ValueError(
            f"malformed model file: {key} has shape {arr.shape}, expected {shape}"
        )
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"malformed model file: non-finite values in {key}")
    return arr


def _bn_from_doc(doc, dim) -> BnState:
    bn = BnState(
        gamma=_as_array(doc, "gamma", (dim,)),
        beta=_as_array(doc, "beta", (dim,)),
        running_mean=_as_array(doc, "running_mean", (dim,)),
        running_var=_as_array(doc, "running_var", (dim,)),
    )
    if np.any(bn.running_var < 0):
        raise ValueError("malformed model file: negative running variance")
    return bn


def load_model(path) -> MlpModel:
    try:
        with open(path, "r", encoding="ascii") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValueError(f"malformed model file {path}: {exc}") from exc
    if not isinstance(doc, dict) or "format_version" not in doc:
        raise ValueError(f"malformed model file {path}: no format_version")
    if doc["format_version"] != MODEL_FORMAT_VERSION:
        raise ValueError(
            f"unsupported model format version {doc['format_version']!r} "
            f"(expected {MODEL_FORMAT_VERSION})"
        )
    try:
        norm_doc = doc["normalizer"]
        layers = doc["layers"]
    except KeyError as exc:
        raise ValueError(f"malformed model file {path}: missing {exc}") from exc
    normalizer = Normalizer(
        mean=_as_array(norm_doc, "mean", (DIM_IN,)),
        std=_as_array(norm_doc, "std", (DIM_IN,)),
    )
    model = MlpModel(
        w1=_as_array(layers, "w1", (DIM_IN, DIM_H1)),
        b1=_as_array(layers, "b1", (DIM_H1,)),
        bn1=_bn_from_doc(layers.get("bn1", {}), DIM_H1),
        w2=_as_array(layers, "w2", (DIM_H1, DIM_H2)),
        b2=_as_array(layers, "b2", (DIM_H2,)),
        bn2=_bn_from_doc(layers.get("bn2", {}), DIM_H2),
        w3=_as_array(layers, "w3", (DIM_H2, DIM_OUT)),
        b3=_as_array(layers, "b3", (DIM_OUT,)),
        normalizer=normalizer,
        feature_config_id=str(doc.get("feature_config_id", "")),
        wavelet=str(doc.get("wavelet", "")),
        levels=int(doc.get("levels", 0)),
    )
    return model
