"""The anomaly-scoring network: an MLP with two softmax attention gates.

Wiring per sample x (d-dim feature):

    h1 = relu(W1 x + b1);  h1 = dropout(h1)        (train mode only)
    a1 = softmax(Wa1 h1 + ba1)   over the 512 features
    g1 = h1 * (512 * a1)                           (element-wise gate)
    h2 = relu(W2 g1 + b2); h2 = dropout(h2)
    a2 = softmax(Wa2 h2 + ba2)   over the 32 features
    g2 = h2 * (32 * a2)
    score = sigmoid(Wo g2 + bo)  in [0, 1]

The attention gates are width-normalized (scaled by the layer width) so a
uniform attention map is the identity; a bare h * a gate attenuates
activations by the layer width and leaves the output path untrainable with
a single SGD learning rate.

Loss is mean binary cross-entropy against 0/1 pseudo-labels plus an L2
penalty on the weight matrices (biases excluded). Parameters are stored as
float32; all internal arithmetic runs in float64. Gradients are analytic,
dropout and attention gates included.
"""

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from . import backend, layout
from .errors import ProtocolError, ValidationError
from .layout import HIDDEN1, HIDDEN2, param_count

MODEL_MAGIC = b"FVADMDL1"
MODEL_VERSION = 1

DEFAULT_DROPOUT = 0.3


@dataclass
class TrainBatch:
    """A batch of segment features and their 0/1 pseudo-labels."""

    features: np.ndarray  # (B, d) float32
    labels: np.ndarray    # (B,) 0/1

    def __post_init__(self):
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise ValidationError("batch features must be (B >= 1, d)")
        if self.labels.shape != (self.features.shape[0],):
            raise ValidationError("batch labels must be (B,)")
        if not np.isin(self.labels, (0, 1)).all():
            raise ValidationError("batch labels must be 0/1")


def init_params(d: int, seed: int) -> np.ndarray:
    """Glorot-uniform weights, zero biases; deterministic given seed."""
    if d < 1:
        raise ValidationError("feature dim must be >= 1")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    parts = []
    for shape in layout.tensor_shapes(d):
        if len(shape) == 2:
            fan_out, fan_in = shape
            lim = np.sqrt(6.0 / (fan_in + fan_out))
            parts.append(rng.uniform(-lim, lim, size=shape).ravel())
        else:
            parts.append(np.zeros(shape))
    return np.concatenate(parts).astype(np.float32)


def _check_params(params: np.ndarray, d: int) -> None:
    if params.shape != (param_count(d),):
        raise ProtocolError(
            f"parameter vector length {params.shape} does not match d={d}"
        )


def _dropout_masks(B: int, rate: float, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    keep = 1.0 - rate
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    m1 = (rng.random((B, HIDDEN1)) < keep) / keep
    m2 = (rng.random((B, HIDDEN2)) < keep) / keep
    return m1, m2


def _masks(B, train_mode, dropout_rate, dropout_seed):
    if train_mode and dropout_rate > 0.0:
        if not 0.0 <= dropout_rate < 1.0:
            raise ValidationError("dropout rate must be in [0, 1)")
        return _dropout_masks(B, dropout_rate, dropout_seed)
    return np.ones((B, HIDDEN1)), np.ones((B, HIDDEN2))


def forward(
    params: np.ndarray,
    features: np.ndarray,
    train_mode: bool = False,
    dropout_seed: int = 0,
    dropout_rate: float = DEFAULT_DROPOUT,
) -> np.ndarray:
    """Anomaly scores in [0, 1], one per feature row."""
    features = np.atleast_2d(features)
    d = features.shape[1]
    _check_params(params, d)
    theta = params.astype(np.float64)
    X = features.astype(np.float64)
    m1, m2 = _masks(X.shape[0], train_mode, dropout_rate, dropout_seed)
    return backend.kernels().forward_batch(theta, d, X, m1, m2)


def loss_and_grad(
    params: np.ndarray,
    batch: TrainBatch,
    l2_coeff: float = 0.0,
    train_mode: bool = True,
    dropout_seed: int = 0,
    dropout_rate: float = DEFAULT_DROPOUT,
) -> Tuple[float, np.ndarray]:
    """Mean BCE + l2_coeff * ||weights||^2 and its full analytic gradient.

    The gradient is returned as float32 in the parameter layout; internal
    accumulation is float64.
    """
    d = batch.features.shape[1]
    _check_params(params, d)
    theta = params.astype(np.float64)
    X = batch.features.astype(np.float64)
    y = batch.labels.astype(np.float64)
    m1, m2 = _masks(X.shape[0], train_mode, dropout_rate, dropout_seed)
    loss, grad = _loss_grad_f64(theta, d, X, y, l2_coeff, m1, m2)
    return loss, grad.astype(np.float32)


def _loss_grad_f64(theta, d, X, y, l2_coeff, m1, m2):
    """float64 loss/grad core, shared with the finite-difference oracle."""
    loss, grad = backend.kernels().loss_grad_batch(theta, d, X, y, m1, m2)
    if l2_coeff != 0.0:
        for sl in layout.weight_slices(d):
            w = theta[sl]
            loss += l2_coeff * float(w @ w)
            grad[sl] += 2.0 * l2_coeff * w
    return loss, grad


def _loss_f64(theta, d, X, y, l2_coeff, m1, m2):
    return _loss_grad_f64(theta, d, X, y, l2_coeff, m1, m2)[0]


def sgd_step(params: np.ndarray, grad: np.ndarray, eta: float) -> np.ndarray:
    """params - eta * grad, element-wise in float32."""
    if params.shape != grad.shape:
        raise ProtocolError("gradient layout does not match parameters")
    return params - np.float32(eta) * grad


def save_model(params: np.ndarray, d: int, path) -> Path:
    """Binary model file: magic, version, d, layer sizes, count, f32 params."""
    _check_params(params, d)
    path = Path(path)
    header = MODEL_MAGIC + struct.pack(
        "<IIIIQ", MODEL_VERSION, d, HIDDEN1, HIDDEN2, param_count(d)
    )
    path.write_bytes(header + params.astype("<f4").tobytes())
    return path


def load_model(path) -> Tuple[np.ndarray, int]:
    """Returns (params, d); validates magic, version and length."""
    raw = Path(path).read_bytes()
    hsize = len(MODEL_MAGIC) + struct.calcsize("<IIIIQ")
    if len(raw) < hsize or raw[: len(MODEL_MAGIC)] != MODEL_MAGIC:
        raise ValidationError(f"{path}: not a fedvad model file")
    version, d, h1, h2, count = struct.unpack(
        "<IIIIQ", raw[len(MODEL_MAGIC):hsize]
    )
    if version != MODEL_VERSION or (h1, h2) != (HIDDEN1, HIDDEN2):
        raise ValidationError(f"{path}: unsupported model version/layout")
    params = np.frombuffer(raw[hsize:], dtype="<f4")
    if params.size != count or count != param_count(d):
        raise ValidationError(f"{path}: truncated or inconsistent model file")
    return params.copy(), d
