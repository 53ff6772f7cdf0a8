"""
Прямой/обратный проход по NetworkSpec с ручным обратным распространением.
"""
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import logsumexp, softmax

from app.errors import ShapeError, SpecError, StateError
from network import layers as ops
from network.params import Params
from network.spec import NetworkSpec

Seed = Union[int, Sequence[int], None]


@dataclass
class Batch:
    inputs: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return int(self.labels.shape[0])


@dataclass
class ForwardState:
    """Кэш прямого прохода для backward"""
    activations: List[np.ndarray]
    caches: List[Dict[str, Any]]
    logits: np.ndarray
    mode: str
    params_version: int
    params_id: int
    batch_size: int
    consumed: bool = field(default=False)


def _check_inputs(spec: NetworkSpec, params: Params, inputs: np.ndarray) -> np.ndarray:
    if len(params) != spec.param_count():
        raise ShapeError(f"параметров {len(params)}, сеть требует {spec.param_count()}")
    expected = spec.input_shape
    if inputs.ndim != len(expected) + 1 or tuple(inputs.shape[1:]) != expected:
        raise ShapeError(f"вход {inputs.shape[1:]} не совпадает с input_shape {expected}")
    return np.asarray(inputs, dtype=params.vector.dtype)


def forward(spec: NetworkSpec, params: Params, batch: Batch, mode: str = 'eval', seed: Seed = None) -> ForwardState:
    """
    Прямой проход. seed используется только dropout-слоями в режиме train.

    Returns:
        ForwardState: активации всех слоёв тела и логиты (выход перед головой)
    """
    if mode not in ('train', 'eval'):
        raise ValueError(f"неизвестный режим {mode!r}")
    x = _check_inputs(spec, params, batch.inputs)
    rng = np.random.default_rng(seed) if mode == 'train' else None

    activations = [x]
    caches: List[Dict[str, Any]] = []
    for layer_id, layer in enumerate(spec.body):
        kind = layer.kind
        if kind == 'dense':
            x, cache = ops.dense_forward(layer, x, params.tensor(layer_id, 'weight'), params.tensor(layer_id, 'bias'))
        elif kind == 'conv2d':
            x, cache = ops.conv_forward(layer, x, params.tensor(layer_id, 'weight'), params.tensor(layer_id, 'bias'))
        elif kind == 'maxpool':
            x, cache = ops.maxpool_forward(layer, x)
        elif kind == 'relu':
            x, cache = ops.relu_forward(x)
        elif kind == 'dropout':
            x, cache = ops.dropout_forward(layer, x, mode, rng)
        else:
            raise SpecError(f"слой {layer_id}: неизвестный тип {kind}")
        activations.append(x)
        caches.append(cache)

    logits = x.reshape(x.shape[0], -1)
    return ForwardState(
        activations=activations,
        caches=caches,
        logits=logits,
        mode=mode,
        params_version=params.version,
        params_id=id(params.vector),
        batch_size=int(batch.inputs.shape[0]),
    )


def softmax_xent(logits: np.ndarray, labels: np.ndarray) -> Tuple[float, np.ndarray]:
    """Средняя кросс-энтропия и её градиент по логитам"""
    n, classes = logits.shape
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise ShapeError(f"меток {labels.shape}, логитов {logits.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= classes):
        raise ShapeError(f"метки вне [0, {classes})")
    rows = np.arange(n)
    loss = float(np.mean(logsumexp(logits, axis=1) - logits[rows, labels]))
    dlogits = softmax(logits, axis=1)
    dlogits[rows, labels] -= 1.0
    return loss, (dlogits / n).astype(logits.dtype)


def backward_from(spec: NetworkSpec, params: Params, state: ForwardState, dout: np.ndarray) -> np.ndarray:
    """
    Обратный проход от произвольного градиента по выходу тела сети.

    Returns:
        градиент в раскладке Params (тот же dtype, что и параметры)
    """
    if state.mode != 'train':
        raise StateError("backward требует прямой проход в режиме train")
    if state.consumed:
        raise StateError("состояние прямого прохода уже использовано")
    if state.params_version != params.version or state.params_id != id(params.vector):
        raise StateError("параметры изменились после прямого прохода")
    state.consumed = True

    grad = np.zeros_like(params.vector)
    layout = params.layout
    d = dout.reshape(state.activations[-1].shape)
    for layer_id in range(len(spec.body) - 1, -1, -1):
        layer = spec.body[layer_id]
        cache = state.caches[layer_id]
        kind = layer.kind
        if kind == 'dense':
            d, dw, db = ops.dense_backward(layer, d, cache, params.tensor(layer_id, 'weight'))
            layout.view(grad, layer_id, 'weight')[...] = dw
            layout.view(grad, layer_id, 'bias')[...] = db
        elif kind == 'conv2d':
            d, dw, db = ops.conv_backward(layer, d, cache, params.tensor(layer_id, 'weight'))
            layout.view(grad, layer_id, 'weight')[...] = dw
            layout.view(grad, layer_id, 'bias')[...] = db
        elif kind == 'maxpool':
            d = ops.maxpool_backward(layer, d, cache)
        elif kind == 'relu':
            d = ops.relu_backward(d, cache)
        elif kind == 'dropout':
            d = ops.dropout_backward(d, cache)
    return grad


def backward(spec: NetworkSpec, params: Params, batch: Batch, state: ForwardState) -> Tuple[np.ndarray, float]:
    """Градиент средней softmax-кросс-энтропии по батчу и значение потерь"""
    if not spec.has_head:
        raise SpecError("backward требует голову softmax_xent")
    if state.batch_size != len(batch):
        raise StateError(f"состояние посчитано для батча {state.batch_size}, передан {len(batch)}")
    loss, dlogits = softmax_xent(state.logits, batch.labels)
    grad = backward_from(spec, params, state, dlogits)
    return grad, loss


def loss_value(spec: NetworkSpec, params: Params, batch: Batch, mode: str = 'eval', seed: Seed = None) -> float:
    state = forward(spec, params, batch, mode=mode, seed=seed)
    loss, _ = softmax_xent(state.logits, batch.labels)
    return loss


def predict_logits(spec: NetworkSpec, params: Params, inputs: np.ndarray, chunk: int = 1000) -> np.ndarray:
    """Логиты в режиме eval, по кускам"""
    parts = []
    dummy = np.zeros(0, dtype=np.int64)
    for start in range(0, inputs.shape[0], chunk):
        part = inputs[start:start + chunk]
        parts.append(forward(spec, params, Batch(part, dummy), mode='eval').logits)
    if not parts:
        return np.zeros((0, spec.num_outputs), dtype=params.vector.dtype)
    return np.concatenate(parts, axis=0)


def accuracy(spec: NetworkSpec, params: Params, inputs: np.ndarray, labels: np.ndarray, chunk: int = 1000) -> float:
    if inputs.shape[0] == 0:
        return 0.0
    logits = predict_logits(spec, params, inputs, chunk=chunk)
    return float(np.mean(logits.argmax(axis=1) == labels))
