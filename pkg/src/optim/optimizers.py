"""
Оптимизаторы первого порядка над плоскими векторами параметров.

Все правила поэлементные: вектор обновляется на месте, результат не зависит
от порядка индексов.
"""
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from app.errors import ShapeError, ConfigError
from network.params import Params

KINDS = ('sgd', 'momentum', 'adam')


@dataclass
class OptimizerState:
    """Вспомогательные векторы в раскладке Params и счётчик шагов t"""
    kind: str = 'sgd'
    momentum: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    velocity: Optional[np.ndarray] = None
    m: Optional[np.ndarray] = None
    v: Optional[np.ndarray] = None
    t: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"неизвестный оптимизатор {self.kind!r}", 'optimizer.kind')
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum={self.momentum} вне [0, 1)", 'optimizer.momentum')

    def reset(self) -> None:
        """Сброс моментов (переключатель reset_on_jump)"""
        for name in ('velocity', 'm', 'v'):
            vec = getattr(self, name)
            if vec is not None:
                vec[...] = 0
        self.t = 0


def make_state(kind: str, size: int, dtype=np.float32, momentum: float = 0.0,
               beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> OptimizerState:
    state = OptimizerState(kind=kind, momentum=momentum, beta1=beta1, beta2=beta2, eps=eps)
    if kind == 'momentum' or (kind == 'sgd' and momentum > 0):
        state.velocity = np.zeros(size, dtype=dtype)
    if kind == 'adam':
        state.m = np.zeros(size, dtype=dtype)
        state.v = np.zeros(size, dtype=dtype)
    return state


def _check(w: np.ndarray, grad: np.ndarray) -> None:
    if w.shape != grad.shape:
        raise ShapeError(f"параметры {w.shape}, градиент {grad.shape}")


def sgd_step(w: np.ndarray, grad: np.ndarray, lr: float, momentum: float,
             state: OptimizerState) -> Tuple[np.ndarray, OptimizerState]:
    """
    μ = 0: w <- w - lr*g
    μ > 0: v <- μv + g, w <- w - lr*v
    """
    _check(w, grad)
    if not 0.0 <= momentum < 1.0:
        raise ConfigError(f"momentum={momentum} вне [0, 1)", 'optimizer.momentum')
    dtype = w.dtype.type
    if momentum == 0.0:
        w -= dtype(lr) * grad
    else:
        if state.velocity is None:
            state.velocity = np.zeros_like(w)
        _check(state.velocity, grad)
        state.velocity *= dtype(momentum)
        state.velocity += grad
        w -= dtype(lr) * state.velocity
    state.t += 1
    return w, state


def adam_step(w: np.ndarray, grad: np.ndarray, lr: float,
              state: OptimizerState) -> Tuple[np.ndarray, OptimizerState]:
    """Adam с поправкой смещения моментов"""
    _check(w, grad)
    if state.m is None:
        state.m = np.zeros_like(w)
        state.v = np.zeros_like(w)
    _check(state.m, grad)
    dtype = w.dtype.type
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    state.m *= dtype(b1)
    state.m += dtype(1.0 - b1) * grad
    state.v *= dtype(b2)
    state.v += dtype(1.0 - b2) * grad * grad
    m_hat = state.m / dtype(1.0 - b1 ** state.t)
    v_hat = state.v / dtype(1.0 - b2 ** state.t)
    w -= dtype(lr) * m_hat / (np.sqrt(v_hat) + dtype(state.eps))
    return w, state


def optimizer_step(params: Params, grad: np.ndarray, lr: float, state: OptimizerState) -> OptimizerState:
    """Шаг выбранного оптимизатора по Params; увеличивает params.version"""
    if state.kind == 'adam':
        adam_step(params.vector, grad, lr, state)
    else:
        momentum = state.momentum if state.kind == 'momentum' else 0.0
        sgd_step(params.vector, grad, lr, momentum, state)
    params.touch()
    return state
