"""
Прямой и обратный проход для отдельных слоёв.

Все функции работают в dtype входного массива: float32 при обучении,
float64 на теневом пути проверки градиентов.
"""
from typing import Any, Dict, Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from network.spec import Conv2D, Dense, Dropout, MaxPool, same_padding


# --- Полносвязный слой ---

def dense_forward(layer: Dense, x: np.ndarray, w: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, Dict[str, Any]]:
    flat = x.reshape(x.shape[0], -1)
    return flat @ w + b, {'x': flat, 'in_shape': x.shape}


def dense_backward(layer: Dense, dout: np.ndarray, cache: Dict[str, Any], w: np.ndarray):
    x = cache['x']
    dw = x.T @ dout
    db = dout.sum(axis=0)
    dx = (dout @ w.T).reshape(cache['in_shape'])
    return dx, dw, db


# --- Свёртка (im2col через sliding_window_view) ---

def _pad_hw(x: np.ndarray, pads: Tuple[Tuple[int, int], Tuple[int, int]], value: float = 0.0) -> np.ndarray:
    if pads == ((0, 0), (0, 0)):
        return x
    return np.pad(x, ((0, 0), pads[0], pads[1], (0, 0)), mode='constant', constant_values=value)


def _conv_pads(layer_h: int, layer_w: int, stride: int, padding: str, h: int, w: int):
    if padding == 'same':
        return same_padding(h, layer_h, stride), same_padding(w, layer_w, stride)
    return (0, 0), (0, 0)


def conv_forward(layer: Conv2D, x: np.ndarray, w: np.ndarray, b: np.ndarray):
    n, h, wd, c = x.shape
    pads = _conv_pads(layer.kh, layer.kw, layer.stride, layer.padding, h, wd)
    xp = _pad_hw(x, pads)
    s = layer.stride
    # (N, H', W', C, kh, kw) -> шаг свёртки -> (N, Ho, Wo, kh, kw, C)
    windows = sliding_window_view(xp, (layer.kh, layer.kw), axis=(1, 2))[:, ::s, ::s]
    ho, wo = windows.shape[1], windows.shape[2]
    cols = windows.transpose(0, 1, 2, 4, 5, 3).reshape(n * ho * wo, layer.kh * layer.kw * c)
    out = cols @ w.reshape(-1, layer.cout) + b
    cache = {'cols': cols, 'xp_shape': xp.shape, 'pads': pads, 'out_hw': (ho, wo)}
    return out.reshape(n, ho, wo, layer.cout), cache


def conv_backward(layer: Conv2D, dout: np.ndarray, cache: Dict[str, Any], w: np.ndarray):
    n, ho, wo, cout = dout.shape
    s = layer.stride
    d2 = dout.reshape(-1, cout)
    dw = (cache['cols'].T @ d2).reshape(w.shape)
    db = d2.sum(axis=0)
    dcols = (d2 @ w.reshape(-1, cout).T).reshape(n, ho, wo, layer.kh, layer.kw, layer.cin)

    dxp = np.zeros(cache['xp_shape'], dtype=dout.dtype)
    for i in range(layer.kh):
        for j in range(layer.kw):
            dxp[:, i:i + s * ho:s, j:j + s * wo:s, :] += dcols[:, :, :, i, j, :]

    (pt, pb), (pl, pr) = cache['pads']
    hp, wp = dxp.shape[1], dxp.shape[2]
    dx = dxp[:, pt:hp - pb, pl:wp - pr, :]
    return dx, dw, db


# --- Max-pooling ---

def maxpool_forward(layer: MaxPool, x: np.ndarray):
    n, h, wd, c = x.shape
    pads = _conv_pads(layer.size, layer.size, layer.stride, layer.padding, h, wd)
    xp = _pad_hw(x, pads, value=-np.inf)
    s, p = layer.stride, layer.size
    windows = sliding_window_view(xp, (p, p), axis=(1, 2))[:, ::s, ::s]
    ho, wo = windows.shape[1], windows.shape[2]
    flat = windows.reshape(n, ho, wo, c, p * p)
    arg = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
    cache = {'arg': arg, 'xp_shape': xp.shape, 'pads': pads}
    return out, cache


def maxpool_backward(layer: MaxPool, dout: np.ndarray, cache: Dict[str, Any]):
    s, p = layer.stride, layer.size
    n, ho, wo, c = dout.shape
    arg = cache['arg']
    dxp = np.zeros(cache['xp_shape'], dtype=dout.dtype)
    for i in range(p):
        for j in range(p):
            mask = arg == i * p + j
            dxp[:, i:i + s * ho:s, j:j + s * wo:s, :] += dout * mask
    (pt, pb), (pl, pr) = cache['pads']
    hp, wp = dxp.shape[1], dxp.shape[2]
    return dxp[:, pt:hp - pb, pl:wp - pr, :]


# --- Поэлементные слои ---

def relu_forward(x: np.ndarray):
    mask = x > 0
    return np.where(mask, x, x.dtype.type(0)), {'mask': mask}


def relu_backward(dout: np.ndarray, cache: Dict[str, Any]) -> np.ndarray:
    return dout * cache['mask']


def dropout_forward(layer: Dropout, x: np.ndarray, mode: str, rng: Optional[np.random.Generator]):
    """Инвертированный dropout: в train выжившие делятся на (1 - rate), в eval тождество"""
    if mode != 'train' or layer.rate == 0.0:
        return x, {'scale': None}
    keep = 1.0 - layer.rate
    mask = rng.random(x.shape) >= layer.rate
    scale = (mask / keep).astype(x.dtype)
    return x * scale, {'scale': scale}


def dropout_backward(dout: np.ndarray, cache: Dict[str, Any]) -> np.ndarray:
    if cache['scale'] is None:
        return dout
    return dout * cache['scale']
