"""
Сеть интроспекции 4 -> hidden -> 1 и её двоичный формат INTR.

  magic     4 байта b'INTR'
  version   u16
  activation u8   0 = relu, 1 = identity
  hidden    u16
  блоки f32 (little-endian): w1 4 x hidden, b1 hidden, w2 hidden x 1, b2 1
  crc32     u32 по всем предыдущим байтам
"""
import logging
import os
import struct
import zlib
from pathlib import Path
from typing import Optional

import numpy as np
import portalocker

from app.errors import FormatError, NumericError, ShapeError
from app.params import settings
from network.engine import Batch, forward
from network.params import DTYPE, InitRule, ParamLayout, Params, init_params
from network.spec import NetworkSpec, introspection_spec

logger = logging.getLogger('introspection')

MAGIC = b'INTR'
VERSION = 1
ACTIVATION_TAGS = {'relu': 0, 'identity': 1}
HEADER = struct.Struct('<4sHBH')
CRC = struct.Struct('<I')

_NO_LABELS = np.zeros(0, dtype=np.int64)


class IntrospectionModel:
    """
    Прогноз будущего значения веса по четырём точкам его истории.

    Веса хранятся в float32 (как обучались), прогноз считается в float64.
    """

    def __init__(self, params: Params, activation: str = 'relu', scale: Optional[float] = None):
        self.activation = activation
        self.spec: NetworkSpec = introspection_spec(activation, self._hidden_of(params))
        if len(params) != self.spec.param_count():
            raise ShapeError(f"параметров {len(params)}, сеть требует {self.spec.param_count()}")
        if [s.layer_id for s in params.layout.slots] != [s.layer_id for s in ParamLayout(self.spec).slots]:
            raise ShapeError(f"раскладка параметров не соответствует активации {activation!r}")
        self.params = params
        self._cache: Optional[Params] = None
        self._cache_key = None
        self.scale = settings.WEIGHT_SCALE if scale is None else scale

    @staticmethod
    def _hidden_of(params: Params) -> int:
        return params.layout.slots[0].shape[1]

    @property
    def hidden(self) -> int:
        return self._hidden_of(self.params)

    @property
    def _params64(self) -> Params:
        key = (self.params.version, id(self.params.vector))
        if self._cache_key != key:
            self._cache = self.params.astype(np.float64)
            self._cache_key = key
        return self._cache

    def dense_tensors(self):
        """(w1, b1, w2, b2) в порядке раскладки"""
        slots = self.params.layout.slots
        return tuple(self.params.tensor(s.layer_id, s.role) for s in slots)

    def forward_scaled(self, x: np.ndarray) -> np.ndarray:
        """MLP в масштабированном пространстве: x (n, 4) -> (n,)"""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != 4:
            raise ShapeError(f"ожидается (n, 4), получено {x.shape}")
        if x.shape[0] == 0:
            return np.zeros(0)
        return forward(self.spec, self._params64, Batch(x, _NO_LABELS), mode='eval').logits[:, 0]

    def predict_many(self, histories: np.ndarray) -> np.ndarray:
        """histories (n, 4) в исходных единицах -> прогнозы (n,) в исходных единицах"""
        histories = np.asarray(histories, dtype=np.float64)
        bad = ~np.isfinite(histories).all(axis=1) if histories.ndim == 2 else None
        if bad is not None and bad.any():
            raise NumericError("нечисловой вход прогноза", int(np.flatnonzero(bad)[0]))
        return self.forward_scaled(histories * self.scale) / self.scale


def predict_weight(model: IntrospectionModel, history4) -> float:
    """[w(t), w(0.7t), w(0.4t), w(0)] -> прогноз w(k*t)"""
    history = np.asarray(history4, dtype=np.float64)
    if history.shape != (4,):
        raise ShapeError(f"ожидается 4 значения истории, получено {history.shape}")
    if not np.isfinite(history).all():
        raise NumericError(f"нечисловой вход прогноза {history.tolist()}")
    return float(model.predict_many(history[None, :])[0])


def new_model(activation: str = 'relu', hidden: int = settings.INTROSPECTION_HIDDEN,
              seed: int = 0, init: Optional[InitRule] = None) -> IntrospectionModel:
    spec = introspection_spec(activation, hidden)
    params = init_params(spec, init or InitRule('xavier'), seed)
    return IntrospectionModel(params, activation)


def zero_model(activation: str = 'relu', hidden: int = settings.INTROSPECTION_HIDDEN) -> IntrospectionModel:
    spec = introspection_spec(activation, hidden)
    layout = ParamLayout(spec)
    return IntrospectionModel(Params(np.zeros(layout.total, dtype=DTYPE), layout), activation)


def pass_through_model(activation: str = 'relu', hidden: int = settings.INTROSPECTION_HIDDEN) -> IntrospectionModel:
    """
    Модель, возвращающая w(t) без изменений.

    relu: h1 = relu(x0), h2 = relu(-x0), выход h1 - h2.
    identity: h1 = x0, выход h1.
    """
    model = zero_model(activation, hidden)
    w1, _, w2, _ = model.dense_tensors()
    w1[0, 0] = 1.0
    w2[0, 0] = 1.0
    if activation == 'relu':
        if hidden < 2:
            raise ShapeError("для relu нужна пара скрытых нейронов")
        w1[0, 1] = -1.0
        w2[1, 0] = -1.0
    model.params.touch()
    return model


def encode_model(model: IntrospectionModel) -> bytes:
    body = HEADER.pack(MAGIC, VERSION, ACTIVATION_TAGS[model.activation], model.hidden)
    body += model.params.vector.astype('<f4').tobytes()
    return body + CRC.pack(zlib.crc32(body))


def decode_model(raw: bytes, name: str = '<bytes>') -> IntrospectionModel:
    if len(raw) < HEADER.size + CRC.size:
        raise FormatError(f"{name}: файл короче заголовка")
    magic, version, tag, hidden = HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise FormatError(f"{name}: magic {magic!r}, ожидается {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"{name}: версия формата {version}, поддерживается {VERSION}")
    activations = {v: k for k, v in ACTIVATION_TAGS.items()}
    if tag not in activations:
        raise FormatError(f"{name}: неизвестная активация {tag}")
    (crc,) = CRC.unpack_from(raw, len(raw) - CRC.size)
    if zlib.crc32(raw[:-CRC.size]) != crc:
        raise FormatError(f"{name}: контрольная сумма не совпадает")

    spec = introspection_spec(activations[tag], hidden)
    layout = ParamLayout(spec)
    payload = raw[HEADER.size:-CRC.size]
    if len(payload) != layout.total * 4:
        raise FormatError(f"{name}: {len(payload)} байт весов, ожидается {layout.total * 4}")
    vector = np.frombuffer(payload, dtype='<f4').astype(DTYPE)
    return IntrospectionModel(Params(vector, layout), activations[tag])


def save_model(model: IntrospectionModel, path) -> Path:
    path = Path(path)
    data = encode_model(model)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'ab') as f:
        portalocker.lock(f, portalocker.LOCK_EX)
        f.seek(0)
        f.truncate()
        f.write(data)
        f.flush()
        os.fsync(f.fileno())
    logger.info(f"Модель интроспекции сохранена: {path} ({model.activation}, hidden={model.hidden})")
    return path


def load_model(path) -> IntrospectionModel:
    path = Path(path)
    with open(path, 'rb') as f:
        portalocker.lock(f, portalocker.LOCK_SH)
        raw = f.read()
    return decode_model(raw, str(path))
