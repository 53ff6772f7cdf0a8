"""
Плоский вектор обучаемых параметров и его раскладка по слоям.

Порядок раскладки: слои по возрастанию id, внутри слоя сначала веса,
затем смещения, каждый тензор в C-порядке.
"""
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy import stats

from app.errors import SpecError, ShapeError
from network.spec import NetworkSpec

DTYPE = np.float32

INIT_RULES = ('normal', 'truncated_normal', 'xavier', 'constant')


@dataclass(frozen=True)
class TensorSlot:
    layer_id: int
    role: str
    shape: Tuple[int, ...]
    offset: int

    @property
    def size(self) -> int:
        return int(math.prod(self.shape))


class ParamLayout:
    """Биекция плоского индекса на (layer id, роль, мультииндекс)"""

    def __init__(self, spec: NetworkSpec):
        spec.validate()
        self.slots: List[TensorSlot] = []
        offset = 0
        for layer_id, role, shape in spec.param_shapes():
            slot = TensorSlot(layer_id, role, tuple(shape), offset)
            self.slots.append(slot)
            offset += slot.size
        self.total = offset
        self._by_key: Dict[Tuple[int, str], TensorSlot] = {(s.layer_id, s.role): s for s in self.slots}
        self._starts = np.array([s.offset for s in self.slots], dtype=np.int64)

    def __len__(self) -> int:
        return self.total

    def slot(self, layer_id: int, role: str) -> TensorSlot:
        try:
            return self._by_key[(layer_id, role)]
        except KeyError:
            raise IndexError(f"у слоя {layer_id} нет тензора {role!r}")

    def locate(self, flat_index: int) -> Tuple[int, str, Tuple[int, ...]]:
        if not 0 <= flat_index < self.total:
            raise IndexError(f"индекс {flat_index} вне [0, {self.total})")
        pos = int(np.searchsorted(self._starts, flat_index, side='right')) - 1
        slot = self.slots[pos]
        multi = np.unravel_index(flat_index - slot.offset, slot.shape)
        return slot.layer_id, slot.role, tuple(int(i) for i in multi)

    def offset_of(self, layer_id: int, role: str, multi_index: Tuple[int, ...]) -> int:
        slot = self.slot(layer_id, role)
        if len(multi_index) != len(slot.shape) or any(
                not 0 <= i < d for i, d in zip(multi_index, slot.shape)):
            raise IndexError(f"мультииндекс {multi_index} вне формы {slot.shape}")
        return slot.offset + int(np.ravel_multi_index(multi_index, slot.shape))

    def view(self, vector: np.ndarray, layer_id: int, role: str) -> np.ndarray:
        """Вид (без копии) на тензор внутри плоского вектора"""
        slot = self.slot(layer_id, role)
        return vector[slot.offset:slot.offset + slot.size].reshape(slot.shape)

    def role_mask(self, role: str) -> np.ndarray:
        mask = np.zeros(self.total, dtype=bool)
        for slot in self.slots:
            if slot.role == role:
                mask[slot.offset:slot.offset + slot.size] = True
        return mask


class Params:
    """
    Плоский вектор параметров + раскладка.

    version растёт при каждом изменении вектора на месте (шаг оптимизатора,
    прыжок), по нему backward узнаёт устаревшее состояние прямого прохода.
    """

    def __init__(self, vector: np.ndarray, layout: ParamLayout):
        if vector.ndim != 1 or vector.shape[0] != layout.total:
            raise ShapeError(f"длина вектора {vector.shape} не равна {layout.total}")
        self.vector = vector
        self.layout = layout
        self.version = 0

    def __len__(self) -> int:
        return self.layout.total

    def tensor(self, layer_id: int, role: str) -> np.ndarray:
        return self.layout.view(self.vector, layer_id, role)

    def touch(self) -> None:
        self.version += 1

    def copy(self) -> 'Params':
        return Params(self.vector.copy(), self.layout)

    def astype(self, dtype) -> 'Params':
        return Params(self.vector.astype(dtype), self.layout)

    def with_vector(self, vector: np.ndarray) -> 'Params':
        return Params(np.asarray(vector, dtype=self.vector.dtype), self.layout)


@dataclass(frozen=True)
class InitRule:
    """normal(mean, std) | truncated_normal(mean, std, клип 2σ) | xavier | constant(value)"""
    rule: str = 'truncated_normal'
    mean: float = 0.0
    std: float = 0.01
    value: float = 0.0

    def __post_init__(self):
        if self.rule not in INIT_RULES:
            raise SpecError(f"неизвестное правило инициализации {self.rule!r}")
        if self.rule in ('normal', 'truncated_normal') and self.std < 0:
            raise SpecError(f"std={self.std} < 0")


def _fan_in_out(shape: Tuple[int, ...]) -> Tuple[int, int]:
    if len(shape) == 2:
        return shape[0], shape[1]
    kh, kw, cin, cout = shape
    return kh * kw * cin, kh * kw * cout


def init_params(spec: NetworkSpec, init: InitRule, seed: int) -> Params:
    """
    Детерминированная инициализация по (spec, init, seed).

    Смещения инициализируются нулём для всех правил, кроме constant.
    Для truncated_normal значения за пределами ±2σ пересэмплируются
    (scipy.stats.truncnorm).
    """
    layout = ParamLayout(spec)
    vector = np.zeros(layout.total, dtype=DTYPE)
    rng = np.random.default_rng(seed)

    for slot in layout.slots:
        target = vector[slot.offset:slot.offset + slot.size]
        if init.rule == 'constant':
            target[:] = init.value
            continue
        if slot.role == 'bias':
            continue
        if init.rule == 'normal':
            values = rng.normal(init.mean, init.std, size=slot.size)
        elif init.rule == 'truncated_normal':
            if init.std == 0:
                values = np.full(slot.size, init.mean)
            else:
                values = stats.truncnorm.rvs(-2.0, 2.0, loc=init.mean, scale=init.std,
                                             size=slot.size, random_state=rng)
        else:
            fan_in, fan_out = _fan_in_out(slot.shape)
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            values = rng.uniform(-limit, limit, size=slot.size)
        target[:] = np.asarray(values, dtype=DTYPE)

    return Params(vector, layout)


def param_view(params: Params, flat_index: int) -> Tuple[int, str, Tuple[int, ...]]:
    return params.layout.locate(flat_index)


def param_offset(params: Params, layer_id: int, role: str, multi_index: Tuple[int, ...]) -> int:
    return params.layout.offset_of(layer_id, role, tuple(multi_index))


def bias_mask(params: Params, include_biases: bool = True) -> Optional[np.ndarray]:
    """Маска обновляемых скаляров: None означает «все»"""
    if include_biases:
        return None
    return ~params.layout.role_mask('bias')
