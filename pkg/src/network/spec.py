"""
Описание архитектуры сети (NetworkSpec) и проверка совместимости слоёв.

Формат тензоров: NHWC для входов свёрток, веса свёрток (kh, kw, cin, cout),
веса полносвязных слоёв (in, out). Полносвязный слой сам выпрямляет вход.
"""
import hashlib
import json
import math
from dataclasses import dataclass, field, asdict
from typing import Any, Dict, List, Tuple, Union

from app.errors import SpecError

PADDINGS = ('valid', 'same')


@dataclass(frozen=True)
class Dense:
    in_features: int
    out_features: int
    kind: str = field(default='dense', init=False)


@dataclass(frozen=True)
class Conv2D:
    kh: int
    kw: int
    cin: int
    cout: int
    stride: int = 1
    padding: str = 'valid'
    kind: str = field(default='conv2d', init=False)


@dataclass(frozen=True)
class MaxPool:
    size: int = 2
    stride: int = 2
    padding: str = 'valid'
    kind: str = field(default='maxpool', init=False)


@dataclass(frozen=True)
class ReLU:
    kind: str = field(default='relu', init=False)


@dataclass(frozen=True)
class Dropout:
    rate: float
    kind: str = field(default='dropout', init=False)


@dataclass(frozen=True)
class SoftmaxXent:
    kind: str = field(default='softmax_xent', init=False)


Layer = Union[Dense, Conv2D, MaxPool, ReLU, Dropout, SoftmaxXent]

LAYER_TYPES = {
    'dense': Dense,
    'conv2d': Conv2D,
    'maxpool': MaxPool,
    'relu': ReLU,
    'dropout': Dropout,
    'softmax_xent': SoftmaxXent,
}

PARAMETRIC = ('dense', 'conv2d')


def conv_output_size(size: int, kernel: int, stride: int, padding: str) -> int:
    if padding == 'same':
        return math.ceil(size / stride)
    return (size - kernel) // stride + 1


def same_padding(size: int, kernel: int, stride: int) -> Tuple[int, int]:
    """Паддинг в стиле TF: остаток уходит вниз/вправо"""
    out = math.ceil(size / stride)
    total = max((out - 1) * stride + kernel - size, 0)
    return total // 2, total - total // 2


@dataclass(frozen=True)
class NetworkSpec:
    """Упорядоченный список слоёв и форма одного входного примера"""
    layers: Tuple[Layer, ...]
    input_shape: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, 'layers', tuple(self.layers))
        object.__setattr__(self, 'input_shape', tuple(int(d) for d in self.input_shape))

    @property
    def has_head(self) -> bool:
        return bool(self.layers) and self.layers[-1].kind == 'softmax_xent'

    @property
    def body(self) -> Tuple[Layer, ...]:
        return self.layers[:-1] if self.has_head else self.layers

    @property
    def num_outputs(self) -> int:
        return int(math.prod(self.shapes()[-1]))

    def shapes(self) -> List[Tuple[int, ...]]:
        """
        Проверяет совместимость соседних слоёв.

        Returns:
            формы выходов: [input_shape, выход слоя 0, выход слоя 1, ...]
        """
        if not self.layers:
            raise SpecError("сеть без слоёв")
        if any(d <= 0 for d in self.input_shape):
            raise SpecError(f"некорректная форма входа {self.input_shape}")

        shapes = [self.input_shape]
        current = self.input_shape
        for i, layer in enumerate(self.layers):
            where = f"слой {i} ({layer.kind})"
            if layer.kind == 'softmax_xent' and i != len(self.layers) - 1:
                raise SpecError(f"{where}: голова softmax-xent должна быть последней")

            if layer.kind == 'dense':
                if layer.in_features <= 0 or layer.out_features <= 0:
                    raise SpecError(f"{where}: размеры должны быть положительными")
                flat = int(math.prod(current))
                if flat != layer.in_features:
                    raise SpecError(f"{where}: ожидается вход {layer.in_features}, пришло {flat} {current}")
                current = (layer.out_features,)

            elif layer.kind == 'conv2d':
                if len(current) != 3:
                    raise SpecError(f"{where}: нужен вход HWC, пришло {current}")
                if layer.padding not in PADDINGS:
                    raise SpecError(f"{where}: неизвестный паддинг {layer.padding}")
                if min(layer.kh, layer.kw, layer.cin, layer.cout, layer.stride) <= 0:
                    raise SpecError(f"{where}: размеры должны быть положительными")
                h, w, c = current
                if c != layer.cin:
                    raise SpecError(f"{where}: ожидается {layer.cin} каналов, пришло {c}")
                ho = conv_output_size(h, layer.kh, layer.stride, layer.padding)
                wo = conv_output_size(w, layer.kw, layer.stride, layer.padding)
                if ho <= 0 or wo <= 0:
                    raise SpecError(f"{where}: ядро больше входа {current}")
                current = (ho, wo, layer.cout)

            elif layer.kind == 'maxpool':
                if len(current) != 3:
                    raise SpecError(f"{where}: нужен вход HWC, пришло {current}")
                if layer.padding not in PADDINGS:
                    raise SpecError(f"{where}: неизвестный паддинг {layer.padding}")
                if layer.size <= 0 or layer.stride <= 0:
                    raise SpecError(f"{where}: размеры должны быть положительными")
                h, w, c = current
                ho = conv_output_size(h, layer.size, layer.stride, layer.padding)
                wo = conv_output_size(w, layer.size, layer.stride, layer.padding)
                if ho <= 0 or wo <= 0:
                    raise SpecError(f"{where}: окно больше входа {current}")
                current = (ho, wo, c)

            elif layer.kind == 'dropout':
                if not 0.0 <= layer.rate < 1.0:
                    raise SpecError(f"{where}: rate={layer.rate} вне [0, 1)")

            elif layer.kind in ('relu', 'softmax_xent'):
                pass
            else:
                raise SpecError(f"{where}: неизвестный тип слоя")

            shapes.append(current)
        return shapes

    def validate(self) -> 'NetworkSpec':
        self.shapes()
        return self

    def param_shapes(self) -> List[Tuple[int, str, Tuple[int, ...]]]:
        """(layer id, роль, форма) для всех обучаемых тензоров в порядке раскладки"""
        out = []
        for i, layer in enumerate(self.layers):
            if layer.kind == 'dense':
                out.append((i, 'weight', (layer.in_features, layer.out_features)))
                out.append((i, 'bias', (layer.out_features,)))
            elif layer.kind == 'conv2d':
                out.append((i, 'weight', (layer.kh, layer.kw, layer.cin, layer.cout)))
                out.append((i, 'bias', (layer.cout,)))
        return out

    def param_count(self) -> int:
        return sum(int(math.prod(shape)) for _, _, shape in self.param_shapes())

    # ========== Сериализация ==========

    def to_dict(self) -> Dict[str, Any]:
        layers = []
        for layer in self.layers:
            item = {'type': layer.kind}
            item.update({k: v for k, v in asdict(layer).items() if k != 'kind'})
            layers.append(item)
        return {'input_shape': list(self.input_shape), 'layers': layers}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'NetworkSpec':
        try:
            raw_layers = data['layers']
            input_shape = data['input_shape']
        except (KeyError, TypeError) as e:
            raise SpecError(f"в описании сети нет поля {e}")
        layers = []
        for i, item in enumerate(raw_layers):
            item = dict(item)
            kind = item.pop('type', None)
            if kind not in LAYER_TYPES:
                raise SpecError(f"слой {i}: неизвестный тип {kind!r}")
            try:
                layers.append(LAYER_TYPES[kind](**item))
            except TypeError as e:
                raise SpecError(f"слой {i} ({kind}): {e}")
        return cls(tuple(layers), tuple(input_shape))

    def spec_hash(self) -> str:
        """md5 канонического JSON"""
        content = json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False)
        return hashlib.md5(content.encode('utf-8')).hexdigest()


# ========== Готовые архитектуры ==========

def n0_desk_spec() -> NetworkSpec:
    """Уменьшенная базовая сеть N0: три свёртки, fc [512,256] и [256,10]"""
    return NetworkSpec((
        Conv2D(5, 5, 1, 8, padding='same'), ReLU(), MaxPool(2, 2, padding='same'),
        Conv2D(5, 5, 8, 16, padding='same'), ReLU(), MaxPool(2, 2, padding='same'),
        Conv2D(5, 5, 16, 32, padding='same'), ReLU(), MaxPool(2, 2, padding='same'),
        Dense(512, 256), ReLU(), Dropout(0.5),
        Dense(256, 10), SoftmaxXent(),
    ), (28, 28, 1))


def mnist1_spec() -> NetworkSpec:
    """
    MNIST1: вторая свёртка [5,5,8,64] вместо несогласованной по каналам [5,5,32,64].
    same-паддинг даёт вход первого fc 7*7*64 = 3136.
    """
    return NetworkSpec((
        Conv2D(5, 5, 1, 8, padding='same'), ReLU(), MaxPool(2, 2),
        Conv2D(5, 5, 8, 64, padding='same'), ReLU(), MaxPool(2, 2),
        Dense(3136, 1024), ReLU(), Dropout(0.5),
        Dense(1024, 10), SoftmaxXent(),
    ), (28, 28, 1))


def mnist2_spec() -> NetworkSpec:
    """MNIST2: valid-свёртки 28->24->12->8->4, fc [800,500] и [500,10]"""
    return NetworkSpec((
        Conv2D(5, 5, 1, 20), ReLU(), MaxPool(2, 2),
        Conv2D(5, 5, 20, 50), ReLU(), MaxPool(2, 2),
        Dense(800, 500), ReLU(),
        Dense(500, 10), SoftmaxXent(),
    ), (28, 28, 1))


def mnist3_spec() -> NetworkSpec:
    """MNIST3: полносвязная 784-256-256-10"""
    return NetworkSpec((
        Dense(784, 256), ReLU(),
        Dense(256, 256), ReLU(),
        Dense(256, 10), SoftmaxXent(),
    ), (28, 28, 1))


def cifar1_spec() -> NetworkSpec:
    """Заготовка CIFAR1 без batch-norm: вход 24x24x3 (центральный кроп), 24->12->6, 6*6*64 = 2304"""
    return NetworkSpec((
        Conv2D(5, 5, 3, 64, padding='same'), ReLU(), MaxPool(3, 2, padding='same'),
        Conv2D(5, 5, 64, 64, padding='same'), ReLU(), MaxPool(3, 2, padding='same'),
        Dense(2304, 384), ReLU(),
        Dense(384, 192), ReLU(),
        Dense(192, 10), SoftmaxXent(),
    ), (24, 24, 3))


def introspection_spec(activation: str = 'relu', hidden: int = 40) -> NetworkSpec:
    """Сеть интроспекции 4 -> hidden -> 1 (без головы, потери L1 считаются снаружи)"""
    if activation == 'relu':
        layers = (Dense(4, hidden), ReLU(), Dense(hidden, 1))
    elif activation == 'identity':
        layers = (Dense(4, hidden), Dense(hidden, 1))
    else:
        raise SpecError(f"неизвестная активация {activation!r}")
    return NetworkSpec(layers, (4,))
