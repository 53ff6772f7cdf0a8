"""
Множество шагов, на которых история весов обязана иметь точный снимок.
"""
import math
from fractions import Fraction
from typing import Iterable, List, Optional, Sequence, Tuple

from app.errors import ConfigError, RangeError
from app.params import settings

# Доли t для входов сети интроспекции: w(t), w(0.7t), w(0.4t), w(0)
INPUT_FRACTIONS = (Fraction(1), Fraction(7, 10), Fraction(4, 10), Fraction(0))

SNAPSHOT_BYTES = 4


def scaled_step(ratio, t: int) -> int:
    """floor(ratio * t) без погрешности float: 0.7 * 1000 == 700, а не 699"""
    if not isinstance(ratio, Fraction):
        ratio = Fraction(str(ratio))
    return math.floor(ratio * t)


def input_steps(t: int) -> Tuple[int, int, int, int]:
    """Шаги входов в порядке подачи: (t, 0.7t, 0.4t, 0)"""
    return tuple(scaled_step(f, t) for f in INPUT_FRACTIONS)


def build_candidates(build_range: Tuple[int, int], stride: int) -> List[int]:
    """Шаги t в [t_min, t_max], кратные stride: только они записываются в историю"""
    t_min, t_max = build_range
    first = max(stride, -(-t_min // stride) * stride)
    return list(range(first, t_max + 1, stride))


def required_steps(jump_steps: Iterable[int] = (),
                   build_range: Optional[Tuple[int, int]] = None,
                   k: float = settings.DEFAULT_JUMP_RATIO,
                   stride: int = 50,
                   run_length: int = 0) -> List[int]:
    """
    Args:
        jump_steps: шаги прыжков
        build_range: (t_min, t_max) для построения датасета или None
        k: отношение прыжка (цель w(floor(k*t)))
        stride: шаг снимков для анализа
        run_length: число шагов обучения

    Returns:
        отсортированный список шагов без повторов
    """
    if stride < 1:
        raise ConfigError(f"stride={stride} < 1", 'history.stride')
    if run_length < 0:
        raise RangeError(f"длина прогона {run_length} < 0")

    steps = set(range(0, run_length + 1, stride))
    steps.add(0)

    for t in jump_steps:
        if not 0 < t <= run_length:
            raise RangeError(f"шаг прыжка {t} вне (0, {run_length}]")
        steps.update(input_steps(t))

    if build_range is not None:
        t_min, t_max = build_range
        if t_min < 1 or t_max < t_min:
            raise RangeError(f"диапазон построения [{t_min}, {t_max}] пуст или начинается с 0")
        if scaled_step(k, t_max) > run_length:
            raise RangeError(f"floor({k} * {t_max}) = {scaled_step(k, t_max)} за пределами прогона {run_length}")
        for t in build_candidates(build_range, stride):
            steps.update(input_steps(t))
            steps.add(scaled_step(k, t))

    return sorted(steps)


def snapshot_bytes(step_count: int, param_count: int) -> int:
    return step_count * param_count * SNAPSHOT_BYTES


def validate_memory(steps: Sequence[int], param_count: int,
                    limit: Optional[int] = None) -> int:
    """Оценка объёма истории в байтах; превышение лимита -> ConfigError"""
    limit = settings.HISTORY_MEMORY_LIMIT if limit is None else limit
    size = snapshot_bytes(len(steps), param_count)
    if size > limit:
        raise ConfigError(
            f"история {len(steps)} снимков x {param_count} параметров = {size} байт "
            f"превышает лимит {limit}; увеличьте stride или сократите диапазон",
            'history.stride')
    return size
