import bisect
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional

import numpy as np

from app.errors import DuplicateStep, MissingSnapshot, ShapeError
from network.params import DTYPE, Params

logger = logging.getLogger('history')

LOOKUP_MODES = ('exact', 'nearest')


@dataclass
class RunMeta:
    """Метаданные прогона, сохраняемые вместе с историей"""
    spec_hash: str = ''
    optimizer: str = ''
    seed: int = 0
    extra: Dict[str, Any] = field(default_factory=dict)


@dataclass
class WeightSeries:
    flat_index: int
    steps: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if len(self.steps) != len(self.values):
            raise ShapeError(f"шагов {len(self.steps)}, значений {len(self.values)}")

    def deviation(self) -> np.ndarray:
        """Отклонение от значения на шаге 0"""
        return self.values - self.values[0]


class SnapshotStore:
    """
    История весов: шаг -> копия плоского вектора параметров (float32).

    Пишет только цикл обучения; после записи снимок не меняется.
    """

    def __init__(self, param_count: int, meta: Optional[RunMeta] = None,
                 required: Iterable[int] = (), stride: int = 50):
        if param_count < 1:
            raise ShapeError(f"param_count={param_count} < 1")
        self.param_count = param_count
        self.meta = meta or RunMeta()
        self.required_steps: List[int] = sorted(set(required))
        self.stride = stride
        self._steps: List[int] = []
        self._snapshots: Dict[int, np.ndarray] = {}
        self._max_abs = 0.0

    def __len__(self) -> int:
        return len(self._steps)

    def __contains__(self, step: int) -> bool:
        return step in self._snapshots

    @property
    def steps(self) -> List[int]:
        return list(self._steps)

    @property
    def max_abs(self) -> float:
        """max |w| по всем записанным снимкам"""
        return self._max_abs

    @property
    def nbytes(self) -> int:
        return len(self._steps) * self.param_count * np.dtype(DTYPE).itemsize

    def is_required(self, step: int) -> bool:
        i = bisect.bisect_left(self.required_steps, step)
        return i < len(self.required_steps) and self.required_steps[i] == step

    def missing_required(self) -> List[int]:
        return [s for s in self.required_steps if s not in self._snapshots]

    def record(self, step: int, params) -> 'SnapshotStore':
        vector = params.vector if isinstance(params, Params) else np.asarray(params)
        if step < 0:
            raise ValueError(f"шаг {step} < 0")
        if step in self._snapshots:
            raise DuplicateStep(f"снимок шага {step} уже записан")
        if vector.ndim != 1 or vector.shape[0] != self.param_count:
            raise ShapeError(f"длина вектора {vector.shape} не равна {self.param_count}")

        snapshot = np.array(vector, dtype=DTYPE, copy=True)
        snapshot.setflags(write=False)
        self._snapshots[step] = snapshot
        bisect.insort(self._steps, step)
        if snapshot.size:
            self._max_abs = max(self._max_abs, float(np.max(np.abs(snapshot))))
        return self

    def lookup(self, step: int, mode: str = 'exact') -> np.ndarray:
        """
        exact: только записанный шаг, иначе MissingSnapshot.
        nearest: ближайший записанный шаг, при равенстве расстояний более ранний.
        """
        if mode not in LOOKUP_MODES:
            raise ValueError(f"неизвестный режим {mode!r}")
        if not self._steps:
            raise MissingSnapshot(step)
        if mode == 'exact':
            try:
                return self._snapshots[step]
            except KeyError:
                raise MissingSnapshot(step)
        return self._snapshots[self.nearest_step(step)]

    def nearest_step(self, step: int) -> int:
        if not self._steps:
            raise MissingSnapshot(step)
        i = bisect.bisect_left(self._steps, step)
        if i == 0:
            return self._steps[0]
        if i == len(self._steps):
            return self._steps[-1]
        before, after = self._steps[i - 1], self._steps[i]
        return after if after - step < step - before else before

    def weight_series(self, flat_index: int) -> WeightSeries:
        if not 0 <= flat_index < self.param_count:
            raise IndexError(f"индекс {flat_index} вне [0, {self.param_count})")
        if 0 not in self._snapshots:
            raise MissingSnapshot(0)
        steps = np.array(self._steps, dtype=np.int64)
        values = np.array([self._snapshots[s][flat_index] for s in self._steps], dtype=DTYPE)
        return WeightSeries(flat_index, steps, values)

    def matrix(self, steps: Optional[Iterable[int]] = None) -> np.ndarray:
        """Снимки в виде матрицы (шаги x параметры), только точные шаги"""
        steps = self._steps if steps is None else list(steps)
        return np.stack([self.lookup(s) for s in steps])

    def equals(self, other: 'SnapshotStore') -> bool:
        """Побитовое совпадение векторов и метаданных"""
        if (self.param_count, self._steps, self.required_steps, self.stride) != \
                (other.param_count, other._steps, other.required_steps, other.stride):
            return False
        if self.meta != other.meta:
            return False
        return all(self._snapshots[s].tobytes() == other._snapshots[s].tobytes() for s in self._steps)
