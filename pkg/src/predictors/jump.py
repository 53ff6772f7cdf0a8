"""
Прыжок: все обучаемые скаляры сети заменяются прогнозом по их собственной истории.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.errors import ConfigError, NumericError
from app.params import settings
from history.snapshot_store import SnapshotStore
from history.steps import input_steps
from network.params import Params, bias_mask
from predictors.base import Predictor

logger = logging.getLogger('predictors')

CHUNK_SIZE = 1 << 16


@dataclass(frozen=True)
class JumpPlan:
    steps: Tuple[int, ...]
    predictor: Predictor
    include_biases: bool = True
    clamp_factor: float = settings.CLAMP_FACTOR
    reset_optimizer: bool = False

    def __post_init__(self):
        steps = tuple(int(s) for s in self.steps)
        object.__setattr__(self, 'steps', steps)
        for i, s in enumerate(steps):
            if s < 1:
                raise ConfigError(f"шаг прыжка {s} < 1", f'jumps.steps[{i}]')
            if i and s <= steps[i - 1]:
                raise ConfigError(f"шаги прыжков должны строго возрастать: {steps[i - 1]} >= {s}",
                                  f'jumps.steps[{i}]')
        if self.clamp_factor <= 0:
            raise ConfigError(f"clamp_factor={self.clamp_factor} <= 0", 'jumps.clamp_factor')

    def check_history(self, t_min: int) -> None:
        if self.steps and self.steps[0] < t_min:
            raise ConfigError(f"первый прыжок {self.steps[0]} раньше t_min={t_min}", 'jumps.steps[0]')

    def is_jump(self, step: int) -> bool:
        return step in self.steps


@dataclass
class JumpResult:
    step: int
    predictor: str
    updated: int
    clamped: int
    mean_abs_delta: float
    max_abs_delta: float

    def as_row(self) -> dict:
        return {'step': self.step, 'predictor': self.predictor, 'updated': self.updated,
                'clamped': self.clamped, 'mean_abs_delta': self.mean_abs_delta,
                'max_abs_delta': self.max_abs_delta}


def _chunks(indices: np.ndarray, size: int) -> List[np.ndarray]:
    return [indices[i:i + size] for i in range(0, indices.shape[0], size)]


def _forecast_chunk(predictor: Predictor, columns: Sequence[np.ndarray], indices: np.ndarray,
                    cap: Optional[float]) -> Tuple[np.ndarray, int]:
    histories = np.stack([c[indices] for c in columns], axis=1).astype(np.float64)
    values = np.asarray(predictor.forecast(histories, indices), dtype=np.float64)
    bad = ~np.isfinite(values)
    if bad.any():
        first = int(indices[np.flatnonzero(bad)[0]])
        raise NumericError(f"нечисловой прогноз {predictor.describe()}", first)
    clamped = 0
    if cap is not None:
        over = np.abs(values) > cap
        clamped = int(over.sum())
        if clamped:
            values = np.clip(values, -cap, cap)
    return values, clamped


def apply_jump(params: Params, store: SnapshotStore, t: int, predictor: Predictor,
               include_biases: bool = True, clamp_factor: float = settings.CLAMP_FACTOR,
               workers: int = 1, chunk_size: int = CHUNK_SIZE) -> JumpResult:
    """
    Заменяет params.vector на месте прогнозами predictor и увеличивает params.version.

    Живой вектор записывается как снимок шага t, если его ещё нет.
    Прогнозы ограничиваются по модулю clamp_factor * max|w| истории;
    при нечисловом прогнозе параметры не меняются.
    """
    if t not in store:
        store.record(t, params)
    step_t, step_07, step_04, step_0 = input_steps(t)
    columns = (params.vector, store.lookup(step_07), store.lookup(step_04), store.lookup(step_0))

    mask = bias_mask(params, include_biases)
    indices = np.arange(len(params)) if mask is None else np.flatnonzero(mask)
    predictor.prepare(t, len(params))

    cap = clamp_factor * store.max_abs if store.max_abs > 0 else None
    chunks = _chunks(indices, chunk_size)
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            results = list(executor.map(lambda c: _forecast_chunk(predictor, columns, c, cap), chunks))
    else:
        results = [_forecast_chunk(predictor, columns, c, cap) for c in chunks]

    if results:
        forecast = np.concatenate([values for values, _ in results])
    else:
        forecast = np.zeros(0)
    clamped = sum(count for _, count in results)

    old = params.vector[indices].astype(np.float64)
    params.vector[indices] = forecast.astype(params.vector.dtype)
    params.touch()
    delta = np.abs(params.vector[indices].astype(np.float64) - old)

    result = JumpResult(
        step=t,
        predictor=predictor.describe(),
        updated=int(indices.shape[0]),
        clamped=clamped,
        mean_abs_delta=float(delta.mean()) if delta.size else 0.0,
        max_abs_delta=float(delta.max()) if delta.size else 0.0,
    )
    logger.info(f"Прыжок на шаге {t}: {result.predictor}, обновлено {result.updated}, "
                f"ограничено {result.clamped}, mean|dw|={result.mean_abs_delta:.3e}, "
                f"max|dw|={result.max_abs_delta:.3e}")
    if clamped:
        logger.warning(f"Шаг {t}: {clamped} прогнозов ограничены по модулю {cap:.4g}")
    return result
