"""
Построение обучающего набора сети интроспекции из истории весов.

Пример: вход [w(t), w(0.7t), w(0.4t), w(0)] x 1000, цель w(floor(k*t)) x 1000.
Веса ранжируются по |w(t) - w(0)| (по убыванию), выборка стратифицирована
по перцентилям ранга.
"""
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np
import pandas as pd

from app.errors import ConfigError, EmptyDataset, FormatError, RangeError
from app.params import settings
from history.snapshot_store import SnapshotStore
from history.steps import build_candidates, input_steps, scaled_step

logger = logging.getLogger('introspection')

CSV_COLUMNS = ['flat_index', 't', 'k', 'x0', 'x1', 'x2', 'x3', 'y']

# Поток ГСЧ для разбиения train/validation; выборки используют ключ (seed, j)
SPLIT_STREAM = 0x5B1


@dataclass(frozen=True)
class BuildConfig:
    sample_count: int = 50000
    k: float = settings.DEFAULT_JUMP_RATIO
    t_range: Tuple[int, int] = (1, 1)
    fractions: Tuple[float, ...] = settings.STRATA_FRACTIONS
    seed: int = 0
    validation_fraction: float = 0.1

    def __post_init__(self):
        if self.sample_count < 1:
            raise ConfigError(f"sample_count={self.sample_count} < 1", 'build.sample_count')
        if not self.k > 1.0:
            raise ConfigError(f"k={self.k} должен быть > 1", 'build.k')
        t_min, t_max = self.t_range
        if t_min < 1:
            raise ConfigError(f"t_min={t_min} < 1", 'build.t_range')
        if t_max < t_min:
            raise ConfigError(f"t_max={t_max} < t_min={t_min}", 'build.t_range')
        if not self.fractions or any(f < 0 for f in self.fractions) \
                or not math.isclose(sum(self.fractions), 1.0, abs_tol=1e-9):
            raise ConfigError(f"доли {self.fractions} должны быть >= 0 и давать в сумме 1", 'build.fractions')
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ConfigError(f"validation_fraction={self.validation_fraction} вне [0, 1)",
                              'build.validation_fraction')

    def check_run_length(self, run_length: int) -> None:
        if scaled_step(self.k, self.t_range[1]) > run_length:
            raise ConfigError(
                f"floor(k * t_max) = {scaled_step(self.k, self.t_range[1])} превышает длину прогона {run_length}",
                'build.t_range')


@dataclass(frozen=True)
class WeightSample:
    x: Tuple[float, float, float, float]
    y: float
    flat_index: int
    t: int
    k: float


@dataclass
class SampleSet:
    """Столбцовое хранение примеров (масштабированное пространство)"""
    x: np.ndarray
    y: np.ndarray
    flat_index: np.ndarray
    t: np.ndarray
    k: np.ndarray
    stratum: Optional[np.ndarray] = field(default=None)

    def __len__(self) -> int:
        return int(self.y.shape[0])

    def __iter__(self) -> Iterator[WeightSample]:
        for i in range(len(self)):
            yield self[i]

    def __getitem__(self, i: int) -> WeightSample:
        return WeightSample(tuple(float(v) for v in self.x[i]), float(self.y[i]),
                            int(self.flat_index[i]), int(self.t[i]), float(self.k[i]))

    def subset(self, mask: np.ndarray) -> 'SampleSet':
        return SampleSet(self.x[mask], self.y[mask], self.flat_index[mask], self.t[mask], self.k[mask],
                         None if self.stratum is None else self.stratum[mask])

    @classmethod
    def empty(cls) -> 'SampleSet':
        return cls(np.zeros((0, 4)), np.zeros(0), np.zeros(0, dtype=np.int64),
                   np.zeros(0, dtype=np.int64), np.zeros(0))

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({'flat_index': self.flat_index, 't': self.t, 'k': self.k})
        for j in range(4):
            frame[f'x{j}'] = self.x[:, j]
        frame['y'] = self.y
        return frame

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> 'SampleSet':
        missing = [c for c in CSV_COLUMNS if c not in frame.columns]
        if missing:
            raise FormatError(f"в наборе нет столбцов {missing}")
        return cls(
            x=frame[['x0', 'x1', 'x2', 'x3']].to_numpy(dtype=np.float64),
            y=frame['y'].to_numpy(dtype=np.float64),
            flat_index=frame['flat_index'].to_numpy(dtype=np.int64),
            t=frame['t'].to_numpy(dtype=np.int64),
            k=frame['k'].to_numpy(dtype=np.float64),
        )


def stratum_counts(sample_count: int, fractions) -> List[int]:
    """
    Наибольшие остатки: floor(n*f) плюс по одному примеру стратам
    с наибольшей дробной частью; при равенстве выигрывает более ранняя.
    """
    exact = [sample_count * f for f in fractions]
    counts = [math.floor(v) for v in exact]
    order = sorted(range(len(fractions)), key=lambda i: (-(exact[i] - counts[i]), i))
    for i in order[:sample_count - sum(counts)]:
        counts[i] += 1
    return counts


def stratum_bands(weight_count: int, fractions) -> List[Tuple[int, int]]:
    """Полуинтервалы рангов [lo, hi) для каждой страты; пустая полоса расширяется до одного ранга"""
    bands = []
    cumulative = 0.0
    lo = 0
    for i, f in enumerate(fractions):
        cumulative += f
        hi = weight_count if i == len(fractions) - 1 else math.floor(cumulative * weight_count + 1e-9)
        band_lo = min(lo, weight_count - 1)
        bands.append((band_lo, max(hi, band_lo + 1)))
        lo = max(hi, lo)
    return bands


def variation_order(store: SnapshotStore, t: int) -> np.ndarray:
    """Индексы весов по убыванию |w(t) - w(0)|, равные по индексу"""
    variation = np.abs(store.lookup(t).astype(np.float64) - store.lookup(0).astype(np.float64))
    return np.argsort(-variation, kind='stable')


def split_indices(weight_count: int, validation_fraction: float, seed: int) -> np.ndarray:
    """Маска валидационных весов (разбиение по индексу веса)"""
    mask = np.zeros(weight_count, dtype=bool)
    n_val = int(round(validation_fraction * weight_count))
    if n_val:
        perm = np.random.default_rng([SPLIT_STREAM, seed]).permutation(weight_count)
        mask[perm[:n_val]] = True
    return mask


def build_dataset(store: SnapshotStore, cfg: BuildConfig) -> Tuple[SampleSet, SampleSet]:
    """
    Returns:
        (train, validation); ни один индекс веса не попадает в обе части
    """
    candidates = [t for t in build_candidates(cfg.t_range, store.stride) if t in store]
    if not candidates:
        raise RangeError(f"в диапазоне {cfg.t_range} нет записанных шагов, кратных {store.stride}")

    weight_count = store.param_count
    counts = stratum_counts(cfg.sample_count, cfg.fractions)
    bands = stratum_bands(weight_count, cfg.fractions)
    scale = settings.WEIGHT_SCALE

    x = np.zeros((cfg.sample_count, 4), dtype=np.float64)
    y = np.zeros(cfg.sample_count, dtype=np.float64)
    flat_index = np.zeros(cfg.sample_count, dtype=np.int64)
    ts = np.zeros(cfg.sample_count, dtype=np.int64)
    strata = np.zeros(cfg.sample_count, dtype=np.int64)
    orders: Dict[int, np.ndarray] = {}

    j = 0
    for s, (count, (lo, hi)) in enumerate(zip(counts, bands)):
        for _ in range(count):
            rng = np.random.default_rng([cfg.seed, j])
            t = candidates[int(rng.integers(len(candidates)))]
            if t not in orders:
                orders[t] = variation_order(store, t)
            idx = int(orders[t][int(rng.integers(lo, hi))])

            history = [store.lookup(step)[idx] for step in input_steps(t)]
            target = store.lookup(scaled_step(cfg.k, t))[idx]
            x[j] = np.asarray(history, dtype=np.float64) * scale
            y[j] = float(target) * scale
            flat_index[j], ts[j], strata[j] = idx, t, s
            j += 1

    samples = SampleSet(x, y, flat_index, ts, np.full(cfg.sample_count, float(cfg.k)), strata)
    validation_weights = split_indices(weight_count, cfg.validation_fraction, cfg.seed)
    is_val = validation_weights[flat_index]
    train, validation = samples.subset(~is_val), samples.subset(is_val)
    logger.info(f"Набор интроспекции: {len(train)} train / {len(validation)} validation, "
                f"страты {counts}, {len(candidates)} кандидатов t, k={cfg.k}")
    if not len(train):
        raise EmptyDataset("все примеры попали в валидацию; уменьшите validation_fraction")
    return train, validation


def save_samples_csv(train: SampleSet, validation: SampleSet, path) -> Path:
    frames = []
    for name, part in (('train', train), ('validation', validation)):
        frame = part.to_frame()
        frame['split'] = name
        frames.append(frame)
    path = Path(path)
    pd.concat(frames, ignore_index=True).to_csv(path, index=False)
    return path


def load_samples_csv(path) -> Tuple[SampleSet, SampleSet]:
    try:
        frame = pd.read_csv(path)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise FormatError(f"{path}: {e}")
    if 'split' not in frame.columns:
        return SampleSet.from_frame(frame), SampleSet.empty()
    train = SampleSet.from_frame(frame[frame['split'] == 'train'])
    validation = SampleSet.from_frame(frame[frame['split'] == 'validation'])
    return train, validation
