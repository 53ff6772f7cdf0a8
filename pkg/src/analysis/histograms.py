"""
Метрики эволюции весов по истории: отклонение w(T) - w(0) и корень второго
момента относительно начального значения, их гистограммы и выборка траекторий.
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd

from app.errors import ConfigError, RangeError
from history.snapshot_store import SnapshotStore, WeightSeries

logger = logging.getLogger('analysis')

METRICS = ('final-minus-initial', 'sqrt-second-moment')
DEFAULT_BINS = 101


@dataclass(frozen=True)
class HistogramSpec:
    """
    bins равномерных корзин; при edges=None границы берутся по данным:
    +-max|d| для знаковой метрики, [0, max M] для момента.
    Явные edges имеют приоритет над bins.
    """
    metric: str = 'final-minus-initial'
    bins: int = DEFAULT_BINS
    edges: Optional[Tuple[float, ...]] = None
    log_frequency: bool = False

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ConfigError(f"неизвестная метрика {self.metric!r}", 'analysis.metric')
        if self.edges is None and self.bins < 2:
            raise ConfigError(f"bins={self.bins} < 2", 'analysis.bins')
        if self.edges is not None:
            edges = np.asarray(self.edges, dtype=np.float64)
            if edges.size < 3 or not np.all(np.diff(edges) > 0):
                raise ConfigError("нужно >= 2 корзин со строго возрастающими границами", 'analysis.edges')

    def edges_for(self, values: np.ndarray) -> np.ndarray:
        if self.edges is not None:
            return np.asarray(self.edges, dtype=np.float64)
        top = float(np.max(np.abs(values))) if values.size else 0.0
        top = top or 1.0
        if self.metric == 'final-minus-initial':
            return np.linspace(-top, top, self.bins + 1)
        return np.linspace(0.0, top, self.bins + 1)


@dataclass
class Histogram:
    metric: str
    edges: np.ndarray
    counts: np.ndarray
    values: np.ndarray
    bin_index: np.ndarray
    log_frequency: bool = False

    @property
    def log_counts(self) -> np.ndarray:
        return np.log10(self.counts + 1.0)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({
            'bin': np.arange(self.counts.size),
            'left': self.edges[:-1],
            'right': self.edges[1:],
            'count': self.counts,
        })
        if self.log_frequency:
            frame['log10_count_plus_1'] = self.log_counts
        return frame


def _require_history(store: SnapshotStore) -> None:
    if len(store) < 2:
        raise RangeError(f"для метрик эволюции нужно >= 2 снимков, записано {len(store)}")


def deviation_values(store: SnapshotStore) -> np.ndarray:
    """w(T) - w(0) для каждого скаляра, T - последний записанный шаг"""
    _require_history(store)
    return store.lookup(store.steps[-1]).astype(np.float64) - store.lookup(0).astype(np.float64)


def second_moment_values(store: SnapshotStore) -> np.ndarray:
    """sqrt(mean_s (w(s) - w(0))^2) по записанным шагам s > 0"""
    _require_history(store)
    initial = store.lookup(0).astype(np.float64)
    later = [s for s in store.steps if s > 0]
    acc = np.zeros(store.param_count, dtype=np.float64)
    for step in later:
        acc += np.square(store.lookup(step).astype(np.float64) - initial)
    return np.sqrt(acc / len(later))


def bin_values(values: np.ndarray, spec: HistogramSpec) -> Histogram:
    """Значения за пределами границ попадают в крайние корзины: сумма counts = число скаляров"""
    edges = spec.edges_for(values)
    n_bins = edges.size - 1
    clipped = np.clip(values, edges[0], edges[-1])
    bin_index = np.clip(np.searchsorted(edges, clipped, side='right') - 1, 0, n_bins - 1)
    counts = np.bincount(bin_index, minlength=n_bins)
    return Histogram(spec.metric, edges, counts, values, bin_index, spec.log_frequency)


def deviation_histogram(store: SnapshotStore, spec: Optional[HistogramSpec] = None) -> Histogram:
    spec = spec or HistogramSpec('final-minus-initial')
    return bin_values(deviation_values(store), spec)


def second_moment_histogram(store: SnapshotStore, spec: Optional[HistogramSpec] = None) -> Histogram:
    spec = spec or HistogramSpec('sqrt-second-moment')
    return bin_values(second_moment_values(store), spec)


def histogram_for(store: SnapshotStore, spec: HistogramSpec) -> Histogram:
    if spec.metric == 'final-minus-initial':
        return deviation_histogram(store, spec)
    return second_moment_histogram(store, spec)


@dataclass
class Trajectory:
    bin: int
    series: WeightSeries


def sample_trajectories(store: SnapshotStore, histogram: Histogram, per_bin: int, seed: int) -> List[Trajectory]:
    """
    До per_bin скаляров из каждой непустой корзины, траектории как отклонения от w(0).
    """
    if per_bin <= 0:
        return []
    rng = np.random.default_rng(seed)
    trajectories = []
    for b in np.flatnonzero(histogram.counts):
        members = np.flatnonzero(histogram.bin_index == b)
        chosen = np.sort(rng.choice(members, size=min(per_bin, members.size), replace=False))
        for idx in chosen:
            series = store.weight_series(int(idx))
            trajectories.append(Trajectory(int(b), WeightSeries(
                series.flat_index, series.steps, series.deviation().astype(np.float64))))
    return trajectories


def trajectories_frame(trajectories: List[Trajectory]) -> pd.DataFrame:
    """Длинный формат: flat_index, bin, step, deviation"""
    frames = [pd.DataFrame({'flat_index': tr.series.flat_index, 'bin': tr.bin,
                            'step': tr.series.steps, 'deviation': tr.series.values})
              for tr in trajectories]
    if not frames:
        return pd.DataFrame(columns=['flat_index', 'bin', 'step', 'deviation'])
    return pd.concat(frames, ignore_index=True)


def weight_summary(store: SnapshotStore) -> pd.DataFrame:
    """Сводка метрик (медиана, 99-й перцентиль) по обеим метрикам"""
    rows = []
    for metric, values in (('final-minus-initial', np.abs(deviation_values(store))),
                           ('sqrt-second-moment', second_moment_values(store))):
        rows.append({'metric': metric, 'median': float(np.median(values)),
                     'p99': float(np.percentile(values, 99)), 'max': float(values.max()),
                     'moment_steps': 'after-0' if metric == 'sqrt-second-moment' else ''})
    return pd.DataFrame(rows)


def export_analysis(store: SnapshotStore, out_dir, bins: int = DEFAULT_BINS, per_bin: int = 3,
                    seed: int = 0, log_frequency: bool = True) -> List[Path]:
    """Гистограммы обеих метрик, траектории и сводка в CSV"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for metric, name in (('final-minus-initial', 'deviation'), ('sqrt-second-moment', 'second_moment')):
        histogram = histogram_for(store, HistogramSpec(metric, bins, log_frequency=log_frequency))
        path = out_dir / f'histogram_{name}.csv'
        histogram.to_frame().to_csv(path, index=False)
        written.append(path)
        if metric == 'final-minus-initial':
            path = out_dir / 'trajectories.csv'
            trajectories_frame(sample_trajectories(store, histogram, per_bin, seed)).to_csv(path, index=False)
            written.append(path)
    path = out_dir / 'weight_summary.csv'
    weight_summary(store).to_csv(path, index=False)
    written.append(path)
    logger.info(f"Анализ истории ({len(store)} снимков, {store.param_count} скаляров) записан в {out_dir}")
    return written
