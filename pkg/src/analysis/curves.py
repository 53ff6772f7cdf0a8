"""
Кривые обучения (step, loss, val_acc, seconds): запись, чтение, сравнение прогонов.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from app.errors import ConfigError, FormatError, RangeError

logger = logging.getLogger('analysis')

CURVE_COLUMNS = ['step', 'loss', 'val_acc', 'seconds']
TIMING_FILE = 'timing.csv'
NOT_REACHED = 'not reached'


@dataclass
class TrainingCurve:
    name: str
    frame: pd.DataFrame = field(default_factory=lambda: pd.DataFrame(columns=CURVE_COLUMNS))
    meta: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        steps = self.frame['step'].to_numpy()
        if steps.size > 1 and not np.all(np.diff(steps) > 0):
            raise RangeError(f"{self.name}: шаги кривой должны строго возрастать")

    @classmethod
    def from_rows(cls, name: str, rows: List[Dict[str, Any]], meta: Optional[Dict[str, Any]] = None):
        return cls(name, pd.DataFrame(rows, columns=CURVE_COLUMNS), meta or {})

    def __len__(self) -> int:
        return len(self.frame)

    @property
    def has_timing(self) -> bool:
        return bool(len(self.frame)) and self.frame['seconds'].notna().all()

    def max_accuracy(self) -> float:
        return float(self.frame['val_acc'].max())

    def first_reach(self, accuracy: float) -> Optional[int]:
        """Первый шаг, на котором val_acc >= accuracy; None если не достигнут"""
        hit = self.frame[self.frame['val_acc'] >= accuracy]
        return None if hit.empty else int(hit['step'].iloc[0])

    def accuracy_at_step(self, step: int) -> float:
        """val_acc в последней точке не позже step"""
        rows = self.frame[self.frame['step'] <= step]
        return float(rows['val_acc'].iloc[-1]) if not rows.empty else float('nan')

    def accuracy_at_seconds(self, seconds: float) -> float:
        rows = self.frame[self.frame['seconds'] <= seconds]
        return float(rows['val_acc'].iloc[-1]) if not rows.empty else float('nan')


def write_curve(curve: TrainingCurve, path, deterministic: bool = False) -> Path:
    """
    deterministic: столбец seconds пишется пустым, время уходит в timing.csv
    рядом с кривой, чтобы CSV совпадали побайтно между одинаковыми прогонами.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = curve.frame[CURVE_COLUMNS].copy()
    if deterministic:
        frame[['step', 'seconds']].to_csv(path.parent / TIMING_FILE, index=False)
        frame['seconds'] = np.nan
    frame.to_csv(path, index=False, na_rep='')
    return path


def read_curve(path, name: Optional[str] = None) -> TrainingCurve:
    path = Path(path)
    try:
        frame = pd.read_csv(path)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise FormatError(f"{path}: {e}")
    if 'val_acc' not in frame.columns:
        raise ConfigError("в кривой нет столбца val_acc", str(path))
    if 'step' not in frame.columns:
        raise ConfigError("в кривой нет столбца step", str(path))
    for column in ('loss', 'seconds'):
        if column not in frame.columns:
            frame[column] = np.nan

    timing = path.parent / TIMING_FILE
    if frame['seconds'].isna().all() and timing.exists():
        sidecar = pd.read_csv(timing)
        frame = frame.drop(columns=['seconds']).merge(sidecar[['step', 'seconds']], on='step', how='left')
    return TrainingCurve(name or path.parent.name or path.stem, frame[CURVE_COLUMNS])


def _reach_label(step: Optional[int]):
    return NOT_REACHED if step is None else step


def summarize(curves: Sequence[TrainingCurve], reference: TrainingCurve) -> pd.DataFrame:
    """Максимум точности и первый шаг достижения максимума эталонного прогона"""
    target = reference.max_accuracy()
    rows = []
    for curve in curves:
        rows.append({
            'run': curve.name,
            'max_val_acc': curve.max_accuracy(),
            'final_val_acc': float(curve.frame['val_acc'].iloc[-1]),
            'first_reach_step': _reach_label(curve.first_reach(target)),
        })
    return pd.DataFrame(rows)


def export_curves(curves: Sequence[TrainingCurve], out_dir, reference: int = 0,
                  summary: Optional[pd.DataFrame] = None) -> pd.DataFrame:
    """
    По CSV на прогон и summary.csv. reference: индекс прогона без прыжков;
    готовая summary (например из compare_curves) записывается как есть.
    """
    if not curves:
        raise ValueError("нет кривых для экспорта")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for curve in curves:
        write_curve(curve, out_dir / f'{curve.name}.csv')
    if summary is None:
        summary = summarize(curves, curves[reference])
    summary.to_csv(out_dir / 'summary.csv', index=False)
    logger.info(f"Экспортировано {len(curves)} кривых в {out_dir}")
    return summary


def compare_runs(paths: Sequence, reference_path, out_dir=None) -> pd.DataFrame:
    """Сравнение по файлам curve.csv; с out_dir кривые и сводка экспортируются туда"""
    reference = read_curve(reference_path)
    curves = [read_curve(p) for p in paths]
    summary = compare_curves(curves, reference)
    if out_dir is not None:
        export_curves([reference] + curves, out_dir, summary=summary)
    return summary


def compare_curves(curves: Sequence[TrainingCurve], reference: TrainingCurve) -> pd.DataFrame:
    """
    Сравнение прогонов с эталоном (без прыжков): максимум точности, первый шаг
    достижения максимума эталона, точность при равном числе шагов и при
    равном времени (если время записано у всех прогонов).
    """
    if not curves:
        raise ValueError("нужна хотя бы одна кривая помимо эталона")
    everything = [reference] + list(curves)
    for curve in everything:
        if not len(curve):
            raise RangeError(f"кривая {curve.name} пуста")

    start = max(int(c.frame['step'].iloc[0]) for c in everything)
    end = min(int(c.frame['step'].iloc[-1]) for c in everything)
    if start > end:
        raise RangeError(f"диапазоны шагов не пересекаются: [{start}, {end}]")

    timed = all(c.has_timing for c in everything)
    seconds = min(float(c.frame['seconds'].iloc[-1]) for c in everything) if timed else None

    summary = summarize(everything, reference)
    ref_max = reference.max_accuracy()
    ref_equal = reference.accuracy_at_step(end)
    summary['acc_at_equal_steps'] = [c.accuracy_at_step(end) for c in everything]
    summary['delta_max_val_acc'] = summary['max_val_acc'] - ref_max
    summary['delta_at_equal_steps'] = summary['acc_at_equal_steps'] - ref_equal
    summary['equal_steps'] = end
    if timed:
        summary['acc_at_equal_seconds'] = [c.accuracy_at_seconds(seconds) for c in everything]
        summary['equal_seconds'] = seconds
    return summary
