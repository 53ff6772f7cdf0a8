from pathlib import Path
from typing import List, Optional, Sequence

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt
import pandas as pd
import seaborn as sns

from analysis.curves import TrainingCurve
from analysis.histograms import Histogram

METRIC_TITLES = {
    'final-minus-initial': 'w(T) - w(0)',
    'sqrt-second-moment': 'sqrt(2-й момент относительно w(0))',
}


class EvolutionVisualizer:
    """Графики по результатам анализа; CSV остаются основным результатом"""

    def __init__(self, out_dir):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        sns.set_theme(style='whitegrid')

    def _save(self, fig, name: str) -> Path:
        path = self.out_dir / name
        fig.tight_layout()
        fig.savefig(path, dpi=120)
        plt.close(fig)
        return path

    def plot_histogram(self, histogram: Histogram, name: Optional[str] = None) -> Path:
        """Логарифм частоты по корзинам"""
        fig, ax = plt.subplots(figsize=(10, 5))
        centers = (histogram.edges[:-1] + histogram.edges[1:]) / 2
        width = histogram.edges[1] - histogram.edges[0]
        ax.bar(centers, histogram.log_counts, width=width, color='#3498db', edgecolor='white', linewidth=0.3)
        ax.set_xlabel(METRIC_TITLES[histogram.metric])
        ax.set_ylabel('log10(частота + 1)')
        ax.set_title(f"Распределение {METRIC_TITLES[histogram.metric]}")
        return self._save(fig, name or f'histogram_{histogram.metric}.png')

    def plot_trajectories(self, frame: pd.DataFrame, name: str = 'trajectories.png') -> Path:
        """frame в длинном формате trajectories_frame"""
        fig, ax = plt.subplots(figsize=(10, 5))
        if not frame.empty:
            sns.lineplot(data=frame, x='step', y='deviation', hue='bin', units='flat_index',
                         estimator=None, palette='viridis', linewidth=0.8, ax=ax)
        ax.set_xlabel('шаг')
        ax.set_ylabel('w(s) - w(0)')
        ax.set_title('Траектории весов, выбранных из корзин гистограммы')
        return self._save(fig, name)

    def plot_curves(self, curves: Sequence[TrainingCurve], jumps: Sequence[int] = (),
                    name: str = 'accuracy.png') -> Path:
        fig, ax = plt.subplots(figsize=(10, 5))
        frames: List[pd.DataFrame] = []
        for curve in curves:
            part = curve.frame[['step', 'val_acc']].copy()
            part['run'] = curve.name
            frames.append(part)
        if frames:
            sns.lineplot(data=pd.concat(frames, ignore_index=True), x='step', y='val_acc', hue='run', ax=ax)
        for step in jumps:
            ax.axvline(step, color='#e67e22', linestyle='--', linewidth=0.8)
        ax.set_xlabel('шаг')
        ax.set_ylabel('точность на валидации')
        ax.set_title('Точность на валидации' + (' (пунктир: прыжки)' if jumps else ''))
        return self._save(fig, name)
