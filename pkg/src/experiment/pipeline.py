"""
Стадии конвейера помимо обучения сети: построение набора интроспекции,
обучение сети интроспекции, анализ истории и сравнение прогонов.
Между стадиями передаются только пути к файлам.
"""
import dataclasses
import logging
from pathlib import Path
from typing import List, Optional, Sequence

import pandas as pd

from analysis.curves import compare_runs, read_curve
from analysis.histograms import DEFAULT_BINS, HistogramSpec, export_analysis, histogram_for, \
    sample_trajectories, trajectories_frame
from analysis.visual import EvolutionVisualizer
from app.errors import ConfigError
from experiment.config import ExperimentConfig
from experiment.manifest import Manifest
from experiment.runner import CURVE_FILE, JUMPS_FILE, output_lock
from history.whst import export_weight_csv, load_store
from introspection.model import save_model
from introspection.samples import BuildConfig, build_dataset, load_samples_csv, save_samples_csv
from introspection.training import IntrospectionProtocol, train_introspection

logger = logging.getLogger('experiment')

SAMPLES_FILE = 'samples.csv'
MODEL_FILE = 'model.intr'
INTROSPECTION_CURVE_FILE = 'introspection_curve.csv'


def build_dataset_stage(config: ExperimentConfig, history_path, out_dir,
                        seed: Optional[int] = None) -> Path:
    if config.build is None:
        raise ConfigError("не задан раздел build", 'build')
    build = config.build if seed is None else dataclasses.replace(config.build, seed=seed)
    out_dir = Path(out_dir)
    with output_lock(out_dir):
        store = load_store(history_path)
        run_length = int(store.meta.extra.get('total_steps', store.steps[-1]))
        build.check_run_length(run_length)
        train, validation = build_dataset(store, build)

        manifest = Manifest(out_dir, config, 'build-dataset')
        path = save_samples_csv(train, validation, out_dir / SAMPLES_FILE)
        manifest.add_artifact(path, 'samples')
        manifest.update(history=str(history_path), k=build.k, t_range=list(build.t_range),
                        train_samples=len(train), validation_samples=len(validation))
        manifest.finish('complete')
    return path


def train_introspection_stage(config: ExperimentConfig, samples_path, out_dir,
                              seed: Optional[int] = None) -> Path:
    protocol = config.protocol or IntrospectionProtocol()
    if seed is not None:
        protocol = dataclasses.replace(protocol, seed=seed)
    out_dir = Path(out_dir)
    with output_lock(out_dir):
        train, validation = load_samples_csv(samples_path)
        manifest = Manifest(out_dir, config, 'train-introspection')
        manifest.save()
        result = train_introspection(train, protocol, validation)

        path = save_model(result.model, out_dir / MODEL_FILE)
        manifest.add_artifact(path, 'model')
        curve_path = out_dir / INTROSPECTION_CURVE_FILE
        result.curve.to_csv(curve_path, index=False)
        manifest.add_artifact(curve_path, 'curve')
        k_values = sorted(set(float(k) for k in train.k))
        t_range = [int(train.t.min()), int(train.t.max())]
        manifest.update(
            samples=str(samples_path), activation=protocol.activation, k=k_values, t_range=t_range,
            train_l1=result.train_l1, validation_l1=result.validation_l1,
            validation_l1_raw=None if result.validation_l1 is None else result.validation_l1 / result.model.scale,
            seconds=result.seconds,
        )
        manifest.finish('complete')
    return path


def analyze_stage(history_path, out_dir, bins: int = DEFAULT_BINS, per_bin: int = 3,
                  seed: int = 0, plot: bool = False) -> List[Path]:
    out_dir = Path(out_dir)
    store = load_store(history_path)
    written = export_analysis(store, out_dir, bins=bins, per_bin=per_bin, seed=seed)
    if plot:
        visual = EvolutionVisualizer(out_dir)
        for metric in ('final-minus-initial', 'sqrt-second-moment'):
            histogram = histogram_for(store, HistogramSpec(metric, bins, log_frequency=True))
            written.append(visual.plot_histogram(histogram))
            if metric == 'final-minus-initial':
                frame = trajectories_frame(sample_trajectories(store, histogram, per_bin, seed))
                written.append(visual.plot_trajectories(frame))
        run_dir = Path(history_path).parent
        if (run_dir / CURVE_FILE).exists():
            jumps = []
            if (run_dir / JUMPS_FILE).exists():
                jumps = pd.read_csv(run_dir / JUMPS_FILE)['step'].tolist()
            written.append(visual.plot_curves([read_curve(run_dir / CURVE_FILE)], jumps))
    return written


def compare_stage(curve_paths: Sequence, reference_path, out_dir=None) -> pd.DataFrame:
    return compare_runs(curve_paths, reference_path, out_dir)


def export_history_stage(history_path, flat_index: int, out_path) -> Path:
    store = load_store(history_path)
    return export_weight_csv(store, flat_index, out_path)
