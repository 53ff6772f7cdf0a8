"""
Прогон эксперимента: обучение сети с записью истории весов, прыжками по плану,
кривой обучения и манифестом в каталоге результатов.
"""
import logging
import time
import traceback
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd
import portalocker

from analysis.curves import TrainingCurve, write_curve
from app.errors import ConfigError, DivergenceError
from app.params import settings
from data_io.batching import batch_stream
from data_io.dataset import Dataset
from data_io.idx_reader import load_mnist_dir
from data_io.synthetic import synth_dataset
from experiment.config import ExperimentConfig
from experiment.manifest import MANIFEST_FILE, Manifest, read_manifest
from history.snapshot_store import RunMeta, SnapshotStore
from history.steps import required_steps, validate_memory
from history.whst import save_store
from network.engine import accuracy, backward, forward
from network.params import Params, init_params
from optim.optimizers import OptimizerState, make_state, optimizer_step
from optim.schedules import lr_at
from predictors.base import build_predictor
from predictors.jump import JumpPlan, JumpResult, apply_jump

logger = logging.getLogger('experiment')

LOCK_FILE = '.lock'
CURVE_FILE = 'curve.csv'
HISTORY_FILE = 'history.whst'
JUMPS_FILE = 'jumps.csv'
VALIDATION_SEED_OFFSET = 7919


@dataclass
class RunResult:
    out_dir: Path
    curve: TrainingCurve
    params: Params
    store: Optional[SnapshotStore]
    jumps: List[JumpResult] = field(default_factory=list)
    status: str = 'complete'


@contextmanager
def output_lock(out_dir: Path):
    """Эксклюзивная блокировка каталога результатов на время стадии"""
    out_dir.mkdir(parents=True, exist_ok=True)
    lock = portalocker.Lock(str(out_dir / LOCK_FILE), mode='a', timeout=0, fail_when_locked=True)
    try:
        lock.acquire()
    except portalocker.exceptions.LockException:
        raise ConfigError(f"каталог {out_dir} занят другим процессом", 'out_dir')
    try:
        yield out_dir
    finally:
        lock.release()


def load_datasets(config: ExperimentConfig, data_dir=None) -> Tuple[Dataset, Dataset]:
    data = config.data
    if data.source == 'synthetic':
        train = synth_dataset(data.n_train, data.classes, config.seeds.data, data.image_shape)
        validation = synth_dataset(data.n_validation, data.classes,
                                   config.seeds.data + VALIDATION_SEED_OFFSET, data.image_shape, 'validation')
    else:
        data_dir = data_dir or data.data_dir
        if not data_dir:
            raise ConfigError("для источника idx нужен каталог данных (--data-dir)", 'data.data_dir')
        train, validation = load_mnist_dir(data_dir)
    if data.validation_limit is not None and data.validation_limit < len(validation):
        validation = Dataset(validation.images[:data.validation_limit],
                             validation.labels[:data.validation_limit], 'validation')
    return train, validation


def make_optimizer(config: ExperimentConfig, params: Params) -> OptimizerState:
    opt = config.optimizer
    return make_state(opt.kind, len(params), dtype=params.vector.dtype, momentum=opt.momentum,
                      beta1=opt.beta1, beta2=opt.beta2, eps=opt.eps)


def make_store(config: ExperimentConfig, spec_hash: str, param_count: int) -> Optional[SnapshotStore]:
    history = config.history
    if not history.enabled:
        return None
    jump_steps = config.jumps.steps if config.jumps is not None else ()
    steps = set(required_steps(jump_steps, history.build_range, history.k, history.stride, config.total_steps))
    steps.update(history.extra_steps)
    steps = sorted(steps)
    size = validate_memory(steps, param_count)
    logger.info(f"История: {len(steps)} обязательных снимков x {param_count} параметров = {size / 2**20:.1f} МиБ")
    meta = RunMeta(spec_hash, config.optimizer.kind, config.seeds.init,
                   {'k': history.k, 'build_range': list(history.build_range) if history.build_range else None,
                    'total_steps': config.total_steps})
    return SnapshotStore(param_count, meta, steps, history.stride)


def jump_t_min(config: ExperimentConfig) -> Optional[int]:
    """Начало диапазона t, на котором обучалась модель интроспекции (манифест рядом с моделью или раздел build)"""
    jumps = config.jumps
    if jumps is None or jumps.predictor not in ('introspection', 'linear-introspection'):
        return None
    if jumps.model_path is not None:
        model_dir = Path(jumps.model_path).parent
        if (model_dir / MANIFEST_FILE).exists():
            t_range = read_manifest(model_dir).get('t_range')
            if t_range:
                return int(t_range[0])
    if config.build is not None:
        return int(config.build.t_range[0])
    return None


def make_plan(config: ExperimentConfig) -> Optional[JumpPlan]:
    jumps = config.jumps
    if jumps is None or not jumps.steps:
        return None
    predictor = build_predictor(jumps.predictor, ratio=jumps.ratio, sigma=jumps.sigma,
                                model_path=jumps.model_path, seed=config.seeds.predictor)
    plan = JumpPlan(jumps.steps, predictor, jumps.include_biases, jumps.clamp_factor,
                    config.optimizer.reset_on_jump)
    t_min = jump_t_min(config)
    if t_min is not None:
        plan.check_history(t_min)
    elif jumps.predictor in ('introspection', 'linear-introspection'):
        logger.warning(f"Диапазон t модели интроспекции неизвестен, первый прыжок {plan.steps[0]} не проверен")
    return plan


def _write_artifacts(manifest: Manifest, out_dir: Path, curve: TrainingCurve, store: Optional[SnapshotStore],
                     jump_rows: List[JumpResult], deterministic: bool) -> None:
    manifest.add_artifact(write_curve(curve, out_dir / CURVE_FILE, deterministic), 'curve')
    if deterministic:
        manifest.add_artifact(out_dir / 'timing.csv', 'timing')
    if store is not None and 0 in store:
        manifest.add_artifact(save_store(store, out_dir / HISTORY_FILE), 'history')
    if jump_rows:
        path = out_dir / JUMPS_FILE
        pd.DataFrame([r.as_row() for r in jump_rows]).to_csv(path, index=False)
        manifest.add_artifact(path, 'jumps')


def run_experiment(config: ExperimentConfig, out_dir=None, data_dir=None,
                   deterministic: Optional[bool] = None, stage: str = 'train') -> RunResult:
    """
    Returns:
        RunResult; при расходимости артефакты сохраняются со статусом diverged
        и DivergenceError пробрасывается дальше
    """
    config.validate()
    deterministic = settings.DETERMINISTIC if deterministic is None else deterministic
    out_dir = Path(out_dir or config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    with output_lock(out_dir):
        return _run_locked(config, out_dir, data_dir, deterministic, stage)


def _run_locked(config: ExperimentConfig, out_dir: Path, data_dir, deterministic: bool, stage: str) -> RunResult:
    spec = config.network_spec()
    train, validation = load_datasets(config, data_dir)
    if tuple(train.image_shape) != spec.input_shape:
        raise ConfigError(f"данные {train.image_shape} не подходят ко входу сети {spec.input_shape}", 'network')

    params = init_params(spec, config.init, config.seeds.init)
    state = make_optimizer(config, params)
    store = make_store(config, spec.spec_hash(), len(params))
    plan = make_plan(config)
    workers = 1 if deterministic else (config.jumps.workers if config.jumps else 1)

    manifest = Manifest(out_dir, config, stage)
    manifest.update(deterministic=deterministic, param_count=len(params))
    manifest.save()
    logger.info(f"Прогон {config.name}: {len(params)} параметров, {config.total_steps} шагов, "
                f"{config.optimizer.kind}, прыжки {plan.steps if plan else '-'}")

    rows = []
    jump_rows: List[JumpResult] = []
    window: List[float] = []
    train_seconds = 0.0
    curve = TrainingCurve.from_rows(config.name, [], {'config_hash': config.config_hash()})

    try:
        if store is not None:
            store.record(0, params)
        stream = batch_stream(train, config.batch_size, config.seeds.data)
        for step in range(1, config.total_steps + 1):
            started = time.perf_counter()
            batch = next(stream)
            fwd = forward(spec, params, batch, mode='train', seed=[config.seeds.dropout, step])
            grad, loss = backward(spec, params, batch, fwd)
            if not np.isfinite(loss):
                raise DivergenceError(step, loss)
            optimizer_step(params, grad, lr_at(config.schedule, step - 1), state)
            window.append(loss)

            if store is not None and store.is_required(step):
                store.record(step, params)
            if plan is not None and plan.is_jump(step):
                jump_rows.append(apply_jump(params, store, step, plan.predictor, plan.include_biases,
                                            plan.clamp_factor, workers))
                if plan.reset_optimizer:
                    state.reset()
            train_seconds += time.perf_counter() - started

            if step % config.eval_every == 0 or step == config.total_steps:
                acc = accuracy(spec, params, validation.images, validation.labels)
                rows.append({'step': step, 'loss': float(np.mean(window)), 'val_acc': acc,
                             'seconds': train_seconds})
                window = []
                logger.info(f"{config.name}: шаг {step}/{config.total_steps}, "
                            f"loss={rows[-1]['loss']:.4f}, val_acc={acc:.4f}")
    except DivergenceError as e:
        logger.error(traceback.format_exc())
        curve = TrainingCurve.from_rows(config.name, rows, curve.meta)
        _write_artifacts(manifest, out_dir, curve, store, jump_rows, deterministic)
        manifest.finish('diverged', str(e))
        raise
    except Exception as e:
        logger.error(traceback.format_exc())
        manifest.finish('failed', str(e))
        raise

    curve = TrainingCurve.from_rows(config.name, rows, curve.meta)
    _write_artifacts(manifest, out_dir, curve, store, jump_rows, deterministic)
    if store is not None:
        missing = store.missing_required()
        if missing:
            logger.warning(f"Нет снимков для обязательных шагов {missing[:10]}")
    manifest.update(final_val_acc=rows[-1]['val_acc'] if rows else None,
                    max_val_acc=max(r['val_acc'] for r in rows) if rows else None,
                    clamped_total=sum(r.clamped for r in jump_rows))
    manifest.finish('complete')
    return RunResult(out_dir, curve, params, store, jump_rows)
