import logging
import time
from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np
import pandas as pd

from app.errors import ConfigError, DivergenceError, EmptyDataset
from app.params import settings
from data_io.batching import epoch_order
from introspection.model import IntrospectionModel, new_model
from introspection.samples import SampleSet
from network.engine import Batch, backward_from, forward
from network.params import InitRule
from optim.optimizers import make_state, optimizer_step
from optim.schedules import LrSchedule, lr_at

logger = logging.getLogger('introspection')


@dataclass(frozen=True)
class IntrospectionProtocol:
    """Протокол обучения: L1, Adam, ступенчатое снижение lr"""
    hidden: int = settings.INTROSPECTION_HIDDEN
    activation: str = 'relu'
    lr: float = 5e-4
    decay_interval: int = 8000
    decay_factor: float = settings.STEP_DECAY_FACTOR
    batch_size: int = 20
    steps: int = 30000
    seed: int = 0
    eval_every: int = 1000
    init: InitRule = field(default_factory=lambda: InitRule('xavier'))

    def __post_init__(self):
        if self.activation not in ('relu', 'identity'):
            raise ConfigError(f"неизвестная активация {self.activation!r}", 'protocol.activation')
        if self.batch_size < 1:
            raise ConfigError(f"batch_size={self.batch_size} < 1", 'protocol.batch_size')
        if self.steps < 0:
            raise ConfigError(f"steps={self.steps} < 0", 'protocol.steps')
        if self.eval_every < 1:
            raise ConfigError(f"eval_every={self.eval_every} < 1", 'protocol.eval_every')

    @property
    def schedule(self) -> LrSchedule:
        return LrSchedule(self.lr, 'step_decay', self.decay_interval, self.decay_factor)

    def to_dict(self):
        return asdict(self)


@dataclass
class TrainResult:
    model: IntrospectionModel
    curve: pd.DataFrame
    train_l1: float
    validation_l1: Optional[float]
    seconds: float


def l1_loss(pred: np.ndarray, target: np.ndarray):
    """Средняя |y - ŷ| и её (суб)градиент по ŷ"""
    diff = pred - target
    return float(np.mean(np.abs(diff))), (np.sign(diff) / diff.shape[0]).astype(pred.dtype)


def evaluate_l1(model: IntrospectionModel, samples: SampleSet) -> float:
    """Средняя L1 в масштабированном пространстве"""
    if not len(samples):
        raise EmptyDataset("нет примеров для оценки")
    return float(np.mean(np.abs(samples.y - model.forward_scaled(samples.x))))


def train_introspection(train: SampleSet, protocol: IntrospectionProtocol,
                        validation: Optional[SampleSet] = None) -> TrainResult:
    """
    Обучение на (x, y) в масштабированном пространстве.

    Returns:
        TrainResult: модель, кривая (step, lr, train_l1, validation_l1), итоговые L1
    """
    n = len(train)
    if n == 0:
        raise EmptyDataset("нет примеров для обучения сети интроспекции")
    model = new_model(protocol.activation, protocol.hidden, protocol.seed, protocol.init)
    params = model.params
    state = make_state('adam', len(params), dtype=params.vector.dtype)
    schedule = protocol.schedule

    x = train.x.astype(params.vector.dtype)
    y = train.y.astype(params.vector.dtype)
    rows = []
    window = []
    epoch, order, cursor = 0, epoch_order(n, [protocol.seed, 0]), 0
    started = time.perf_counter()

    for step in range(protocol.steps):
        if cursor >= n:
            epoch += 1
            order, cursor = epoch_order(n, [protocol.seed, epoch]), 0
        idx = order[cursor:cursor + protocol.batch_size]
        cursor += protocol.batch_size

        fwd = forward(model.spec, params, Batch(x[idx], y[idx]), mode='train')
        loss, dout = l1_loss(fwd.logits[:, 0], y[idx])
        if not np.isfinite(loss):
            raise DivergenceError(step, loss)
        grad = backward_from(model.spec, params, fwd, dout[:, None])
        lr = lr_at(schedule, step)
        optimizer_step(params, grad, lr, state)
        window.append(loss)

        done = step + 1
        if done % protocol.eval_every == 0 or done == protocol.steps:
            val = evaluate_l1(model, validation) if validation is not None and len(validation) else None
            rows.append({'step': done, 'lr': lr, 'train_l1': float(np.mean(window)), 'validation_l1': val})
            logger.info(f"Интроспекция: шаг {done}/{protocol.steps}, lr={lr:.2e}, "
                        f"L1 train={rows[-1]['train_l1']:.4f}"
                        + (f", validation={val:.4f}" if val is not None else ''))
            window = []

    seconds = time.perf_counter() - started
    train_l1 = evaluate_l1(model, train)
    validation_l1 = evaluate_l1(model, validation) if validation is not None and len(validation) else None
    curve = pd.DataFrame(rows, columns=['step', 'lr', 'train_l1', 'validation_l1'])
    logger.info(f"Интроспекция обучена за {seconds:.1f} с: L1 train={train_l1:.4f}"
                + (f", validation={validation_l1:.4f} (в исходных единицах "
                   f"{validation_l1 / model.scale:.6f})" if validation_l1 is not None else ''))
    return TrainResult(model, curve, train_l1, validation_l1, seconds)
