from dataclasses import dataclass

from app.errors import ConfigError
from app.params import settings

RULES = ('constant', 'step_decay', 'inv')


@dataclass(frozen=True)
class LrSchedule:
    """
    Расписание скорости обучения по номеру шага.

    constant:   base_lr
    step_decay: base_lr * factor ** floor(step / interval)
    inv:        base_lr * (1 + gamma*step) ** (-power)
    """
    base_lr: float
    rule: str = 'constant'
    interval: int = 8000
    factor: float = settings.STEP_DECAY_FACTOR
    gamma: float = 1e-4
    power: float = 0.75

    def __post_init__(self):
        if self.rule not in RULES:
            raise ConfigError(f"неизвестное правило {self.rule!r}", 'schedule.rule')
        if not self.base_lr > 0:
            raise ConfigError(f"base_lr={self.base_lr} должен быть > 0", 'schedule.base_lr')
        if not 0.0 < self.factor <= 1.0:
            raise ConfigError(f"factor={self.factor} вне (0, 1]", 'schedule.factor')
        if self.rule == 'step_decay' and self.interval <= 0:
            raise ConfigError(f"interval={self.interval} должен быть > 0", 'schedule.interval')


def lr_at(schedule: LrSchedule, step: int) -> float:
    if step < 0:
        raise ValueError(f"шаг {step} < 0")
    if schedule.rule == 'constant':
        return schedule.base_lr
    if schedule.rule == 'step_decay':
        return schedule.base_lr * schedule.factor ** (step // schedule.interval)
    return schedule.base_lr * (1.0 + schedule.gamma * step) ** (-schedule.power)
