import os
from pathlib import Path

BASE_DIR = Path(__file__).parent.parent.parent


def _env_float(name: str, default: float) -> float:
    value = os.getenv(name)
    if value is None or value.strip() == '':
        return default
    return float(value)


def _env_int(name: str, default: int) -> int:
    value = os.getenv(name)
    if value is None or value.strip() == '':
        return default
    return int(value)


# В настройках
class Settings:

    # Веса умножаются на этот множитель перед подачей в сеть интроспекции
    WEIGHT_SCALE = 1000.0
    DEFAULT_JUMP_RATIO = 2.0
    STRATA_FRACTIONS = (0.5, 0.25, 0.25)
    INTROSPECTION_HIDDEN = 40

    # Прогноз ограничивается CLAMP_FACTOR * max|w| по всей истории
    CLAMP_FACTOR = 10.0
    HISTORY_MEMORY_LIMIT = 1 << 30
    NOISE_SIGMAS = (1e-3, 1e-2)
    STEP_DECAY_FACTOR = 0.5

    def __init__(self):
        self.reload()

    def reload(self):
        """Перечитывает переопределения из окружения (.env подгружается в main.py)"""
        self.WEIGHT_SCALE = _env_float('ACCEL_WEIGHT_SCALE', Settings.WEIGHT_SCALE)
        self.DEFAULT_JUMP_RATIO = _env_float('ACCEL_JUMP_RATIO', Settings.DEFAULT_JUMP_RATIO)
        self.CLAMP_FACTOR = _env_float('ACCEL_CLAMP_FACTOR', Settings.CLAMP_FACTOR)
        self.HISTORY_MEMORY_LIMIT = _env_int('ACCEL_HISTORY_MEMORY_LIMIT', Settings.HISTORY_MEMORY_LIMIT)
        self.STEP_DECAY_FACTOR = _env_float('ACCEL_STEP_DECAY_FACTOR', Settings.STEP_DECAY_FACTOR)
        self.LOG_FILE = os.getenv('ACCEL_LOG_FILE', str(BASE_DIR / 'accel_local.log'))
        self.LOG_LEVEL = os.getenv('ACCEL_LOG_LEVEL', 'INFO')
        self.LOG_HTTP_URL = os.getenv('LOG_HTTP_URL', '')
        self.DETERMINISTIC = os.getenv('ACCEL_DETERMINISTIC', '0') == '1'
        self.JUMP_WORKERS = _env_int('ACCEL_JUMP_WORKERS', 1)


settings = Settings()
