"""
Исключения инструментария.

Каждое исключение наследует AccelError и ближайший встроенный тип,
чтобы обычные обработчики (except ValueError) продолжали работать.
"""


class AccelError(Exception):
    """Базовое исключение"""


class SpecError(AccelError, ValueError):
    """Несовместимое описание сети"""


class ShapeError(AccelError, ValueError):
    """Несовпадение размерностей"""


class StateError(AccelError, RuntimeError):
    """Устаревшее или чужое состояние прямого прохода"""


class FormatError(AccelError, ValueError):
    """Повреждённый или чужой файл (IDX, WHST, INTR, CSV)"""


class EmptyDataset(AccelError, ValueError):
    """Пустой набор данных"""


class RangeError(AccelError, ValueError):
    """Шаг или диапазон вне допустимых границ"""


class DuplicateStep(AccelError, ValueError):
    """Снимок для шага уже записан"""


class MissingSnapshot(AccelError, LookupError):
    """Нет точного снимка для запрошенного шага"""

    def __init__(self, step: int):
        super().__init__(f"нет снимка для шага {step}")
        self.step = step


class FitError(AccelError, ArithmeticError):
    """Вырожденная система нормальных уравнений"""


class NumericError(AccelError, ArithmeticError):
    """Нечисловое значение (NaN/inf) во входе или прогнозе"""

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message if index is None else f"{message} (индекс {index})")
        self.index = index


class ConfigError(AccelError, ValueError):
    """Ошибка конфигурации с путём к полю"""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field


class DivergenceError(AccelError, ArithmeticError):
    """Функция потерь стала нечисловой во время обучения"""

    def __init__(self, step: int, loss: float):
        super().__init__(f"расходимость на шаге {step}: loss={loss}")
        self.step = step
        self.loss = loss
