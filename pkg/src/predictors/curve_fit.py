"""
Экстраполяция истории веса полиномом (МНК через нормальные уравнения, float64).

Шаги истории одинаковы для всех скаляров сети, поэтому прогноз линеен
по значениям: w(target) = g . v, где g = A (A^T A)^-1 e(target).
Вектор g считается один раз на прыжок.
"""
from typing import Sequence, Tuple

import numpy as np
from scipy import linalg

from app.errors import FitError

MIN_DISTINCT = {1: 2, 2: 4}


def _design(steps: np.ndarray, degree: int) -> np.ndarray:
    return np.vander(steps, degree + 1, increasing=True)


def extrapolation_weights(steps: Sequence[float], target_step: float, degree: int) -> np.ndarray:
    """
    Коэффициенты g такие, что прогноз = g . values.

    Шаги нормируются на max|s|: полиномиальное семейство то же, а матрица
    нормальных уравнений обусловлена лучше.
    """
    steps = np.asarray(steps, dtype=np.float64)
    if degree not in MIN_DISTINCT:
        raise ValueError(f"поддерживаются степени 1 и 2, получено {degree}")
    distinct = np.unique(steps).size
    if distinct < MIN_DISTINCT[degree]:
        raise FitError(f"степень {degree}: нужно {MIN_DISTINCT[degree]} различных шагов, есть {distinct} ({steps.tolist()})")

    ref = float(np.max(np.abs(steps))) or 1.0
    design = _design(steps / ref, degree)
    normal = design.T @ design
    evaluation = _design(np.array([target_step / ref]), degree)[0]
    try:
        z = linalg.solve(normal, evaluation, assume_a='sym')
    except linalg.LinAlgError as e:
        raise FitError(f"вырожденная система нормальных уравнений: {e}")
    return design @ z


def _fit_predict(history4: Sequence[Tuple[float, float]], target_step: float, degree: int) -> float:
    points = np.asarray(history4, dtype=np.float64)
    if points.shape != (4, 2):
        raise ValueError(f"ожидается 4 пары (step, value), получено {points.shape}")
    steps, values = points[:, 0], points[:, 1]
    if target_step <= steps.max():
        raise ValueError(f"целевой шаг {target_step} не позже последнего шага истории {steps.max()}")
    return float(extrapolation_weights(steps, target_step, degree) @ values)


def quadratic_fit_predict(history4: Sequence[Tuple[float, float]], target_step: float) -> float:
    """a + b*s + c*s^2 по четырём точкам, значение в target_step"""
    return _fit_predict(history4, target_step, 2)


def linear_fit_predict(history4: Sequence[Tuple[float, float]], target_step: float) -> float:
    return _fit_predict(history4, target_step, 1)
