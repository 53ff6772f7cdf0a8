"""
Единый интерфейс прогноза весов на точке прыжка.

histories: матрица (n, 4) в исходных единицах, столбцы [w(t), w(0.7t), w(0.4t), w(0)].
"""
import logging
from typing import Optional

import numpy as np

from app.errors import ConfigError
from app.params import settings
from history.steps import input_steps
from introspection.model import IntrospectionModel, load_model
from predictors.curve_fit import extrapolation_weights
from predictors.noise import noise_vector

logger = logging.getLogger('predictors')

KINDS = ('introspection', 'linear-introspection', 'quadratic-fit', 'linear-fit', 'gaussian-noise')


class Predictor:
    name = 'base'

    def prepare(self, t: int, size: int) -> None:
        """Вызывается один раз перед прогнозом всех скаляров на шаге t"""

    def forecast(self, histories: np.ndarray, indices: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def describe(self) -> str:
        return self.name


class IntrospectionPredictor(Predictor):

    def __init__(self, model: IntrospectionModel):
        self.model = model
        self.name = 'introspection' if model.activation == 'relu' else 'linear-introspection'

    def forecast(self, histories: np.ndarray, indices: np.ndarray) -> np.ndarray:
        return self.model.predict_many(histories)


class CurveFitPredictor(Predictor):
    """Полином степени degree через точки истории, значение в ratio * t"""

    def __init__(self, ratio: float, degree: int):
        if not ratio > 1.0:
            raise ConfigError(f"ratio={ratio} должен быть > 1", 'jumps.ratio')
        self.ratio = ratio
        self.degree = degree
        self.name = 'quadratic-fit' if degree == 2 else 'linear-fit'
        self._weights: Optional[np.ndarray] = None

    def prepare(self, t: int, size: int) -> None:
        self._weights = extrapolation_weights(input_steps(t), self.ratio * t, self.degree)

    def forecast(self, histories: np.ndarray, indices: np.ndarray) -> np.ndarray:
        if self._weights is None:
            raise RuntimeError("prepare() не вызван")
        # поэлементно, чтобы результат не зависел от разбиения на части
        out = np.zeros(histories.shape[0])
        for j, g in enumerate(self._weights):
            out += g * histories[:, j]
        return out

    def describe(self) -> str:
        return f"{self.name}(r={self.ratio})"


class NoisePredictor(Predictor):
    """w(t) + N(0, sigma^2)"""
    name = 'gaussian-noise'

    def __init__(self, sigma: float, seed: int = 0):
        if sigma < 0:
            raise ConfigError(f"sigma={sigma} < 0", 'jumps.sigma')
        self.sigma = sigma
        self.seed = seed
        self._noise: Optional[np.ndarray] = None

    def prepare(self, t: int, size: int) -> None:
        self._noise = noise_vector(size, self.sigma, self.seed, t)

    def forecast(self, histories: np.ndarray, indices: np.ndarray) -> np.ndarray:
        if self._noise is None:
            raise RuntimeError("prepare() не вызван")
        return histories[:, 0] + self._noise[indices]

    def describe(self) -> str:
        return f"{self.name}(sigma={self.sigma})"


def build_predictor(kind: str, ratio: Optional[float] = None, sigma: Optional[float] = None,
                    model_path=None, model: Optional[IntrospectionModel] = None,
                    seed: int = 0) -> Predictor:
    if kind not in KINDS:
        raise ConfigError(f"неизвестный предиктор {kind!r}, допустимо {KINDS}", 'jumps.predictor')
    if kind in ('introspection', 'linear-introspection'):
        if model is None:
            if model_path is None:
                raise ConfigError("нужен путь к модели интроспекции", 'jumps.model_path')
            model = load_model(model_path)
        expected = 'relu' if kind == 'introspection' else 'identity'
        if model.activation != expected:
            raise ConfigError(f"{kind} требует модель с активацией {expected}, "
                              f"загружена {model.activation}", 'jumps.model_path')
        return IntrospectionPredictor(model)
    if kind in ('quadratic-fit', 'linear-fit'):
        if ratio is None:
            raise ConfigError(f"{kind} требует ratio", 'jumps.ratio')
        return CurveFitPredictor(ratio, 2 if kind == 'quadratic-fit' else 1)
    return NoisePredictor(settings.NOISE_SIGMAS[0] if sigma is None else sigma, seed)
