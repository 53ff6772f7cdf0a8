from typing import Union

import numpy as np

from app.errors import ConfigError

Value = Union[float, np.ndarray]


def noise_perturb(value: Value, sigma: float, rng: np.random.Generator) -> Value:
    """value + N(0, sigma^2) поэлементно; sigma = 0 возвращает value без обращения к rng"""
    if sigma < 0:
        raise ConfigError(f"sigma={sigma} < 0", 'jumps.sigma')
    if sigma == 0:
        return value
    if np.ndim(value) == 0:
        return float(value) + float(rng.normal(0.0, sigma))
    return np.asarray(value, dtype=np.float64) + rng.normal(0.0, sigma, size=np.shape(value))


def noise_vector(size: int, sigma: float, seed: int, step: int) -> np.ndarray:
    """
    Шум для всех скаляров сети на прыжке step.

    Элемент i зависит только от (seed, step, i), поэтому порядок и разбиение
    на части при применении прыжка не влияют на результат.
    """
    return noise_perturb(np.zeros(size), sigma, np.random.default_rng([seed, step]))
