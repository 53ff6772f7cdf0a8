from fractions import Fraction

import numpy as np
import pytest

from app.errors import ConfigError, FitError, MissingSnapshot, NumericError
from history.snapshot_store import SnapshotStore
from history.steps import input_steps
from introspection.model import new_model, pass_through_model
from network.params import InitRule, init_params
from network.spec import Dense, NetworkSpec, ReLU
from predictors.base import (CurveFitPredictor, IntrospectionPredictor, NoisePredictor, Predictor,
                             build_predictor)
from predictors.curve_fit import extrapolation_weights, linear_fit_predict, quadratic_fit_predict
from predictors.jump import JumpPlan, apply_jump
from predictors.noise import noise_perturb, noise_vector


def rational_fit(points, target, degree):
    """МНК в рациональной арифметике: нормальные уравнения + метод Гаусса"""
    points = [(Fraction(s), Fraction(v)) for s, v in points]
    target = Fraction(target)
    size = degree + 1
    matrix = [[sum(s ** (i + j) for s, _ in points) for j in range(size)] for i in range(size)]
    rhs = [sum(v * s ** i for s, v in points) for i in range(size)]
    for col in range(size):
        pivot = next(r for r in range(col, size) if matrix[r][col] != 0)
        matrix[col], matrix[pivot] = matrix[pivot], matrix[col]
        rhs[col], rhs[pivot] = rhs[pivot], rhs[col]
        for r in range(size):
            if r != col and matrix[r][col] != 0:
                factor = matrix[r][col] / matrix[col][col]
                matrix[r] = [a - factor * b for a, b in zip(matrix[r], matrix[col])]
                rhs[r] -= factor * rhs[col]
    coeffs = [rhs[i] / matrix[i][i] for i in range(size)]
    return sum(c * target ** i for i, c in enumerate(coeffs))


class TestQuadraticFit:

    def test_exact_quadratic(self):
        points = [(0, 0.0), (4, 0.16), (7, 0.49), (10, 1.0)]
        assert quadratic_fit_predict(points, 12.5) == pytest.approx(1.5625, abs=1e-9)

    def test_exact_linear(self):
        points = [(0, 0.0), (4, 4.0), (7, 7.0), (10, 10.0)]
        assert quadratic_fit_predict(points, 12.5) == pytest.approx(12.5, abs=1e-9)

    def test_matches_rational_oracle(self):
        points = [(0, 0), (4, 1), (7, 1), (10, 2)]
        expected = float(rational_fit(points, Fraction(25, 2), 2))
        assert quadratic_fit_predict(points, 12.5) == pytest.approx(expected, abs=1e-9)

    def test_duplicate_steps(self):
        with pytest.raises(FitError):
            quadratic_fit_predict([(0, 0.0), (0, 1.0), (7, 1.0), (10, 2.0)], 12.5)

    def test_target_not_after_history(self):
        with pytest.raises(ValueError):
            quadratic_fit_predict([(0, 0.0), (4, 1.0), (7, 1.0), (10, 2.0)], 10)

    @pytest.mark.parametrize('seed', range(100))
    def test_random_instances(self, seed):
        rng = np.random.default_rng(seed)
        t = int(rng.integers(10, 20000))
        steps = input_steps(t)
        values = rng.normal(0, 0.05, size=4)
        points = list(zip(steps, values))
        for ratio, degree, fit in ((Fraction(5, 4), 2, quadratic_fit_predict), (Fraction(11, 10), 1, linear_fit_predict)):
            target = ratio * t
            expected = float(rational_fit(points, target, degree))
            assert fit(points, float(target)) == pytest.approx(expected, abs=1e-9)

    @pytest.mark.parametrize('seed', range(20))
    def test_polynomial_exactness(self, seed):
        rng = np.random.default_rng(seed)
        t = int(rng.integers(10, 20000))
        a, b, c = rng.normal(size=3) * np.array([0.1, 1e-4, 1e-8])
        steps = np.array(input_steps(t), dtype=np.float64)
        quadratic = list(zip(steps, a + b * steps + c * steps ** 2))
        linear = list(zip(steps, a + b * steps))
        for target in np.linspace(1.01 * t, 1.4 * t, 5):
            assert quadratic_fit_predict(quadratic, target) == pytest.approx(a + b * target + c * target ** 2, abs=1e-9)
        for target in np.linspace(1.01 * t, 1.1 * t, 5):
            assert linear_fit_predict(linear, target) == pytest.approx(a + b * target, abs=1e-9)


class TestLinearFit:

    @pytest.mark.parametrize('target', [11, 50, 1e4])
    def test_constant(self, target):
        assert linear_fit_predict([(0, 1.0), (4, 1.0), (7, 1.0), (10, 1.0)], target) == pytest.approx(1.0, abs=1e-9)

    def test_identity_line(self):
        assert linear_fit_predict([(0, 0.0), (4, 4.0), (7, 7.0), (10, 10.0)], 11) == pytest.approx(11.0, abs=1e-9)

    def test_matches_rational_oracle(self):
        points = [(0, 0), (4, 1), (7, 1), (10, 2)]
        expected = float(rational_fit(points, 11, 1))
        assert linear_fit_predict(points, 11) == pytest.approx(expected, abs=1e-9)

    def test_all_steps_equal(self):
        with pytest.raises(FitError):
            extrapolation_weights([5, 5, 5, 5], 11, 1)

    def test_weights_sum_to_one(self):
        # константа воспроизводится точно, значит сумма коэффициентов равна 1
        for degree in (1, 2):
            assert extrapolation_weights(input_steps(1000), 1250, degree).sum() == pytest.approx(1.0, abs=1e-12)


class TestNoise:

    def test_zero_sigma(self):
        assert noise_perturb(0.25, 0.0, np.random.default_rng(0)) == 0.25
        np.testing.assert_array_equal(noise_vector(5, 0.0, 1, 10), np.zeros(5))

    def test_mean(self):
        eps = noise_vector(100_000, 1e-2, 0, 1)
        assert abs(eps.mean()) < 0.02 * 1e-2
        assert eps.std() == pytest.approx(1e-2, rel=0.02)

    def test_deterministic(self):
        np.testing.assert_array_equal(noise_vector(100, 1.0, 3, 6000), noise_vector(100, 1.0, 3, 6000))
        assert noise_vector(100, 1.0, 3, 6000)[17] != noise_vector(100, 1.0, 3, 8000)[17]

    def test_perturb_arrays(self):
        base = np.array([1.0, -2.0, 0.5])
        perturbed = noise_perturb(base, 1e-3, np.random.default_rng([0, 1]))
        assert perturbed.shape == base.shape
        np.testing.assert_allclose(perturbed - base, noise_vector(3, 1e-3, 0, 1), rtol=0, atol=1e-12)

    def test_negative_sigma(self):
        with pytest.raises(ConfigError):
            noise_vector(3, -1.0, 0, 0)


class TestBuildPredictor:

    def test_kinds(self):
        assert isinstance(build_predictor('quadratic-fit', ratio=1.25), CurveFitPredictor)
        assert build_predictor('linear-fit', ratio=1.1).degree == 1
        assert isinstance(build_predictor('gaussian-noise', sigma=1e-3), NoisePredictor)
        assert build_predictor('gaussian-noise').sigma == 1e-3
        assert isinstance(build_predictor('introspection', model=new_model()), IntrospectionPredictor)
        assert build_predictor('linear-introspection', model=new_model('identity')).name == 'linear-introspection'

    def test_model_from_file(self, tmp_path):
        from introspection.model import save_model
        path = save_model(new_model(), tmp_path / 'model.intr')
        assert build_predictor('introspection', model_path=path).model.hidden == 40

    @pytest.mark.parametrize('kwargs', [
        {'kind': 'cubic-fit'},
        {'kind': 'quadratic-fit'},
        {'kind': 'linear-fit', 'ratio': 1.0},
        {'kind': 'introspection'},
        {'kind': 'gaussian-noise', 'sigma': -1.0},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            build_predictor(**kwargs)

    def test_activation_mismatch(self):
        with pytest.raises(ConfigError):
            build_predictor('introspection', model=new_model('identity'))


class TestJumpPlan:

    def test_strictly_increasing(self):
        with pytest.raises(ConfigError) as e:
            JumpPlan((3000, 3000), NoisePredictor(0.0))
        assert e.value.field == 'jumps.steps[1]'

    def test_history_start(self):
        plan = JumpPlan((500, 900), NoisePredictor(0.0))
        plan.check_history(500)
        with pytest.raises(ConfigError):
            plan.check_history(600)
        assert plan.is_jump(900) and not plan.is_jump(901)


class _Constant(Predictor):
    name = 'constant'

    def __init__(self, value):
        self.value = value

    def forecast(self, histories, indices):
        return np.full(histories.shape[0], self.value)


def _two_scalar_setup(t=10):
    """Сеть из двух скаляров; вес 0 идёт по (s/10)^2, вес 1 по s"""
    spec = NetworkSpec((Dense(1, 1),), (1,))
    params = init_params(spec, InitRule('constant', value=0.0), 0)
    store = SnapshotStore(2)
    for s in input_steps(t)[1:]:
        store.record(s, np.array([(s / 10) ** 2, s], dtype=np.float32))
    params.vector[...] = [(t / 10) ** 2, t]
    return params, store


def _network_setup(size_hidden=30, t=100, seed=0):
    spec = NetworkSpec((Dense(6, size_hidden), ReLU(), Dense(size_hidden, 3)), (6,))
    params = init_params(spec, InitRule('normal', std=0.1), seed)
    store = SnapshotStore(len(params))
    rng = np.random.default_rng(seed)
    for s in sorted(input_steps(t)[1:]):
        store.record(s, params.vector + rng.normal(0, 0.01, len(params)).astype(np.float32))
    return params, store


class TestApplyJump:

    def test_zero_noise_keeps_params(self):
        params, store = _network_setup()
        before = params.vector.copy()
        result = apply_jump(params, store, 100, NoisePredictor(0.0))
        np.testing.assert_array_equal(params.vector, before)
        assert result.updated == len(params) and result.max_abs_delta == 0.0
        assert params.version == 1

    @pytest.mark.parametrize('activation', ['relu', 'identity'])
    def test_pass_through_keeps_params(self, activation):
        params, store = _network_setup()
        before = params.vector.copy()
        apply_jump(params, store, 100, IntrospectionPredictor(pass_through_model(activation)))
        np.testing.assert_array_equal(params.vector, before)

    def test_quadratic_extrapolation_per_scalar(self):
        params, store = _two_scalar_setup()
        result = apply_jump(params, store, 10, CurveFitPredictor(1.25, 2))
        assert params.vector[0] == pytest.approx(1.5625, rel=1e-6)
        assert params.vector[1] == pytest.approx(12.5, rel=1e-6)
        assert result.clamped == 0

    def test_records_live_step(self):
        params, store = _network_setup()
        before = params.vector.copy()
        apply_jump(params, store, 100, NoisePredictor(1e-3, seed=1))
        np.testing.assert_array_equal(store.lookup(100), before)
        assert not np.array_equal(params.vector, before)

    def test_parallel_matches_sequential(self):
        a, store_a = _network_setup()
        b, store_b = _network_setup()
        predictor = CurveFitPredictor(1.3, 2)
        apply_jump(a, store_a, 100, predictor, workers=1)
        apply_jump(b, store_b, 100, predictor, workers=4, chunk_size=7)
        assert a.vector.tobytes() == b.vector.tobytes()

    def test_noise_chunking_independent(self):
        a, store_a = _network_setup()
        b, store_b = _network_setup()
        apply_jump(a, store_a, 100, NoisePredictor(1e-2, seed=5))
        apply_jump(b, store_b, 100, NoisePredictor(1e-2, seed=5), workers=3, chunk_size=11)
        assert a.vector.tobytes() == b.vector.tobytes()

    def test_exclude_biases(self):
        params, store = _network_setup()
        bias = params.tensor(0, 'bias').copy()
        result = apply_jump(params, store, 100, _Constant(0.5), include_biases=False)
        np.testing.assert_array_equal(params.tensor(0, 'bias'), bias)
        assert np.all(params.tensor(0, 'weight') == np.float32(0.5))
        assert result.updated == 6 * 30 + 30 * 3

    def test_clamp(self):
        params, store = _network_setup()
        cap = 10.0 * max(store.max_abs, float(np.abs(params.vector).max()))
        result = apply_jump(params, store, 100, _Constant(1e6))
        assert result.clamped == len(params)
        np.testing.assert_allclose(params.vector, cap, rtol=1e-6)

    def test_non_finite_forecast(self):
        params, store = _network_setup()
        before = params.vector.copy()
        with pytest.raises(NumericError) as e:
            apply_jump(params, store, 100, _Constant(np.nan))
        assert e.value.index == 0
        np.testing.assert_array_equal(params.vector, before)

    def test_missing_snapshot(self):
        params, _ = _network_setup()
        store = SnapshotStore(len(params))
        store.record(0, params)
        with pytest.raises(MissingSnapshot):
            apply_jump(params, store, 100, NoisePredictor(0.0))
