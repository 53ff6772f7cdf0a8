"""
Готовые конфигурации экспериментов (словари в формате ExperimentConfig.to_dict).
"""
import copy
from typing import Any, Callable, Dict

from experiment.config import SCHEMA_VERSION, ExperimentConfig

CIFAR1_SETS = {
    'set1': (12000, 17000),
    'set2': (15000, 18000),
    'set3': (12000, 15000, 19000),
    'set4': (14000, 17000, 20000),
}


def _base(name: str, preset: str, total_steps: int, batch_size: int) -> Dict[str, Any]:
    return {
        'schema_version': SCHEMA_VERSION,
        'name': name,
        'network': {'preset': preset},
        'init': {'rule': 'truncated_normal', 'mean': 0.0, 'std': 0.01, 'value': 0.0},
        'optimizer': {'kind': 'sgd', 'momentum': 0.0, 'beta1': 0.9, 'beta2': 0.999,
                      'eps': 1e-8, 'reset_on_jump': False},
        'schedule': {'base_lr': 1e-2, 'rule': 'constant', 'interval': 8000, 'factor': 0.5,
                     'gamma': 1e-4, 'power': 0.75},
        'batch_size': batch_size,
        'total_steps': total_steps,
        'eval_every': 100,
        'jumps': None,
        'history': {'enabled': True, 'stride': 100, 'extra_steps': [], 'build_range': None, 'k': 2.0},
        'data': {'source': 'idx', 'data_dir': None, 'n_train': 0, 'n_validation': 0, 'classes': 10,
                 'image_shape': [28, 28, 1], 'validation_limit': None},
        'seeds': {'init': 0, 'data': 1, 'dropout': 2, 'predictor': 3},
        'build': None,
        'protocol': None,
        'out_dir': f'runs/{name}',
    }


def _jumps(steps, predictor: str = 'introspection', **extra) -> Dict[str, Any]:
    jumps = {'steps': list(steps), 'predictor': predictor, 'ratio': None, 'sigma': None,
             'model_path': 'runs/introspection/model.intr', 'include_biases': True,
             'clamp_factor': 10.0, 'workers': 1}
    if predictor not in ('introspection', 'linear-introspection'):
        jumps['model_path'] = None
    if predictor == 'linear-introspection':
        jumps['model_path'] = 'runs/introspection_linear/model.intr'
    jumps.update(extra)
    return jumps


def _with(config: Dict[str, Any], name: str, **changes) -> Dict[str, Any]:
    config = copy.deepcopy(config)
    config.update(changes)
    config['name'] = name
    config['out_dir'] = f'runs/{name}'
    return config


def synthetic_smoke() -> Dict[str, Any]:
    """Маленькая полносвязная сеть на синтетических облаках: полный прогон за секунды"""
    config = _base('synthetic-smoke', 'mnist3', 300, 32)
    config['network'] = {
        'input_shape': [8, 8, 1],
        'layers': [
            {'type': 'dense', 'in_features': 64, 'out_features': 32},
            {'type': 'relu'},
            {'type': 'dense', 'in_features': 32, 'out_features': 10},
            {'type': 'softmax_xent'},
        ],
    }
    config['init'] = {'rule': 'xavier', 'mean': 0.0, 'std': 0.01, 'value': 0.0}
    config['schedule']['base_lr'] = 0.1
    config['eval_every'] = 50
    config['history'].update(stride=50, build_range=[50, 150])
    config['data'].update(source='synthetic', n_train=1000, n_validation=200, image_shape=[8, 8, 1])
    config['build'] = {'sample_count': 2000, 'k': 2.0, 't_range': [50, 150],
                       'fractions': [0.5, 0.25, 0.25], 'seed': 0, 'validation_fraction': 0.1}
    config['protocol'] = {'hidden': 40, 'activation': 'relu', 'lr': 5e-4, 'decay_interval': 8000,
                          'decay_factor': 0.5, 'batch_size': 20, 'steps': 500, 'seed': 0,
                          'eval_every': 100,
                          'init': {'rule': 'xavier', 'mean': 0.0, 'std': 0.01, 'value': 0.0}}
    return config


def n0_desk(k: float = 2.0) -> Dict[str, Any]:
    """Базовая сеть N0 (Adam 1e-4, батч 50), история для набора интроспекции"""
    name = 'n0-desk' if k == 2.0 else f'n0-desk-k{k}'
    config = _base(name, 'n0_desk', 10000, 50)
    config['init'].update(std=0.1)
    config['optimizer']['kind'] = 'adam'
    config['schedule']['base_lr'] = 1e-4
    t_max = int(10000 / k)
    config['history'].update(stride=100, build_range=[1000, t_max], k=k)
    config['build'] = {'sample_count': 50000, 'k': k, 't_range': [1000, t_max],
                       'fractions': [0.5, 0.25, 0.25], 'seed': 0, 'validation_fraction': 0.1}
    config['protocol'] = {'hidden': 40, 'activation': 'relu', 'lr': 5e-4, 'decay_interval': 8000,
                          'decay_factor': 0.5, 'batch_size': 20, 'steps': 30000, 'seed': 0,
                          'eval_every': 1000,
                          'init': {'rule': 'xavier', 'mean': 0.0, 'std': 0.01, 'value': 0.0}}
    return config


def n0_desk_linear() -> Dict[str, Any]:
    """Тот же набор, линейная сеть интроспекции (без ReLU)"""
    config = _with(n0_desk(), 'n0-desk-linear')
    config['protocol']['activation'] = 'identity'
    return config


def mnist1(jumps: bool = True) -> Dict[str, Any]:
    """MNIST1: SGD 1e-2, батч 50, truncated normal(0, 0.01), прыжки 3000/4000/5000"""
    config = _base('mnist1' if jumps else 'mnist1-plain', 'mnist1', 20000, 50)
    if jumps:
        config['jumps'] = _jumps((3000, 4000, 5000))
    return config


def mnist2(jumps: bool = True) -> Dict[str, Any]:
    """MNIST2: xavier, inv-снижение lr (gamma 1e-4, power 0.75), батч 64, прыжки 2500/3000"""
    config = _base('mnist2' if jumps else 'mnist2-plain', 'mnist2', 10000, 64)
    config['init'] = {'rule': 'xavier', 'mean': 0.0, 'std': 0.01, 'value': 0.0}
    config['schedule'].update(base_lr=1e-2, rule='inv')
    if jumps:
        config['jumps'] = _jumps((2500, 3000))
    return config


def mnist3(jumps: bool = True, predictor: str = 'introspection', **jump_extra) -> Dict[str, Any]:
    """MNIST3: 784-256-256-10, SGD 5e-3, батч 100, normal(0, 1), прыжки 6000/8000/10000"""
    config = _base('mnist3' if jumps else 'mnist3-plain', 'mnist3', 15000, 100)
    config['init'] = {'rule': 'normal', 'mean': 0.0, 'std': 1.0, 'value': 0.0}
    config['schedule']['base_lr'] = 5e-3
    if jumps:
        config['jumps'] = _jumps((6000, 8000, 10000), predictor, **jump_extra)
    return config


def adam_variant(base: Callable[..., Dict[str, Any]], lr: float, jumps: bool = True) -> Dict[str, Any]:
    config = base(jumps)
    config = _with(config, f"{config['name']}-adam-{lr:g}")
    config['optimizer']['kind'] = 'adam'
    config['schedule'].update(base_lr=lr, rule='constant')
    return config


def cifar1_set(set_name: str) -> Dict[str, Any]:
    """Заготовка CIFAR1 (синтетические данные 24x24x3), не для приёмочных прогонов"""
    config = _base(f'cifar1-{set_name}-stub', 'cifar1', 30000, 128)
    config['init'] = {'rule': 'normal', 'mean': 0.0, 'std': 0.04, 'value': 0.0}
    config['schedule']['base_lr'] = 0.1
    config['data'].update(source='synthetic', n_train=5000, n_validation=1000, image_shape=[24, 24, 3])
    config['history']['stride'] = 500
    config['jumps'] = _jumps(CIFAR1_SETS[set_name])
    return config


PRESETS: Dict[str, Callable[[], Dict[str, Any]]] = {
    'synthetic-smoke': synthetic_smoke,
    'n0-desk': n0_desk,
    'n0-desk-k2.2': lambda: n0_desk(2.2),
    'n0-desk-linear': n0_desk_linear,
    'mnist1': mnist1,
    'mnist1-plain': lambda: mnist1(False),
    'mnist2': mnist2,
    'mnist2-plain': lambda: mnist2(False),
    'mnist3': mnist3,
    'mnist3-plain': lambda: mnist3(False),
    'mnist3-linear-introspection': lambda: _with(mnist3(predictor='linear-introspection'),
                                                 'mnist3-linear-introspection'),
    'mnist3-quadratic-1.25': lambda: _with(mnist3(predictor='quadratic-fit', ratio=1.25), 'mnist3-quadratic-1.25'),
    'mnist3-quadratic-1.3': lambda: _with(mnist3(predictor='quadratic-fit', ratio=1.3), 'mnist3-quadratic-1.3'),
    'mnist3-quadratic-1.4': lambda: _with(mnist3(predictor='quadratic-fit', ratio=1.4), 'mnist3-quadratic-1.4'),
    'mnist3-linear-1.075': lambda: _with(mnist3(predictor='linear-fit', ratio=1.075), 'mnist3-linear-1.075'),
    'mnist3-linear-1.1': lambda: _with(mnist3(predictor='linear-fit', ratio=1.1), 'mnist3-linear-1.1'),
    'mnist3-noise-0.001': lambda: _with(mnist3(predictor='gaussian-noise', sigma=1e-3), 'mnist3-noise-0.001'),
    'mnist3-noise-0.01': lambda: _with(mnist3(predictor='gaussian-noise', sigma=1e-2), 'mnist3-noise-0.01'),
    'mnist1-adam-1e-4': lambda: adam_variant(mnist1, 1e-4),
    'mnist1-adam-1e-3': lambda: adam_variant(mnist1, 1e-3),
    'mnist1-plain-adam-1e-4': lambda: adam_variant(mnist1, 1e-4, jumps=False),
    'mnist1-plain-adam-1e-3': lambda: adam_variant(mnist1, 1e-3, jumps=False),
    'mnist3-adam-1e-4': lambda: adam_variant(mnist3, 1e-4),
    'mnist3-adam-1e-3': lambda: adam_variant(mnist3, 1e-3),
    'mnist3-plain-adam-1e-4': lambda: adam_variant(mnist3, 1e-4, jumps=False),
    'mnist3-plain-adam-1e-3': lambda: adam_variant(mnist3, 1e-3, jumps=False),
}
PRESETS.update({f'cifar1-{name}-stub': (lambda n=name: cifar1_set(n)) for name in CIFAR1_SETS})


def preset_dict(name: str) -> Dict[str, Any]:
    if name not in PRESETS:
        raise KeyError(f"неизвестный пресет {name!r}; доступны: {', '.join(sorted(PRESETS))}")
    return PRESETS[name]()


def preset_config(name: str) -> ExperimentConfig:
    return ExperimentConfig.from_dict(preset_dict(name))
