"""
Конфигурация эксперимента: JSON-дерево с schema_version, загружаемое во
вложенные dataclass. Любая ошибка проверки -> ConfigError с путём к полю.
"""
import dataclasses
import hashlib
import json
import os
import shutil
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

from app.errors import AccelError, ConfigError, SpecError
from app.params import settings
from introspection.samples import BuildConfig
from introspection.training import IntrospectionProtocol
from network import spec as specs
from network.params import InitRule
from network.spec import NetworkSpec
from optim.schedules import LrSchedule

SCHEMA_VERSION = 1

SPEC_PRESETS = {
    'n0_desk': specs.n0_desk_spec,
    'mnist1': specs.mnist1_spec,
    'mnist2': specs.mnist2_spec,
    'mnist3': specs.mnist3_spec,
    'cifar1': specs.cifar1_spec,
}

DATA_SOURCES = ('idx', 'synthetic')


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = 'sgd'
    momentum: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    reset_on_jump: bool = False

    def __post_init__(self):
        if self.kind not in ('sgd', 'momentum', 'adam'):
            raise ConfigError(f"неизвестный оптимизатор {self.kind!r}", 'optimizer.kind')
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum={self.momentum} вне [0, 1)", 'optimizer.momentum')


@dataclass(frozen=True)
class JumpConfig:
    steps: Tuple[int, ...] = ()
    predictor: str = 'introspection'
    ratio: Optional[float] = None
    sigma: Optional[float] = None
    model_path: Optional[str] = None
    include_biases: bool = True
    clamp_factor: float = settings.CLAMP_FACTOR
    workers: int = settings.JUMP_WORKERS


@dataclass(frozen=True)
class HistoryConfig:
    """stride: шаг снимков для анализа; extra_steps: дополнительные обязательные шаги"""
    enabled: bool = True
    stride: int = 50
    extra_steps: Tuple[int, ...] = ()
    build_range: Optional[Tuple[int, int]] = None
    k: float = settings.DEFAULT_JUMP_RATIO


@dataclass(frozen=True)
class DataConfig:
    source: str = 'synthetic'
    data_dir: Optional[str] = None
    n_train: int = 1000
    n_validation: int = 200
    classes: int = 10
    image_shape: Tuple[int, ...] = (8, 8, 1)
    validation_limit: Optional[int] = None

    def __post_init__(self):
        if self.source not in DATA_SOURCES:
            raise ConfigError(f"неизвестный источник {self.source!r}, допустимо {DATA_SOURCES}", 'data.source')
        if self.source == 'synthetic':
            if self.classes < 1:
                raise ConfigError(f"classes={self.classes} должно быть >= 1", 'data.classes')
            # в каждой выборке хотя бы по примеру на класс
            for name in ('n_train', 'n_validation'):
                if getattr(self, name) < self.classes:
                    raise ConfigError(f"{name}={getattr(self, name)} меньше числа классов {self.classes}",
                                      f'data.{name}')


@dataclass(frozen=True)
class Seeds:
    init: int = 0
    data: int = 1
    dropout: int = 2
    predictor: int = 3

    @classmethod
    def from_base(cls, seed: int) -> 'Seeds':
        return cls(seed, seed + 1, seed + 2, seed + 3)


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = 'experiment'
    network: Dict[str, Any] = field(default_factory=lambda: {'preset': 'mnist3'})
    init: InitRule = field(default_factory=InitRule)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    schedule: LrSchedule = field(default_factory=lambda: LrSchedule(1e-2))
    batch_size: int = 50
    total_steps: int = 1000
    eval_every: int = 100
    jumps: Optional[JumpConfig] = None
    history: HistoryConfig = field(default_factory=HistoryConfig)
    data: DataConfig = field(default_factory=DataConfig)
    seeds: Seeds = field(default_factory=Seeds)
    build: Optional[BuildConfig] = None
    protocol: Optional[IntrospectionProtocol] = None
    out_dir: str = 'runs/experiment'
    schema_version: int = SCHEMA_VERSION

    def network_spec(self) -> NetworkSpec:
        try:
            if 'preset' in self.network:
                name = self.network['preset']
                if name not in SPEC_PRESETS:
                    raise ConfigError(f"неизвестная архитектура {name!r}", 'network.preset')
                return SPEC_PRESETS[name]()
            return NetworkSpec.from_dict(self.network).validate()
        except SpecError as e:
            raise ConfigError(str(e), 'network')

    def validate(self) -> 'ExperimentConfig':
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"schema_version={self.schema_version}, поддерживается {SCHEMA_VERSION}",
                              'schema_version')
        for name in ('batch_size', 'total_steps', 'eval_every'):
            if getattr(self, name) < 1:
                raise ConfigError(f"{getattr(self, name)} < 1", name)
        self.network_spec()
        if self.history.stride < 1:
            raise ConfigError(f"stride={self.history.stride} < 1", 'history.stride')
        for i, step in enumerate(self.history.extra_steps):
            if not 0 <= step <= self.total_steps:
                raise ConfigError(f"шаг {step} вне [0, {self.total_steps}]", f'history.extra_steps[{i}]')
        if self.jumps is not None:
            for i, step in enumerate(self.jumps.steps):
                if not 0 < step < self.total_steps:
                    raise ConfigError(f"шаг прыжка {step} должен быть в (0, {self.total_steps})",
                                      f'jumps.steps[{i}]')
                if i and step <= self.jumps.steps[i - 1]:
                    raise ConfigError("шаги прыжков должны строго возрастать", f'jumps.steps[{i}]')
            if self.jumps.steps and not self.history.enabled:
                raise ConfigError("прыжки требуют истории весов", 'history.enabled')
            if self.jumps.workers < 1:
                raise ConfigError(f"workers={self.jumps.workers} < 1", 'jumps.workers')
        if self.history.build_range is not None:
            BuildConfig(k=self.history.k, t_range=self.history.build_range).check_run_length(self.total_steps)
        return self

    # ========== Сериализация ==========

    def to_dict(self) -> Dict[str, Any]:
        return _plain(dataclasses.asdict(self))

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ExperimentConfig':
        if not isinstance(data, dict):
            raise ConfigError("конфигурация должна быть объектом JSON", '<root>')
        data = dict(data)
        sections = {
            'init': (InitRule, 'init'),
            'optimizer': (OptimizerConfig, 'optimizer'),
            'schedule': (LrSchedule, 'schedule'),
            'jumps': (JumpConfig, 'jumps'),
            'history': (HistoryConfig, 'history'),
            'data': (DataConfig, 'data'),
            'seeds': (Seeds, 'seeds'),
            'build': (BuildConfig, 'build'),
            'protocol': (IntrospectionProtocol, 'protocol'),
        }
        protocol = data.get('protocol')
        if isinstance(protocol, dict) and isinstance(protocol.get('init'), dict):
            data['protocol'] = dict(protocol, init=_build(InitRule, protocol['init'], 'protocol.init'))
        for key, (section_cls, path) in sections.items():
            if data.get(key) is not None:
                data[key] = _build(section_cls, data[key], path)
        return _build(cls, data, '').validate()

    def config_hash(self) -> str:
        content = json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False)
        return hashlib.md5(content.encode('utf-8')).hexdigest()

    def replace(self, **changes) -> 'ExperimentConfig':
        return dataclasses.replace(self, **changes).validate()


def _plain(value):
    """Кортежи -> списки для JSON"""
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def _tuples(value):
    if isinstance(value, list):
        return tuple(_tuples(v) for v in value)
    return value


def _build(cls, data: Any, path: str):
    """dataclass из словаря: неизвестные ключи и ошибки типов -> ConfigError с путём"""
    prefix = f'{path}.' if path else ''
    if not isinstance(data, dict):
        raise ConfigError(f"ожидается объект, получено {type(data).__name__}", path or '<root>')
    known = {f.name: f for f in dataclasses.fields(cls) if f.init}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError("неизвестный ключ", f'{prefix}{unknown[0]}')
    kwargs = {}
    for name, value in data.items():
        if name == 'network':
            kwargs[name] = value
        elif name == 'init' and isinstance(value, InitRule):
            kwargs[name] = value
        else:
            kwargs[name] = _tuples(value)
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except AccelError as e:
        raise ConfigError(str(e), path or '<root>')
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e), path or '<root>')


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: некорректный JSON ({e})", '<root>')
    return ExperimentConfig.from_dict(data)


def write_json_atomic(data: Dict[str, Any], filename) -> Path:
    """Атомарная запись через временный файл в той же директории"""
    filename = Path(filename)
    filename.parent.mkdir(parents=True, exist_ok=True)
    temp_path = None
    try:
        with tempfile.NamedTemporaryFile(mode='w', dir=filename.parent, delete=False,
                                         encoding='utf-8', suffix='.tmp') as temp_file:
            temp_path = temp_file.name
            json.dump(data, temp_file, indent=4, ensure_ascii=False)
            temp_file.flush()
            os.fsync(temp_file.fileno())
        shutil.move(temp_path, filename)
    except BaseException:
        if temp_path and os.path.exists(temp_path):
            os.unlink(temp_path)
        raise
    return filename


def save_config(config: ExperimentConfig, path) -> Path:
    return write_json_atomic(config.to_dict(), path)
