"""
Командная строка конвейера:
train-base -> build-dataset -> train-introspection -> train-target -> analyze/compare.

Коды выхода: 0 успех, 2 ошибка конфигурации, 3 численная расходимость,
4 ошибка ввода-вывода или формата файла.

С --deterministic потоки BLAS фиксируются до импорта numpy только при запуске
из командной строки. При вызове main() из кода переменные окружения тоже
выставляются, но уже загруженная библиотека BLAS их не перечитывает.
"""
import os
import sys

BLAS_THREAD_VARS = ('OMP_NUM_THREADS', 'OPENBLAS_NUM_THREADS', 'MKL_NUM_THREADS', 'NUMEXPR_NUM_THREADS')


def pin_blas_threads() -> bool:
    """Один поток BLAS; True, если окружение уже было зафиксировано"""
    pinned = all(os.environ.get(var) == '1' for var in BLAS_THREAD_VARS)
    for var in BLAS_THREAD_VARS:
        os.environ[var] = '1'
    return pinned


if '--deterministic' in sys.argv[1:]:
    pin_blas_threads()

import argparse
import dataclasses
import logging
import traceback
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()

from app.errors import (AccelError, ConfigError, DivergenceError, EmptyDataset, FitError, FormatError,
                        MissingSnapshot, NumericError, RangeError, SpecError)
from app.params import settings
from experiment.config import ExperimentConfig, Seeds, load_config, save_config
from experiment.pipeline import (analyze_stage, build_dataset_stage, compare_stage, export_history_stage,
                                 train_introspection_stage)
from experiment.presets import PRESETS, preset_config, preset_dict
from experiment.runner import HISTORY_FILE, run_experiment
from logger.logging import setup_logging

logger = logging.getLogger('main')

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4


def exit_code_for(error: BaseException) -> int:
    if isinstance(error, (DivergenceError, NumericError, FitError)):
        return EXIT_NUMERIC
    if isinstance(error, (FormatError, MissingSnapshot, OSError)):
        return EXIT_IO
    if isinstance(error, (ConfigError, SpecError, RangeError, EmptyDataset, AccelError)):
        return EXIT_CONFIG
    return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='accel', description="Ускорение обучения сетей по истории весов")
    parser.add_argument('--config', help="JSON-конфигурация эксперимента")
    parser.add_argument('--preset', choices=sorted(PRESETS), help="встроенная конфигурация вместо --config")
    parser.add_argument('--data-dir', help="каталог с файлами MNIST в формате IDX")
    parser.add_argument('--out', help="каталог результатов (перекрывает out_dir конфигурации)")
    parser.add_argument('--seed', type=int, help="базовый сид: init=N, data=N+1, dropout=N+2, predictor=N+3")
    parser.add_argument('--deterministic', action='store_true',
                        help="один поток, без параллельных прыжков, время в timing.csv")
    parser.add_argument('--log-level', default=None)

    sub = parser.add_subparsers(dest='command', required=True)

    sub.add_parser('train-base', help="обучение базовой сети с записью истории весов")

    p = sub.add_parser('build-dataset', help="набор обучающих примеров для сети интроспекции")
    p.add_argument('--history', required=True, help="файл истории .whst")

    p = sub.add_parser('train-introspection', help="обучение сети интроспекции")
    p.add_argument('--samples', required=True, help="samples.csv из build-dataset")

    p = sub.add_parser('train-target', help="обучение целевой сети с прыжками")
    p.add_argument('--model', help="файл модели интроспекции (перекрывает jumps.model_path)")

    p = sub.add_parser('analyze', help="гистограммы и траектории весов")
    p.add_argument('--history', required=True)
    p.add_argument('--bins', type=int, default=101)
    p.add_argument('--per-bin', type=int, default=3)
    p.add_argument('--plot', action='store_true')

    p = sub.add_parser('compare', help="сравнение кривых обучения")
    p.add_argument('curves', nargs='+', help="curve.csv сравниваемых прогонов")
    p.add_argument('--reference', required=True, help="curve.csv прогона без прыжков")

    p = sub.add_parser('history', help="операции с файлом истории")
    history_sub = p.add_subparsers(dest='history_command', required=True)
    e = history_sub.add_parser('export', help="траектория одного веса в CSV")
    e.add_argument('--history', required=True)
    e.add_argument('--index', type=int, required=True)

    p = sub.add_parser('init-config', help="записать встроенную конфигурацию в файл")
    p.add_argument('--name', required=True, choices=sorted(PRESETS), dest='preset_name')
    p.add_argument('path')
    return parser


def resolve_config(args) -> ExperimentConfig:
    if args.config:
        config = load_config(args.config)
    elif args.preset:
        config = preset_config(args.preset)
    else:
        raise ConfigError("нужен --config или --preset", '<root>')
    changes = {}
    if args.seed is not None:
        changes['seeds'] = Seeds.from_base(args.seed)
    if args.out:
        changes['out_dir'] = args.out
    return config.replace(**changes) if changes else config


def _out_dir(args, config: ExperimentConfig | None = None) -> Path:
    if args.out:
        return Path(args.out)
    if config is not None:
        return Path(config.out_dir)
    raise ConfigError("не задан каталог результатов", 'out_dir')


def run(args) -> int:
    if args.deterministic:
        settings.DETERMINISTIC = True

    if args.command == 'init-config':
        config = ExperimentConfig.from_dict(preset_dict(args.preset_name))
        if args.seed is not None:
            config = config.replace(seeds=Seeds.from_base(args.seed))
        path = save_config(config, args.path)
        logger.info(f"Конфигурация {args.preset_name} записана в {path}")
        return EXIT_OK

    if args.command == 'train-base':
        config = resolve_config(args)
        if not config.history.enabled:
            raise ConfigError("train-base требует записи истории", 'history.enabled')
        result = run_experiment(config.replace(jumps=None), stage='train-base', data_dir=args.data_dir)
        logger.info(f"История сохранена в {result.out_dir / HISTORY_FILE}")
        return EXIT_OK

    if args.command == 'train-target':
        config = resolve_config(args)
        if args.model:
            if config.jumps is None:
                raise ConfigError("в конфигурации нет плана прыжков", 'jumps')
            config = config.replace(jumps=dataclasses.replace(config.jumps, model_path=args.model))
        run_experiment(config, stage='train-target', data_dir=args.data_dir)
        return EXIT_OK

    if args.command == 'build-dataset':
        config = resolve_config(args)
        path = build_dataset_stage(config, args.history, _out_dir(args, config), seed=args.seed)
        logger.info(f"Набор интроспекции: {path}")
        return EXIT_OK

    if args.command == 'train-introspection':
        config = resolve_config(args)
        path = train_introspection_stage(config, args.samples, _out_dir(args, config), seed=args.seed)
        logger.info(f"Модель интроспекции: {path}")
        return EXIT_OK

    if args.command == 'analyze':
        out_dir = Path(args.out) if args.out else Path(args.history).parent / 'analysis'
        written = analyze_stage(args.history, out_dir, bins=args.bins, per_bin=args.per_bin,
                                seed=args.seed or 0, plot=args.plot)
        logger.info(f"Анализ: записано {len(written)} файлов в {out_dir}")
        return EXIT_OK

    if args.command == 'compare':
        out_dir = Path(args.out) if args.out else Path(args.reference).parent / 'compare'
        summary = compare_stage(args.curves, args.reference, out_dir)
        print(summary.to_string(index=False))
        return EXIT_OK

    if args.command == 'history' and args.history_command == 'export':
        out_path = Path(args.out) if args.out else Path(args.history).with_name(f'weight_{args.index}.csv')
        path = export_history_stage(args.history, args.index, out_path)
        logger.info(f"Траектория веса {args.index}: {path}")
        return EXIT_OK

    raise ConfigError(f"неизвестная команда {args.command!r}", 'command')


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(level=args.log_level)
    if args.deterministic and not pin_blas_threads():
        logger.warning("Потоки BLAS зафиксированы после загрузки numpy: однопоточность не гарантирована")
    try:
        return run(args)
    except KeyError as e:
        logger.error(f"Ошибка конфигурации: {e}")
        return EXIT_CONFIG
    except IndexError as e:
        logger.error(f"Индекс вне диапазона: {e}")
        return EXIT_CONFIG
    except (AccelError, OSError) as e:
        code = exit_code_for(e)
        logger.error(f"{type(e).__name__}: {e}")
        logger.debug(traceback.format_exc())
        return code


if __name__ == '__main__':
    sys.exit(main())
