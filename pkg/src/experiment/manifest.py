import json
import logging
import subprocess
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional

from app import __version__
from app.params import BASE_DIR
from experiment.config import ExperimentConfig, write_json_atomic

logger = logging.getLogger('experiment')

MANIFEST_FILE = 'manifest.json'


def describe_version() -> str:
    """git describe --always --dirty, иначе версия пакета"""
    try:
        result = subprocess.run(['git', 'describe', '--always', '--dirty'], cwd=BASE_DIR,
                                capture_output=True, text=True, timeout=5)
        if result.returncode == 0 and result.stdout.strip():
            return result.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


class Manifest:
    """
    manifest.json каталога результатов: конфигурация, её хеш, версия кода,
    сиды, список артефактов и статус прогона.
    """

    def __init__(self, out_dir, config: ExperimentConfig, stage: str):
        self.out_dir = Path(out_dir)
        self.path = self.out_dir / MANIFEST_FILE
        self.data: Dict[str, Any] = {
            'stage': stage,
            'status': 'running',
            'config': config.to_dict(),
            'config_hash': config.config_hash(),
            'version': describe_version(),
            'seeds': config.to_dict()['seeds'],
            'artifacts': [],
            'started': datetime.now().isoformat(),
            'finished': None,
        }

    def add_artifact(self, path, kind: str) -> None:
        path = Path(path)
        try:
            name = str(path.relative_to(self.out_dir))
        except ValueError:
            name = str(path)
        self.data['artifacts'] = [a for a in self.data['artifacts'] if a['path'] != name]
        self.data['artifacts'].append({'path': name, 'kind': kind})

    def update(self, **fields) -> None:
        self.data.update(fields)

    def save(self) -> Path:
        return write_json_atomic(self.data, self.path)

    def finish(self, status: str = 'complete', error: Optional[str] = None) -> Path:
        self.data['status'] = status
        self.data['finished'] = datetime.now().isoformat()
        if error is not None:
            self.data['error'] = error
        logger.info(f"Манифест {self.path}: статус {status}")
        return self.save()


def read_manifest(out_dir) -> Dict[str, Any]:
    with open(Path(out_dir) / MANIFEST_FILE, 'r', encoding='utf-8') as f:
        return json.load(f)


def artifact_paths(out_dir, kind: str) -> List[Path]:
    manifest = read_manifest(out_dir)
    return [Path(out_dir) / a['path'] for a in manifest['artifacts'] if a['kind'] == kind]
