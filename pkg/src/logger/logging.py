import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from logging.handlers import RotatingFileHandler

import requests

from app.params import settings

HTTP_TIMEOUT = 0.5


class HTTPHandler(logging.Handler):
    """Отправка записей лога на сборщик в фоне; недоступный сборщик не тормозит обучение"""

    def __init__(self, url: str):
        super().__init__()
        self.url = url
        self.executor = ThreadPoolExecutor(max_workers=2, thread_name_prefix='log-http')

    def payload(self, record: logging.LogRecord) -> dict:
        return {
            'log': self.format(record),
            'logger': record.name,
            'level': record.levelname,
            'created': record.created,
            'pid': os.getpid(),
        }

    def emit(self, record):
        try:
            self.executor.submit(self._send, self.payload(record))
        except Exception:
            self.handleError(record)

    def _send(self, body: dict):
        try:
            requests.post(self.url, json=body, timeout=HTTP_TIMEOUT)
        except requests.RequestException:
            pass

    def close(self):
        self.executor.shutdown(wait=False)
        super().close()


def setup_logging(log_file: str | None = None, level: str | None = None,
                  http_url: str | None = None) -> logging.Logger:
    """
    Настраивает корневой логгер: файл с ротацией, stdout и (опционально) HTTP.

    Повторный вызов не дублирует обработчики.
    """
    root = logging.getLogger()
    log_file = log_file or settings.LOG_FILE
    level = (level or settings.LOG_LEVEL).upper()
    http_url = settings.LOG_HTTP_URL if http_url is None else http_url

    for handler in list(root.handlers):
        if getattr(handler, '_accel_handler', False):
            root.removeHandler(handler)
            handler.close()

    formatter = logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')

    # Локальный файл (ограничение 1 МБ, храним 3 старых копии)
    file_handler = RotatingFileHandler(
        log_file,
        maxBytes=1*1024*1024,
        backupCount=3,
        encoding='utf-8'
    )
    file_handler.setFormatter(formatter)
    file_handler.setLevel(logging.DEBUG)
    file_handler._accel_handler = True  # type: ignore[attr-defined]
    root.addHandler(file_handler)

    stream_handler = logging.StreamHandler(sys.stdout)
    stream_handler.setFormatter(logging.Formatter('%(asctime)s - %(levelname)s - %(message)s'))
    stream_handler.setLevel(level)
    stream_handler._accel_handler = True  # type: ignore[attr-defined]
    root.addHandler(stream_handler)

    if http_url:
        http_handler = HTTPHandler(url=http_url)
        http_handler.setFormatter(formatter)
        http_handler.setLevel(logging.INFO)
        http_handler._accel_handler = True  # type: ignore[attr-defined]
        root.addHandler(http_handler)

    root.setLevel(logging.DEBUG)
    return root
