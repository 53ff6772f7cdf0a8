"""
Двоичный формат истории весов WHST.

  magic      4 байта  b'WHST'
  version    u16
  spec_hash  32 байта (md5 hex, ascii, дополняется нулями)
  params     u64      длина вектора
  steps      u64      число записей
  meta_len   u32      длина JSON-метаданных
  meta       utf-8 JSON (optimizer, seed, stride, required_steps, extra)
  head_crc   u32      crc32 заголовка и meta
  записи:    step u64, crc32 u32 (по step и payload), payload f32 x params

Все целые и float little-endian.
"""
import json
import logging
import os
import struct
import zlib
from pathlib import Path

import numpy as np
import pandas as pd
import portalocker

from app.errors import DuplicateStep, FormatError, MissingSnapshot
from history.snapshot_store import RunMeta, SnapshotStore

logger = logging.getLogger('history')

MAGIC = b'WHST'
VERSION = 2
HEADER = struct.Struct('<4sH32sQQI')
RECORD = struct.Struct('<QI')
STEP = struct.Struct('<Q')
CRC = struct.Struct('<I')
PAYLOAD_DTYPE = np.dtype('<f4')


def _meta_block(store: SnapshotStore) -> bytes:
    meta = {
        'optimizer': store.meta.optimizer,
        'seed': store.meta.seed,
        'stride': store.stride,
        'required_steps': store.required_steps,
        'extra': store.meta.extra,
    }
    return json.dumps(meta, sort_keys=True, ensure_ascii=False).encode('utf-8')


def _record_crc(step: int, payload: bytes) -> int:
    return zlib.crc32(payload, zlib.crc32(STEP.pack(step)))


def encode_store(store: SnapshotStore) -> bytes:
    if 0 not in store:
        raise MissingSnapshot(0)
    spec_hash = store.meta.spec_hash.encode('ascii')
    if len(spec_hash) > 32:
        raise FormatError(f"spec_hash длиннее 32 байт: {store.meta.spec_hash!r}")
    meta = _meta_block(store)
    head = HEADER.pack(MAGIC, VERSION, spec_hash, store.param_count, len(store), len(meta)) + meta
    chunks = [head, CRC.pack(zlib.crc32(head))]
    for step in store.steps:
        payload = store.lookup(step).astype(PAYLOAD_DTYPE, copy=False).tobytes()
        chunks.append(RECORD.pack(step, _record_crc(step, payload)))
        chunks.append(payload)
    return b''.join(chunks)


def decode_store(raw: bytes, name: str = '<bytes>') -> SnapshotStore:
    if len(raw) < HEADER.size:
        raise FormatError(f"{name}: файл короче заголовка")
    magic, version, spec_hash, param_count, step_count, meta_len = HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise FormatError(f"{name}: magic {magic!r}, ожидается {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"{name}: версия формата {version}, поддерживается {VERSION}")

    offset = HEADER.size + meta_len
    if len(raw) < offset + CRC.size:
        raise FormatError(f"{name}: файл короче метаданных")
    (head_crc,) = CRC.unpack_from(raw, offset)
    if zlib.crc32(raw[:offset]) != head_crc:
        raise FormatError(f"{name}: контрольная сумма заголовка не совпадает")
    try:
        meta = json.loads(raw[HEADER.size:offset].decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"{name}: повреждены метаданные ({e})")
    offset += CRC.size

    payload_size = param_count * PAYLOAD_DTYPE.itemsize
    expected = offset + step_count * (RECORD.size + payload_size)
    if len(raw) != expected:
        raise FormatError(f"{name}: размер {len(raw)} байт, ожидается {expected}")

    store = SnapshotStore(
        int(param_count),
        RunMeta(spec_hash.rstrip(b'\0').decode('ascii'), meta.get('optimizer', ''),
                int(meta.get('seed', 0)), meta.get('extra', {})),
        required=meta.get('required_steps', []),
        stride=int(meta.get('stride', 50)),
    )
    for _ in range(step_count):
        step, crc = RECORD.unpack_from(raw, offset)
        offset += RECORD.size
        payload = raw[offset:offset + payload_size]
        offset += payload_size
        if _record_crc(step, payload) != crc:
            raise FormatError(f"{name}: контрольная сумма записи шага {step} не совпадает")
        try:
            store.record(int(step), np.frombuffer(payload, dtype=PAYLOAD_DTYPE))
        except DuplicateStep:
            raise FormatError(f"{name}: шаг {step} записан дважды")
    if 0 not in store:
        raise FormatError(f"{name}: нет снимка шага 0")
    return store


def save_store(store: SnapshotStore, path) -> Path:
    """Запись под эксклюзивной блокировкой portalocker"""
    path = Path(path)
    data = encode_store(store)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'ab') as f:
        portalocker.lock(f, portalocker.LOCK_EX)
        f.seek(0)
        f.truncate()
        f.write(data)
        f.flush()
        os.fsync(f.fileno())
    logger.info(f"История сохранена: {path} ({len(store)} снимков, {len(data)} байт)")
    return path


def load_store(path) -> SnapshotStore:
    path = Path(path)
    with open(path, 'rb') as f:
        portalocker.lock(f, portalocker.LOCK_SH)
        raw = f.read()
    store = decode_store(raw, str(path))
    logger.info(f"История загружена: {path} ({len(store)} снимков по {store.param_count} параметров)")
    return store


def export_weight_csv(store: SnapshotStore, flat_index: int, path) -> Path:
    """CSV (step,value) траектории одного скаляра"""
    series = store.weight_series(flat_index)
    frame = pd.DataFrame({'step': series.steps, 'value': series.values.astype(np.float64)})
    path = Path(path)
    frame.to_csv(path, index=False)
    return path
