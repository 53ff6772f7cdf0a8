import numpy as np
import pandas as pd
import pytest

from app.errors import ConfigError, DuplicateStep, FormatError, MissingSnapshot, RangeError, ShapeError
from history.snapshot_store import RunMeta, SnapshotStore
from history.steps import build_candidates, input_steps, required_steps, scaled_step, validate_memory
from history.whst import CRC, HEADER, RECORD, VERSION, decode_store, encode_store, export_weight_csv, load_store, save_store


def _store(steps=(0, 50, 100), size=4):
    store = SnapshotStore(size, RunMeta('ab' * 16, 'adam', 3, {'k': 2.0}), required=steps, stride=50)
    for s in steps:
        store.record(s, np.arange(size, dtype=np.float32) + s)
    return store


class TestRequiredSteps:

    def test_single_jump(self):
        steps = set(required_steps([1000], stride=500, run_length=2000))
        assert {0, 400, 700, 1000} <= steps
        assert {500, 1500, 2000} <= steps

    def test_floor_arithmetic(self):
        steps = required_steps([999], stride=1000, run_length=1000)
        assert 399 in steps and 699 in steps and 999 in steps

    def test_stride_only(self):
        assert required_steps(stride=50, run_length=200) == [0, 50, 100, 150, 200]

    def test_jump_beyond_run(self):
        with pytest.raises(RangeError):
            required_steps([300], stride=50, run_length=200)

    def test_build_range(self):
        steps = set(required_steps(build_range=(100, 200), k=2.0, stride=100, run_length=400))
        for t in (100, 200):
            assert set(input_steps(t)) <= steps
            assert 2 * t in steps

    def test_build_range_beyond_run(self):
        with pytest.raises(RangeError):
            required_steps(build_range=(100, 300), k=2.0, stride=100, run_length=500)

    def test_zero_stride(self):
        with pytest.raises(ConfigError):
            required_steps(stride=0, run_length=10)

    def test_exact_fractions(self):
        assert scaled_step(0.7, 1000) == 700
        assert scaled_step(2.2, 1000) == 2200
        assert input_steps(10) == (10, 7, 4, 0)

    def test_candidates_are_stride_multiples(self):
        assert build_candidates((120, 400), 100) == [200, 300, 400]
        assert build_candidates((1, 100), 50) == [50, 100]


class TestValidateMemory:

    def test_under_limit(self):
        assert validate_memory(range(10), 100, limit=4000) == 4000

    def test_over_limit(self):
        with pytest.raises(ConfigError) as e:
            validate_memory(range(10), 100, limit=3999)
        assert e.value.field == 'history.stride'


class TestSnapshotStore:

    def test_record_copies(self):
        store = SnapshotStore(3)
        vector = np.zeros(3, dtype=np.float32)
        store.record(0, vector)
        vector[0] = 5.0
        assert store.lookup(0)[0] == 0.0

    def test_duplicate(self):
        store = _store()
        with pytest.raises(DuplicateStep):
            store.record(50, np.zeros(4))

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            SnapshotStore(4).record(0, np.zeros(3))

    def test_lookup(self):
        store = _store()
        assert store.lookup(100)[0] == 100.0
        assert store.nearest_step(75) == 50
        assert store.lookup(75, mode='nearest')[0] == 50.0
        assert store.nearest_step(76) == 100
        with pytest.raises(MissingSnapshot):
            store.lookup(60)

    def test_lookup_empty(self):
        with pytest.raises(MissingSnapshot):
            SnapshotStore(2).lookup(0, mode='nearest')

    def test_weight_series(self):
        store = _store((0, 50))
        series = store.weight_series(2)
        np.testing.assert_array_equal(series.steps, [0, 50])
        np.testing.assert_array_equal(series.values, [2.0, 52.0])
        np.testing.assert_array_equal(series.deviation(), [0.0, 50.0])

    def test_constant_series(self):
        store = SnapshotStore(2)
        for s in (0, 10, 20):
            store.record(s, np.array([1.5, -1.0]))
        np.testing.assert_array_equal(store.weight_series(0).values, [1.5, 1.5, 1.5])

    def test_weight_series_out_of_range(self):
        with pytest.raises(IndexError):
            _store().weight_series(4)

    def test_max_abs_and_required(self):
        store = SnapshotStore(2, required=[0, 5, 10])
        store.record(0, np.array([0.5, -3.0]))
        store.record(10, np.array([1.0, 2.0]))
        assert store.max_abs == 3.0
        assert store.is_required(5) and not store.is_required(6)
        assert store.missing_required() == [5]


class TestWhst:

    def test_round_trip(self, tmp_path):
        store = _store()
        path = save_store(store, tmp_path / 'history.whst')
        loaded = load_store(path)
        assert loaded.equals(store)
        assert loaded.meta == store.meta
        assert loaded.lookup(50).tobytes() == store.lookup(50).tobytes()

    def test_overwrite_truncates(self, tmp_path):
        path = tmp_path / 'history.whst'
        save_store(_store((0, 50, 100), size=6), path)
        save_store(_store((0,), size=2), path)
        assert load_store(path).param_count == 2

    def test_corrupt_payload_byte(self):
        raw = bytearray(encode_store(_store()))
        raw[-3] ^= 0xFF
        with pytest.raises(FormatError):
            decode_store(bytes(raw))

    def test_corrupt_metadata(self):
        raw = encode_store(_store())
        assert b'"stride": 50' in raw
        with pytest.raises(FormatError):
            decode_store(raw.replace(b'"stride": 50', b'"stride": 90'))

    def test_corrupt_spec_hash(self):
        raw = bytearray(encode_store(_store()))
        raw[6] ^= 0x01
        with pytest.raises(FormatError):
            decode_store(bytes(raw))

    def test_corrupt_step_field(self):
        store = _store()
        raw = bytearray(encode_store(store))
        second = HEADER.size + HEADER.unpack_from(raw, 0)[-1] + CRC.size + RECORD.size + 4 * store.param_count
        assert RECORD.unpack_from(raw, second)[0] == 50
        raw[second] ^= 0x01
        with pytest.raises(FormatError):
            decode_store(bytes(raw))

    def test_wrong_magic(self):
        raw = bytearray(encode_store(_store()))
        raw[:4] = b'WHSX'
        with pytest.raises(FormatError):
            decode_store(bytes(raw))

    def test_wrong_version(self):
        raw = bytearray(encode_store(_store()))
        raw[4:6] = (VERSION + 1).to_bytes(2, 'little')
        with pytest.raises(FormatError):
            decode_store(bytes(raw))

    def test_truncated(self):
        raw = encode_store(_store())
        with pytest.raises(FormatError):
            decode_store(raw[:-1])
        with pytest.raises(FormatError):
            decode_store(raw[:HEADER.size - 1])

    def test_record_layout(self):
        store = _store((0,), size=2)
        raw = encode_store(store)
        records = HEADER.size + HEADER.unpack_from(raw, 0)[-1] + CRC.size
        step, _ = RECORD.unpack_from(raw, records)
        payload = np.frombuffer(raw[records + RECORD.size:], dtype='<f4')
        assert step == 0
        np.testing.assert_array_equal(payload, [0.0, 1.0])

    def test_needs_step_zero(self):
        store = SnapshotStore(2)
        store.record(5, np.zeros(2))
        with pytest.raises(MissingSnapshot):
            encode_store(store)

    def test_export_weight_csv(self, tmp_path):
        path = export_weight_csv(_store(), 1, tmp_path / 'w1.csv')
        frame = pd.read_csv(path)
        assert list(frame.columns) == ['step', 'value']
        assert frame['value'].tolist() == [1.0, 51.0, 101.0]
