import math

import numpy as np
import pandas as pd
import pytest

from analysis.curves import (NOT_REACHED, TIMING_FILE, TrainingCurve, compare_runs, export_curves, read_curve,
                             summarize, write_curve)
from analysis.histograms import (HistogramSpec, bin_values, deviation_histogram, deviation_values, export_analysis,
                                 sample_trajectories, second_moment_histogram, second_moment_values,
                                 trajectories_frame, weight_summary)
from analysis.visual import EvolutionVisualizer
from app.errors import ConfigError, RangeError
from conftest import make_store


def _curve(name, steps, accs, seconds=None):
    rows = [{'step': s, 'loss': 1.0 - a, 'val_acc': a, 'seconds': None if seconds is None else seconds[i]}
            for i, (s, a) in enumerate(zip(steps, accs))]
    return TrainingCurve.from_rows(name, rows)


class TestHistograms:

    def test_counts_cover_all_scalars(self, linear_store):
        for histogram in (deviation_histogram(linear_store), second_moment_histogram(linear_store)):
            assert histogram.counts.sum() == linear_store.param_count
            assert histogram.counts.size == 101

    def test_explicit_edges(self):
        histogram = bin_values(np.array([-1.0, 0.5, 0.6, 0.9]), HistogramSpec(edges=(-1.0, 0.0, 1.0)))
        np.testing.assert_array_equal(histogram.counts, [1, 3])

    def test_out_of_range_goes_to_edge_bins(self):
        histogram = bin_values(np.array([-5.0, 1.0, 7.0]), HistogramSpec(edges=(-1.0, 0.0, 1.0)))
        np.testing.assert_array_equal(histogram.counts, [1, 2])

    def test_deviation(self):
        store = make_store(lambda idx, s: idx + 0.5 * s, [0, 10, 20], 3)
        np.testing.assert_allclose(deviation_values(store), [10.0, 10.0, 10.0])

    def test_second_moment(self):
        values = {0: 0.0, 10: 0.4, 20: 0.2}
        store = make_store(lambda idx, s: np.full(idx.shape, values[s]), [0, 10, 20], 2)
        np.testing.assert_allclose(second_moment_values(store), math.sqrt(0.1), rtol=1e-6)

    def test_constant_weights(self):
        store = make_store(lambda idx, s: np.full(idx.shape, 0.25), [0, 50, 100], 5)
        np.testing.assert_array_equal(deviation_values(store), np.zeros(5))
        assert deviation_histogram(store).counts.sum() == 5

    def test_needs_two_snapshots(self):
        with pytest.raises(RangeError):
            deviation_values(make_store(lambda idx, s: idx, [0], 3))

    def test_log_frequency_column(self):
        histogram = bin_values(np.zeros(9), HistogramSpec(bins=3, log_frequency=True))
        frame = histogram.to_frame()
        assert frame['log10_count_plus_1'].max() == pytest.approx(1.0)

    @pytest.mark.parametrize('kwargs', [{'metric': 'variance'}, {'bins': 1}, {'edges': (0.0, 0.0, 1.0)}])
    def test_invalid_spec(self, kwargs):
        with pytest.raises(ConfigError):
            HistogramSpec(**kwargs)


class TestTrajectories:

    def test_per_bin_limit(self, linear_store):
        histogram = deviation_histogram(linear_store, HistogramSpec(bins=2))
        trajectories = sample_trajectories(linear_store, histogram, 2, seed=0)
        for b in np.flatnonzero(histogram.counts):
            assert sum(tr.bin == b for tr in trajectories) == min(2, histogram.counts[b])

    def test_deviation_starts_at_zero(self, linear_store):
        histogram = deviation_histogram(linear_store)
        frame = trajectories_frame(sample_trajectories(linear_store, histogram, 1, seed=3))
        assert (frame[frame['step'] == 0]['deviation'] == 0.0).all()
        assert list(frame.columns) == ['flat_index', 'bin', 'step', 'deviation']

    def test_none_requested(self, linear_store):
        assert sample_trajectories(linear_store, deviation_histogram(linear_store), 0, seed=0) == []
        assert trajectories_frame([]).empty

    def test_summary(self, linear_store):
        summary = weight_summary(linear_store)
        assert list(summary['metric']) == ['final-minus-initial', 'sqrt-second-moment']
        assert (summary['max'] >= summary['median']).all()

    def test_export(self, linear_store, tmp_path):
        written = export_analysis(linear_store, tmp_path, bins=11, per_bin=1)
        assert {p.name for p in written} == {'histogram_deviation.csv', 'histogram_second_moment.csv',
                                            'trajectories.csv', 'weight_summary.csv'}
        assert pd.read_csv(tmp_path / 'histogram_deviation.csv')['count'].sum() == 8


def _wavy(idx, step):
    return 0.01 * idx + 0.1 * np.sin(0.01 * step * (idx + 1))


class TestStrideSubset:

    @pytest.fixture
    def stores(self):
        fine = make_store(_wavy, range(0, 1001, 50), 6, stride=50)
        coarse = make_store(_wavy, range(0, 1001, 100), 6, stride=100)
        return fine, coarse

    def test_deviation_agrees(self, stores):
        fine, coarse = stores
        np.testing.assert_array_equal(deviation_values(fine), deviation_values(coarse))
        for i in range(fine.param_count):
            fine_series, coarse_series = fine.weight_series(i), coarse.weight_series(i)
            shared = np.isin(fine_series.steps, coarse_series.steps)
            np.testing.assert_array_equal(fine_series.steps[shared], coarse_series.steps)
            np.testing.assert_array_equal(fine_series.deviation()[shared], coarse_series.deviation())

    def test_second_moment_on_shared_steps(self, stores):
        fine, coarse = stores
        shared = [s for s in coarse.steps if s > 0]
        drift = fine.matrix(shared).astype(np.float64) - fine.lookup(0).astype(np.float64)
        expected = np.sqrt(np.mean(np.square(drift), axis=0))
        np.testing.assert_allclose(second_moment_values(coarse), expected, rtol=1e-12)

    def test_trajectories_agree(self, stores):
        frames = []
        for store in stores:
            histogram = deviation_histogram(store, HistogramSpec(bins=3))
            frames.append(trajectories_frame(sample_trajectories(store, histogram, 2, seed=5)))
        fine_frame, coarse_frame = frames
        fine_frame = fine_frame[fine_frame['step'] % 100 == 0].reset_index(drop=True)
        pd.testing.assert_frame_equal(fine_frame, coarse_frame)


class TestCurves:

    def test_steps_must_increase(self):
        with pytest.raises(RangeError):
            _curve('a', [10, 10], [0.1, 0.2])

    def test_first_reach(self):
        curve = _curve('a', [10, 20, 30], [0.5, 0.9, 0.8])
        assert curve.first_reach(0.85) == 20
        assert curve.first_reach(0.95) is None
        assert curve.accuracy_at_step(25) == 0.9

    def test_deterministic_write(self, tmp_path):
        curve = _curve('run', [10, 20], [0.5, 0.6], seconds=[1.5, 3.0])
        path = write_curve(curve, tmp_path / 'curve.csv', deterministic=True)
        raw = pd.read_csv(path)
        assert raw['seconds'].isna().all()
        assert (tmp_path / TIMING_FILE).exists()
        assert read_curve(path).frame['seconds'].tolist() == [1.5, 3.0]

    def test_summary_not_reached(self):
        reference = _curve('ref', [10, 20], [0.5, 0.9])
        other = _curve('jump', [10, 20], [0.6, 0.7])
        summary = summarize([reference, other], reference)
        assert summary['first_reach_step'].tolist() == [20, NOT_REACHED]

    def test_export_curves(self, tmp_path):
        summary = export_curves([_curve('ref', [10], [0.5]), _curve('jump', [10], [0.6])], tmp_path)
        assert (tmp_path / 'ref.csv').exists() and (tmp_path / 'summary.csv').exists()
        assert len(summary) == 2


class TestCompareRuns:

    def _write(self, tmp_path, name, steps, accs, seconds=None):
        return write_curve(_curve(name, steps, accs, seconds), tmp_path / name / 'curve.csv')

    def test_reference_against_itself(self, tmp_path):
        path = self._write(tmp_path, 'ref', [10, 20, 30], [0.5, 0.7, 0.8], seconds=[1.0, 2.0, 3.0])
        summary = compare_runs([path], path)
        assert (summary['delta_max_val_acc'] == 0.0).all()
        assert (summary['delta_at_equal_steps'] == 0.0).all()
        assert summary['equal_seconds'].iloc[0] == 3.0

    def test_jump_run(self, tmp_path):
        ref = self._write(tmp_path, 'ref', [10, 20, 30], [0.5, 0.7, 0.8])
        jump = self._write(tmp_path, 'jump', [10, 20], [0.6, 0.85])
        summary = compare_runs([jump], ref).set_index('run')
        assert summary.loc['jump', 'first_reach_step'] == 20
        assert summary.loc['jump', 'delta_at_equal_steps'] == pytest.approx(0.15)
        assert 'acc_at_equal_seconds' not in summary.columns

    def test_disjoint_ranges(self, tmp_path):
        ref = self._write(tmp_path, 'ref', [10, 20], [0.5, 0.7])
        late = self._write(tmp_path, 'late', [30, 40], [0.6, 0.8])
        with pytest.raises(RangeError):
            compare_runs([late], ref)

    def test_export_with_comparison(self, tmp_path):
        ref = self._write(tmp_path, 'ref', [10, 20], [0.5, 0.7])
        jump = self._write(tmp_path, 'jump', [10, 20], [0.6, 0.8])
        summary = compare_runs([jump], ref, tmp_path / 'out')
        written = pd.read_csv(tmp_path / 'out' / 'summary.csv')
        assert list(written.columns) == list(summary.columns)
        assert read_curve(tmp_path / 'out' / 'jump.csv').frame['val_acc'].tolist() == [0.6, 0.8]

    def test_missing_column(self, tmp_path):
        ref = self._write(tmp_path, 'ref', [10], [0.5])
        bad = tmp_path / 'bad.csv'
        bad.write_text('step,loss\n10,0.3\n')
        with pytest.raises(ConfigError) as e:
            compare_runs([bad], ref)
        assert e.value.field == str(bad)


class TestVisualizer:

    def test_plots_written(self, linear_store, tmp_path):
        visualizer = EvolutionVisualizer(tmp_path)
        histogram = deviation_histogram(linear_store)
        paths = [
            visualizer.plot_histogram(histogram),
            visualizer.plot_trajectories(trajectories_frame(sample_trajectories(linear_store, histogram, 1, 0))),
            visualizer.plot_curves([_curve('ref', [10, 20], [0.5, 0.6])], jumps=[15]),
        ]
        for path in paths:
            assert path.exists() and path.stat().st_size > 0
