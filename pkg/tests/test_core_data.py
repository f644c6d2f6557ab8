import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pifnet.core_data import (
    CsvSchema,
    Scaler,
    SeriesFrame,
    SynthSpec,
    fit_apply_scaler,
    join_features,
    load_csv,
    make_windows,
    read_feature_csv,
    synth_series,
    write_series_csv,
)
from pifnet.errors import (
    DataQualityError,
    FormatError,
    InsufficientDataError,
    ParameterError,
    SchemaError,
)

EPOCH = 1483228800  # 2017-01-01T00:00:00Z


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def hourly_rows(n, load_fn=lambda i: 10.0 + i, features_fn=None):
    rows = []
    for i in range(n):
        row = [EPOCH + 3600 * i, load_fn(i)]
        if features_fn:
            row += features_fn(i)
        rows.append(row)
    return rows


class TestLoadCsv:
    def test_basic_ingest(self, tmp_path):
        path = tmp_path / "data.csv"
        write_csv(path, ["timestamp", "load", "temp"],
                  hourly_rows(48, features_fn=lambda i: [float(i % 24)]))
        frame = load_csv(path, CsvSchema())
        assert frame.n_rows == 48
        assert frame.feature_names == ["temp"]
        assert frame.n_columns == 2
        assert frame.fill_counts == {}

    def test_iso_timestamps(self, tmp_path):
        path = tmp_path / "iso.csv"
        rows = [[f"2017-01-01T{h:02d}:00:00", 1.0 + h] for h in range(24)]
        write_csv(path, ["timestamp", "load"], rows)
        frame = load_csv(path, CsvSchema())
        assert frame.n_rows == 24
        assert frame.timestamps[0] == EPOCH

    def test_univariate_when_features_absent(self, tmp_path):
        path = tmp_path / "uni.csv"
        write_csv(path, ["timestamp", "load"], hourly_rows(10))
        frame = load_csv(path, CsvSchema())
        assert frame.n_columns == 1
        assert frame.features.shape == (10, 0)

    def test_single_missing_cell_interpolated(self, tmp_path):
        path = tmp_path / "gap.csv"
        rows = hourly_rows(10, features_fn=lambda i: [float(i)])
        rows[5][2] = ""  # row index 5, feature cell
        write_csv(path, ["timestamp", "load", "f"], rows)
        frame = load_csv(path, CsvSchema(), max_missing_fraction=0.2)
        assert frame.fill_counts == {"f": 1}
        assert frame.features[5, 0] == 0.5 * (frame.features[4, 0] + frame.features[6, 0])

    def test_missing_column_is_schema_error(self, tmp_path):
        path = tmp_path / "noload.csv"
        write_csv(path, ["timestamp", "power"], hourly_rows(5))
        with pytest.raises(SchemaError):
            load_csv(path, CsvSchema())
        with pytest.raises(SchemaError):
            load_csv(path, CsvSchema(load="power", features=["ghost"]))

    def test_duplicate_timestamps_rejected(self, tmp_path):
        path = tmp_path / "dup.csv"
        rows = hourly_rows(5)
        rows[3][0] = rows[2][0]
        write_csv(path, ["timestamp", "load"], rows)
        with pytest.raises(FormatError):
            load_csv(path, CsvSchema())

    def test_gap_rejected(self, tmp_path):
        path = tmp_path / "gap.csv"
        rows = hourly_rows(6)
        del rows[3]
        write_csv(path, ["timestamp", "load"], rows)
        with pytest.raises(FormatError):
            load_csv(path, CsvSchema())

    def test_too_many_missing_rejected(self, tmp_path):
        path = tmp_path / "holes.csv"
        rows = hourly_rows(10, features_fn=lambda i: [float(i)])
        for i in (1, 4, 7):
            rows[i][2] = "nan"
        write_csv(path, ["timestamp", "load", "f"], rows)
        with pytest.raises(DataQualityError):
            load_csv(path, CsvSchema())

    def test_order_idempotent(self, tmp_path, rng):
        rows = hourly_rows(30, features_fn=lambda i: [math.sin(i)])
        sorted_path = tmp_path / "sorted.csv"
        shuffled_path = tmp_path / "shuffled.csv"
        write_csv(sorted_path, ["timestamp", "load", "f"], rows)
        shuffled = [rows[i] for i in rng.permutation(len(rows))]
        write_csv(shuffled_path, ["timestamp", "load", "f"], shuffled)
        a = load_csv(sorted_path, CsvSchema())
        b = load_csv(shuffled_path, CsvSchema())
        assert np.array_equal(a.timestamps, b.timestamps)
        assert np.array_equal(a.load, b.load)
        assert np.array_equal(a.features, b.features)

    def test_round_trip_through_writer_is_bit_exact(self, tmp_path, rng):
        frame = synth_series(SynthSpec(n=40, spike_count=2), seed=3)
        path = tmp_path / "round.csv"
        write_series_csv(frame, path)
        again = load_csv(path, CsvSchema())
        assert np.array_equal(frame.load, again.load)
        assert np.array_equal(frame.features, again.features)
        assert np.array_equal(frame.timestamps, again.timestamps)


class TestJoinFeatures:
    def test_join_on_timestamp(self, tmp_path):
        base = tmp_path / "load.csv"
        write_csv(base, ["timestamp", "load"], hourly_rows(12))
        feats = tmp_path / "weather.csv"
        write_csv(feats, ["timestamp", "temp", "wind"],
                  [[EPOCH + 3600 * i, 20.0 + i, 3.0] for i in range(15)])
        frame = load_csv(base, CsvSchema())
        stamps, matrix, names = read_feature_csv(feats, "timestamp")
        joined = join_features(frame, stamps, matrix, names)
        assert joined.feature_names == ["temp", "wind"]
        assert joined.features[3, 0] == 23.0

    def test_missing_timestamps_rejected(self, tmp_path):
        base = tmp_path / "load.csv"
        write_csv(base, ["timestamp", "load"], hourly_rows(12))
        feats = tmp_path / "weather.csv"
        write_csv(feats, ["timestamp", "temp"],
                  [[EPOCH + 3600 * i, 20.0] for i in range(6)])
        frame = load_csv(base, CsvSchema())
        stamps, matrix, names = read_feature_csv(feats, "timestamp")
        with pytest.raises(DataQualityError):
            join_features(frame, stamps, matrix, names)


class TestMakeWindows:
    def test_counts(self):
        frame = synth_series(SynthSpec(n=8760, noise_std=0.0), seed=0)
        assert make_windows(frame, 24, 1).count == 8736

    def test_boundary_single_window(self):
        frame = synth_series(SynthSpec(n=25, noise_std=0.0), seed=0)
        ws = make_windows(frame, 24, 1)
        assert ws.count == 1

    def test_index_arithmetic(self):
        frame = synth_series(SynthSpec(n=30), seed=1)
        ws = make_windows(frame, 24, 1)
        assert ws.count == 6
        assert ws.targets[0, 0] == frame.load[24]
        assert np.array_equal(ws.inputs[2], frame.data_matrix[2:26])

    def test_windowing_is_content_preserving(self):
        frame = synth_series(SynthSpec(n=60), seed=2)
        ws = make_windows(frame, 8, 1)
        rebuilt = np.concatenate([ws.inputs[0, :, 0], ws.targets[:, 0]])
        assert np.array_equal(rebuilt, frame.load)

    def test_insufficient_data(self):
        frame = synth_series(SynthSpec(n=20), seed=0)
        with pytest.raises(InsufficientDataError):
            make_windows(frame, 24, 1)
        with pytest.raises(ParameterError):
            make_windows(frame, 0, 1)


class TestScaler:
    def test_hand_z_score(self):
        train = np.array([[1.0], [2.0], [3.0]])
        scaler, scaled = fit_apply_scaler(train, train)
        assert scaler.means[0] == 2.0
        assert abs(scaler.stds[0] - math.sqrt(2.0 / 3.0)) < 1e-12
        assert np.allclose(scaled.ravel(), [-1.2247, 0.0, 1.2247], atol=1e-4)

    def test_constant_column_flagged(self):
        train = np.full((5, 2), [3.0, 7.0])
        scaler, scaled = fit_apply_scaler(train, train)
        assert scaler.constant_mask.all()
        assert np.array_equal(scaled, np.zeros((5, 2)))
        assert np.array_equal(scaler.stds, [1.0, 1.0])

    def test_round_trip_identity(self, rng):
        data = rng.standard_normal((100, 5)) * 40 + 7
        scaler, scaled = fit_apply_scaler(data[:70], data)
        back = scaler.invert(scaled)
        assert np.max(np.abs(back - data) / np.maximum(1.0, np.abs(data))) < 1e-12

    def test_save_load_round_trip(self, tmp_path, rng):
        data = rng.standard_normal((30, 3))
        scaler, _ = fit_apply_scaler(data, data)
        scaler.save(tmp_path / "scaler.txt")
        loaded = Scaler.load(tmp_path / "scaler.txt")
        assert np.array_equal(loaded.means, scaler.means)
        assert np.array_equal(loaded.stds, scaler.stds)
        assert np.array_equal(loaded.constant_mask, scaler.constant_mask)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(min_value=2, max_value=40), st.integers(min_value=0, max_value=10_000))
    def test_invert_apply_identity_property(self, n, seed):
        data = np.random.default_rng(seed).standard_normal((n, 3)) * 1e3
        scaler, scaled = fit_apply_scaler(data, data)
        assert np.max(np.abs(scaler.invert(scaled) - data)
                      / np.maximum(1.0, np.abs(data))) < 1e-12


class TestSynthSeries:
    def test_deterministic(self):
        spec = SynthSpec(n=200, spike_count=5)
        a = synth_series(spec, seed=9)
        b = synth_series(spec, seed=9)
        assert np.array_equal(a.load, b.load)
        assert np.array_equal(a.features, b.features)
        assert not np.array_equal(a.load, synth_series(spec, seed=10).load)

    def test_noiseless_envelope(self):
        spec = SynthSpec(n=240, daily_amplitude=3.0, noise_std=0.0, spike_count=0)
        frame = synth_series(spec, seed=0)
        assert abs(frame.load.max() - 13.0) < 1e-9
        assert abs(frame.load.min() - 7.0) < 1e-9

    def test_spikes_exceed_envelope(self):
        spec = SynthSpec(n=2000, daily_amplitude=3.0, noise_std=0.1,
                         spike_count=10, spike_magnitude=8.0, offset=10.0)
        frame = synth_series(spec, seed=21)
        envelope = 3.0 * (spec.offset + spec.daily_amplitude)
        assert int((frame.load > envelope).sum()) == 10

    def test_feature_layout(self):
        frame = synth_series(SynthSpec(n=50), seed=0)
        assert frame.feature_names == ["drive_main", "drive_lag", "noise_only"]
        assert frame.features.shape == (50, 3)


def test_series_frame_invariants():
    with pytest.raises(FormatError):
        SeriesFrame(timestamps=np.array([0, 3600, 3600]), load=np.zeros(3),
                    features=np.zeros((3, 0)), feature_names=[])
    with pytest.raises(FormatError):
        SeriesFrame(timestamps=np.array([0, 3600, 10800]), load=np.zeros(3),
                    features=np.zeros((3, 0)), feature_names=[])
    with pytest.raises(FormatError):
        SeriesFrame(timestamps=np.array([0, 3600]), load=np.array([1.0, np.nan]),
                    features=np.zeros((2, 0)), feature_names=[])
