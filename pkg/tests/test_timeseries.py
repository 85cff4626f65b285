import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from forecast_hpo.timeseries import (
    DataError,
    SyntheticSpec,
    dataset_from_arrays,
    generate_synthetic,
    ingest_long_csv,
    load_manifest,
    split_three_way,
    tuning_split,
    write_long_csv,
    write_manifest,
)


def write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_ingest_three_rows_single_item(tmp_path):
    path = write(tmp_path, "item_id,timestamp,target\na,2021-01-01,1\na,2021-01-02,2\na,2021-01-03,3\n")
    ds = ingest_long_csv(path)
    assert len(ds) == 1
    assert ds.freq == "daily"
    assert ds.seasonality_m == 7
    np.testing.assert_array_equal(ds.items[0].values, [1, 2, 3])
    assert ds.imputed_points == 0


def test_ingest_duplicate_names_the_pair(tmp_path):
    path = write(tmp_path, "item_id,timestamp,target\na,2021-01-01,1\na,2021-01-01,2\n")
    with pytest.raises(DataError, match=r"data.csv:3: duplicate .*\(a, 2021-01-01"):
        ingest_long_csv(path)


def test_ingest_gap_is_forward_filled_and_counted(tmp_path):
    # hand-built fixture: item b skips 2021-01-03
    text = (
        "item_id,timestamp,target\n"
        "a,2021-01-01,1\na,2021-01-02,2\na,2021-01-03,3\n"
        "b,2021-01-01,10\nb,2021-01-02,20\nb,2021-01-04,40\n"
    )
    ds = ingest_long_csv(write(tmp_path, text))
    assert ds.imputed_points == 1
    np.testing.assert_array_equal(ds.items[1].values, [10, 20, 20, 40])
    np.testing.assert_array_equal(ds.items[0].values, [1, 2, 3])


def test_ingest_leading_missing_value_is_zero_filled(tmp_path):
    text = "item_id,timestamp,target\na,2021-01-01,\na,2021-01-02,5\na,2021-01-03,\n"
    ds = ingest_long_csv(write(tmp_path, text))
    np.testing.assert_array_equal(ds.items[0].values, [0, 5, 5])
    assert ds.imputed_points == 2


def test_ingest_malformed_row_reports_line(tmp_path):
    text = "item_id,timestamp,target\na,2021-01-01,1\na,2021-01-02,oops\n"
    with pytest.raises(DataError, match=r":3: bad target"):
        ingest_long_csv(write(tmp_path, text))
    with pytest.raises(DataError, match=r":2: expected 3 fields"):
        ingest_long_csv(write(tmp_path, "item_id,timestamp,target\na,2021-01-01\n", "short.csv"))


def test_ingest_rejects_mixed_frequencies(tmp_path):
    text = (
        "item_id,timestamp,target\n"
        "a,2021-01-01T00:00:00,1\na,2021-01-02T00:00:00,2\n"
        "b,2021-01-01T00:00:00,1\nb,2021-01-01T05:00:00,2\n"
    )
    with pytest.raises(DataError):
        ingest_long_csv(write(tmp_path, text), freq="daily")


def test_ingest_custom_schema(tmp_path):
    text = "sku,ts,qty\nx,2021-01-01T00:00:00,1\nx,2021-01-01T01:00:00,2\n"
    ds = ingest_long_csv(write(tmp_path, text), {"item_id": "sku", "timestamp": "ts", "target": "qty"})
    assert ds.freq == "hourly" and ds.seasonality_m == 24


def test_manifest_round_trip(tmp_path):
    ds = generate_synthetic(SyntheticSpec(n_items=2, n_steps=30, horizon_k=5), 3)
    write_long_csv(ds, tmp_path / "d.csv")
    write_manifest(ds, "d.csv", tmp_path / "m.json")
    back = load_manifest(tmp_path / "m.json")
    assert (back.name, back.horizon_k, back.seasonality_m, back.freq) == (ds.name, 5, 7, "daily")
    for a, b in zip(ds.items, back.items):
        np.testing.assert_array_equal(a.values, b.values)


def test_split_length_12_k_4():
    split = split_three_way(dataset_from_arrays([np.arange(1, 13)], horizon_k=4))
    np.testing.assert_array_equal(split.train.items[0].values, [1, 2, 3, 4])
    np.testing.assert_array_equal(split.test.items[0].values, [5, 6, 7, 8])
    np.testing.assert_array_equal(split.validation.items[0].values, [9, 10, 11, 12])


def test_split_too_short_names_item():
    with pytest.raises(DataError, match="'item_000'.*11 < 3"):
        split_three_way(dataset_from_arrays([np.arange(11)], horizon_k=4))


def test_split_covid_death_shape():
    # 212 daily steps, 30-day horizon
    split = split_three_way(dataset_from_arrays([np.arange(1, 213)], horizon_k=30))
    assert split.train.items[0].values[[0, -1]].tolist() == [1, 152]
    assert split.test.items[0].values[[0, -1]].tolist() == [153, 182]
    assert split.validation.items[0].values[[0, -1]].tolist() == [183, 212]


@pytest.mark.parametrize("length,k,fit_end", [(152, 30, 122), (8, 4, 4)])
def test_tuning_split(length, k, fit_end):
    fit, hold = tuning_split(dataset_from_arrays([np.arange(1, length + 1)], horizon_k=k))
    assert fit.items[0].values[-1] == fit_end
    assert hold.items[0].values.tolist() == list(range(fit_end + 1, length + 1))


def test_tuning_split_too_short():
    with pytest.raises(DataError):
        tuning_split(dataset_from_arrays([np.arange(7)], horizon_k=4))


def test_split_timestamps_follow_values():
    ds = generate_synthetic(SyntheticSpec(n_items=1, n_steps=30, horizon_k=5), 0)
    split = split_three_way(ds)
    assert split.validation.items[0].start == ds.items[0].timestamps()[25]


def test_synthetic_is_deterministic():
    spec = SyntheticSpec(n_items=3, n_steps=40, horizon_k=5)
    a, b = generate_synthetic(spec, 7), generate_synthetic(spec, 7)
    for x, y in zip(a.items, b.items):
        np.testing.assert_array_equal(x.values, y.values)
    c = generate_synthetic(spec, 8)
    assert not np.array_equal(a.items[0].values, c.items[0].values)


def test_synthetic_pure_trend():
    spec = SyntheticSpec(n_items=1, n_steps=12, horizon_k=4, level=0.0, trend_slope=1.0, seasonal_amplitude=0.0, noise_std=0.0)
    np.testing.assert_array_equal(generate_synthetic(spec, 0).items[0].values, np.arange(12))


def test_synthetic_seasonal_autocorrelation():
    m = 8
    spec = SyntheticSpec(n_items=1, n_steps=400, horizon_k=8, seasonality_m=m, seasonal_amplitude=2.0, noise_std=0.5)
    z = generate_synthetic(spec, 1).items[0].values
    z = z - z.mean()

    def acf(lag):
        return np.dot(z[:-lag], z[lag:]) / np.dot(z, z)

    assert acf(m) > acf(m // 2)
    assert acf(m) > 0.5


def test_synthetic_too_short():
    with pytest.raises(DataError):
        generate_synthetic(SyntheticSpec(n_steps=20, horizon_k=7), 0)


lengths_and_k = st.integers(1, 10).flatmap(lambda k: st.tuples(st.integers(3 * k, 3 * k + 40), st.just(k)))


@settings(max_examples=60, deadline=None)
@given(lengths_and_k, st.integers(0, 10_000))
def test_split_partitions_item(lk, seed):
    n, k = lk
    z = np.random.default_rng(seed).normal(size=n)
    split = split_three_way(dataset_from_arrays([z], horizon_k=k))
    parts = [split.train.items[0].values, split.test.items[0].values, split.validation.items[0].values]
    np.testing.assert_array_equal(np.concatenate(parts), z)
    assert len(parts[1]) == len(parts[2]) == k


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 10).flatmap(lambda k: st.tuples(st.integers(4 * k, 4 * k + 40), st.just(k))))
def test_nested_splits_are_disjoint_contiguous_exhaustive(lk):
    n, k = lk
    split = split_three_way(dataset_from_arrays([np.arange(n, dtype=float)], horizon_k=k))
    fit, hold = tuning_split(split.train)
    ranges = [
        fit.items[0].values,
        hold.items[0].values,
        split.test.items[0].values,
        split.validation.items[0].values,
    ]
    # values are the indices themselves, so concatenation must be 0..n-1 in order
    np.testing.assert_array_equal(np.concatenate(ranges), np.arange(n))


@settings(max_examples=25, deadline=None)
@given(st.lists(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=15), min_size=1, max_size=4))
def test_ingest_round_trip_is_bit_exact(tmp_path_factory, arrays):
    ds = dataset_from_arrays(arrays, horizon_k=1)
    path = tmp_path_factory.mktemp("rt") / "d.csv"
    write_long_csv(ds, path)
    back = ingest_long_csv(path, freq="daily")
    assert back.item_ids == ds.item_ids
    for a, b in zip(ds.items, back.items):
        assert a.values.tobytes() == b.values.tobytes()
