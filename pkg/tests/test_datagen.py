import time

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tdcrbench.datagen import (CSV_HEADER, Dataset, DatasetError, Workspace, build_error_windows, build_windows,
                               load_dataset, monte_carlo_collect, normalization, save_dataset, split, split_sizes,
                               window_indices)
from tdcrbench.kinematics import Pose, pose_error


def test_sample_count_and_timestamps():
    ds = monte_carlo_collect(1.0, 5.0, rng_seed=0)
    assert len(ds) == 5
    np.testing.assert_allclose(np.diff(ds.t), 0.2)


def test_invalid_duration():
    with pytest.raises(ValueError):
        monte_carlo_collect(0.0)


def test_measured_positions_inside_dome(small_dataset):
    ws = small_dataset.workspace
    P = small_dataset.measured[:, :3]
    assert np.all(np.hypot(P[:, 0], P[:, 2]) <= ws.radius)
    assert np.all((P[:, 1] >= ws.y_min) & (P[:, 1] <= ws.y_max))
    assert ws.y_max - ws.y_min == 45.0


def test_reproducible(small_dataset):
    again = split(monte_carlo_collect(60.0, 5.0, rng_seed=7), min_size=6)
    assert small_dataset.equals(again)
    other = monte_carlo_collect(60.0, 5.0, rng_seed=8)
    assert not np.array_equal(other.commands, small_dataset.commands)


def test_splits():
    assert split_sizes(20400) == (14280, 4080, 2040)
    assert split_sizes(10) == (7, 2, 1)
    assert split_sizes(2040) == (1428, 408, 204)


@given(st.integers(3, 5000))
def test_split_sizes_sum(n):
    assert sum(split_sizes(n)) == n


def test_split_too_small():
    ds = monte_carlo_collect(2.0, 5.0, rng_seed=0)
    with pytest.raises(ValueError):
        split(ds, min_size=5)


def test_windows_shapes_counts_and_oracle(small_dataset, rng):
    W = build_windows(small_dataset, 5)
    ranges = small_dataset.split_ranges()
    for name, (X, Y) in W.items():
        a, b = ranges[name]
        assert X.shape == (b - a - 4, 5, 12) and Y.shape == (b - a - 4, 6)
    X, Y = W["train"]
    a, _ = ranges["train"]
    for w in rng.integers(0, len(X), 20):
        e = a + w + 4
        for k in range(5):
            i = e - 4 + k
            np.testing.assert_array_equal(X[w, k, :6], small_dataset.measured[i])
            prev = small_dataset.commands[i - 1] if i > a else np.zeros(6)
            np.testing.assert_array_equal(X[w, k, 6:], prev)
        np.testing.assert_array_equal(Y[w], small_dataset.commands[e])
    # first window of the split zero-pads command(-1)
    np.testing.assert_array_equal(X[0, 0, 6:], 0)


def test_no_window_crosses_split(small_dataset):
    ranges = small_dataset.split_ranges()
    for name, ends in window_indices(small_dataset, 5).items():
        a, b = ranges[name]
        assert np.all(ends - 4 >= a) and np.all(ends < b)


def test_increment_targets(small_dataset):
    X, Y = build_windows(small_dataset, 5, "increment")["val"]
    a, _ = small_dataset.split_ranges()["val"]
    np.testing.assert_allclose(Y[3], small_dataset.commands[a + 7] - small_dataset.commands[a + 6])
    with pytest.raises(ValueError):
        build_windows(small_dataset, 5, "other")


def test_error_windows(small_dataset):
    X, Y = build_error_windows(small_dataset, 5)["train"]
    m = small_dataset.measured
    np.testing.assert_allclose(X[0, :6], pose_error(Pose.from_vector(m[5]), Pose.from_vector(m[4])))
    np.testing.assert_allclose(X[0, 24:], pose_error(Pose.from_vector(m[5]), Pose.from_vector(m[0])))
    np.testing.assert_allclose(Y[0], small_dataset.commands[5] - small_dataset.commands[4])


def test_normalization_flat_feature():
    X = np.ones((10, 3, 2))
    X[:, :, 1] = np.arange(30).reshape(10, 3)
    im, isd, om, osd = normalization(X, np.zeros((10, 2)))
    assert isd[0] == 1.0 and osd.tolist() == [1.0, 1.0]


def test_round_trip_bit_exact(small_dataset, tmp_path):
    path = save_dataset(small_dataset, tmp_path / "d.csv")
    assert path.read_text().splitlines()[0] == ",".join(CSV_HEADER)
    back = load_dataset(path)
    assert back.equals(small_dataset)
    assert back.metadata == small_dataset.metadata


def test_truncated_file_fails_checksum(small_dataset, tmp_path):
    path = save_dataset(small_dataset, tmp_path / "d.csv")
    path.write_bytes(path.read_bytes()[:-40])
    with pytest.raises(DatasetError, match="checksum"):
        load_dataset(path)


def test_version_mismatch(small_dataset, tmp_path):
    path = save_dataset(small_dataset, tmp_path / "d.csv")
    side = path.with_suffix(".json")
    side.write_text(side.read_text().replace('"version": 1', '"version": 99'))
    with pytest.raises(DatasetError, match="version"):
        load_dataset(path)


def test_full_scale_collection_and_coverage(tmp_path):
    ds = split(monte_carlo_collect(4080.0, 5.0, rng_seed=0))
    assert len(ds) == 20400 and ds.splits == (14280, 4080, 2040)
    assert ds.workspace.voxel_coverage(ds.measured[:, :3]) >= 0.6
    path = save_dataset(ds, tmp_path / "big.csv")
    t0 = time.perf_counter()
    assert load_dataset(path).equals(ds)
    assert time.perf_counter() - t0 < 1.0


def test_unsplit_dataset_has_no_ranges():
    ds = Dataset(np.zeros(1), np.zeros((1, 6)), np.zeros((1, 6)), np.zeros((1, 6)))
    with pytest.raises(DatasetError):
        ds.split_ranges()


def test_workspace_contains():
    ws = Workspace()
    assert ws.contains([0, 0, 0]) and not ws.contains([31, 0, 0]) and not ws.contains([0, 26, 0])
    assert ws.voxel_coverage(np.zeros((1, 3))) > 0
