"""Dataset ingestion, synthetic generation, and satellite partitioning tests."""
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spacefl.data import (
    WriterDataset,
    load_leaf_femnist,
    partition_to_satellites,
    split_test_writers,
    synthetic_noniid,
)
from spacefl.fl_core import LocalDataset
from spacefl.orbital import SatelliteId


def write_leaf_shard(path, users):
    blob = {"users": list(users),
            "num_samples": [len(users[u]["y"]) for u in users],
            "user_data": users}
    path.write_text(json.dumps(blob))


class TestLeafLoading:
    def test_empty_directory_rejected(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_leaf_femnist(tmp_path)

    def test_single_writer_shard(self, tmp_path):
        (tmp_path / "all_data").mkdir()
        x = np.random.default_rng(0).uniform(0, 1, size=(10, 784)).tolist()
        write_leaf_shard(tmp_path / "all_data" / "s0.json",
                         {"w0": {"x": x, "y": [3] * 10}})
        writers = load_leaf_femnist(tmp_path)
        assert len(writers) == 1
        assert writers[0].writer_id == "w0"
        assert writers[0].samples.n == 10

    def test_features_clipped_to_unit_interval(self, tmp_path):
        write_leaf_shard(tmp_path / "s0.json",
                         {"w0": {"x": [[-1.0, 2.0]], "y": [0]}})
        writers = load_leaf_femnist(tmp_path)
        feats = writers[0].samples.features
        assert feats.min() >= 0.0 and feats.max() <= 1.0

    def test_out_of_range_label_rejected(self, tmp_path):
        write_leaf_shard(tmp_path / "s0.json",
                         {"w0": {"x": [[0.5]], "y": [62]}})
        with pytest.raises(ValueError, match="label"):
            load_leaf_femnist(tmp_path)

    def test_corrupt_shard_names_file(self, tmp_path):
        (tmp_path / "s0.json").write_text("{not json")
        with pytest.raises(ValueError, match="s0.json"):
            load_leaf_femnist(tmp_path)


class TestSyntheticNonIid:
    def test_same_seed_identical(self):
        a = synthetic_noniid(5, 10, seed=3)
        b = synthetic_noniid(5, 10, seed=3)
        for wa, wb in zip(a, b):
            assert wa.writer_id == wb.writer_id
            assert np.array_equal(wa.samples.features, wb.samples.features)
            assert np.array_equal(wa.samples.labels, wb.samples.labels)

    def test_low_skew_concentrates_labels(self):
        writers = synthetic_noniid(10, 10, skew=0.1, seed=0)
        def top_mass(w):
            counts = np.bincount(w.samples.labels, minlength=10)
            return counts.max() / counts.sum()
        assert any(top_mass(w) > 0.5 for w in writers)

    def test_high_skew_approaches_uniform(self):
        writers = synthetic_noniid(10, 10, skew=1000.0, seed=0,
                                   n_per_client=(3000, 3000))
        for w in writers:
            hist = np.bincount(w.samples.labels, minlength=10) / w.samples.n
            tv = 0.5 * np.abs(hist - 0.1).sum()
            assert tv < 0.1

    def test_sample_counts_within_bounds(self):
        writers = synthetic_noniid(20, 10, n_per_client=(200, 350), seed=1)
        assert all(200 <= w.samples.n <= 350 for w in writers)

    def test_invalid_bounds_rejected(self):
        with pytest.raises(ValueError):
            synthetic_noniid(5, 10, n_per_client=(50, 10))


class TestTestSplit:
    def test_disjoint_and_order_invariant(self):
        writers = synthetic_noniid(20, 10, seed=0)
        train1, test1 = split_test_writers(writers, seed=7)
        train2, test2 = split_test_writers(writers[::-1], seed=7)
        assert [w.writer_id for w in train1] == [w.writer_id for w in train2]
        assert np.array_equal(test1.features, test2.features)
        held = 20 - len(train1)
        assert held == 2  # 10% of 20 writers

    def test_all_writers_consumed_rejected(self):
        writers = synthetic_noniid(1, 10, seed=0)
        with pytest.raises(ValueError):
            split_test_writers(writers, frac=1.0)


class TestPartition:
    def _sats(self, n):
        return [SatelliteId(0, q) for q in range(n)]

    def test_single_satellite_single_writer(self):
        x = np.zeros((300, 4))
        writers = [WriterDataset("w0", LocalDataset(x, np.zeros(300, dtype=int)))]
        plan = partition_to_satellites(writers, self._sats(1), clip=(200, 350))
        assert plan.assignments[SatelliteId(0, 0)] == ("w0",)
        assert plan.sample_count(SatelliteId(0, 0)) == 300

    def test_counts_within_clip(self):
        writers = synthetic_noniid(40, 10, n_per_client=(200, 350), seed=2)
        sats = self._sats(20)
        plan = partition_to_satellites(writers, sats, clip=(200, 350), seed=2)
        assert all(200 <= plan.sample_count(s) <= 350 for s in sats)

    def test_deterministic_and_order_invariant(self):
        writers = synthetic_noniid(12, 10, seed=5)
        sats = self._sats(4)
        p1 = partition_to_satellites(writers, sats, seed=9)
        p2 = partition_to_satellites(writers[::-1], sats, seed=9)
        assert p1.assignments == p2.assignments

    def test_disjoint_assignment(self):
        writers = synthetic_noniid(12, 10, seed=5)
        plan = partition_to_satellites(writers, self._sats(4), seed=9)
        all_ids = [wid for ids in plan.assignments.values() for wid in ids]
        assert len(all_ids) == len(set(all_ids))

    def test_shortfall_error(self):
        x = np.zeros((50, 4))
        writers = [WriterDataset("w0", LocalDataset(x, np.zeros(50, dtype=int)))]
        with pytest.raises(ValueError, match="insufficient data"):
            partition_to_satellites(writers, self._sats(2), clip=(200, 350))

    @given(seed=st.integers(min_value=0, max_value=50))
    @settings(max_examples=15, deadline=None)
    def test_plan_stable_per_seed(self, seed):
        writers = synthetic_noniid(10, 6, seed=1)
        sats = self._sats(3)
        a = partition_to_satellites(writers, sats, seed=seed)
        b = partition_to_satellites(writers, sats, seed=seed)
        assert a.assignments == b.assignments
