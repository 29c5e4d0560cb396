import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import flat_dataset
from insideout.errors import SplitError
from insideout.splits import (
    SplitMode,
    SplitSpec,
    load_split,
    make_split,
    save_split,
    split_by_usage,
    split_stratified,
)

BALANCED_700 = [100] * 7


def labels_from_counts(counts):
    return np.concatenate([np.full(c, k, dtype=np.int64) for k, c in enumerate(counts)])


class TestSpec:
    def test_ratios_must_sum_to_one(self):
        with pytest.raises(SplitError, match="sum to 1.0"):
            SplitSpec(ratios=(0.8, 0.1, 0.2))

    def test_ratios_must_be_positive(self):
        with pytest.raises(SplitError, match="positive"):
            SplitSpec(ratios=(1.0, 0.0, 0.0))

    def test_usage_mode_ignores_ratios(self):
        SplitSpec(mode=SplitMode.UsageColumn, ratios=(0.0, 0.0, 0.0))


class TestStratified:
    def test_exact_divisibility(self):
        ds = flat_dataset(labels_from_counts(BALANCED_700))
        split = split_stratified(ds, SplitSpec(ratios=(0.8, 0.1, 0.1), seed=0))
        for part, expected in ((split.train, 80), (split.val, 10), (split.test, 10)):
            counts = np.bincount(ds.labels[part], minlength=7)
            assert (counts == expected).all()

    def test_deterministic_for_fixed_seed(self):
        ds = flat_dataset(labels_from_counts(BALANCED_700))
        spec = SplitSpec(ratios=(0.8, 0.1, 0.1), seed=17)
        a = split_stratified(ds, spec)
        b = split_stratified(ds, spec)
        assert np.array_equal(a.train, b.train)
        assert np.array_equal(a.val, b.val)
        assert np.array_equal(a.test, b.test)

    def test_different_seeds_differ(self):
        ds = flat_dataset(labels_from_counts([50] * 7))
        a = split_stratified(ds, SplitSpec(ratios=(0.8, 0.1, 0.1), seed=1))
        b = split_stratified(ds, SplitSpec(ratios=(0.8, 0.1, 0.1), seed=2))
        assert not np.array_equal(a.train, b.train)

    def test_class_smaller_than_partition_count_errors(self):
        ds = flat_dataset(labels_from_counts([1] * 7))
        with pytest.raises(SplitError, match="class Anger has 1 samples, fewer than 3"):
            split_stratified(ds, SplitSpec(ratios=(0.34, 0.33, 0.33), seed=0))

    def test_wrong_mode_rejected(self):
        ds = flat_dataset(labels_from_counts(BALANCED_700))
        with pytest.raises(SplitError, match="StratifiedRandom"):
            split_stratified(ds, SplitSpec(mode=SplitMode.UsageColumn))

    @settings(max_examples=40)
    @given(
        counts=st.lists(st.integers(3, 150), min_size=7, max_size=7),
        ratios=st.sampled_from([(0.8, 0.1, 0.1), (0.7, 0.15, 0.15), (0.34, 0.33, 0.33)]),
        seed=st.integers(0, 2**32 - 1),
    )
    def test_partition_property(self, counts, ratios, seed):
        """Union of index lists is a permutation of 0..N-1."""
        ds = flat_dataset(np.random.default_rng(seed).permutation(labels_from_counts(counts)))
        split = split_stratified(ds, SplitSpec(ratios=ratios, seed=seed))
        merged = np.concatenate([split.train, split.val, split.test])
        assert sorted(merged.tolist()) == list(range(len(ds)))

    @settings(max_examples=40)
    @given(
        counts=st.lists(st.integers(3, 300), min_size=7, max_size=7),
        seed=st.integers(0, 2**32 - 1),
    )
    def test_stratification_within_one_sample(self, counts, seed):
        """Each class stays within one sample of exact proportionality everywhere."""
        ds = flat_dataset(np.random.default_rng(seed).permutation(labels_from_counts(counts)))
        split = split_stratified(ds, SplitSpec(ratios=(0.8, 0.1, 0.1), seed=seed))
        n = len(ds)
        for part in (split.train, split.val, split.test):
            part_counts = np.bincount(ds.labels[part], minlength=7)
            for c in range(7):
                exact = len(part) * counts[c] / n
                assert abs(part_counts[c] - exact) <= 1 + 1e-9


class TestUsageSplit:
    def test_three_tags_partition_exactly(self):
        ds = flat_dataset([0, 1, 2], usages=[0, 1, 2])
        split = split_by_usage(ds)
        assert split.train.tolist() == [0]
        assert split.val.tolist() == [1]
        assert split.test.tolist() == [2]

    def test_missing_tag_errors(self):
        ds = flat_dataset([0, 1], usages=[0, 0])
        with pytest.raises(SplitError, match="PublicTest partition empty"):
            split_by_usage(ds)

    def test_sizes_cover_dataset(self, fer_csv):
        from insideout.dataset import parse_fer_csv

        ds = parse_fer_csv(fer_csv)
        split = split_by_usage(ds)
        assert len(split.train) + len(split.val) + len(split.test) == len(ds)

    def test_make_split_dispatch(self):
        ds = flat_dataset([0, 1, 2], usages=[0, 1, 2])
        split = make_split(ds, SplitSpec(mode=SplitMode.UsageColumn))
        assert split.spec.mode is SplitMode.UsageColumn


class TestPersistence:
    def test_save_load_round_trip(self, tmp_path):
        ds = flat_dataset(labels_from_counts([10] * 7), digest="a" * 64)
        split = split_stratified(ds, SplitSpec(ratios=(0.8, 0.1, 0.1), seed=3))
        path = tmp_path / "split.json"
        save_split(split, path)
        loaded = load_split(path)
        assert np.array_equal(loaded.train, split.train)
        assert np.array_equal(loaded.val, split.val)
        assert np.array_equal(loaded.test, split.test)
        assert loaded.spec == split.spec
        assert loaded.dataset_digest == "a" * 64
        assert loaded.digest() == split.digest()

    def test_load_missing_file(self, tmp_path):
        with pytest.raises(SplitError, match="not found"):
            load_split(tmp_path / "nope.json")

    def test_load_malformed(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"mode": "stratified_random"}')
        with pytest.raises(SplitError, match="malformed"):
            load_split(path)
