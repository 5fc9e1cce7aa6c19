from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import stats

from feddct.core import IID, derive_stream
from feddct.dataset import InsufficientSamples, export_shards_csv, generate_synthetic, partition
from feddct.model import evaluate, init_model, train_client


def make(seed=0, spc=600, tpc=100):
    return generate_synthetic(10, 32, spc, derive_stream(seed, "partition", 0), test_per_class=tpc)


def test_shape_and_balance():
    data = make()
    assert data.num_train == 6000
    assert data.x_train.shape == (6000, 32)
    assert np.array_equal(np.bincount(data.y_train), np.full(10, 600))
    assert np.array_equal(np.bincount(data.y_test), np.full(10, 100))
    assert not set(data.train_idx) & set(data.test_idx)


def test_generation_is_deterministic():
    a, b = make(5), make(5)
    assert np.array_equal(a.features, b.features)
    assert not np.array_equal(a.features, make(6).features)


def test_central_training_beats_090():
    data = make()
    model = init_model(10, 32, derive_stream(0, "model_init"))
    rng = np.random.default_rng(0)
    for _ in range(5):
        model = train_client(model, data.x_train, data.y_train, 1, 10, 0.001, rng)
    assert evaluate(model, data.x_test, data.y_test) > 0.90


def check_disjoint_cover(data, shards):
    all_idx = np.concatenate([s.indices for s in shards])
    assert len(all_idx) == len(set(all_idx.tolist()))
    assert set(all_idx.tolist()) == set(data.train_idx.tolist())


def test_iid_shards():
    data = make()
    shards = partition(data, 50, IID, derive_stream(0, "partition", 1))
    check_disjoint_cover(data, shards)
    for s in shards:
        assert s.num_samples == 120
        assert np.all(np.abs(np.bincount(s.y, minlength=10) - 12) <= 1)


@pytest.mark.parametrize("frac", [0.3, 0.5, 0.7, 1.0])
def test_master_fraction(frac):
    data = make()
    shards = partition(data, 50, frac, derive_stream(1, "partition", 1))
    check_disjoint_cover(data, shards)
    for s in shards:
        n_master = int(np.sum(s.y == s.master_class))
        assert abs(n_master - frac * s.num_samples) <= 1
    assert sorted(np.bincount([s.master_class for s in shards])) == [5] * 10


def test_point_seven_gives_84_of_120():
    shards = partition(make(), 50, 0.7, derive_stream(2, "partition", 1))
    assert all(int(np.sum(s.y == s.master_class)) == math.ceil(0.7 * 120) == 84 for s in shards)


def test_low_fraction_is_iid_like():
    # per-shard label histograms pooled over seeds: compare to iid with a chi-square homogeneity test
    data = make()
    low, iid = np.zeros((10,)), np.zeros((10,))
    pvals = []
    for seed in range(100):
        a = partition(data, 50, 0.1, derive_stream(seed, "partition", 1))
        b = partition(data, 50, IID, derive_stream(seed, "partition", 1))
        # label counts of client 0 relative to its master class
        ha = np.roll(np.bincount(a[0].y, minlength=10), -a[0].master_class)
        hb = np.roll(np.bincount(b[0].y, minlength=10), -b[0].master_class)
        low += ha
        iid += hb
        pvals.append(stats.chisquare(ha, np.full(10, ha.sum() / 10)).pvalue)
    _, p, _, _ = stats.chi2_contingency(np.stack([low, iid]))
    assert p > 0.01
    # a master-heavy shard would be rejected almost always
    assert np.mean(np.array(pvals) < 0.05) < 0.2


def test_insufficient_samples():
    data = make(spc=10, tpc=1)
    with pytest.raises(InsufficientSamples):
        partition(data, 5, 1.0, derive_stream(0, "partition", 1))


def test_partition_is_deterministic():
    data = make()
    a = partition(data, 50, 0.7, derive_stream(3, "partition", 1))
    b = partition(data, 50, 0.7, derive_stream(3, "partition", 1))
    assert all(np.array_equal(x.indices, y.indices) for x, y in zip(a, b))


def test_export_csv(tmp_path):
    data = make()
    shards = partition(data, 50, 0.7, derive_stream(0, "partition", 1))
    path = tmp_path / "shards.csv"
    export_shards_csv(shards, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "client_id,sample_index,label"
    assert len(lines) == 6001
