from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from s2sl import nnet, s2s
from s2sl.datasets import Dataset, gen_gaussian_two_class
from s2sl.nnet import NetConfig, Network
from s2sl.numkit import RngStream, ShapeError
from s2sl.s2s import LabelCodec, ReferenceSet

CODEC = LabelCodec(2)


def two_class(n1, n2, d=2, seed=0):
    return gen_gaussian_two_class(d=d, n1=n1, n2=n2, separation=1.0, seed=seed)


class TestCodec:
    @pytest.mark.parametrize(
        "ci,ck,expected",
        [(0, 0, [0, 1, 0, 1]), (0, 1, [0, 1, 1, 0]), (1, 0, [1, 0, 0, 1]), (1, 1, [1, 0, 1, 0])],
    )
    def test_pair_listing(self, ci, ck, expected):
        assert s2s.encode_label_pair(CODEC, ci, ck).tolist() == expected

    def test_unknown_class(self):
        with pytest.raises(ValueError):
            s2s.encode_label_pair(CODEC, 0, 2)

    @pytest.mark.parametrize("k", [2, 3, 5])
    def test_round_trip(self, k):
        codec = LabelCodec(k)
        for c in range(k):
            block = codec.encode(c)
            assert block.sum() == 1
            assert codec.decode(block) == c


class TestBuildPairs:
    def test_one_plus_one(self):
        assert len(s2s.build_train_pairs(two_class(1, 1), CODEC)) == 4

    def test_sixty_sixty(self):
        assert len(s2s.build_train_pairs(two_class(60, 60), CODEC)) == 14400

    def test_two_plus_one_enumerated(self):
        paired = s2s.build_train_pairs(two_class(2, 1), CODEC)
        counts = Counter(tuple(row) for row in paired.targets.astype(int).tolist())
        assert counts == {(0, 1, 0, 1): 4, (0, 1, 1, 0): 2, (1, 0, 0, 1): 2, (1, 0, 1, 0): 1}

    def test_rows_are_concatenations_outer_major(self):
        ds = two_class(2, 2, d=3)
        paired = s2s.build_train_pairs(ds, CODEC)
        n = len(ds)
        for row, (a, b) in enumerate(paired.pairs):
            assert (a, b) == (row // n, row % n)
            np.testing.assert_array_equal(paired.inputs[row], np.r_[ds.features[a], ds.features[b]])
            np.testing.assert_array_equal(
                paired.targets[row], s2s.encode_label_pair(CODEC, ds.labels[a], ds.labels[b])
            )

    def test_empty_and_oversized(self):
        empty = Dataset(np.zeros((0, 2)), np.zeros(0, dtype=int), ["a", "b"])
        with pytest.raises(ValueError):
            s2s.build_train_pairs(empty, CODEC)
        with pytest.raises(ValueError, match="cap"):
            s2s.build_train_pairs(two_class(10, 10), CODEC, max_pairs=399)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 30), st.integers(1, 30))
    def test_pair_count_law(self, n1, n2):
        paired = s2s.build_train_pairs(two_class(n1, n2), CODEC)
        assert len(paired) == (n1 + n2) ** 2
        counts = Counter(map(tuple, paired.classes.tolist()))
        assert counts[(0, 0)] == n1 * n1
        assert counts[(0, 1)] == n1 * n2
        assert counts[(1, 0)] == n2 * n1
        assert counts[(1, 1)] == n2 * n2


class TestReferences:
    def test_all_train(self):
        ds = two_class(48, 48)
        refs = s2s.select_references(ds, "all_train", 0, RngStream(0))
        assert len(refs) == 96

    def test_stratified_even_split_and_replay(self):
        ds = two_class(20, 15)
        a = s2s.select_references(ds, "stratified_random", 10, RngStream(3))
        b = s2s.select_references(ds, "stratified_random", 10, RngStream(3))
        assert Counter(a.labels.tolist()) == {0: 5, 1: 5}
        assert np.array_equal(a.indices, b.indices)
        assert len(set(a.indices.tolist())) == 10
        np.testing.assert_array_equal(a.features, ds.features[a.indices])

    def test_odd_r_differs_by_at_most_one(self):
        refs = s2s.select_references(two_class(20, 15), "stratified_random", 7, RngStream(1))
        counts = Counter(refs.labels.tolist())
        assert abs(counts[0] - counts[1]) <= 1 and sum(counts.values()) == 7

    def test_stratified_rejects_too_few(self):
        with pytest.raises(ValueError, match="counts"):
            s2s.select_references(two_class(20, 3), "stratified_random", 10, RngStream(0))
        with pytest.raises(ValueError):
            s2s.select_references(two_class(20, 3), "stratified_random", 1, RngStream(0))


class TestTestInstances:
    def test_single_reference(self):
        refs = ReferenceSet([[3.0, 4.0]], [0])
        assert s2s.make_test_instances([1.0, 2.0], refs).tolist() == [[1.0, 2.0, 3.0, 4.0]]

    def test_test_sample_always_first(self, rng):
        refs = ReferenceSet(rng.gaussian(0, 1, (3, 4)), [0, 1, 0])
        t = rng.gaussian(0, 1, 4)
        inst = s2s.make_test_instances(t, refs)
        assert inst.shape == (3, 8)
        assert np.all(inst[:, :4] == t)

    def test_all_train_reference_count(self):
        ds = two_class(48, 48)
        refs = s2s.select_references(ds, "all_train", 0, RngStream(0))
        assert s2s.make_test_instances(ds.features[0], refs).shape == (96, 4)

    def test_perturbing_references_keeps_test_columns(self, rng):
        feats = rng.gaussian(0, 1, (5, 3))
        t = rng.gaussian(0, 1, 3)
        a = s2s.make_test_instances(t, ReferenceSet(feats, [0, 1, 0, 1, 0]))
        b = s2s.make_test_instances(t, ReferenceSet(feats + 10.0, [0, 1, 0, 1, 0]))
        assert np.array_equal(a[:, :3], b[:, :3])

    def test_width_mismatch(self):
        with pytest.raises(ShapeError):
            s2s.make_test_instances([1.0], ReferenceSet([[1.0, 2.0]], [0]))


def piecewise_net(block_rows):
    """d=1 net whose first output block equals ``block_rows[j]`` for reference value j+1.

    Hidden unit k computes relu(r - k) for r the reference feature; the
    output layer solves for the logits that reproduce each desired block.
    """
    r = len(block_rows)
    w1 = np.column_stack([np.zeros(r), np.ones(r)])
    b1 = -np.arange(r, dtype=float)
    hidden = np.maximum(np.arange(1, r + 1)[:, None] - np.arange(r)[None, :], 0.0)
    p = np.asarray(block_rows, dtype=float)
    logits = np.log(p / (1 - p))
    w_block = np.linalg.solve(hidden, logits).T
    w2 = np.vstack([w_block, np.zeros((2, r))])
    cfg = NetConfig(2, r, 4)
    return Network(w1, b1, w2, np.zeros(4), cfg)


class TestVoting:
    def test_strict_majority(self):
        blocks = np.array([[0.2, 0.8], [0.3, 0.7], [0.9, 0.1]])
        tally = s2s.tally_votes(blocks, CODEC)
        assert tally.votes == {0: 2, 1: 1} and tally.winner == 0

    def test_tie_broken_by_confidence(self):
        # class 0 (C1) is unit 1 of the block; summed: class 0 = 1.3, class 1 = 1.1
        rows = [[0.1, 0.4], [0.2, 0.5], [0.5, 0.2], [0.3, 0.2]]
        net = piecewise_net(rows)
        refs = ReferenceSet([[1.0], [2.0], [3.0], [4.0]], [0, 0, 1, 1])
        np.testing.assert_allclose(nnet.forward(net, s2s.make_test_instances([7.0], refs))[:, :2], rows)
        winner, tally = s2s.vote_decide(net, [7.0], refs, CODEC)
        assert tally.votes == {0: 2, 1: 2}
        assert tally.confidence[0] == pytest.approx(1.3)
        assert tally.confidence[1] == pytest.approx(1.1)
        assert winner == 0

    def test_full_tie_goes_to_lowest_class(self):
        blocks = np.array([[0.3, 0.6], [0.6, 0.3]])
        assert s2s.tally_votes(blocks, CODEC).winner == 0

    def test_unanimous(self):
        rows = [[0.9, 0.2], [0.7, 0.1], [0.6, 0.4]]
        winner, tally = s2s.vote_decide(piecewise_net(rows), [0.0], ReferenceSet([[1.0], [2.0], [3.0]], [0, 1, 0]), CODEC)
        assert winner == 1 and tally.votes == {0: 0, 1: 3} and tally.total == 3

    def test_dimension_mismatch(self, rng):
        net = nnet.init_network(NetConfig(6, 3, 4), rng)
        with pytest.raises(ShapeError):
            s2s.vote_decide(net, [1.0, 2.0], ReferenceSet([[1.0, 2.0]], [0]), CODEC)

    def test_batch_predict_matches_single(self, rng):
        ds = two_class(8, 8, d=3, seed=2)
        net = nnet.init_network(s2s.s2s_config(NetConfig(1, 5, 1), 3), rng)
        refs = s2s.select_references(ds, "stratified_random", 6, rng)
        batch = s2s.predict(net, ds.features, refs, CODEC)
        single = [s2s.vote_decide(net, x, refs, CODEC)[0] for x in ds.features]
        assert batch.tolist() == single


def test_train_s2s_learns_separable_data():
    ds = gen_gaussian_two_class(d=3, n1=15, n2=15, separation=4.0, seed=8)
    net, report = s2s.train_s2s(ds, NetConfig(1, 8, 1, epochs=30), RngStream(0))
    assert net.config.input_dim == 6 and net.config.output_dim == 4
    refs = s2s.select_references(ds, "stratified_random", 6, RngStream(1))
    assert np.mean(s2s.predict(net, ds.features, refs, CODEC) == ds.labels) > 0.9
