"""Simultaneous two-sample (s2s) representation, training and voting.

Training rows pair every sample with every sample (self-pairs included),
so ``N`` samples give ``N**2`` rows of width ``2d``. Targets concatenate
the one-hot blocks of both classes. At test time a sample ``t`` is paired
as ``[t, r]`` with each of ``R`` labelled reference samples; each pairing
casts one vote for the argmax of the first output block.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING

import numpy as np

from . import nnet
from .numkit import RngStream, ShapeError, as_matrix, as_vector

if TYPE_CHECKING:
    from .datasets import Dataset

MAX_PAIRS = 10**6
REF_POLICIES = ("stratified_random", "all_train", "custom")


class LabelCodec:
    """Maps class ids to one-hot output blocks and back.

    Block position is reversed relative to the class id, so for two classes
    class 0 encodes as ``[0, 1]`` and class 1 as ``[1, 0]``.
    """

    def __init__(self, num_classes: int = 2):
        if num_classes < 2:
            raise ValueError(f"need at least two classes, got {num_classes}")
        self.num_classes = int(num_classes)

    def __repr__(self):
        return f"LabelCodec(num_classes={self.num_classes})"

    def _check(self, c):
        if not (isinstance(c, (int, np.integer)) and 0 <= c < self.num_classes):
            raise ValueError(f"unknown class id {c!r} (codec has {self.num_classes} classes)")

    def encode(self, c: int) -> np.ndarray:
        self._check(c)
        block = np.zeros(self.num_classes)
        block[self.num_classes - 1 - int(c)] = 1.0
        return block

    def decode(self, block) -> int:
        """Class id of the largest unit in ``block``."""
        block = np.asarray(block)
        if block.shape != (self.num_classes,):
            raise ShapeError(f"block has shape {block.shape}, expected ({self.num_classes},)")
        return self.num_classes - 1 - int(np.argmax(block))

    def block_index(self, c: int) -> int:
        """Output unit that is hot for class ``c``."""
        self._check(c)
        return self.num_classes - 1 - int(c)


def encode_label_pair(codec: LabelCodec, ci: int, ck: int) -> np.ndarray:
    return np.concatenate([codec.encode(ci), codec.encode(ck)])


@dataclass(frozen=True)
class PairedSet:
    inputs: np.ndarray
    targets: np.ndarray
    # (first row, second row) indices into the source dataset
    pairs: np.ndarray
    # (first class, second class) for each row
    classes: np.ndarray

    def __len__(self):
        return self.inputs.shape[0]


def build_train_pairs(dataset: "Dataset", codec: LabelCodec, max_pairs: int = MAX_PAIRS) -> PairedSet:
    """Every ordered pair ``(a, b)`` of samples, outer index ``a`` major."""
    x = dataset.features
    y = np.asarray(dataset.labels, dtype=np.int64)
    n = x.shape[0]
    if n == 0:
        raise ValueError("cannot build pairs from an empty dataset")
    if n * n > max_pairs:
        raise ValueError(f"{n} samples would give {n * n} pairs, above the cap of {max_pairs}")
    for c in np.unique(y):
        codec._check(int(c))
    a = np.repeat(np.arange(n), n)
    b = np.tile(np.arange(n), n)
    inputs = np.hstack([x[a], x[b]])
    blocks = np.stack([codec.encode(c) for c in range(codec.num_classes)])
    targets = np.hstack([blocks[y[a]], blocks[y[b]]])
    return PairedSet(
        inputs=inputs,
        targets=targets,
        pairs=np.column_stack([a, b]),
        classes=np.column_stack([y[a], y[b]]),
    )


@dataclass(frozen=True)
class ReferenceSet:
    features: np.ndarray
    labels: np.ndarray
    policy: str = "custom"
    # row indices into the training set the references were taken from
    indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __post_init__(self):
        feats = as_matrix(self.features, name="reference features")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=np.int64))
        if feats.shape[0] < 1:
            raise ValueError("reference set must hold at least one sample")
        if self.labels.shape != (feats.shape[0],):
            raise ShapeError(f"{feats.shape[0]} reference rows but {self.labels.size} labels")
        if self.policy not in REF_POLICIES:
            raise ValueError(f"unknown reference policy {self.policy!r}")

    def __len__(self):
        return self.features.shape[0]


def select_references(
    train: "Dataset", policy: str, r: int, rng: RngStream, num_classes: int | None = None
) -> ReferenceSet:
    """Pick reference samples from the training set.

    ``stratified_random`` spreads ``r`` as evenly as possible over the
    classes (earlier class ids take the remainder) and samples each class
    without replacement. ``all_train`` returns every training row.
    """
    y = np.asarray(train.labels, dtype=np.int64)
    if policy == "all_train":
        idx = np.arange(len(y))
    elif policy == "stratified_random":
        k = num_classes or train.num_classes
        if r < k:
            raise ValueError(f"stratified references need R >= {k} classes, got R={r}")
        if r > len(y):
            raise ValueError(f"R={r} exceeds the {len(y)} training samples")
        quota = [r // k + (1 if c < r % k else 0) for c in range(k)]
        picked = []
        for c in range(k):
            members = np.flatnonzero(y == c)
            if quota[c] > members.size:
                counts = {ci: int(np.sum(y == ci)) for ci in range(k)}
                raise ValueError(
                    f"class {c} needs {quota[c]} references but has {members.size} "
                    f"(per-class counts {counts})"
                )
            picked.append(members[rng.choice(members.size, quota[c])])
        idx = np.concatenate(picked)
    else:
        raise ValueError(f"unknown reference policy {policy!r}")
    return ReferenceSet(features=train.features[idx], labels=y[idx], policy=policy, indices=idx)


def make_test_instances(test_x, refs: ReferenceSet) -> np.ndarray:
    """Rows ``[test_x, r_j]`` for every reference ``r_j``."""
    t = as_vector(test_x, name="test sample")
    if t.shape[0] != refs.features.shape[1]:
        raise ShapeError(
            f"test sample has {t.shape[0]} features, references have {refs.features.shape[1]}"
        )
    return np.hstack([np.broadcast_to(t, refs.features.shape), refs.features])


@dataclass
class VoteTally:
    votes: dict[int, int]
    confidence: dict[int, float]
    winner: int

    @property
    def total(self) -> int:
        return sum(self.votes.values())


def tally_votes(test_blocks: np.ndarray, codec: LabelCodec) -> VoteTally:
    """Hard-vote over rows of first-block outputs.

    Ties on vote count go to the larger summed block score of the tied
    classes, then to the lowest class id.
    """
    k = codec.num_classes
    decisions = [codec.decode(row) for row in test_blocks]
    votes = {c: 0 for c in range(k)}
    votes.update(Counter(decisions))
    confidence = {c: float(test_blocks[:, codec.block_index(c)].sum()) for c in range(k)}
    winner = max(range(k), key=lambda c: (votes[c], confidence[c], -c))
    return VoteTally(votes=votes, confidence=confidence, winner=winner)


def vote_decide(net: nnet.Network, test_x, refs: ReferenceSet, codec: LabelCodec):
    """Classify one test sample by voting over its reference pairings."""
    k = codec.num_classes
    d = refs.features.shape[1]
    if net.config.output_dim != 2 * k or net.config.input_dim != 2 * d:
        raise ShapeError(
            f"network ({net.config.input_dim} in, {net.config.output_dim} out) does not fit "
            f"d={d}, K={k}"
        )
    outputs = nnet.forward(net, make_test_instances(test_x, refs))
    tally = tally_votes(outputs[:, :k], codec)
    return tally.winner, tally


def predict(net: nnet.Network, test_x, refs: ReferenceSet, codec: LabelCodec) -> np.ndarray:
    """Vote-decided class for every row of ``test_x``.

    All ``n * R`` pairings go through the network in one batch.
    """
    tx = as_matrix(test_x, name="test samples")
    k = codec.num_classes
    n, d = tx.shape
    r = len(refs)
    if net.config.output_dim != 2 * k or net.config.input_dim != 2 * d or refs.features.shape[1] != d:
        raise ShapeError(
            f"network ({net.config.input_dim} in, {net.config.output_dim} out) does not fit "
            f"d={d}, K={k}"
        )
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    inst = np.hstack([np.repeat(tx, r, axis=0), np.tile(refs.features, (n, 1))])
    blocks = nnet.forward(net, inst)[:, :k].reshape(n, r, k)
    return np.array([tally_votes(b, codec).winner for b in blocks], dtype=np.int64)


def s2s_config(base: nnet.NetConfig, d: int, num_classes: int = 2) -> nnet.NetConfig:
    """Paired-input configuration: 2d inputs, 2K sigmoid outputs, BCE."""
    return replace(
        base,
        input_dim=2 * d,
        output_dim=2 * num_classes,
        output_activation="sigmoid",
        loss="bce",
    )


def train_s2s(
    train: "Dataset", base: nnet.NetConfig, rng: RngStream, codec: LabelCodec | None = None
) -> tuple[nnet.Network, nnet.TrainReport]:
    codec = codec or LabelCodec(train.num_classes)
    paired = build_train_pairs(train, codec)
    config = s2s_config(base, train.features.shape[1], codec.num_classes)
    net = nnet.init_network(config, rng.child(0))
    return nnet.train(net, paired.inputs, paired.targets, rng.child(1))
