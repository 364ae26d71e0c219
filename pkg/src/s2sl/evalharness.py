"""Cross-validated comparison of s2sL against a conventional MLP.

For every fold and training-data proportion the same stratified subset of
the training fold feeds both methods. Each (fold, proportion, method) work
item draws from its own child stream of the master seed, so the report is
identical whether items run sequentially or in a process pool.
"""

from __future__ import annotations

import csv
import io
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import nnet, s2s
from .datasets import Dataset, DataError, fit_normalizer
from .numkit import RngStream

METHODS = ("s2sl", "mlp")
METHOD_LABELS = {"s2sl": "s2sL", "mlp": "MLP"}
CSV_COLUMNS = ("task", "method", "proportion", "fold", "accuracy", "f1", "tp", "fp", "fn", "tn", "seed")

# child-stream slots under the master seed
_FOLD_STREAM, _SUBSET_STREAM, _ITEM_STREAM = 0, 1, 2


@dataclass(frozen=True)
class FoldPlan:
    k: int
    train: tuple[np.ndarray, ...]
    test: tuple[np.ndarray, ...]
    seed: int

    def __iter__(self):
        return iter(zip(self.train, self.test))


def stratified_kfold(labels, k: int, rng: RngStream) -> FoldPlan:
    """Stratified partition of ``range(len(labels))`` into ``k`` test folds.

    Each class is shuffled and dealt round-robin; the dealing position
    carries over between classes so fold sizes stay within one of each other.
    """
    y = np.asarray(labels, dtype=np.int64)
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    classes, counts = np.unique(y, return_counts=True)
    if np.any(counts < k):
        raise ValueError(
            f"every class needs at least k={k} samples, got counts "
            f"{dict(zip(classes.tolist(), counts.tolist()))}"
        )
    buckets = [[] for _ in range(k)]
    offset = 0
    for c in classes:
        members = np.flatnonzero(y == c)
        members = members[rng.permutation(members.size)]
        for i, idx in enumerate(members):
            buckets[(offset + i) % k].append(idx)
        offset = (offset + members.size) % k
    test = tuple(np.sort(np.array(b, dtype=np.int64)) for b in buckets)
    everything = np.arange(y.size)
    train = tuple(np.setdiff1d(everything, t) for t in test)
    return FoldPlan(k=k, train=train, test=test, seed=rng.seed)


@dataclass(frozen=True, order=True)
class ProportionSpec:
    numerator: int
    denominator: int = 4

    def __post_init__(self):
        if self.denominator != 4 or self.numerator not in (1, 2, 3, 4):
            raise ValueError(f"proportion must be n/4 with n in 1..4, got {self.numerator}/{self.denominator}")

    @property
    def fraction(self) -> Fraction:
        return Fraction(self.numerator, self.denominator)

    def __str__(self):
        return f"{self.numerator}/{self.denominator}"


def _round_half_up(frac: Fraction) -> int:
    return int((frac * 2 + 1) // 2)


def take_proportion(train_indices, labels, spec: ProportionSpec, rng: RngStream) -> np.ndarray:
    """Per class keep ``round(p * n_c)`` (at least one) training indices.

    The per-class draw is a random prefix of one permutation, so for a fixed
    stream the subsets for growing proportions are nested.
    """
    idx = np.asarray(train_indices, dtype=np.int64)
    if idx.size == 0:
        raise ValueError("empty training set")
    if spec.fraction == 1:
        return idx
    y = np.asarray(labels)[idx]
    keep = []
    for c in np.unique(y):
        members = idx[y == c]
        order = rng.permutation(members.size)
        m = max(1, _round_half_up(spec.fraction * members.size))
        keep.append(members[order[:m]])
    return np.sort(np.concatenate(keep))


def confusion(predictions, truths, positive_class: int) -> dict[str, int]:
    p = np.asarray(predictions)
    t = np.asarray(truths)
    if p.shape != t.shape:
        raise ValueError(f"{p.size} predictions but {t.size} truths")
    pos_p = p == positive_class
    pos_t = t == positive_class
    return {
        "tp": int(np.sum(pos_p & pos_t)),
        "fp": int(np.sum(pos_p & ~pos_t)),
        "fn": int(np.sum(~pos_p & pos_t)),
        "tn": int(np.sum(~pos_p & ~pos_t)),
    }


def accuracy(predictions, truths) -> float:
    """Percentage of matching entries."""
    p = np.asarray(predictions)
    t = np.asarray(truths)
    if p.size == 0:
        raise ValueError("accuracy of an empty prediction set")
    if p.shape != t.shape:
        raise ValueError(f"{p.size} predictions but {t.size} truths")
    return 100.0 * float(np.sum(p == t)) / p.size


def f1_minority(predictions, truths, positive_class: int) -> float:
    """F1 with ``positive_class`` as the positive label; 0 when P + R = 0."""
    if np.asarray(predictions).size == 0:
        raise ValueError("F1 of an empty prediction set")
    cm = confusion(predictions, truths, positive_class)
    tp, fp, fn = cm["tp"], cm["fp"], cm["fn"]
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def hidden_grid(upper: int, exhaustive: bool = False) -> list[int]:
    """Candidate hidden sizes from 2 to ``upper``.

    Geometric mode doubles from 2 and always ends at ``upper`` itself.
    """
    upper = max(int(upper), 2)
    if exhaustive:
        return list(range(2, upper + 1))
    grid = []
    h = 2
    while h < upper:
        grid.append(h)
        h *= 2
    grid.append(upper)
    return grid


def hidden_upper(method: str, d: int) -> int:
    """Twice the input-layer width of the method's network."""
    return 2 * (2 * d if method == "s2sl" else d)


@dataclass(frozen=True)
class HarnessConfig:
    folds: int = 5
    proportions: tuple[int, ...] = (1, 2, 3, 4)
    methods: tuple[str, ...] = METHODS
    hidden: int | str = "search"
    grid_mode: str = "geometric"
    inner_split: float = 0.8
    refs: int = 10
    ref_policy: str = "stratified_random"
    epochs: int = 200
    batch_size: int = 32
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    positive_class: int | None = None
    workers: int = 1

    def __post_init__(self):
        if self.folds < 2:
            raise ValueError("folds must be >= 2")
        if not self.proportions or any(p not in (1, 2, 3, 4) for p in self.proportions):
            raise ValueError(f"proportions must be numerators in 1..4, got {self.proportions}")
        if not self.methods or any(m not in METHODS for m in self.methods):
            raise ValueError(f"methods must be drawn from {METHODS}, got {self.methods}")
        if self.hidden != "search" and (not isinstance(self.hidden, int) or self.hidden < 1):
            raise ValueError(f"hidden must be a positive count or 'search', got {self.hidden!r}")
        if self.grid_mode not in ("geometric", "exhaustive"):
            raise ValueError(f"unknown grid mode {self.grid_mode!r}")
        if not 0 < self.inner_split < 1:
            raise ValueError("inner_split must lie strictly between 0 and 1")
        if self.refs < 1:
            raise ValueError("refs must be >= 1")
        if self.ref_policy not in ("stratified_random", "all_train"):
            raise ValueError(f"unknown reference policy {self.ref_policy!r}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        # surfaces bad optimiser settings before any work starts
        self.net_config(1, 1, 2, "softmax")

    def net_config(self, input_dim: int, hidden: int, output_dim: int, activation: str) -> nnet.NetConfig:
        return nnet.NetConfig(
            input_dim=input_dim,
            hidden_units=hidden,
            output_dim=output_dim,
            output_activation=activation,
            learning_rate=self.learning_rate,
            beta1=self.beta1,
            beta2=self.beta2,
            epsilon=self.epsilon,
            epochs=self.epochs,
            batch_size=self.batch_size,
            seed=self.seed,
        )


def one_hot(labels, k: int) -> np.ndarray:
    out = np.zeros((len(labels), k))
    out[np.arange(len(labels)), np.asarray(labels, dtype=np.int64)] = 1.0
    return out


@dataclass
class FitResult:
    """Everything learned from the training rows of one work item."""

    method: str
    hidden_units: int
    network: nnet.Network
    normalizer: object
    references: s2s.ReferenceSet | None = None


def fit_method(train: Dataset, method: str, hidden: int, config: HarnessConfig, rng: RngStream):
    """Train one method on already-normalised data; returns (network, references)."""
    k = train.num_classes
    d = train.dim
    if method == "s2sl":
        base = config.net_config(2 * d, hidden, 2 * k, "sigmoid")
        net, _ = s2s.train_s2s(train, base, rng.child(0), s2s.LabelCodec(k))
        policy = "all_train" if config.ref_policy == "all_train" else "stratified_random"
        refs = s2s.select_references(train, policy, config.refs, rng.child(1), k)
        return net, refs
    cfg = config.net_config(d, hidden, k, "softmax")
    net = nnet.init_network(cfg, rng.child(0))
    net, _ = nnet.train(net, train.features, one_hot(train.labels, k), rng.child(1))
    return net, None


def predict_method(net: nnet.Network, refs, features, num_classes: int) -> np.ndarray:
    if refs is not None:
        return s2s.predict(net, features, refs, s2s.LabelCodec(num_classes))
    return np.argmax(nnet.forward(net, np.atleast_2d(features)), axis=1)


def inner_split(labels, ratio: float, rng: RngStream) -> tuple[np.ndarray, np.ndarray]:
    """Stratified (fit, validation) split keeping ``ratio`` of each class for fitting."""
    y = np.asarray(labels)
    fit, val = [], []
    for c in np.unique(y):
        members = np.flatnonzero(y == c)
        members = members[rng.permutation(members.size)]
        n_val = int(round((1 - ratio) * members.size))
        if n_val < 1 or n_val >= members.size:
            raise ValueError(
                f"inner split leaves class {int(c)} empty ({members.size} samples, ratio {ratio})"
            )
        val.append(members[:n_val])
        fit.append(members[n_val:])
    return np.sort(np.concatenate(fit)), np.sort(np.concatenate(val))


def search_hidden_units(
    train: Dataset,
    method: str,
    candidates: Sequence[int],
    config: HarnessConfig,
    rng: RngStream,
) -> int:
    """Candidate with the best inner-validation accuracy; ties favour the smaller."""
    candidates = sorted(set(int(c) for c in candidates))
    if not candidates or candidates[0] < 1:
        raise ValueError(f"hidden-unit candidates must be positive, got {candidates}")
    if len(candidates) == 1:
        return candidates[0]
    fit_idx, val_idx = inner_split(train.labels, config.inner_split, rng.child(0))
    fit, val = train.subset(fit_idx), train.subset(val_idx)
    best, best_acc = candidates[0], -1.0
    for i, h in enumerate(candidates):
        net, refs = fit_method(fit, method, h, config, rng.child(1 + i))
        acc = accuracy(predict_method(net, refs, val.features, train.num_classes), val.labels)
        if acc > best_acc:
            best, best_acc = h, acc
    return best


def fit_item(train: Dataset, method: str, config: HarnessConfig, rng: RngStream) -> FitResult:
    """Normalise, choose the hidden size and train one method on raw training rows."""
    nz = fit_normalizer(train)
    train_n = nz.apply(train)
    if config.hidden == "search":
        grid = hidden_grid(hidden_upper(method, train.dim), config.grid_mode == "exhaustive")
        hidden = search_hidden_units(train_n, method, grid, config, rng.child(0))
    else:
        hidden = int(config.hidden)
    net, refs = fit_method(train_n, method, hidden, config, rng.child(1))
    return FitResult(method, hidden, net, nz, refs)


@dataclass(frozen=True)
class MetricRow:
    task: str
    method: str
    proportion: str
    fold: int
    accuracy: float
    f1: float
    tp: int
    fp: int
    fn: int
    tn: int
    seed: int
    hidden_units: int = 0


def _run_item(args) -> MetricRow:
    dataset, train_idx, test_idx, method, prop, fold, config, positive, item = args
    rng = RngStream(config.seed).child(_ITEM_STREAM).child(item)
    try:
        fitted = fit_item(dataset.subset(train_idx), method, config, rng)
        test = fitted.normalizer.apply(dataset.subset(test_idx))
        pred = predict_method(fitted.network, fitted.references, test.features, dataset.num_classes)
    except (ValueError, nnet.TrainingError) as exc:
        raise type(exc)(f"fold {fold}, proportion {prop}, method {method}: {exc}") from exc
    cm = confusion(pred, test.labels, positive)
    return MetricRow(
        task=dataset.name,
        method=method,
        proportion=str(prop),
        fold=fold,
        accuracy=accuracy(pred, test.labels),
        f1=f1_minority(pred, test.labels, positive),
        seed=config.seed,
        hidden_units=fitted.hidden_units,
        **cm,
    )


def minority_class(labels, num_classes: int) -> int:
    """Least frequent class; ties go to the highest class id."""
    counts = np.bincount(np.asarray(labels, dtype=np.int64), minlength=num_classes)
    return int(num_classes - 1 - np.argmin(counts[::-1]))


@dataclass
class EvalReport:
    task: str
    rows: list[MetricRow]
    config: dict
    positive_class: int
    class_names: list[str] = field(default_factory=list)

    def select(self, method: str, proportion) -> list[MetricRow]:
        prop = str(proportion)
        return [r for r in self.rows if r.method == method and r.proportion == prop]

    def proportions(self) -> list[str]:
        return sorted({r.proportion for r in self.rows})

    def methods(self) -> list[str]:
        return [m for m in METHODS if any(r.method == m for r in self.rows)]

    def summary(self, metric: str = "accuracy") -> dict[tuple[str, str], tuple[float, float]]:
        """(method, proportion) -> (mean, sample stddev) of ``metric`` over folds."""
        out = {}
        for m in self.methods():
            for p in self.proportions():
                vals = [getattr(r, metric) for r in self.select(m, p)]
                if vals:
                    sd = statistics.stdev(vals) if len(vals) > 1 else 0.0
                    out[(m, p)] = (statistics.fmean(vals), sd)
        return out

    def mean(self, method: str, proportion, metric: str = "accuracy") -> float:
        return self.summary(metric)[(method, str(proportion))][0]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in self.rows:
            row = asdict(r)
            writer.writerow(
                [repr(row[c]) if isinstance(row[c], float) else row[c] for c in CSV_COLUMNS]
            )
        return buf.getvalue()

    def format_table(self) -> str:
        """Fold-mean accuracy (%) and F1 laid out method-by-proportion."""
        props = self.proportions()
        pos_name = (
            self.class_names[self.positive_class]
            if self.positive_class < len(self.class_names)
            else str(self.positive_class)
        )
        lines = [f"Task: {self.task}  ({self.config.get('folds')}-fold CV, seed {self.config.get('seed')})"]
        for metric, title, fmt in (
            ("accuracy", "Mean accuracy (%)", "{:6.1f}"),
            ("f1", f"Mean F1 (positive class: {pos_name})", "{:6.3f}"),
        ):
            summary = self.summary(metric)
            lines.append("")
            lines.append(title)
            lines.append("        " + "".join(f"{p:>8}" for p in props))
            for m in self.methods():
                cells = "".join(f"{fmt.format(summary[(m, p)][0]):>8}" for p in props)
                lines.append(f"{METHOD_LABELS[m]:<8}{cells}")
        return "\n".join(lines) + "\n"


def run_experiment(dataset: Dataset, config: HarnessConfig) -> EvalReport:
    """Full cross-validated comparison over all folds, proportions and methods."""
    if dataset.num_classes < 2:
        raise DataError("need at least two classes")
    master = RngStream(config.seed)
    plan = stratified_kfold(dataset.labels, config.folds, master.child(_FOLD_STREAM))
    positive = (
        config.positive_class
        if config.positive_class is not None
        else minority_class(dataset.labels, dataset.num_classes)
    )
    props = [ProportionSpec(p) for p in sorted(set(config.proportions))]
    items = []
    for fold, (train_idx, test_idx) in enumerate(plan):
        # one stream per fold so both methods and all proportions share nested subsets
        subset_rng = master.child(_SUBSET_STREAM).child(fold)
        for prop in props:
            sub = take_proportion(train_idx, dataset.labels, prop, subset_rng.child(0))
            for method in config.methods:
                items.append((dataset, sub, test_idx, method, prop, fold, config, positive, len(items)))
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            rows = list(pool.map(_run_item, items))
    else:
        rows = [_run_item(it) for it in items]
    rows.sort(key=lambda r: (r.method != "s2sl", r.proportion, r.fold))
    return EvalReport(
        task=dataset.name,
        rows=rows,
        config=asdict(config),
        positive_class=positive,
        class_names=list(dataset.class_names),
    )
