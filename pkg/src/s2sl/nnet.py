"""Single-hidden-layer feed-forward network trained with Adam.

One network class serves both the paired-input s2s-MLP (sigmoid outputs,
binary cross-entropy) and the conventional baseline MLP (softmax outputs,
categorical cross-entropy). Parameters follow the ``(out, in)`` layout::

    hidden = relu(x @ w1.T + b1)
    output = act(hidden @ w2.T + b2)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np
from scipy.special import expit

from .numkit import RngStream, ShapeError, as_matrix

PARAM_NAMES = ("w1", "b1", "w2", "b2")
LOG_CLIP = 1e-12
MODEL_HEADER = "s2sl-model v1"

_LOSS_FOR = {"sigmoid": "bce", "softmax": "cross_entropy"}


class TrainingError(RuntimeError):
    """Raised when training diverges (non-finite loss)."""


@dataclass(frozen=True)
class NetConfig:
    input_dim: int
    hidden_units: int
    output_dim: int
    output_activation: str = "sigmoid"
    loss: str = ""
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    epochs: int = 200
    batch_size: int = 32
    seed: int = 0
    hidden_layers: int = 1

    def __post_init__(self):
        if not self.loss:
            object.__setattr__(self, "loss", _LOSS_FOR.get(self.output_activation, ""))
        for name in ("input_dim", "hidden_units", "output_dim", "epochs", "batch_size"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.hidden_layers != 1:
            raise ValueError("only a single hidden layer is supported")
        if self.output_activation not in _LOSS_FOR:
            raise ValueError(f"unknown output activation {self.output_activation!r}")
        if self.loss != _LOSS_FOR[self.output_activation]:
            raise ValueError(
                f"loss {self.loss!r} does not match output activation {self.output_activation!r}"
            )
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")


@dataclass
class Network:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    config: NetConfig

    def __post_init__(self):
        c = self.config
        expected = {
            "w1": (c.hidden_units, c.input_dim),
            "b1": (c.hidden_units,),
            "w2": (c.output_dim, c.hidden_units),
            "b2": (c.output_dim,),
        }
        for name, shape in expected.items():
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            if arr.shape != shape:
                raise ShapeError(f"{name} has shape {arr.shape}, expected {shape}")
            setattr(self, name, arr)

    def params(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def copy(self) -> "Network":
        return Network(*(getattr(self, n).copy() for n in PARAM_NAMES), config=self.config)

    def n_params(self) -> int:
        return sum(p.size for p in self.params().values())


@dataclass
class TrainReport:
    final_loss: float
    epochs_run: int
    loss_history: list[float] = field(default_factory=list)


def init_network(config: NetConfig, rng: RngStream) -> Network:
    """Glorot-uniform weights, zero biases."""

    def glorot(fan_out, fan_in):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-bound, bound, (fan_out, fan_in))

    w1 = glorot(config.hidden_units, config.input_dim)
    w2 = glorot(config.output_dim, config.hidden_units)
    return Network(
        w1=w1,
        b1=np.zeros(config.hidden_units),
        w2=w2,
        b2=np.zeros(config.output_dim),
        config=config,
    )


def sigmoid(z: np.ndarray) -> np.ndarray:
    return expit(z)


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    ez = np.exp(z)
    return ez / ez.sum(axis=1, keepdims=True)


def forward(net: Network, x) -> np.ndarray:
    """Network output for one input vector or a batch of row vectors."""
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    batch = as_matrix(arr, name="x")
    if batch.shape[1] != net.config.input_dim:
        raise ShapeError(
            f"input has {batch.shape[1]} features, network expects {net.config.input_dim}"
        )
    hidden = np.maximum(batch @ net.w1.T + net.b1, 0.0)
    y = _output(net.config, hidden @ net.w2.T + net.b2)
    return y[0] if single else y


def bce_loss(predicted, target) -> float:
    """Mean binary cross-entropy over all units (and rows)."""
    y = np.asarray(predicted, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if y.shape != t.shape:
        raise ShapeError(f"predicted shape {y.shape} != target shape {t.shape}")
    if y.size == 0:
        return 0.0
    y = np.clip(y, LOG_CLIP, 1.0 - LOG_CLIP)
    return float(np.mean(-(t * np.log(y) + (1.0 - t) * np.log(1.0 - y))))


def cross_entropy_loss(predicted, target) -> float:
    """Categorical cross-entropy, summed over classes and averaged over rows."""
    y = as_matrix(predicted, name="predicted")
    t = as_matrix(target, name="target")
    if y.shape != t.shape:
        raise ShapeError(f"predicted shape {y.shape} != target shape {t.shape}")
    if y.shape[0] == 0:
        return 0.0
    y = np.clip(y, LOG_CLIP, 1.0)
    return float(np.mean(-np.sum(t * np.log(y), axis=1)))


def loss_value(net: Network, inputs, targets) -> float:
    y = forward(net, as_matrix(inputs))
    if net.config.loss == "bce":
        return bce_loss(y, as_matrix(targets))
    return cross_entropy_loss(y, targets)


def _check_batch(net: Network, x, t):
    x = as_matrix(x, name="inputs")
    t = as_matrix(t, name="targets")
    c = net.config
    if x.shape[0] != t.shape[0]:
        raise ShapeError(f"{x.shape[0]} input rows but {t.shape[0]} target rows")
    if x.shape[1] != c.input_dim or t.shape[1] != c.output_dim:
        raise ShapeError(
            f"batch shapes {x.shape}/{t.shape} do not fit network "
            f"({c.input_dim} in, {c.output_dim} out)"
        )
    return x, t


def _output(config: NetConfig, z: np.ndarray) -> np.ndarray:
    return expit(z) if config.output_activation == "sigmoid" else softmax(z)


def _backprop(net: Network, x: np.ndarray, t: np.ndarray, grads: dict) -> np.ndarray:
    """Write the mean-loss gradient into ``grads`` in place; return the outputs."""
    n = x.shape[0]
    pre = x @ net.w1.T
    pre += net.b1
    hidden = np.maximum(pre, 0.0)
    z = hidden @ net.w2.T
    z += net.b2
    y = _output(net.config, z)
    # sigmoid+BCE and softmax+CE share dL/dz = y - t, up to the averaging factor
    dz = y - t
    dz *= 1.0 / (n * y.shape[1]) if net.config.loss == "bce" else 1.0 / n
    np.matmul(dz.T, hidden, out=grads["w2"])
    np.add.reduce(dz, axis=0, out=grads["b2"])
    dpre = dz @ net.w2
    dpre *= pre > 0
    np.matmul(dpre.T, x, out=grads["w1"])
    np.add.reduce(dpre, axis=0, out=grads["b1"])
    return y


def gradient(net: Network, batch_inputs, batch_targets) -> dict[str, np.ndarray]:
    """Analytic gradient of the mean batch loss for every parameter."""
    x, t = _check_batch(net, batch_inputs, batch_targets)
    grads = {name: np.zeros_like(p) for name, p in net.params().items()}
    if x.shape[0]:
        _backprop(net, x, t, grads)
    return grads


def adam_step(param, grad, m, v, step: int, config: NetConfig, scratch=None) -> None:
    """Bias-corrected Adam update of ``param`` in place; ``step`` counts from 1.

    All arrays share one shape; ``m`` and ``v`` are the running moments.
    """
    b1, b2 = config.beta1, config.beta2
    tmp = np.empty_like(param) if scratch is None else scratch
    m *= b1
    np.multiply(grad, 1.0 - b1, out=tmp)
    m += tmp
    v *= b2
    np.multiply(grad, grad, out=tmp)
    tmp *= 1.0 - b2
    v += tmp
    # p -= lr * (m / c1) / (sqrt(v / c2) + eps)
    np.divide(v, 1.0 - b2**step, out=tmp)
    np.sqrt(tmp, out=tmp)
    tmp += config.epsilon
    np.divide(m, tmp, out=tmp)
    tmp *= config.learning_rate / (1.0 - b1**step)
    param -= tmp


def _flat_views(shapes: dict, flat: np.ndarray) -> dict[str, np.ndarray]:
    views, pos = {}, 0
    for name, shape in shapes.items():
        size = int(np.prod(shape))
        views[name] = flat[pos : pos + size].reshape(shape)
        pos += size
    return views


try:
    from . import _kernels
except ImportError:  # numba missing: numpy engine only
    _kernels = None

ENGINES = ("auto", "numba", "numpy")


def train(
    net: Network, inputs, targets, rng: RngStream, engine: str = "auto"
) -> tuple[Network, TrainReport]:
    """Mini-batch Adam over ``config.epochs`` epochs, reshuffling each epoch.

    The input network is left untouched. ``loss_history`` holds the loss on
    the full training set after each epoch. ``engine`` picks the compiled
    loop (``numba``, the ``auto`` default when available) or the vectorised
    numpy loop; both draw the same per-epoch shuffles from ``rng``.
    """
    if engine not in ENGINES:
        raise ValueError(f"unknown engine {engine!r}")
    x, t = _check_batch(net, inputs, targets)
    n = x.shape[0]
    if n == 0:
        raise ShapeError("cannot train on an empty set")
    c = net.config
    shapes = {name: p.shape for name, p in net.params().items()}
    # parameters live in one flat buffer so Adam is a handful of vector ops
    flat = np.concatenate([p.ravel() for p in net.params().values()])
    if engine == "numba" and _kernels is None:
        raise RuntimeError("numba engine requested but numba is not installed")
    if engine == "numba" or (engine == "auto" and _kernels is not None):
        orders = np.stack([rng.permutation(n) for _ in range(c.epochs)])
        history = np.zeros(c.epochs)
        bad_epoch, bad_batch = _kernels.train_loop(
            x, t, flat,
            np.array([c.input_dim, c.hidden_units, c.output_dim]),
            orders, c.batch_size, c.output_activation == "softmax",
            c.learning_rate, c.beta1, c.beta2, c.epsilon, history,
        )
        if bad_epoch:
            raise TrainingError(f"non-finite loss at epoch {bad_epoch}, batch {bad_batch}")
        for epoch, loss in enumerate(history, start=1):
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite loss at end of epoch {epoch}")
        trained = Network(**_flat_views(shapes, flat), config=c)
        return trained, TrainReport(float(history[-1]), c.epochs, history.tolist())

    net = Network(**_flat_views(shapes, flat), config=c)
    gflat = np.zeros_like(flat)
    grads = _flat_views(shapes, gflat)
    m = np.zeros_like(flat)
    v = np.zeros_like(flat)
    scratch = np.empty_like(flat)
    bs = min(c.batch_size, n)
    history = []
    step = 0
    for epoch in range(1, c.epochs + 1):
        order = rng.permutation(n)
        xs = x[order]
        ts = t[order]
        for b, start in enumerate(range(0, n, bs), start=1):
            y = _backprop(net, xs[start : start + bs], ts[start : start + bs], grads)
            # log clipping keeps the loss finite unless an output is NaN
            if not np.isfinite(y.sum()):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {b}")
            step += 1
            adam_step(flat, gflat, m, v, step, c, scratch)
        epoch_loss = loss_value(net, x, t)
        if not math.isfinite(epoch_loss):
            raise TrainingError(f"non-finite loss at end of epoch {epoch}")
        history.append(epoch_loss)
    return net.copy(), TrainReport(final_loss=history[-1], epochs_run=c.epochs, loss_history=history)


def gradient_check(net: Network, batch, step: float = 1e-5, grad_fn=None):
    """Compare analytic gradients with central differences.

    Returns ``(max_relative_error, (param_name, index))``. ``grad_fn`` may
    replace :func:`gradient`, which is how tests inject broken backprop.
    """
    x, t = _check_batch(net, *batch)
    analytic = (grad_fn or gradient)(net, x, t)
    probe = net.copy()
    worst = 0.0
    where = ("", ())
    for name in PARAM_NAMES:
        p = getattr(probe, name)
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            p[idx] = orig + step
            up = loss_value(probe, x, t)
            p[idx] = orig - step
            down = loss_value(probe, x, t)
            p[idx] = orig
            numeric = (up - down) / (2.0 * step)
            a = float(analytic[name][idx])
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            if err > worst:
                worst = err
                where = (name, idx)
    return worst, where


def finite_diff_check(net: Network, batch, step: float = 1e-5, grad_fn=None) -> float:
    """Maximum relative error between analytic and central-difference gradients."""
    return gradient_check(net, batch, step=step, grad_fn=grad_fn)[0]


def save_network(net: Network, path) -> None:
    """Write ``net`` in the plain-text model format.

    Layout: the header line, one ``key value`` line per config field (in
    dataclass field order), then for each of w1, b1, w2, b2 a line
    ``name rows cols`` followed by ``rows`` lines of space-separated reals.
    Biases are stored as a single row.
    """
    lines = [MODEL_HEADER]
    for f in fields(NetConfig):
        lines.append(f"{f.name} {getattr(net.config, f.name)}")
    for name in PARAM_NAMES:
        arr = np.atleast_2d(getattr(net, name))
        lines.append(f"{name} {arr.shape[0]} {arr.shape[1]}")
        lines.extend(" ".join(repr(float(v)) for v in row) for row in arr)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_network(path) -> Network:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].strip() != MODEL_HEADER:
        raise ValueError(f"{path}: not an {MODEL_HEADER!r} file")
    pos = 1
    values = {}
    for f in fields(NetConfig):
        key, _, raw = lines[pos].partition(" ")
        if key != f.name:
            raise ValueError(f"{path}:{pos + 1}: expected {f.name!r}, got {key!r}")
        values[key] = _COERCE[f.type](raw)
        pos += 1
    config = NetConfig(**values)
    arrays = {}
    for name in PARAM_NAMES:
        tag, rows, cols = lines[pos].split()
        if tag != name:
            raise ValueError(f"{path}:{pos + 1}: expected {name!r} block, got {tag!r}")
        rows, cols = int(rows), int(cols)
        block = [[float(tok) for tok in lines[pos + 1 + r].split()] for r in range(rows)]
        arr = np.array(block, dtype=np.float64).reshape(rows, cols)
        arrays[name] = arr[0] if name.startswith("b") else arr
        pos += 1 + rows
    return Network(**arrays, config=config)


_COERCE = {"int": int, "float": float, "str": str}


def with_hidden(config: NetConfig, hidden_units: int) -> NetConfig:
    return replace(config, hidden_units=int(hidden_units))
