"""Small dense MLP engine in float64 numpy.

Networks are plain parameter containers; ``forward`` caches what ``backward``
needs on the instance, so one network instance must not be shared across
threads while training.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

HIDDEN_ACTIVATIONS = ("relu", "tanh")
OUTPUT_ACTIVATIONS = ("sigmoid", "identity")
LOSSES = (
    "quadratic",
    "disc_real",
    "disc_fake",
    "disc_log",
    "gen_saturating",
    "gen_non_saturating",
)

# D outputs are clamped into [EPS, 1 - EPS] inside loss functions only.
EPS = 1e-7


class ShapeError(ValueError):
    pass


class UsageError(RuntimeError):
    pass


class CheckpointError(ValueError):
    pass


@dataclass
class GradientSet:
    """Gradients for every weight and bias of a network, plus d(out)/d(input)."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    inputs: np.ndarray | None = None

    def scaled(self, factor: float) -> "GradientSet":
        return GradientSet(
            [factor * g for g in self.weights],
            [factor * g for g in self.biases],
            None if self.inputs is None else factor * self.inputs,
        )

    def __add__(self, other: "GradientSet") -> "GradientSet":
        inputs = None
        if self.inputs is not None and other.inputs is not None:
            inputs = self.inputs + other.inputs
        return GradientSet(
            [a + b for a, b in zip(self.weights, other.weights)],
            [a + b for a, b in zip(self.biases, other.biases)],
            inputs,
        )

    def is_zero(self) -> bool:
        return all(not np.any(g) for g in self.weights + self.biases)


@dataclass
class MlpNetwork:
    layer_sizes: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    hidden_activation: str = "relu"
    output_activation: str = "identity"
    _cache: list | None = field(default=None, repr=False, compare=False)

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_dim(self) -> int:
        return self.layer_sizes[-1]

    def params(self) -> list[np.ndarray]:
        """Parameter arrays in checkpoint order: W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self) -> "MlpNetwork":
        return MlpNetwork(
            list(self.layer_sizes),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.hidden_activation,
            self.output_activation,
        )

    def same_params(self, other: "MlpNetwork") -> bool:
        return self.layer_sizes == other.layer_sizes and all(
            np.array_equal(a, b) for a, b in zip(self.params(), other.params())
        )

    def __call__(self, batch: np.ndarray) -> np.ndarray:
        return forward(self, batch)


def _check_sizes(layer_sizes) -> list[int]:
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2:
        raise ShapeError(f"need at least input and output sizes, got {sizes}")
    if any(s < 1 for s in sizes) or any(s != t for s, t in zip(sizes, layer_sizes)):
        raise ShapeError(f"layer sizes must be positive integers, got {list(layer_sizes)}")
    return sizes


def _check_acts(hidden_activation: str, output_activation: str) -> None:
    if hidden_activation not in HIDDEN_ACTIVATIONS:
        raise ValueError(f"unknown hidden activation {hidden_activation!r}")
    if output_activation not in OUTPUT_ACTIVATIONS:
        raise ValueError(f"unknown output activation {output_activation!r}")


def mlp_new(
    layer_sizes,
    hidden_activation: str = "relu",
    output_activation: str = "identity",
    seed: int = 0,
) -> MlpNetwork:
    """Build an MLP with Glorot-uniform weights and zero biases."""
    sizes = _check_sizes(layer_sizes)
    _check_acts(hidden_activation, output_activation)
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        a = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-a, a, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpNetwork(sizes, weights, biases, hidden_activation, output_activation)


def as_matrix(batch, cols: int | None = None) -> np.ndarray:
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(1, -1)
    if x.ndim != 2:
        raise ShapeError(f"expected a 2-D batch, got shape {x.shape}")
    if cols is not None and x.shape[1] != cols:
        raise ShapeError(f"batch has {x.shape[1]} columns, network expects {cols}")
    return x


def _hidden(name: str, z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0) if name == "relu" else np.tanh(z)


def _hidden_grad(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    return (z > 0).astype(np.float64) if name == "relu" else 1.0 - a * a


def forward(net: MlpNetwork, batch) -> np.ndarray:
    x = as_matrix(batch, net.input_dim)
    cache = [(x, None, x)]
    a = x
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = a @ w.T + b
        if i < last:
            a = _hidden(net.hidden_activation, z)
        elif net.output_activation == "sigmoid":
            a = expit(z)
        else:
            a = z
        cache.append((a, z, None))
    net._cache = cache
    return a


def backward(net: MlpNetwork, upstream_grad) -> GradientSet:
    """Reverse-mode gradients given d(objective)/d(output).

    The upstream gradient must already carry any 1/s batch-averaging factor;
    per-sample contributions are summed here.
    """
    if net._cache is None:
        raise UsageError("backward called before forward")
    out = net._cache[-1][0]
    g = np.asarray(upstream_grad, dtype=np.float64)
    if g.shape != out.shape:
        raise ShapeError(f"upstream grad shape {g.shape} != output shape {out.shape}")
    n_layers = len(net.weights)
    gw: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    gb: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    for i in range(n_layers - 1, -1, -1):
        a, z, _ = net._cache[i + 1]
        if i == n_layers - 1:
            if net.output_activation == "sigmoid":
                g = g * a * (1.0 - a)
        else:
            g = g * _hidden_grad(net.hidden_activation, z, a)
        a_prev = net._cache[i][0]
        gw[i] = g.T @ a_prev
        gb[i] = g.sum(axis=0)
        g = g @ net.weights[i]
    return GradientSet(gw, gb, g)


def sgd_step(net: MlpNetwork, grads: GradientSet, learning_rate: float, direction: str = "descend") -> None:
    if learning_rate <= 0:
        raise ValueError("learning_rate must be positive")
    if direction not in ("ascend", "descend"):
        raise ValueError(f"direction must be 'ascend' or 'descend', got {direction!r}")
    if len(grads.weights) != len(net.weights) or len(grads.biases) != len(net.biases):
        raise ShapeError("gradient set does not match network depth")
    pairs = list(zip(net.params(), _interleave(grads)))
    for p, g in pairs:
        if p.shape != g.shape:
            raise ShapeError(f"gradient shape {g.shape} != parameter shape {p.shape}")
    sign = 1.0 if direction == "ascend" else -1.0
    for p, g in pairs:
        p += sign * learning_rate * g


def _interleave(grads: GradientSet) -> list[np.ndarray]:
    out = []
    for w, b in zip(grads.weights, grads.biases):
        out.extend((w, b))
    return out


# --- losses -----------------------------------------------------------------
# Each returns (value, d value / d output).  Batch means use 1/s.


def clamp_prob(p: np.ndarray) -> np.ndarray:
    return np.clip(p, EPS, 1.0 - EPS)


def _clamp_mask(p: np.ndarray) -> np.ndarray:
    return ((p >= EPS) & (p <= 1.0 - EPS)).astype(np.float64)


def loss_and_grad(name: str, out: np.ndarray, target: np.ndarray | None = None):
    s = out.shape[0]
    if name == "quadratic":
        t = np.zeros_like(out) if target is None else target
        r = out - t
        return 0.5 * float(np.sum(r * r)) / s, r / s
    if name not in LOSSES:
        raise ValueError(f"unknown loss {name!r}")
    p = clamp_prob(out)
    mask = _clamp_mask(out)
    if name == "disc_real":
        return -float(np.mean(np.log(p))), -mask / (s * p)
    if name in ("disc_fake", "gen_saturating"):
        sign = 1.0 if name == "gen_saturating" else -1.0
        return sign * float(np.mean(np.log1p(-p))), -sign * mask / (s * (1.0 - p))
    if name == "gen_non_saturating":
        return -float(np.mean(np.log(p))), -mask / (s * p)
    # disc_log: first half of the batch real, second half fake
    h = s // 2
    val = -(float(np.sum(np.log(p[:h]))) + float(np.sum(np.log1p(-p[h:])))) / h
    g = np.empty_like(p)
    g[:h] = -1.0 / (h * p[:h])
    g[h:] = 1.0 / (h * (1.0 - p[h:]))
    return val, g * mask


# --- finite-difference verification ------------------------------------------


@dataclass
class GradCheckResult:
    max_relative_error: float
    worst_param: str
    worst_index: tuple


def relative_error(analytic: float, numeric: float, floor: float = 1e-6) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def grad_check_report(
    net: MlpNetwork,
    batch,
    loss: str = "quadratic",
    target=None,
    h: float = 1e-5,
    corrupt: bool = False,
) -> GradCheckResult:
    """Compare backprop against central finite differences, entry by entry.

    ``corrupt`` perturbs the analytic gradient of the first weight so callers
    can confirm the harness actually detects a wrong gradient.
    """
    x = as_matrix(batch, net.input_dim)
    if x.shape[0] == 0:
        raise ShapeError("grad_check needs a nonempty batch")
    if loss == "disc_log" and x.shape[0] % 2:
        raise ShapeError("disc_log needs an even batch (real half, fake half)")
    tgt = None if target is None else as_matrix(target, net.output_dim)

    def objective() -> float:
        return loss_and_grad(loss, forward(net, x), tgt)[0]

    _, upstream = loss_and_grad(loss, forward(net, x), tgt)
    grads = backward(net, upstream)
    analytic = _interleave(grads)
    if corrupt:
        analytic[0] = analytic[0].copy()
        analytic[0].flat[0] += 1e-2 + abs(analytic[0].flat[0])

    worst = GradCheckResult(0.0, "", ())
    for k, (p, g) in enumerate(zip(net.params(), analytic)):
        name = f"{'W' if k % 2 == 0 else 'b'}{k // 2}"
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            p[idx] = orig + h
            f_plus = objective()
            p[idx] = orig - h
            f_minus = objective()
            p[idx] = orig
            numeric = (f_plus - f_minus) / (2 * h)
            err = relative_error(float(g[idx]), numeric)
            if err > worst.max_relative_error:
                worst = GradCheckResult(err, name, idx)
    return worst


def grad_check(net: MlpNetwork, batch, loss: str = "quadratic", target=None) -> float:
    return grad_check_report(net, batch, loss, target).max_relative_error


# --- checkpoint text format ---------------------------------------------------


def _fmt(values: np.ndarray) -> str:
    return " ".join(f"{v:.17g}" for v in np.ravel(values))


def format_header(net: MlpNetwork) -> str:
    sizes = "->".join(str(s) for s in net.layer_sizes)
    return f"mlp {sizes} {net.hidden_activation} {net.output_activation}"


def dumps_network(net: MlpNetwork) -> str:
    lines = [format_header(net)]
    lines.extend(_fmt(p) for p in net.params())
    return "\n".join(lines) + "\n"


def loads_network(text: str, source: str = "<string>") -> MlpNetwork:
    lines = text.splitlines()
    if not lines:
        raise CheckpointError(f"{source}: empty checkpoint")
    head = lines[0].split()
    if len(head) != 4 or head[0] != "mlp":
        raise CheckpointError(f"{source}:1: bad header {lines[0]!r}")
    try:
        sizes = _check_sizes([int(s) for s in head[1].split("->")])
        _check_acts(head[2], head[3])
    except ValueError as exc:
        raise CheckpointError(f"{source}:1: bad header {lines[0]!r} ({exc})") from None
    expected = 2 * (len(sizes) - 1)
    body = lines[1:]
    if len(body) != expected:
        raise CheckpointError(f"{source}: expected {expected} parameter lines, found {len(body)}")
    weights, biases = [], []
    for k, line in enumerate(body):
        layer = k // 2
        shape = (sizes[layer + 1], sizes[layer]) if k % 2 == 0 else (sizes[layer + 1],)
        try:
            vals = np.array([float(v) for v in line.split()], dtype=np.float64)
        except ValueError:
            raise CheckpointError(f"{source}:{k + 2}: non-numeric value") from None
        if vals.size != int(np.prod(shape)):
            raise CheckpointError(f"{source}:{k + 2}: expected {int(np.prod(shape))} values, got {vals.size}")
        if not np.all(np.isfinite(vals)):
            raise CheckpointError(f"{source}:{k + 2}: non-finite value")
        (weights if k % 2 == 0 else biases).append(vals.reshape(shape))
    return MlpNetwork(sizes, weights, biases, head[2], head[3])


def save_network(net: MlpNetwork, path) -> None:
    Path(path).write_text(dumps_network(net), encoding="utf-8", newline="\n")


def load_network(path) -> MlpNetwork:
    return loads_network(Path(path).read_text(encoding="utf-8"), str(path))
