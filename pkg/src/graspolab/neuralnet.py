"""Minimal float64 neural network with hand-rolled reverse-mode gradients.

Supports exactly what the grasp-orientation learner needs: valid (unpadded)
strided 2-D convolutions, dense layers, ReLU/linear activations, Huber loss,
and RMSProp.  Arrays are numpy float64 throughout; images are channel-last
(height, width, channels) and batches stack on a leading axis.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import CheckpointError

RELU = "relu"
LINEAR = "linear"
_ACTIVATIONS = (LINEAR, RELU)

CHECKPOINT_MAGIC = b"GQN1"
_TAG_CONV = 1
_TAG_DENSE = 2


@dataclass(frozen=True)
class Conv2D:
    """Valid convolution: output side = (input - kernel) / stride + 1, exactly."""

    out_channels: int
    kernel_size: int
    stride: int = 1
    activation: str = RELU

    def __post_init__(self):
        if self.out_channels < 1 or self.kernel_size < 1 or self.stride < 1:
            raise ValueError("conv dimensions must be >= 1")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass(frozen=True)
class Dense:
    out_units: int
    activation: str = LINEAR

    def __post_init__(self):
        if self.out_units < 1:
            raise ValueError("dense layer needs >= 1 unit")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass(frozen=True)
class HuberParams:
    delta: float = 1.0

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError("huber delta must be positive")


def huber_terms(k: np.ndarray, delta: float = 1.0):
    """Elementwise Huber loss and d(loss)/dk for residuals k = pred - target."""
    k = np.asarray(k, dtype=float)
    small = np.abs(k) <= delta
    loss = np.where(small, 0.5 * k * k, delta * (np.abs(k) - 0.5 * delta))
    grad = np.where(small, k, delta * np.sign(k))
    return loss, grad


def huber(prediction: float, target: float, p: HuberParams = HuberParams()):
    """Scalar Huber loss and gradient w.r.t. the prediction."""
    loss, grad = huber_terms(np.float64(prediction) - np.float64(target), p.delta)
    return float(loss), float(grad)


def _conv_out_side(in_side: int, k: int, s: int) -> int:
    if in_side < k:
        raise ValueError(f"kernel {k} larger than input side {in_side}")
    if (in_side - k) % s != 0:
        raise ValueError(
            f"convolution does not tile the input: ({in_side} - {k}) / {s} is not an integer"
        )
    return (in_side - k) // s + 1


def _conv_windows(x: np.ndarray, k: int, s: int) -> np.ndarray:
    # (N, H, W, C) -> (N, oh, ow, C, k, k) strided view, no copy
    view = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(1, 2))
    return view[:, ::s, ::s]


class Network:
    """Feed-forward stack of Conv2D/Dense layers with shared backprop."""

    def __init__(self, input_shape, layers, seed=0):
        input_shape = tuple(int(v) for v in input_shape)
        if len(input_shape) != 3 or any(v < 1 for v in input_shape):
            raise ValueError(f"input shape must be (H, W, C) with positive sides, got {input_shape}")
        if not layers:
            raise ValueError("network needs at least one layer")
        self.input_shape = input_shape
        self.specs = tuple(layers)
        self.weights = []  # [(W, b)] in declaration order
        self._layer_in_shapes = []
        self._cache = None
        rng = np.random.default_rng(seed)
        shape = input_shape
        for spec in self.specs:
            self._layer_in_shapes.append(shape)
            if isinstance(spec, Conv2D):
                if len(shape) != 3:
                    raise ValueError("conv layer after flattening dense layer")
                h, w, c = shape
                oh = _conv_out_side(h, spec.kernel_size, spec.stride)
                ow = _conv_out_side(w, spec.kernel_size, spec.stride)
                fan_in = spec.kernel_size * spec.kernel_size * c
                limit = np.sqrt(6.0 / fan_in)
                W = rng.uniform(-limit, limit,
                                size=(spec.kernel_size, spec.kernel_size, c, spec.out_channels))
                b = np.zeros(spec.out_channels)
                shape = (oh, ow, spec.out_channels)
            elif isinstance(spec, Dense):
                fan_in = int(np.prod(shape))
                limit = np.sqrt(6.0 / fan_in)
                W = rng.uniform(-limit, limit, size=(fan_in, spec.out_units))
                b = np.zeros(spec.out_units)
                shape = (spec.out_units,)
            else:
                raise ValueError(f"unknown layer spec {spec!r}")
            self.weights.append((W, b))
        self.output_shape = shape

    @property
    def parameter_count(self) -> int:
        return sum(W.size + b.size for W, b in self.weights)

    def layer_shapes(self):
        """Input shape of each layer plus the final output shape."""
        return list(self._layer_in_shapes) + [self.output_shape]

    def clone(self) -> "Network":
        other = Network(self.input_shape, self.specs, seed=0)
        other.copy_weights_from(self)
        return other

    def copy_weights_from(self, other: "Network"):
        if other.specs != self.specs or other.input_shape != self.input_shape:
            raise ValueError("cannot copy weights between different architectures")
        self.weights = [(W.copy(), b.copy()) for W, b in other.weights]

    def forward(self, x, remember=False) -> np.ndarray:
        """Run a batch (N, H, W, C) or single state (H, W, C); returns (N, out)."""
        x = np.asarray(x, dtype=float)
        if x.shape == self.input_shape:
            x = x[None]
        if x.shape[1:] != self.input_shape:
            raise ValueError(f"input shape {x.shape[1:]} != network input {self.input_shape}")
        if not np.isfinite(x).all():
            raise ValueError("network input has non-finite entries")
        cache = [] if remember else None
        for spec, (W, b) in zip(self.specs, self.weights):
            if isinstance(spec, Conv2D):
                cols = _conv_windows(x, spec.kernel_size, spec.stride)
                # cols: (N, oh, ow, C, kh, kw); W: (kh, kw, C, OC)
                z = np.tensordot(cols, W, axes=([4, 5, 3], [0, 1, 2])) + b
                layer_in = x
            else:
                layer_in = x.reshape(x.shape[0], -1)
                z = layer_in @ W + b
            a = np.maximum(z, 0.0) if spec.activation == RELU else z
            if remember:
                cache.append((layer_in, z))
            x = a
        if remember:
            self._cache = cache
        if not np.isfinite(x).all():
            raise ValueError("network produced non-finite outputs")
        return x

    def forward_one(self, state) -> np.ndarray:
        """Q-values for a single input state, shape (out_units,)."""
        return self.forward(state)[0]

    def backward(self, grad_out: np.ndarray):
        """Gradients of a scalar loss given d(loss)/d(output), one forward back.

        Requires the immediately preceding ``forward(..., remember=True)``.
        Returns [(dW, db)] aligned with ``weights``.
        """
        if self._cache is None:
            raise RuntimeError("backward called without a recorded forward pass")
        cache = self._cache
        self._cache = None
        g = np.asarray(grad_out, dtype=float)
        if g.shape != (cache[-1][1].shape[0],) + self.output_shape:
            raise ValueError(f"gradient shape {g.shape} does not match output")
        grads = [None] * len(self.specs)
        for li in range(len(self.specs) - 1, -1, -1):
            spec = self.specs[li]
            layer_in, z = cache[li]
            if spec.activation == RELU:
                g = g * (z > 0.0)
            if isinstance(spec, Dense):
                dW = layer_in.T @ g
                db = g.sum(axis=0)
                g = g @ self.weights[li][0].T
                g = g.reshape((layer_in.shape[0],) + self._layer_in_shapes[li])
            else:
                k, s = spec.kernel_size, spec.stride
                cols = _conv_windows(layer_in, k, s)
                # accumulate over batch and output positions
                dW = np.tensordot(cols, g, axes=([0, 1, 2], [0, 1, 2]))
                dW = dW.transpose(1, 2, 0, 3)  # (C, kh, kw, OC) -> (kh, kw, C, OC)
                db = g.sum(axis=(0, 1, 2))
                W = self.weights[li][0]
                dX = np.zeros_like(layer_in)
                oh, ow = g.shape[1], g.shape[2]
                for i in range(k):
                    for j in range(k):
                        # fixed kernel offset: output cells map to disjoint input cells
                        dX[:, i:i + s * oh:s, j:j + s * ow:s, :] += g @ W[i, j].T
                g = dX
            grads[li] = (dW, db)
        return grads


class RMSProp:
    """Running mean-square gradient scaling: v <- rho v + (1-rho) g^2."""

    def __init__(self, learning_rate=0.00025, rho=0.95, epsilon=1e-6):
        if learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if not 0.0 < rho < 1.0:
            raise ValueError("rho must lie in (0, 1)")
        if epsilon <= 0:
            raise ValueError("epsilon must be positive")
        self.learning_rate = learning_rate
        self.rho = rho
        self.epsilon = epsilon
        self.mean_square = None

    def step(self, weights, grads):
        """Update [(W, b)] in place from aligned [(dW, db)]."""
        flat_params = [arr for pair in weights for arr in pair]
        flat_grads = [arr for pair in grads for arr in pair]
        if len(flat_params) != len(flat_grads):
            raise ValueError("gradient list does not match parameter list")
        if self.mean_square is None:
            self.mean_square = [np.zeros_like(p) for p in flat_params]
        if len(self.mean_square) != len(flat_params):
            raise ValueError("optimizer state does not match parameter list")
        for p, g, v in zip(flat_params, flat_grads, self.mean_square):
            if p.shape != g.shape:
                raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
            v *= self.rho
            v += (1.0 - self.rho) * g * g
            p -= self.learning_rate * g / (np.sqrt(v) + self.epsilon)


def save_weights(net: Network) -> bytes:
    """Serialize architecture + weights; little-endian float64 payload."""
    out = bytearray(CHECKPOINT_MAGIC)
    out += struct.pack("<3I", *net.input_shape)
    out += struct.pack("<I", len(net.specs))
    for spec in net.specs:
        act = _ACTIVATIONS.index(spec.activation)
        if isinstance(spec, Conv2D):
            out += struct.pack("<BBIII", _TAG_CONV, act,
                               spec.out_channels, spec.kernel_size, spec.stride)
        else:
            out += struct.pack("<BBI", _TAG_DENSE, act, spec.out_units)
    for W, b in net.weights:
        out += np.ascontiguousarray(W, dtype="<f8").tobytes()
        out += np.ascontiguousarray(b, dtype="<f8").tobytes()
    return bytes(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, count: int) -> bytes:
        if self.pos + count > len(self.data):
            raise CheckpointError(
                f"truncated checkpoint: needed {count} bytes at offset {self.pos}, "
                f"have {len(self.data) - self.pos}"
            )
        chunk = self.data[self.pos:self.pos + count]
        self.pos += count
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_weights(data: bytes) -> Network:
    """Rebuild a Network from ``save_weights`` output."""
    r = _Reader(data)
    magic = r.take(len(CHECKPOINT_MAGIC))
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError(f"bad magic {magic!r}; expected {CHECKPOINT_MAGIC!r}")
    input_shape = r.unpack("<3I")
    (n_layers,) = r.unpack("<I")
    if n_layers < 1 or n_layers > 10_000:
        raise CheckpointError(f"implausible layer count {n_layers}")
    specs = []
    for _ in range(n_layers):
        (tag, act) = r.unpack("<BB")
        if act >= len(_ACTIVATIONS):
            raise CheckpointError(f"unknown activation code {act}")
        if tag == _TAG_CONV:
            out_c, ksize, stride = r.unpack("<III")
            specs.append(Conv2D(out_c, ksize, stride, _ACTIVATIONS[act]))
        elif tag == _TAG_DENSE:
            (units,) = r.unpack("<I")
            specs.append(Dense(units, _ACTIVATIONS[act]))
        else:
            raise CheckpointError(f"unknown layer tag {tag}")
    try:
        net = Network(input_shape, specs, seed=0)
    except ValueError as exc:
        raise CheckpointError(f"inconsistent architecture in checkpoint: {exc}") from exc
    for li, (W, b) in enumerate(net.weights):
        W_new = np.frombuffer(r.take(W.size * 8), dtype="<f8").reshape(W.shape)
        b_new = np.frombuffer(r.take(b.size * 8), dtype="<f8").reshape(b.shape)
        if not (np.isfinite(W_new).all() and np.isfinite(b_new).all()):
            raise CheckpointError(f"layer {li} weights contain non-finite values")
        net.weights[li] = (W_new.astype(float), b_new.astype(float))
    if r.pos != len(data):
        raise CheckpointError(f"{len(data) - r.pos} trailing bytes after weight payload")
    return net


def restore_weights(net: Network, data: bytes):
    """Load weights into an existing network; architecture must match exactly."""
    loaded = load_weights(data)
    if loaded.specs != net.specs or loaded.input_shape != net.input_shape:
        raise CheckpointError(
            f"checkpoint architecture {loaded.specs} does not match network {net.specs}"
        )
    net.copy_weights_from(loaded)
