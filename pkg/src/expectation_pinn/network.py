"""Feedforward tanh network with exact time derivative and spatial Laplacian.

The forward pass carries, per point and per layer, a bundle of "streams":

* stream 0: the value,
* streams 1 .. d+1: first directional derivatives along t, x_1, ..., x_d,
* streams d+2 .. 2d+1: second directional derivatives along x_1, ..., x_d.

All streams share the same weight matrices, so one layer is a single matmul of
shape ``(S * P, fan_in) @ (fan_in, fan_out)``.  The adjoint pass walks the same
recurrences backwards and returns gradients with respect to every weight and
bias.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

CHECKPOINT_MAGIC = b"EPINNCKP"
CHECKPOINT_VERSION = 1

SUPPORTED_DIMS = (2, 4, 6, 8)


def _round_half_away(x: float) -> int:
    return int(math.floor(abs(x) + 0.5)) * (1 if x >= 0 else -1)


@dataclass(frozen=True)
class ArchitectureSpec:
    input_dim: int
    width: int
    depth: int
    output_dim: int = 1

    def __post_init__(self):
        if self.width < 1 or self.depth < 2 or self.input_dim < 4 or self.output_dim != 1:
            raise ValueError(f"invalid architecture {self}")

    @property
    def layer_shapes(self) -> list[tuple[int, int]]:
        """(fan_out, fan_in) for each affine layer, input to output."""
        dims = [self.input_dim] + [self.width] * (self.depth - 1) + [self.output_dim]
        return [(dims[i + 1], dims[i]) for i in range(self.depth)]

    @property
    def n_params(self) -> int:
        return sum(o * i + o for o, i in self.layer_shapes)


def derive_architecture(d: int, k: int) -> ArchitectureSpec:
    """Width and depth as functions of the spatial dimension.

    width = round(128 sqrt(d/2)), depth = round(6 + 2 log2(d/2)), input
    (t, x_1..x_d, nu, noise params) so input_dim = d + 2 + k.
    """
    if d < 2 or d % 2:
        raise ValueError(f"spatial dimension must be an even integer >= 2, got {d}")
    if k < 1:
        raise ValueError(f"noise parameter count must be positive, got {k}")
    width = _round_half_away(128.0 * math.sqrt(d / 2.0))
    depth = _round_half_away(6.0 + 2.0 * math.log2(d / 2.0))
    return ArchitectureSpec(input_dim=d + 2 + k, width=width, depth=depth)


@dataclass
class ParameterSet:
    """Weights (fan_out x fan_in) and biases for each layer, input to output."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or len(self.weights) < 2:
            raise ValueError("weights and biases must be equal-length lists of >= 2 layers")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ValueError(f"layer {i}: weight {w.shape} and bias {b.shape} disagree")
            if i and w.shape[1] != self.weights[i - 1].shape[0]:
                raise ValueError(f"layer {i}: fan-in {w.shape[1]} does not chain")
        if self.weights[-1].shape[0] != 1:
            raise ValueError("output layer must have fan-out 1")

    @property
    def spec(self) -> ArchitectureSpec:
        return ArchitectureSpec(
            input_dim=self.weights[0].shape[1],
            width=self.weights[0].shape[0],
            depth=len(self.weights),
        )

    def arrays(self) -> list[np.ndarray]:
        """Interleaved [W1, b1, W2, b2, ...]."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def flatten(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    @classmethod
    def unflatten(cls, flat: np.ndarray, spec: ArchitectureSpec) -> ParameterSet:
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != spec.n_params:
            raise ValueError(f"expected {spec.n_params} values, got {flat.size}")
        weights, biases, pos = [], [], 0
        for fan_out, fan_in in spec.layer_shapes:
            weights.append(flat[pos:pos + fan_out * fan_in].reshape(fan_out, fan_in).copy())
            pos += fan_out * fan_in
            biases.append(flat[pos:pos + fan_out].copy())
            pos += fan_out
        return cls(weights, biases)

    def copy(self) -> ParameterSet:
        return ParameterSet([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def zeros_like(self) -> ParameterSet:
        return ParameterSet([np.zeros_like(w) for w in self.weights],
                            [np.zeros_like(b) for b in self.biases])

    def is_finite(self) -> bool:
        return all(np.isfinite(a).all() for a in self.arrays())


# Gradients share the parameter layout.
ParamGradient = ParameterSet


def init_xavier(spec: ArchitectureSpec, seed) -> ParameterSet:
    """Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_out, fan_in in spec.layer_shapes:
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return ParameterSet(weights, biases)


@dataclass
class NetworkJet:
    """u, du/dt and the spatial Laplacian, one entry per evaluated point."""

    value: np.ndarray
    dt: np.ndarray
    laplacian: np.ndarray


@dataclass
class _Tape:
    """Forward intermediates needed by the adjoint sweep."""

    inputs: np.ndarray          # (P, n_in)
    pre: list[np.ndarray]       # per hidden layer: (S, P, width) pre-activation streams
    post: list[np.ndarray]      # per hidden layer: (S, P, width) activation streams
    n_spatial: int
    time_index: int
    spatial_index: np.ndarray
    derivatives: bool


def _direction_columns(time_index: int, spatial_index: np.ndarray) -> np.ndarray:
    return np.concatenate([[time_index], spatial_index]).astype(int)


def _forward(params: ParameterSet, inputs: np.ndarray, d: int, time_index: int,
             spatial_index, derivatives: bool) -> tuple[NetworkJet, _Tape]:
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 2 or inputs.shape[1] != params.weights[0].shape[1]:
        raise ValueError(
            f"input of shape {inputs.shape} does not match fan-in {params.weights[0].shape[1]}")
    spatial_index = (np.arange(1, d + 1) if spatial_index is None
                     else np.asarray(spatial_index, dtype=int))
    P = inputs.shape[0]
    W, b = params.weights, params.biases
    n_first = d + 1 if derivatives else 0
    n_second = d if derivatives else 0
    S = 1 + n_first + n_second

    z = np.empty((S, P, W[0].shape[0]))
    z[0] = inputs @ W[0].T + b[0]
    if derivatives:
        # Input tangents are unit vectors, second-order input tangents vanish.
        cols = _direction_columns(time_index, spatial_index)
        z[1:1 + n_first] = W[0][:, cols].T[:, None, :]
        z[1 + n_first:] = 0.0

    pre, post = [], []
    for layer in range(1, len(W)):
        a = np.empty_like(z)
        a0 = np.tanh(z[0], out=a[0])
        if derivatives:
            s = 1.0 - a0 * a0
            np.multiply(z[1:1 + n_first], s, out=a[1:1 + n_first])
            # a''_i = s z''_i - 2 a s (z'_i)^2, z'_i the spatial first-order streams
            second = a[1 + n_first:]
            np.square(z[2:2 + d], out=second)
            second *= -2.0 * a0 * s
            second += z[1 + n_first:] * s
        pre.append(z)
        post.append(a)
        flat = a.reshape(S * P, -1) @ W[layer].T
        z = flat.reshape(S, P, -1)
        z[0] += b[layer]

    out = z[..., 0]
    if derivatives:
        jet = NetworkJet(out[0].copy(), out[1].copy(), out[1 + n_first:].sum(axis=0))
    else:
        jet = NetworkJet(out[0].copy(), np.zeros(P), np.zeros(P))
    tape = _Tape(inputs, pre, post, d, time_index, spatial_index, derivatives)
    return jet, tape


def forward_jet(params: ParameterSet, inputs, d: int | None = None, *,
                time_index: int = 0, spatial_index=None,
                derivatives: bool = True) -> NetworkJet:
    """Evaluate u, du/dt and the spatial Laplacian of the network.

    ``inputs`` is either one point (1-D) or a batch (P, input_dim) laid out as
    (t, x_1..x_d, nu, noise params).  ``d`` defaults to what the layout implies
    only when ``spatial_index`` is given; otherwise it is required.  A 1-D input
    returns a jet of Python floats.
    """
    x = np.asarray(inputs, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if d is None:
        if spatial_index is None:
            raise ValueError("either d or spatial_index is required")
        d = len(spatial_index)
    jet, _ = _forward(params, x, d, time_index, spatial_index, derivatives)
    if single:
        return NetworkJet(float(jet.value[0]), float(jet.dt[0]), float(jet.laplacian[0]))
    return jet


def forward_value(params: ParameterSet, inputs: np.ndarray) -> np.ndarray:
    """Plain forward pass, no derivative streams."""
    h = np.asarray(inputs, dtype=np.float64)
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        h = np.tanh(h @ w.T + b)
    return (h @ params.weights[-1].T + params.biases[-1])[:, 0]


def _backward(params: ParameterSet, tape: _Tape, g_value: np.ndarray, g_dt: np.ndarray,
              g_lap: np.ndarray, grads: ParameterSet) -> None:
    """Accumulate d(loss)/d(params) into ``grads`` given cotangents of the jet."""
    W = params.weights
    d = tape.n_spatial
    deriv = tape.derivatives
    n_first = d + 1 if deriv else 0
    S = 1 + n_first + (d if deriv else 0)
    P = tape.inputs.shape[0]

    # Output layer: u streams = a_streams @ W_L^T.
    gz = np.zeros((S, P, 1))
    gz[0, :, 0] = g_value
    if deriv:
        gz[1, :, 0] = g_dt
        gz[1 + n_first:, :, 0] = g_lap
    for layer in range(len(W) - 1, 0, -1):
        a = tape.post[layer - 1]
        z = tape.pre[layer - 1]
        width = a.shape[-1]
        grads.weights[layer] += gz.reshape(S * P, -1).T @ a.reshape(S * P, width)
        grads.biases[layer] += gz[0].sum(axis=0)
        ga = (gz.reshape(S * P, -1) @ W[layer]).reshape(S, P, width)

        # Through the tanh jet.
        a0 = a[0]
        s = 1.0 - a0 * a0
        if deriv:
            ga_f = ga[1:1 + n_first]
            ga_s = ga[1 + n_first:]
            zs = z[2:2 + d]
            # a'_j = s z'_j  and  a''_i = s z''_i - 2 a s (z'_i)^2
            g_s = np.einsum("spw,spw->pw", ga_f, z[1:1 + n_first])
            g_s += np.einsum("spw,spw->pw", ga_s, z[1 + n_first:])
            gzs = ga_s * zs               # (d, P, W): ga''_i z'_i
            g_sq = np.einsum("spw,spw->pw", gzs, zs)
            g_s -= 2.0 * a0 * g_sq
            g_a = ga[0] - 2.0 * s * g_sq - 2.0 * a0 * g_s
            ga_f *= s
            ga_s *= s
            gzs *= -4.0 * a0 * s
            ga[2:2 + d] += gzs
            gzp = ga
        else:
            g_a = ga[0]
            gzp = ga
        gzp[0] = g_a * s
        gz = gzp

    # First layer: z_0 = X W^T + b, z'_j = W[:, col_j], z'' = 0.
    grads.weights[0] += gz[0].T @ tape.inputs
    grads.biases[0] += gz[0].sum(axis=0)
    if deriv:
        cols = _direction_columns(tape.time_index, tape.spatial_index)
        col_sums = gz[1:1 + n_first].sum(axis=1)  # (d+1, width)
        np.add.at(grads.weights[0].T, cols, col_sums)


@dataclass
class JetBlock:
    """A set of points to push through the network as one batch."""

    inputs: np.ndarray
    d: int
    derivatives: bool = True
    time_index: int = 0
    spatial_index: np.ndarray | None = None


@dataclass
class JetCotangent:
    value: np.ndarray | float = 0.0
    dt: np.ndarray | float = 0.0
    laplacian: np.ndarray | float = 0.0


class NonFiniteLossError(FloatingPointError):
    def __init__(self, message: str, blocks=None):
        super().__init__(message)
        self.blocks = blocks


LossEvaluator = Callable[[Sequence[NetworkJet]], tuple[float, Sequence[JetCotangent]]]


def loss_param_gradients(params: ParameterSet, blocks: Sequence[JetBlock],
                         evaluator: LossEvaluator) -> tuple[float, ParamGradient]:
    """Loss and its exact parameter gradient.

    Each block is evaluated by ``forward_jet``; ``evaluator`` maps the list of
    jets to ``(loss, cotangents)`` where cotangents[i] holds d(loss)/d(value),
    d(loss)/d(dt) and d(loss)/d(laplacian) for the points of block i.
    """
    grads = params.zeros_like()
    jets, tapes = [], []
    for blk in blocks:
        if len(blk.inputs) == 0:
            jets.append(NetworkJet(np.zeros(0), np.zeros(0), np.zeros(0)))
            tapes.append(None)
            continue
        jet, tape = _forward(params, blk.inputs, blk.d, blk.time_index,
                             blk.spatial_index, blk.derivatives)
        jets.append(jet)
        tapes.append(tape)
    loss, cots = evaluator(jets)
    loss = float(loss)
    if not math.isfinite(loss):
        raise NonFiniteLossError(f"non-finite loss {loss}", blocks)
    for tape, jet, cot in zip(tapes, jets, cots):
        if tape is None:
            continue
        n = len(jet.value)
        gv = np.broadcast_to(np.asarray(cot.value, dtype=np.float64), (n,))
        gt = np.broadcast_to(np.asarray(cot.dt, dtype=np.float64), (n,))
        gl = np.broadcast_to(np.asarray(cot.laplacian, dtype=np.float64), (n,))
        _backward(params, tape, gv, gt, gl, grads)
    return loss, grads


# -- checkpoints -------------------------------------------------------------

def save_checkpoint(path, params: ParameterSet, metadata: dict | None = None) -> None:
    """Write magic, version, a JSON header and the flat little-endian float64 payload.

    The payload holds W1, b1, W2, b2, ... each row-major.  The file contains no
    timestamps, so equal parameters give byte-identical files.
    """
    spec = params.spec
    header = {
        "version": CHECKPOINT_VERSION,
        "architecture": {"input_dim": spec.input_dim, "width": spec.width,
                         "depth": spec.depth, "output_dim": spec.output_dim},
        "layout": "W1,b1,...,WL,bL; row-major; <f8",
        "n_params": spec.n_params,
        "metadata": metadata or {},
    }
    raw_header = json.dumps(header, sort_keys=True).encode("utf-8")
    payload = params.flatten().astype("<f8").tobytes()
    with open(Path(path), "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<IQ", CHECKPOINT_VERSION, len(raw_header)))
        fh.write(raw_header)
        fh.write(payload)


def load_checkpoint(path) -> tuple[ParameterSet, dict]:
    with open(Path(path), "rb") as fh:
        if fh.read(len(CHECKPOINT_MAGIC)) != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        version, n_header = struct.unpack("<IQ", fh.read(12))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        header = json.loads(fh.read(n_header).decode("utf-8"))
        payload = np.frombuffer(fh.read(), dtype="<f8")
    spec = ArchitectureSpec(**header["architecture"])
    return ParameterSet.unflatten(payload.astype(np.float64), spec), header
