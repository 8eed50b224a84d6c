"""Action-prediction CNN: conv 32x5x5 -> ReLU -> 2x2 max-pool -> dense 128
-> ReLU -> dense 4 -> softmax.

Forward, analytic backpropagation, mini-batch momentum training and
parameter persistence are implemented directly on numpy arrays.  The board
is encoded as four binary channels (head, blocked, own free pin, other
pins); raw net indices are nominal so feeding them as magnitudes would be
meaningless.  Boards smaller than the network input are placed at the
origin and the surround is marked blocked.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from pathlib import Path as FsPath
from typing import Callable, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .grid import StateMatrix
from .rng import STREAM_TRAIN, purpose_rng

N_CHANNELS = 4
KERNEL = 5

CH_HEAD = 0
CH_BLOCKED = 1
CH_OWN_PIN = 2
CH_OTHER_PIN = 3


class PolicyError(ValueError):
    """Configuration or parameter-file problem."""


@dataclass
class PolicyParams:
    """Network weights; shapes fix the input size and layer widths."""

    conv_w: np.ndarray  # (filters, channels, 5, 5)
    conv_b: np.ndarray  # (filters,)
    fc1_w: np.ndarray   # (pooled_h * pooled_w * filters, hidden)
    fc1_b: np.ndarray   # (hidden,)
    fc2_w: np.ndarray   # (hidden, 4)
    fc2_b: np.ndarray   # (4,)
    input_h: int = 30
    input_w: int = 30

    @property
    def filters(self) -> int:
        return self.conv_w.shape[0]

    @property
    def hidden(self) -> int:
        return self.fc1_w.shape[1]

    @property
    def pooled_shape(self) -> Tuple[int, int]:
        return (self.input_h // 2, self.input_w // 2)

    def check_shapes(self) -> None:
        ph, pw = self.pooled_shape
        expected = ph * pw * self.filters
        if self.conv_w.shape[1:] != (N_CHANNELS, KERNEL, KERNEL):
            raise PolicyError(f"conv_w has shape {self.conv_w.shape}")
        if self.conv_b.shape != (self.filters,):
            raise PolicyError("conv_b shape mismatch")
        if self.fc1_w.shape[0] != expected:
            raise PolicyError(
                f"fc1_w expects {self.fc1_w.shape[0]} inputs, pooling yields {expected}"
            )
        if self.fc1_b.shape != (self.hidden,):
            raise PolicyError("fc1_b shape mismatch")
        if self.fc2_w.shape != (self.hidden, 4):
            raise PolicyError(f"fc2_w has shape {self.fc2_w.shape}")
        if self.fc2_b.shape != (4,):
            raise PolicyError("fc2_b shape mismatch")

    def astype(self, dtype) -> "PolicyParams":
        return PolicyParams(
            conv_w=self.conv_w.astype(dtype),
            conv_b=self.conv_b.astype(dtype),
            fc1_w=self.fc1_w.astype(dtype),
            fc1_b=self.fc1_b.astype(dtype),
            fc2_w=self.fc2_w.astype(dtype),
            fc2_b=self.fc2_b.astype(dtype),
            input_h=self.input_h,
            input_w=self.input_w,
        )


ARRAY_FIELDS = ("conv_w", "conv_b", "fc1_w", "fc1_b", "fc2_w", "fc2_b")


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    batch_size: int = 32
    epochs: int = 30
    momentum: float = 0.9
    seed: int = 0

    def __post_init__(self) -> None:
        if self.learning_rate <= 0 or self.batch_size <= 0 or self.epochs <= 0:
            raise PolicyError("learning_rate, batch_size and epochs must be positive")


def init_params(seed: int = 0, input_h: int = 30, input_w: int = 30,
                filters: int = 32, hidden: int = 128, dtype=np.float32) -> PolicyParams:
    """Fan-in-scaled uniform initialization, biases at zero."""
    rng = purpose_rng(seed, STREAM_TRAIN)

    def uniform(shape, fan_in):
        s = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-s, s, size=shape).astype(dtype)

    ph, pw = input_h // 2, input_w // 2
    params = PolicyParams(
        conv_w=uniform((filters, N_CHANNELS, KERNEL, KERNEL), N_CHANNELS * KERNEL * KERNEL),
        conv_b=np.zeros(filters, dtype=dtype),
        fc1_w=uniform((ph * pw * filters, hidden), ph * pw * filters),
        fc1_b=np.zeros(hidden, dtype=dtype),
        fc2_w=uniform((hidden, 4), hidden),
        fc2_b=np.zeros(4, dtype=dtype),
        input_h=input_h,
        input_w=input_w,
    )
    params.check_shapes()
    return params


def zero_params(input_h: int = 30, input_w: int = 30, filters: int = 32,
                hidden: int = 128, dtype=np.float32) -> PolicyParams:
    """All-zero weights; the forward pass is uniform over the four actions."""
    ph, pw = input_h // 2, input_w // 2
    return PolicyParams(
        conv_w=np.zeros((filters, N_CHANNELS, KERNEL, KERNEL), dtype=dtype),
        conv_b=np.zeros(filters, dtype=dtype),
        fc1_w=np.zeros((ph * pw * filters, hidden), dtype=dtype),
        fc1_b=np.zeros(hidden, dtype=dtype),
        fc2_w=np.zeros((hidden, 4), dtype=dtype),
        fc2_b=np.zeros(4, dtype=dtype),
        input_h=input_h,
        input_w=input_w,
    )


def encode_input(m: StateMatrix, input_h: int = 30, input_w: int = 30) -> np.ndarray:
    """Four binary channels (input_h, input_w, 4) with the board at the origin.

    Channel 0 marks the head, 1 everything blocked (obstacles, non-head path
    vertices and any padding beyond the board), 2 the current net's free pin
    and 3 the pins of the remaining nets.
    """
    h, w = m.cells.shape
    if h > input_h or w > input_w:
        raise PolicyError(f"board {w}x{h} exceeds network input {input_w}x{input_h}")
    x = np.zeros((input_h, input_w, N_CHANNELS), dtype=np.float32)
    x[:, :, CH_BLOCKED] = 1.0
    x[:h, :w, CH_BLOCKED] = m.cells == -1
    x[:h, :w, CH_OTHER_PIN] = (m.cells >= 1) & (m.cells != m.net_index)
    own = m.cells == m.net_index
    if m.head is not None:
        own = own.copy()
        own[m.head.y, m.head.x] = False
        x[m.head.y, m.head.x, CH_HEAD] = 1.0
    x[:h, :w, CH_OWN_PIN] = own
    return x


def _conv_pool(params: PolicyParams, x: np.ndarray):
    """Shared conv -> ReLU -> pool for a batch x of shape (B, H, W, C)."""
    b, h, w, _ = x.shape
    f = params.filters
    xp = np.pad(x, ((0, 0), (2, 2), (2, 2), (0, 0)))
    win = sliding_window_view(xp, (KERNEL, KERNEL), axis=(1, 2))  # (B,H,W,C,5,5)
    patches = win.reshape(b * h * w, N_CHANNELS * KERNEL * KERNEL)
    w2d = params.conv_w.reshape(f, -1).T  # (C*25, F)
    z0 = (patches @ w2d + params.conv_b).reshape(b, h, w, f)
    a0 = np.maximum(z0, 0)
    windows = a0.reshape(b, h // 2, 2, w // 2, 2, f).transpose(0, 1, 3, 5, 2, 4)
    windows = windows.reshape(b, h // 2, w // 2, f, 4)
    pool_arg = windows.argmax(axis=-1)  # first max in row-major window order
    pooled = np.take_along_axis(windows, pool_arg[..., None], axis=-1)[..., 0]
    return patches, z0, windows, pool_arg, pooled


def forward_batch(params: PolicyParams, x: np.ndarray) -> np.ndarray:
    """Softmax action probabilities for a batch of encoded boards."""
    _, _, _, _, pooled = _conv_pool(params, x)
    flat = pooled.reshape(x.shape[0], -1)
    h1 = np.maximum(flat @ params.fc1_w + params.fc1_b, 0)
    logits = h1 @ params.fc2_w + params.fc2_b
    return _softmax(logits)


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def forward(params: PolicyParams, m) -> np.ndarray:
    """Probabilities (4,) for one state matrix or pre-encoded board."""
    params.check_shapes()
    if isinstance(m, StateMatrix):
        x = encode_input(m, params.input_h, params.input_w)
    else:
        x = np.asarray(m)
        if x.shape != (params.input_h, params.input_w, N_CHANNELS):
            raise PolicyError(f"input shape {x.shape} does not match network")
    x = x.astype(params.conv_w.dtype, copy=False)
    return forward_batch(params, x[None])[0]


def loss_and_gradients(params: PolicyParams, x: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy and analytic gradients for a batch.

    ``x`` is (B, H, W, C) already encoded, ``labels`` the correct action
    indices.  Max-pool gradients route to the first maximal cell of each
    window in row-major order.
    """
    if len(labels) == 0:
        raise PolicyError("empty batch")
    dtype = params.conv_w.dtype
    x = x.astype(dtype, copy=False)
    b, h, w, _ = x.shape
    f = params.filters
    patches, z0, windows, pool_arg, pooled = _conv_pool(params, x)
    flat = pooled.reshape(b, -1)
    z1 = flat @ params.fc1_w + params.fc1_b
    h1 = np.maximum(z1, 0)
    logits = h1 @ params.fc2_w + params.fc2_b
    probs = _softmax(logits)
    eps = np.finfo(dtype).tiny
    loss = float(-np.log(probs[np.arange(b), labels] + eps).mean())

    dlogits = probs.copy()
    dlogits[np.arange(b), labels] -= 1.0
    dlogits /= b
    g_fc2_w = h1.T @ dlogits
    g_fc2_b = dlogits.sum(axis=0)
    dh1 = dlogits @ params.fc2_w.T
    dz1 = dh1 * (z1 > 0)
    g_fc1_w = flat.T @ dz1
    g_fc1_b = dz1.sum(axis=0)
    dflat = dz1 @ params.fc1_w.T
    dpooled = dflat.reshape(b, h // 2, w // 2, f)

    # Un-pool: scatter each gradient to its window's argmax cell.
    dwin = np.zeros_like(windows)
    np.put_along_axis(dwin, pool_arg[..., None], dpooled[..., None], axis=-1)
    da0 = dwin.reshape(b, h // 2, w // 2, f, 2, 2).transpose(0, 1, 4, 2, 5, 3)
    da0 = da0.reshape(b, h, w, f)
    dz0 = da0 * (z0 > 0)
    dz0_2d = dz0.reshape(b * h * w, f)
    g_conv_w = (patches.T @ dz0_2d).T.reshape(params.conv_w.shape)
    g_conv_b = dz0_2d.sum(axis=0)

    grads = PolicyParams(
        conv_w=g_conv_w, conv_b=g_conv_b,
        fc1_w=g_fc1_w, fc1_b=g_fc1_b,
        fc2_w=g_fc2_w, fc2_b=g_fc2_b,
        input_h=params.input_h, input_w=params.input_w,
    )
    return loss, grads


def encode_samples(samples: Sequence, input_h: int = 30, input_w: int = 30):
    """Encode training samples to (X uint8, y int64) arrays."""
    xs = np.stack([
        encode_input(s.matrix, input_h, input_w).astype(np.uint8) for s in samples
    ])
    ys = np.array([int(s.label) for s in samples], dtype=np.int64)
    return xs, ys


def accuracy(params: PolicyParams, x: np.ndarray, y: np.ndarray, batch: int = 256) -> float:
    hits = 0
    for i in range(0, len(y), batch):
        probs = forward_batch(params, x[i:i + batch].astype(params.conv_w.dtype))
        hits += int((probs.argmax(axis=1) == y[i:i + batch]).sum())
    return hits / len(y)


def train(samples: Sequence, cfg: TrainConfig,
          eval_samples: Optional[Sequence] = None,
          params: Optional[PolicyParams] = None,
          log_fn: Optional[Callable[[str], None]] = None) -> PolicyParams:
    """Mini-batch gradient descent with momentum; deterministic in cfg.seed."""
    if not samples:
        raise PolicyError("no training samples")
    if params is None:
        params = init_params(cfg.seed)
    x, y = encode_samples(samples, params.input_h, params.input_w)
    x_eval = y_eval = None
    if eval_samples:
        x_eval, y_eval = encode_samples(eval_samples, params.input_h, params.input_w)
    rng = purpose_rng(cfg.seed, STREAM_TRAIN)
    rng.integers(2)  # decouple the shuffle stream from init_params
    velocity = {k: np.zeros_like(getattr(params, k)) for k in ARRAY_FIELDS}
    n = len(y)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        epoch_loss = 0.0
        nbatches = 0
        for i in range(0, n, cfg.batch_size):
            idx = order[i:i + cfg.batch_size]
            loss, grads = loss_and_gradients(
                params, x[idx].astype(params.conv_w.dtype), y[idx]
            )
            if not np.isfinite(loss):
                raise PolicyError(f"training diverged (non-finite loss) at epoch {epoch}")
            epoch_loss += loss
            nbatches += 1
            for k in ARRAY_FIELDS:
                v = velocity[k]
                v *= cfg.momentum
                v -= cfg.learning_rate * getattr(grads, k)
                getattr(params, k)[...] += v
        if log_fn is not None:
            train_acc = accuracy(params, x, y)
            test_acc = accuracy(params, x_eval, y_eval) if x_eval is not None else float("nan")
            log_fn(
                f"epoch {epoch} loss {epoch_loss / nbatches:.6f} "
                f"train_acc {train_acc:.4f} test_acc {test_acc:.4f}"
            )
    return params


MAGIC = b"MCTSROUTE-POLICY"
FORMAT_VERSION = 1


def save_params(params: PolicyParams, path) -> None:
    """Binary file: magic, version, shape header, little-endian float32 blobs."""
    params.check_shapes()
    out = bytearray()
    out += MAGIC + b"\n"
    out += f"version {FORMAT_VERSION}\n".encode()
    out += f"input {params.input_h} {params.input_w}\n".encode()
    for name in ARRAY_FIELDS:
        arr = getattr(params, name)
        dims = " ".join(str(d) for d in arr.shape)
        out += f"{name} {dims}\n".encode()
    out += b"data\n"
    for name in ARRAY_FIELDS:
        out += np.ascontiguousarray(getattr(params, name), dtype="<f4").tobytes()
    FsPath(path).write_bytes(bytes(out))


def load_params(path) -> PolicyParams:
    raw = FsPath(path).read_bytes()
    try:
        header_end = raw.index(b"data\n")
    except ValueError:
        raise PolicyError("truncated parameter file: no data section") from None
    lines = raw[:header_end].decode("ascii", errors="replace").splitlines()
    if not lines or lines[0].encode() != MAGIC:
        raise PolicyError("bad magic string: not a policy parameter file")
    if len(lines) < 2 or not lines[1].startswith("version "):
        raise PolicyError("missing format version")
    version = int(lines[1].split()[1])
    if version != FORMAT_VERSION:
        raise PolicyError(f"unsupported format version {version}")
    if len(lines) < 3 or not lines[2].startswith("input "):
        raise PolicyError("missing input size header")
    input_h, input_w = (int(v) for v in lines[2].split()[1:3])
    shapes = {}
    for line in lines[3:]:
        parts = line.split()
        if parts[0] not in ARRAY_FIELDS:
            raise PolicyError(f"unknown field {parts[0]!r} in header")
        shapes[parts[0]] = tuple(int(v) for v in parts[1:])
    arrays = {}
    offset = header_end + len(b"data\n")
    for name in ARRAY_FIELDS:
        if name not in shapes:
            raise PolicyError(f"field {name} missing from header")
        count = int(np.prod(shapes[name]))
        nbytes = count * 4
        blob = raw[offset:offset + nbytes]
        if len(blob) != nbytes:
            raise PolicyError(f"truncated data for field {name}")
        arrays[name] = np.frombuffer(blob, dtype="<f4").reshape(shapes[name]).copy()
        offset += nbytes
    if offset != len(raw):
        raise PolicyError("trailing bytes after parameter data")
    params = PolicyParams(input_h=input_h, input_w=input_w, **arrays)
    params.check_shapes()
    return params


class PolicyNetwork:
    """Estimator-style wrapper: ``fit`` on samples, ``predict_proba`` boards.

    Follows the scikit-learn parameter conventions (constructor arguments
    stored verbatim, ``get_params``/``set_params``, ``fit`` returns self) so
    it drops into that ecosystem's tooling.
    """

    def __init__(self, learning_rate: float = 0.01, batch_size: int = 32,
                 epochs: int = 30, momentum: float = 0.9, seed: int = 0):
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.momentum = momentum
        self.seed = seed

    def get_params(self, deep: bool = True) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "momentum": self.momentum,
            "seed": self.seed,
        }

    def set_params(self, **kwargs) -> "PolicyNetwork":
        for key, value in kwargs.items():
            if key not in self.get_params():
                raise PolicyError(f"unknown parameter {key!r}")
            setattr(self, key, value)
        return self

    def fit(self, samples: Sequence, eval_samples: Optional[Sequence] = None,
            log_fn: Optional[Callable[[str], None]] = None) -> "PolicyNetwork":
        cfg = TrainConfig(
            learning_rate=self.learning_rate, batch_size=self.batch_size,
            epochs=self.epochs, momentum=self.momentum, seed=self.seed,
        )
        self.params_ = train(samples, cfg, eval_samples=eval_samples, log_fn=log_fn)
        return self

    def predict_proba(self, matrices: Iterable) -> np.ndarray:
        self._check_fitted()
        return np.stack([forward(self.params_, m) for m in matrices])

    def predict(self, matrices: Iterable) -> np.ndarray:
        return self.predict_proba(matrices).argmax(axis=1)

    def score(self, samples: Sequence) -> float:
        self._check_fitted()
        x, y = encode_samples(samples, self.params_.input_h, self.params_.input_w)
        return accuracy(self.params_, x, y)

    def _check_fitted(self) -> None:
        if not hasattr(self, "params_"):
            raise PolicyError("PolicyNetwork is not fitted")
