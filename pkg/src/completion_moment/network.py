"""Recurrent voting node: ReLU projection, one LSTM layer, two linear heads.

Each frame ``x_t`` goes through

    u_t = relu(W_in x_t + b_in)
    i, f, o, g = sigmoid/sigmoid/sigmoid/tanh of W [u_t; h_{t-1}] + b
    c_t = f * c_{t-1} + i * g,   h_t = o * tanh(c_t)
    C_t = sigmoid(w_c . h_t + b_c)      (probability of post-completion)
    R_t = w_r . h_t + b_r               (relative time (t - tau) / tau)

The sequence loss is the frame mean of the cross-entropy on ``C_t`` plus the
squared error on ``R_t``; gradients are exact backpropagation through time.
"""

from __future__ import annotations

import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .data import POST, PRE, CompletionAnnotation, FeatureSequence, FrameLabel, frame_labels, label_arrays
from .seeding import rng_for

log = logging.getLogger(__name__)

CLAMP_EPS = 1e-7
FORGET_BIAS = 1.0
CHECKPOINT_MAGIC = b"CMP1"
CHECKPOINT_VERSION = 1
_CKPT_HEADER = struct.Struct("<4sIIII")

PARAM_NAMES = ("W_in", "b_in", "W", "b", "w_c", "b_c", "w_r", "b_r")


class NumericalError(ArithmeticError):
    """Non-finite loss or gradient during training."""


class DimensionError(ValueError):
    pass


def sigmoid(x):
    # split on sign so exp never overflows
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


@dataclass
class ModelParams:
    """All trainable weights, float64. LSTM gate rows are ordered i, f, o, g."""

    W_in: np.ndarray
    b_in: np.ndarray
    W: np.ndarray
    b: np.ndarray
    w_c: np.ndarray
    b_c: np.ndarray
    w_r: np.ndarray
    b_r: np.ndarray

    def __post_init__(self) -> None:
        for name in PARAM_NAMES:
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        h_in, d = self.W_in.shape
        h = self.W.shape[0] // 4
        expected = {
            "W_in": (h_in, d), "b_in": (h_in,), "W": (4 * h, h_in + h), "b": (4 * h,),
            "w_c": (h,), "b_c": (1,), "w_r": (h,), "b_r": (1,),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise DimensionError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")

    @property
    def d(self) -> int:
        return self.W_in.shape[1]

    @property
    def h_in(self) -> int:
        return self.W_in.shape[0]

    @property
    def hidden(self) -> int:
        return self.W.shape[0] // 4

    def items(self) -> Iterator[tuple[str, np.ndarray]]:
        for name in PARAM_NAMES:
            yield name, getattr(self, name)

    def copy(self) -> "ModelParams":
        return ModelParams(**{k: v.copy() for k, v in self.items()})

    def zeros_like(self) -> "ModelParams":
        return ModelParams(**{k: np.zeros_like(v) for k, v in self.items()})

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for _, v in self.items())

    def global_norm(self) -> float:
        return float(np.sqrt(sum(np.sum(v * v) for _, v in self.items())))

    def equals(self, other: "ModelParams") -> bool:
        return all(np.array_equal(a, getattr(other, k)) for k, a in self.items())

    @classmethod
    def zeros(cls, d: int, hidden: int, h_in: int | None = None) -> "ModelParams":
        h_in = d if h_in is None else h_in
        return cls(
            W_in=np.zeros((h_in, d)), b_in=np.zeros(h_in),
            W=np.zeros((4 * hidden, h_in + hidden)), b=np.zeros(4 * hidden),
            w_c=np.zeros(hidden), b_c=np.zeros(1), w_r=np.zeros(hidden), b_r=np.zeros(1),
        )

    @classmethod
    def init(cls, d: int, hidden: int, seed: int, h_in: int | None = None) -> "ModelParams":
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases, forget bias 1."""
        h_in = d if h_in is None else h_in
        rng = rng_for(seed, "init")

        def uniform(shape, fan_in):
            s = 1.0 / np.sqrt(fan_in)
            return rng.uniform(-s, s, size=shape)

        b = np.zeros(4 * hidden)
        b[hidden:2 * hidden] = FORGET_BIAS
        return cls(
            W_in=uniform((h_in, d), d), b_in=np.zeros(h_in),
            W=uniform((4 * hidden, h_in + hidden), h_in + hidden), b=b,
            w_c=uniform(hidden, hidden), b_c=np.zeros(1),
            w_r=uniform(hidden, hidden), b_r=np.zeros(1),
        )


@dataclass(frozen=True)
class FrameOutput:
    C: float
    R: float

    @property
    def cls(self) -> int:
        return POST if self.C >= 0.5 else PRE


@dataclass(frozen=True)
class NodeState:
    h: np.ndarray
    c: np.ndarray


@dataclass
class _Cache:
    x: np.ndarray
    a: np.ndarray
    u: np.ndarray
    h_prev: np.ndarray
    c_prev: np.ndarray
    gates: np.ndarray
    c: np.ndarray
    tanh_c: np.ndarray
    h: np.ndarray
    zc: np.ndarray
    C: np.ndarray
    R: np.ndarray


def _as_frames(params: ModelParams, seq) -> np.ndarray:
    frames = seq.frames if isinstance(seq, FeatureSequence) else seq
    x = np.asarray(frames, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.d:
        raise DimensionError(
            f"feature dimension {x.shape[-1] if x.ndim else '?'} does not match model input {params.d}"
        )
    return x


def _forward(params: ModelParams, x: np.ndarray, state: NodeState | None = None) -> _Cache:
    T = x.shape[0]
    hid = params.hidden
    a = x @ params.W_in.T + params.b_in
    u = np.maximum(a, 0.0)
    # input contribution to the gates does not depend on the recurrence
    zu = u @ params.W[:, : params.h_in].T + params.b
    W_h = params.W[:, params.h_in:]

    h_prev = np.zeros((T, hid))
    c_prev = np.zeros((T, hid))
    gates = np.empty((T, 4 * hid))
    c = np.empty((T, hid))
    h = np.empty((T, hid))
    h_t = np.zeros(hid) if state is None else np.asarray(state.h, dtype=np.float64)
    c_t = np.zeros(hid) if state is None else np.asarray(state.c, dtype=np.float64)
    for t in range(T):
        h_prev[t] = h_t
        c_prev[t] = c_t
        z = zu[t] + W_h @ h_t
        ifo = sigmoid(z[: 3 * hid])
        g = np.tanh(z[3 * hid:])
        gates[t, : 3 * hid] = ifo
        gates[t, 3 * hid:] = g
        c_t = ifo[hid:2 * hid] * c_t + ifo[:hid] * g
        h_t = ifo[2 * hid:] * np.tanh(c_t)
        c[t] = c_t
        h[t] = h_t
    tanh_c = np.tanh(c)
    zc = h @ params.w_c + params.b_c[0]
    R = h @ params.w_r + params.b_r[0]
    return _Cache(x, a, u, h_prev, c_prev, gates, c, tanh_c, h, zc, sigmoid(zc), R)


def forward_arrays(params: ModelParams, seq) -> tuple[np.ndarray, np.ndarray]:
    """Per-frame ``(C, R)`` arrays for a sequence (or a raw ``(T, d)`` array)."""
    cache = _forward(params, _as_frames(params, seq))
    return cache.C, cache.R


def forward_sequence(params: ModelParams, seq) -> list[FrameOutput]:
    C, R = forward_arrays(params, seq)
    return [FrameOutput(float(c), float(r)) for c, r in zip(C, R)]


def final_state(params: ModelParams, seq) -> NodeState:
    cache = _forward(params, _as_frames(params, seq))
    return NodeState(cache.h[-1].copy(), cache.c[-1].copy())


# ---------------------------------------------------------------------------
# losses


def _frame_losses(C: np.ndarray, R: np.ndarray, y: np.ndarray, r: np.ndarray,
                  has_r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    Cc = np.clip(C, CLAMP_EPS, 1.0 - CLAMP_EPS)
    L_C = -(y * np.log(Cc) + (1.0 - y) * np.log(1.0 - Cc))
    L_R = np.where(has_r, (R - r) ** 2, 0.0)
    return L_C, L_R


def frame_losses(outputs: Sequence[FrameOutput], labels: Sequence[FrameLabel]
                 ) -> tuple[np.ndarray, np.ndarray]:
    """Per-frame classification and regression losses."""
    if len(outputs) != len(labels):
        raise ValueError(f"{len(outputs)} outputs but {len(labels)} labels")
    C = np.array([o.C for o in outputs], dtype=np.float64)
    R = np.array([o.R for o in outputs], dtype=np.float64)
    return _frame_losses(C, R, *label_arrays(labels))


def sequence_loss_from_frames(L_C: np.ndarray, L_R: np.ndarray) -> float:
    return float(np.mean(np.asarray(L_C) + np.asarray(L_R)))


def sequence_loss(outputs: Sequence[FrameOutput], labels: Sequence[FrameLabel]) -> float:
    return sequence_loss_from_frames(*frame_losses(outputs, labels))


def dataset_loss(params: ModelParams, sequences: Sequence[FeatureSequence],
                 annotations: Sequence[CompletionAnnotation]) -> float:
    """Sum over sequences of the per-sequence mean frame loss."""
    total = 0.0
    for seq, ann in zip(sequences, annotations):
        total += sequence_loss(forward_sequence(params, seq), frame_labels(ann, seq.T))
    return total


# ---------------------------------------------------------------------------
# backward


def _loss_and_grad(params: ModelParams, x: np.ndarray, y: np.ndarray, r: np.ndarray,
                   has_r: np.ndarray, need_input_grad: bool = False):
    cache = _forward(params, x)
    T = x.shape[0]
    hid = params.hidden
    L_C, L_R = _frame_losses(cache.C, cache.R, y, r, has_r)
    loss = float(np.mean(L_C + L_R))

    unclamped = (cache.C > CLAMP_EPS) & (cache.C < 1.0 - CLAMP_EPS)
    d_zc = np.where(unclamped, cache.C - y, 0.0) / T
    d_R = np.where(has_r, 2.0 * (cache.R - r), 0.0) / T

    grads = params.zeros_like()
    grads.w_c[:] = cache.h.T @ d_zc
    grads.b_c[0] = d_zc.sum()
    grads.w_r[:] = cache.h.T @ d_R
    grads.b_r[0] = d_R.sum()

    d_h_out = np.outer(d_zc, params.w_c) + np.outer(d_R, params.w_r)
    W_h = params.W[:, params.h_in:]
    d_z = np.empty((T, 4 * hid))
    dh_next = np.zeros(hid)
    dc_next = np.zeros(hid)
    for t in range(T - 1, -1, -1):
        i = cache.gates[t, :hid]
        f = cache.gates[t, hid:2 * hid]
        o = cache.gates[t, 2 * hid:3 * hid]
        g = cache.gates[t, 3 * hid:]
        tc = cache.tanh_c[t]
        dh = d_h_out[t] + dh_next
        dc = dh * o * (1.0 - tc * tc) + dc_next
        dz = d_z[t]
        dz[:hid] = dc * g * i * (1.0 - i)
        dz[hid:2 * hid] = dc * cache.c_prev[t] * f * (1.0 - f)
        dz[2 * hid:3 * hid] = dh * tc * o * (1.0 - o)
        dz[3 * hid:] = dc * i * (1.0 - g * g)
        dh_next = W_h.T @ dz
        dc_next = dc * f

    grads.W[:, : params.h_in] = d_z.T @ cache.u
    grads.W[:, params.h_in:] = d_z.T @ cache.h_prev
    grads.b[:] = d_z.sum(axis=0)
    d_u = d_z @ params.W[:, : params.h_in]
    d_a = d_u * (cache.a > 0)
    grads.W_in[:] = d_a.T @ x
    grads.b_in[:] = d_a.sum(axis=0)
    d_x = d_a @ params.W_in if need_input_grad else None
    return loss, grads, d_x


def backward_sequence(params: ModelParams, seq, labels: Sequence[FrameLabel],
                      return_input_grad: bool = False):
    """Gradient of the sequence loss with respect to every parameter block.

    Returns a ``ModelParams`` of gradients, or ``(grads, d_frames)`` when
    ``return_input_grad`` is set. Raises ``NumericalError`` if any entry is
    not finite.
    """
    x = _as_frames(params, seq)
    if len(labels) != x.shape[0]:
        raise ValueError(f"{len(labels)} labels for {x.shape[0]} frames")
    _, grads, d_x = _loss_and_grad(params, x, *label_arrays(labels),
                                   need_input_grad=return_input_grad)
    if not grads.is_finite():
        raise NumericalError("non-finite gradient")
    return (grads, d_x) if return_input_grad else grads


def loss_and_gradient(params: ModelParams, seq, labels: Sequence[FrameLabel]
                      ) -> tuple[float, ModelParams]:
    x = _as_frames(params, seq)
    loss, grads, _ = _loss_and_grad(params, x, *label_arrays(labels))
    return loss, grads


# ---------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class TrainConfig:
    """SGD with one sequence per step and a stepwise learning-rate schedule.

    Defaults: 10 epochs, rate 1e-2 for epochs 1-5 then 1e-3, 128 LSTM units.
    """

    epochs: int = 10
    lr: float = 1e-2
    lr_decay_epochs: tuple[int, ...] = (5,)
    lr_decay_factor: float = 0.1
    hidden: int = 128
    proj_dim: int | None = None
    clip_norm: float = 5.0
    seed: int = 0

    def validate(self) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.lr < 0 or self.lr_decay_factor < 0:
            raise ValueError("learning rates must be non-negative")
        if self.hidden < 1 or (self.proj_dim is not None and self.proj_dim < 1):
            raise ValueError("layer sizes must be >= 1")
        if self.clip_norm <= 0:
            raise ValueError("clip_norm must be > 0")

    def lr_at(self, epoch: int) -> float:
        """Learning rate for the 0-based ``epoch``."""
        drops = sum(1 for e in self.lr_decay_epochs if epoch >= e)
        return self.lr * self.lr_decay_factor ** drops


@dataclass
class TrainResult:
    params: ModelParams
    epoch_losses: list[float] = field(default_factory=list)


def clip_by_global_norm(grads: ModelParams, max_norm: float) -> float:
    norm = grads.global_norm()
    if norm > max_norm:
        scale = max_norm / norm
        for _, g in grads.items():
            g *= scale
    return norm


def train(params_init: ModelParams, sequences: Sequence[FeatureSequence],
          annotations: Sequence[CompletionAnnotation], config: TrainConfig) -> TrainResult:
    """Train with plain SGD, one sequence per update, shuffled each epoch.

    The per-epoch loss recorded is the mean of the per-sequence losses seen
    during that epoch (before each update).
    """
    config.validate()
    if not sequences:
        raise ValueError("empty training set")
    if len(sequences) != len(annotations):
        raise ValueError("sequences and annotations differ in length")
    params = params_init.copy()
    data = []
    for seq, ann in zip(sequences, annotations):
        x = _as_frames(params, seq)
        data.append((seq.id, x, label_arrays(frame_labels(ann, seq.T))))

    trace = []
    for epoch in range(config.epochs):
        lr = config.lr_at(epoch)
        order = rng_for(config.seed, f"shuffle:{epoch}").permutation(len(data))
        losses = []
        for k in order:
            sid, x, (y, r, has_r) = data[k]
            loss, grads, _ = _loss_and_grad(params, x, y, r, has_r)
            if not np.isfinite(loss) or not grads.is_finite():
                raise NumericalError(f"divergence at epoch {epoch + 1}, sequence {sid}")
            clip_by_global_norm(grads, config.clip_norm)
            if lr:
                for name, g in grads.items():
                    getattr(params, name)[...] -= lr * g
            losses.append(loss)
        trace.append(math.fsum(losses) / len(losses))
        log.info("epoch %d lr %.0e mean loss %.6f", epoch + 1, lr, trace[-1])
    return TrainResult(params, trace)


# ---------------------------------------------------------------------------
# checkpoints and traces


def save_params(path: str | Path, params: ModelParams) -> None:
    with open(path, "wb") as fh:
        fh.write(_CKPT_HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
                                   params.d, params.h_in, params.hidden))
        for _, arr in params.items():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_params(path: str | Path) -> ModelParams:
    raw = Path(path).read_bytes()
    if len(raw) < _CKPT_HEADER.size:
        raise ValueError(f"truncated checkpoint {path}")
    magic, version, d, h_in, hid = _CKPT_HEADER.unpack_from(raw)
    if magic != CHECKPOINT_MAGIC:
        raise ValueError(f"bad checkpoint magic {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    template = ModelParams.zeros(d, hid, h_in)
    offset = _CKPT_HEADER.size
    arrays = {}
    for name, arr in template.items():
        n = arr.size
        chunk = np.frombuffer(raw, dtype="<f8", count=n, offset=offset)
        arrays[name] = chunk.reshape(arr.shape).astype(np.float64)
        offset += 8 * n
    if offset != len(raw):
        raise ValueError(f"checkpoint {path} has {len(raw) - offset} trailing bytes")
    return ModelParams(**arrays)


def write_loss_trace(path: str | Path, losses: Sequence[float]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,mean_loss\n")
        for epoch, loss in enumerate(losses, 1):
            fh.write(f"{epoch},{loss:.17g}\n")
