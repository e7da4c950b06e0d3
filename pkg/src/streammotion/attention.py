"""Sliding-window causal attention in offline and streaming (KV-cache) form.

For frame ``i`` with window size ``N`` the output is::

    A_self  = softmax(q_i k_i^T / sqrt(d)) v_i
    A_cross = softmax(q_i K_prev^T / sqrt(d)) V_prev
    fused   = A_self + A_cross          (or their average)

where ``K_prev``/``V_prev`` stack the keys/values of frames ``i-N+1 .. i-1``
along the token axis, oldest first. The streaming path keeps those in a
bounded FIFO cache so each step costs the same regardless of stream length.
"""

from __future__ import annotations

import math
import struct
from collections import deque
from dataclasses import dataclass

import numpy as np

from streammotion.errors import FormatError, ValidationError

FUSION_MODES = ("add", "average")


@dataclass(frozen=True, eq=False)
class AttentionParams:
    """Single-head projections shared by self- and cross-attention."""

    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    window_size: int = 3
    fusion: str = "add"

    def __post_init__(self):
        mats = [np.array(m, dtype=float) for m in (self.w_q, self.w_k, self.w_v)]
        d = mats[0].shape[0] if mats[0].ndim == 2 else -1
        for m in mats:
            if m.ndim != 2 or m.shape != (d, d):
                raise ValidationError(f"projection matrices must all be d x d, got {m.shape}")
            if not np.all(np.isfinite(m)):
                raise ValidationError("projection matrices must be finite")
            m.setflags(write=False)
        if int(self.window_size) != self.window_size or self.window_size < 1:
            raise ValidationError(f"window_size must be an integer >= 1, got {self.window_size}")
        if self.fusion not in FUSION_MODES:
            raise ValidationError(f"fusion must be one of {FUSION_MODES}, got {self.fusion!r}")
        object.__setattr__(self, "w_q", mats[0])
        object.__setattr__(self, "w_k", mats[1])
        object.__setattr__(self, "w_v", mats[2])
        object.__setattr__(self, "window_size", int(self.window_size))

    @property
    def dim(self):
        return self.w_q.shape[0]

    @classmethod
    def identity(cls, d, window_size=3, fusion="add"):
        eye = np.eye(d)
        return cls(eye, eye, eye, window_size, fusion)

    @classmethod
    def random(cls, d, window_size=3, seed=0, fusion="add"):
        rng = np.random.default_rng(seed)
        scale = 1.0 / math.sqrt(d)
        w = rng.normal(0.0, scale, size=(3, d, d))
        return cls(w[0], w[1], w[2], window_size, fusion)


class OpCounter:
    """Counts multiply-accumulate operations; derived from shapes, not timing."""

    def __init__(self):
        self.total = 0

    def add(self, n):
        self.total += int(n)


def _check_frame(tokens, d=None):
    x = np.asarray(tokens, dtype=float)
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
        raise ValidationError(f"feature frame must be a P x d matrix, got shape {x.shape}")
    if d is not None and x.shape[1] != d:
        raise ValidationError(f"feature dimension {x.shape[1]} != projection dimension {d}")
    if not np.all(np.isfinite(x)):
        raise ValidationError("feature frame contains non-finite values")
    return x


def project(tokens, params, counter=None):
    """Return ``(Q, K, V) = (X W_q, X W_k, X W_v)``."""
    x = _check_frame(tokens, params.dim)
    if counter is not None:
        counter.add(3 * x.shape[0] * params.dim * params.dim)
    return x @ params.w_q, x @ params.w_k, x @ params.w_v


def softmax_rows(scores):
    s = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(s)
    return e / e.sum(axis=1, keepdims=True)


def _attend(q, k, v, counter=None):
    if q.shape[1] != k.shape[1] or k.shape != v.shape:
        raise ValidationError(f"shape mismatch q{q.shape} k{k.shape} v{v.shape}")
    d = q.shape[1]
    weights = softmax_rows((q @ k.T) / math.sqrt(d))
    if counter is not None:
        counter.add(2 * q.shape[0] * k.shape[0] * d)
    return weights @ v


def attend_self(q, k, v, counter=None):
    """Softmax attention of the current frame's queries over its own keys."""
    return _attend(np.asarray(q, float), np.asarray(k, float), np.asarray(v, float), counter)


class KVCache:
    """FIFO of (key, value) matrices for the previous ``capacity`` frames."""

    def __init__(self, capacity):
        if capacity < 0:
            raise ValidationError("cache capacity must be >= 0")
        self.capacity = int(capacity)
        self._entries = deque(maxlen=self.capacity) if self.capacity else None

    def __len__(self):
        return len(self._entries) if self._entries is not None else 0

    def push(self, key, value):
        if self._entries is not None:
            self._entries.append((key, value))

    def clear(self):
        if self._entries is not None:
            self._entries.clear()

    def entries(self):
        return list(self._entries) if self._entries is not None else []

    def stacked(self):
        """Keys and values of all cached frames, concatenated oldest first."""
        entries = self.entries()
        if not entries:
            return None, None
        return (np.concatenate([k for k, _ in entries], axis=0),
                np.concatenate([v for _, v in entries], axis=0))


def attend_cross(q, cache, counter=None):
    """Attention of the current queries over every cached frame at once.

    An empty cache yields a zero matrix so frame 0 behaves like ``N = 1``.
    """
    q = np.asarray(q, dtype=float)
    k_prev, v_prev = cache.stacked() if isinstance(cache, KVCache) else _stack(cache)
    if k_prev is None:
        return np.zeros_like(q)
    return _attend(q, k_prev, v_prev, counter)


def _stack(entries):
    entries = list(entries)
    if not entries:
        return None, None
    return (np.concatenate([k for k, _ in entries], axis=0),
            np.concatenate([v for _, v in entries], axis=0))


def _fuse(a_self, a_cross, fusion, have_history):
    if fusion == "average" and have_history:
        return 0.5 * (a_self + a_cross)
    return a_self + a_cross


class StreamState:
    """Per-stream mutable state: parameters, KV cache and an op counter."""

    def __init__(self, params):
        self.params = params
        self.cache = KVCache(params.window_size - 1)
        self.counter = OpCounter()
        self.frames_seen = 0
        self._shape = None

    def reset(self):
        self.cache.clear()
        self.frames_seen = 0
        self._shape = None


def step(state, tokens):
    """Process one frame causally and return the fused P x d output."""
    x = _check_frame(tokens, state.params.dim)
    if state._shape is None:
        state._shape = x.shape
    elif x.shape != state._shape:
        raise ValidationError(f"frame shape changed from {state._shape} to {x.shape}")
    q, k, v = project(x, state.params, state.counter)
    a_self = attend_self(q, k, v, state.counter)
    have_history = len(state.cache) > 0
    a_cross = attend_cross(q, state.cache, state.counter)
    fused = _fuse(a_self, a_cross, state.params.fusion, have_history)
    state.cache.push(k, v)
    state.frames_seen += 1
    return fused


def offline_window_forward(frames, params):
    """Windowed forward with no carried state: frame i sees frames max(0, i-N+1)..i.

    Every window re-projects its frames from scratch, which is what makes this
    an independent reference for :func:`step`.
    """
    frames = [_check_frame(f, params.dim) for f in frames]
    if not frames:
        raise ValidationError("need at least one frame")
    n = params.window_size
    outputs = []
    for i in range(len(frames)):
        window = frames[max(0, i - n + 1):i + 1]
        projected = [project(f, params) for f in window]
        q, k, v = projected[-1]
        a_self = attend_self(q, k, v)
        prev = [(pk, pv) for _, pk, pv in projected[:-1]]
        a_cross = attend_cross(q, prev)
        outputs.append(_fuse(a_self, a_cross, params.fusion, bool(prev)))
    return outputs


def stream_forward(frames, params):
    state = StreamState(params)
    return [step(state, f) for f in frames]


# ---------------------------------------------------------------------------
# binary feature streams: header <u4 P, <u4 d, then P*d <f4 values per frame
# ---------------------------------------------------------------------------

def write_features(frames, path):
    frames = [np.asarray(f, dtype=float) for f in frames]
    if not frames:
        raise ValidationError("no frames to write")
    p, d = frames[0].shape
    with open(path, "wb") as fh:
        fh.write(struct.pack("<II", p, d))
        for f in frames:
            if f.shape != (p, d):
                raise ValidationError(f"frame shape {f.shape} != {(p, d)}")
            fh.write(f.astype("<f4").tobytes())


def read_features(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 8:
        raise FormatError(f"{path}: missing P, d header")
    p, d = struct.unpack("<II", raw[:8])
    if p < 1 or d < 1:
        raise FormatError(f"{path}: invalid header P={p} d={d}")
    body = np.frombuffer(raw[8:], dtype="<f4")
    per_frame = p * d
    if body.size % per_frame:
        raise FormatError(f"{path}: payload is not a whole number of {p}x{d} frames")
    return [m.astype(float) for m in body.reshape(-1, p, d)]
