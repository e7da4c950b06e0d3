"""Online EMA correction of camera translation and rotation.

Translation, per frame ``i`` over the window ``t_i, t_{i-1}, ..., t_{i-B+1}``::

    w_m   = (1 - alpha)^(B-1-m) / sum(...)       m = 0..B-1  (m = age)
    t_bar = sum_m w_m t_{i-m}
    dt    = t_i - t_bar, clamped to length lambda_clamp * v_bar
    t'    = t_bar + alpha * dt

As written, the oldest sample gets the largest weight. ``recency_flip``
reverses the exponent for the conventional newest-heaviest weighting.

Rotation::

    q'_i = normalize((1 - alpha) q'_{i-1} + alpha q_i)

after flipping ``q_i`` into the hemisphere of ``q'_{i-1}``.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from streammotion.errors import SequencingError, ValidationError
from streammotion.motion_model import PoseSample, Quaternion, Trajectory


@dataclass(frozen=True)
class SmootherConfig:
    alpha: float = 0.7
    buffer_size: int = 8
    lambda_clamp: float = 3.0
    clamp_enabled: bool = True
    recency_flip: bool = False

    def __post_init__(self):
        if not (0.0 < self.alpha <= 1.0):
            raise ValidationError(f"alpha must be in (0, 1], got {self.alpha}")
        if int(self.buffer_size) != self.buffer_size or self.buffer_size < 1:
            raise ValidationError(f"buffer_size must be an integer >= 1, got {self.buffer_size}")
        if not (self.lambda_clamp > 0 and math.isfinite(self.lambda_clamp)):
            raise ValidationError(f"lambda_clamp must be positive, got {self.lambda_clamp}")


def ema_weights(alpha, buffer_size, recency_flip=False):
    """Normalized weights indexed by sample age ``m`` (0 = current frame).

    ``0 ** 0`` is 1, so ``alpha = 1`` puts all weight on the oldest sample.
    """
    if buffer_size < 1:
        raise ValidationError("buffer_size must be >= 1")
    base = 1.0 - alpha
    m = np.arange(buffer_size)
    exponents = m if recency_flip else buffer_size - 1 - m
    raw = np.array([base ** int(e) for e in exponents])  # python pow: 0.0 ** 0 == 1.0
    return raw / raw.sum()


class SmootherState:
    """History of raw translations plus the last smoothed rotation."""

    def __init__(self, config):
        self.config = config
        self.history = deque(maxlen=config.buffer_size)
        self.last_rotation = None
        self.last_frame = None
        self.frames_seen = 0
        self.ops = 0

    def average_velocity(self):
        return average_velocity(self)


def average_velocity(state):
    """Mean step length over consecutive raw translations in the history.

    Returns ``None`` when fewer than two samples exist (clamping inactive).
    """
    hist = list(state.history) if isinstance(state, SmootherState) else list(state)
    if len(hist) < 2:
        return None
    steps = [float(np.linalg.norm(b - a)) for a, b in zip(hist, hist[1:])]
    return sum(steps) / len(steps)


def smooth_translation(state, t, config=None, info=None):
    """Smoothed translation for the raw input ``t``; pushes ``t`` into history."""
    config = config or state.config
    t = np.asarray(t, dtype=float)
    if t.shape != (3,) or not np.all(np.isfinite(t)):
        raise ValidationError(f"translation must be a finite 3-vector, got {t!r}")
    # window ordered by age: current first, then newest history entry backwards
    window = [t] + list(reversed(state.history))[:config.buffer_size - 1]
    w = ema_weights(config.alpha, len(window), config.recency_flip)
    # delta = t - t_bar accumulated as weighted offsets from t, so that
    # constant streams and alpha = 1 come out exact
    delta = np.zeros(3)
    for wm, tm in zip(w, window):
        delta = delta + wm * (t - tm)
    t_bar = t - delta
    clamped = False
    tau = None
    if config.clamp_enabled:
        v_bar = average_velocity(state)
        if v_bar is not None and v_bar > 0.0:
            tau = config.lambda_clamp * v_bar
            norm = float(np.linalg.norm(delta))
            if norm > tau:
                delta = delta * (tau / norm)
                clamped = True
    state.history.append(t.copy())
    state.ops += 3 * len(window) + 3 * max(len(state.history) - 1, 0)
    if info is not None:
        info.update(t_bar=t_bar, delta=delta, tau=tau, clamped=clamped)
    if clamped:
        return t_bar + config.alpha * delta
    return t - (1.0 - config.alpha) * delta


def smooth_rotation(state, q, config=None):
    """Hemisphere-aligned normalized linear blend against the last smoothed rotation.

    ``alpha = 1`` returns ``q`` untouched, sign included.
    """
    config = config or state.config
    if state.last_rotation is None:
        state.last_rotation = q
        return q
    state.ops += 12
    if config.alpha == 1.0:
        # no blend, so no hemisphere flip: the input sign is kept
        state.last_rotation = q
        return q
    prev = state.last_rotation.as_array()
    cur = q.as_array()
    if float(np.dot(prev, cur)) < 0.0:
        cur = -cur
    blend = (1.0 - config.alpha) * prev + config.alpha * cur
    n = float(np.linalg.norm(blend))
    if n < 1e-12:
        return state.last_rotation
    out = Quaternion.normalized(*(blend / n))
    state.last_rotation = out
    return out


def smooth_step(state, pose):
    """Smooth one pose; the first pose of a stream passes through unchanged."""
    if state.last_frame is not None and pose.frame_index <= state.last_frame:
        raise SequencingError(
            f"frame {pose.frame_index} arrived after frame {state.last_frame}")
    state.last_frame = pose.frame_index
    state.frames_seen += 1
    t = smooth_translation(state, pose.translation)
    q = smooth_rotation(state, pose.rotation)
    return PoseSample(pose.frame_index, t, q)


def smooth_trajectory(traj, config):
    state = SmootherState(config)
    return Trajectory(tuple(smooth_step(state, p) for p in traj), scale=traj.scale)
