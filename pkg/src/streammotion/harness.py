"""Synthetic streams, the end-to-end online pipeline, and delay accounting."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from streammotion import attention
from streammotion.errors import SequencingError, ValidationError
from streammotion.motion_model import (
    PoseSample,
    Quaternion,
    Trajectory,
    quat_from_axis_angle,
    quat_multiply,
)
from streammotion.smoothing import SmootherConfig, SmootherState, smooth_step
from streammotion.world import to_world

SYNTH_KINDS = ("circle", "line_walk", "random_walk")


@dataclass(frozen=True)
class SynthSpec:
    kind: str = "circle"
    frames: int = 300
    noise_sigma_t: float = 0.0
    noise_sigma_r: float = 0.0
    seed: int = 0
    radius: float = 1.0
    step: float = 0.01

    def __post_init__(self):
        if self.kind not in SYNTH_KINDS:
            raise ValidationError(f"kind must be one of {SYNTH_KINDS}, got {self.kind!r}")
        if int(self.frames) != self.frames or self.frames < 1:
            raise ValidationError("frames must be an integer >= 1")
        if self.noise_sigma_t < 0 or self.noise_sigma_r < 0:
            raise ValidationError("noise sigmas must be >= 0")
        if not self.radius > 0:
            raise ValidationError("radius must be positive")


def _clean_path(spec, rng):
    n = spec.frames
    if spec.kind == "circle":
        theta = 2.0 * np.pi * np.arange(n) / n
        t = np.stack([spec.radius * np.cos(theta), spec.radius * np.sin(theta), np.zeros(n)], axis=1)
        # camera yaw follows the tangent of the circle
        yaw = theta + 0.5 * np.pi
    elif spec.kind == "line_walk":
        t = np.stack([spec.step * np.arange(n), np.zeros(n), np.zeros(n)], axis=1)
        yaw = np.zeros(n)
    else:
        steps = rng.normal(0.0, spec.step, size=(n, 3))
        steps[0] = 0.0
        t = np.cumsum(steps, axis=0)
        yaw = np.cumsum(rng.normal(0.0, 0.01, size=n))
    q = np.array([quat_from_axis_angle([0.0, 0.0, 1.0], a) for a in yaw])
    return t, q


def generate(spec):
    """Return ``(clean, noisy)`` trajectories; deterministic for a given seed.

    Noise: Gaussian jitter on translation and a rotation about a uniformly
    random axis by a Gaussian angle, composed on the right.
    """
    rng = np.random.default_rng(spec.seed)
    t, q = _clean_path(spec, rng)
    clean = Trajectory.from_arrays(t, q)
    if spec.noise_sigma_t == 0 and spec.noise_sigma_r == 0:
        return clean, clean
    t_noisy = t + rng.normal(0.0, spec.noise_sigma_t, size=t.shape)
    axes = rng.normal(size=(spec.frames, 3))
    angles = rng.normal(0.0, spec.noise_sigma_r, size=spec.frames)
    dq = np.array([quat_from_axis_angle(a, ang) for a, ang in zip(axes, angles)])
    q_noisy = quat_multiply(q, dq)
    return clean, Trajectory.from_arrays(t_noisy, q_noisy)


def random_features(frames, tokens, dim, seed=0):
    rng = np.random.default_rng(seed)
    return [m for m in rng.normal(size=(frames, tokens, dim))]


@dataclass(frozen=True)
class PipelineConfig:
    window_size: int = 3
    fusion: str = "add"
    smoother: SmootherConfig = field(default_factory=SmootherConfig)
    scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not self.scale > 0:
            raise ValidationError("scale must be positive")


@dataclass
class FrameResult:
    frame_index: int
    fused: np.ndarray
    pose: PoseSample
    world_points: np.ndarray
    ops: int = 0

    def record(self):
        return {
            "frame": self.frame_index,
            "t": self.pose.translation.tolist(),
            "q": self.pose.rotation.as_array().tolist(),
            "fused_norm": float(np.linalg.norm(self.fused)),
            "points": self.world_points.tolist(),
        }


def readout_matrix(dim, seed):
    """Fixed linear head mapping fused d-dim tokens to camera-frame 3-D points."""
    rng = np.random.default_rng([seed, 1])
    return rng.normal(0.0, 1.0 / math.sqrt(dim), size=(dim, 3))


class _Tracked:
    """Iterator wrapper recording how many items have been pulled."""

    def __init__(self, it):
        self._it = iter(it)
        self.consumed = 0

    def __iter__(self):
        return self

    def __next__(self):
        item = next(self._it)
        self.consumed += 1
        return item


class Pipeline:
    """Online attention -> pose smoothing -> world placement, one frame per call."""

    def __init__(self, params, config):
        self.params = params
        self.config = config
        self.attn = attention.StreamState(params)
        self.smoother = SmootherState(config.smoother)
        self.readout = readout_matrix(params.dim, config.seed)

    def process(self, tokens, pose, points=None):
        before = self.attn.counter.total + self.smoother.ops
        fused = attention.step(self.attn, tokens)
        smoothed = smooth_step(self.smoother, pose)
        cam_points = fused @ self.readout if points is None else np.asarray(points, float)
        world = to_world(cam_points, smoothed, self.config.scale)
        ops = self.attn.counter.total + self.smoother.ops - before + 9 * world.shape[0]
        return FrameResult(pose.frame_index, fused, smoothed, world, ops)


def run_pipeline(features, poses, config=None, params=None, points=None):
    """Yield one :class:`FrameResult` per frame, never reading ahead of it.

    ``points`` optionally supplies camera-frame point sets per frame; otherwise
    they are read out of the fused attention tokens by a fixed linear head.
    """
    config = config or PipelineConfig()
    feats = _Tracked(features)
    pose_it = _Tracked(poses)
    point_it = _Tracked(points) if points is not None else None
    pipe = None
    i = 0
    while True:
        try:
            tokens = next(feats)
        except StopIteration:
            tokens = None
        try:
            pose = next(pose_it)
        except StopIteration:
            pose = None
        if tokens is None and pose is None:
            return
        if tokens is None or pose is None:
            raise SequencingError(f"feature and pose streams end at different frames (frame {i})")
        pts = next(point_it) if point_it is not None else None
        if pipe is None:
            if params is None:
                d = np.asarray(tokens).shape[1]
                params = attention.AttentionParams.random(d, config.window_size, config.seed,
                                                          config.fusion)
            pipe = Pipeline(params, config)
        result = pipe.process(tokens, pose, pts)
        if feats.consumed != i + 1 or pose_it.consumed != i + 1:
            raise SequencingError("pipeline read past the frame it is emitting")
        yield result
        i += 1


# ---------------------------------------------------------------------------
# delay accounting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DelayModel:
    mode: str
    fps: float
    frames: int = 1

    def __post_init__(self):
        if self.mode not in ("online", "offline_batch"):
            raise ValidationError(f"mode must be online or offline_batch, got {self.mode!r}")
        if not (self.fps > 0 and math.isfinite(self.fps)):
            raise ValidationError("fps must be positive")
        if int(self.frames) != self.frames or self.frames < 1:
            raise ValidationError("frames must be an integer >= 1")


def total_delay(model):
    """Summed waiting time over all frames, seconds."""
    if model.mode == "offline_batch":
        return model.frames * (model.frames - 1) / (2.0 * model.fps)
    return model.frames / model.fps


def avg_delay(model):
    """Mean per-frame wait: ``(F - 1) / (2 fps)`` offline, ``1 / fps`` online."""
    if model.mode == "offline_batch":
        return (model.frames - 1) / (2.0 * model.fps)
    return 1.0 / model.fps


# ---------------------------------------------------------------------------
# probe
# ---------------------------------------------------------------------------

def latency_probe(results_or_frames, warmup=None, params=None, timer=time.perf_counter):
    """Per-frame op counts and wall times.

    Accepts either an iterable of :class:`FrameResult` (ops already counted) or
    a list of feature frames together with ``params``, in which case only the
    attention stage is probed.
    """
    ops, walls = [], []
    if params is not None:
        state = attention.StreamState(params)
        for tokens in results_or_frames:
            before = state.counter.total
            t0 = timer()
            attention.step(state, tokens)
            walls.append(timer() - t0)
            ops.append(state.counter.total - before)
        if warmup is None:
            warmup = params.window_size - 1
    else:
        it = iter(results_or_frames)
        while True:
            t0 = timer()
            try:
                r = next(it)
            except StopIteration:
                break
            walls.append(timer() - t0)
            ops.append(r.ops)
        if warmup is None:
            warmup = 0
    steady = ops[warmup:]
    return {
        "frames": len(ops),
        "warmup": warmup,
        "ops": ops,
        "total_ops": int(sum(ops)),
        "max_ops": max(ops) if ops else 0,
        "mean_ops": float(np.mean(ops)) if ops else 0.0,
        "steady_ops_variance": float(np.var(steady)) if steady else 0.0,
        "constant_work": len(set(steady)) <= 1,
        "wall_max_s": max(walls) if walls else 0.0,
        "wall_mean_s": float(np.mean(walls)) if walls else 0.0,
    }
