"""Camera-to-world placement, pinhole projection and metric-scale recovery."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from streammotion.errors import ScaleEstimationError, ValidationError
from streammotion.motion_model import Quaternion, ScalarGrid, quat_to_matrix
from streammotion.soft_mask import dilate


def _points(points):
    p = np.asarray(points, dtype=float)
    if p.ndim != 2 or p.shape[1] != 3 or p.shape[0] < 1:
        raise ValidationError(f"point set must be V x 3 with V >= 1, got {p.shape}")
    if not np.all(np.isfinite(p)):
        raise ValidationError("point set contains non-finite values")
    return p


def to_world(points, pose, scale=1.0):
    """``R(q) p + s t`` for every row ``p`` (pose may be a PoseSample or (q, t))."""
    if not scale > 0:
        raise ValidationError(f"scale must be positive, got {scale}")
    if hasattr(pose, "rotation"):
        q, t = pose.rotation, pose.translation
    else:
        q, t = pose
    if not isinstance(q, Quaternion):
        q = Quaternion(*map(float, q))  # strict: rejects non-unit input
    rot = quat_to_matrix(q.as_array())
    return _points(points) @ rot.T + scale * np.asarray(t, dtype=float)


def to_camera(points, pose, scale=1.0):
    """Inverse of :func:`to_world`."""
    if hasattr(pose, "rotation"):
        q, t = pose.rotation, pose.translation
    else:
        q, t = pose
    if not isinstance(q, Quaternion):
        q = Quaternion(*map(float, q))
    rot = quat_to_matrix(q.as_array())
    return (_points(points) - scale * np.asarray(t, dtype=float)) @ rot


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValidationError("focal lengths must be positive")


def project(points, intrinsics):
    """Pinhole projection to pixels.

    Returns ``(uv, valid)``; rows with ``z <= 0`` are NaN and flagged invalid.
    """
    p = _points(points)
    z = p[:, 2]
    valid = z > 0
    uv = np.full((p.shape[0], 2), np.nan)
    zv = z[valid]
    uv[valid, 0] = intrinsics.fx * p[valid, 0] / zv + intrinsics.cx
    uv[valid, 1] = intrinsics.fy * p[valid, 1] / zv + intrinsics.cy
    return uv, valid


def backproject(uv, depth, intrinsics):
    uv = np.asarray(uv, dtype=float)
    z = np.asarray(depth, dtype=float)
    x = (uv[:, 0] - intrinsics.cx) * z / intrinsics.fx
    y = (uv[:, 1] - intrinsics.cy) * z / intrinsics.fy
    return np.stack([x, y, z], axis=1)


@dataclass(frozen=True, eq=False)
class DepthPair:
    slam_depth: ScalarGrid
    metric_depth: ScalarGrid
    human_mask: ScalarGrid = None
    validity: ScalarGrid = None

    def __post_init__(self):
        shape = self.slam_depth.values.shape
        for g in (self.metric_depth, self.human_mask, self.validity):
            if g is not None and g.values.shape != shape:
                raise ValidationError(f"grid shape {g.values.shape} != {shape}")


def scale_ratios(pairs, dilation=1, max_frames=None):
    """Per-pixel ``metric / slam`` ratios over valid, non-human pixels, pooled."""
    pairs = list(pairs)
    if max_frames is not None:
        pairs = pairs[:max_frames]
    ratios = []
    for pair in pairs:
        slam = pair.slam_depth.values
        metric = pair.metric_depth.values
        keep = (slam > 0) & (metric > 0)
        if pair.validity is not None:
            keep &= pair.validity.values > 0.5
        if pair.human_mask is not None:
            human = pair.human_mask.values > 0.5
            if dilation > 0:
                human = dilate(human, 3, dilation).values > 0.5
            keep &= ~human
        ratios.append(metric[keep] / slam[keep])
    return np.concatenate(ratios) if ratios else np.empty(0)


def estimate_scale(pairs, dilation=1, max_frames=10):
    """Median depth ratio over the first ``max_frames`` frames, human pixels excluded.

    The human mask is grown by ``dilation`` pixels before exclusion.
    """
    ratios = scale_ratios(pairs, dilation, max_frames)
    if ratios.size == 0:
        raise ScaleEstimationError("no valid non-human pixels to estimate scale from")
    return float(np.median(ratios))


class OnlineScaleEstimator:
    """Collects the first ``max_frames`` depth pairs, then freezes the scale."""

    def __init__(self, max_frames=10, dilation=1):
        self.max_frames = max_frames
        self.dilation = dilation
        self._pairs = []
        self._scale = None

    @property
    def frozen(self):
        return self._scale is not None

    def update(self, pair):
        if self._scale is None:
            self._pairs.append(pair)
            if len(self._pairs) >= self.max_frames:
                self._scale = estimate_scale(self._pairs, self.dilation, self.max_frames)
                self._pairs = []
        return self.scale

    @property
    def scale(self):
        if self._scale is not None:
            return self._scale
        if not self._pairs:
            return None
        return estimate_scale(self._pairs, self.dilation, self.max_frames)
