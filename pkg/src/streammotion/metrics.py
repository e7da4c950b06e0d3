"""Pose and trajectory evaluation metrics, alignment, and training-side losses.

Accel and Jitter are reported per frame (mm/frame^2, mm/frame^3); multiply by
``fps**2`` / ``fps**3`` to convert to seconds.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from streammotion.errors import (
    DegenerateConfigurationError,
    MetricUndefinedError,
    ValidationError,
)
from streammotion.motion_model import MotionSequence, quat_to_matrix
from streammotion.world import project

ALIGNMENT_MODES = ("none", "rigid", "similarity", "first_two_frames", "full_segment")
EPSILON = 1e-8


@dataclass(frozen=True)
class LossWeights:
    w_2d: float = 5.0
    w_3d: float = 5.0
    w_smpl: float = 1.0
    w_vertices: float = 1.0
    w_velocity: float = 10.0
    w_accel: float = 5.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not (v >= 0 and math.isfinite(v)):
                raise ValidationError(f"loss weight {f.name} must be finite and >= 0")

    def scaled(self, factor):
        return LossWeights(**{k: v * factor for k, v in asdict(self).items()})


def _positions(x):
    if isinstance(x, MotionSequence):
        return np.asarray(x.positions)
    a = np.asarray(x, dtype=float)
    if a.ndim == 2:
        a = a[None]
    if a.ndim != 3 or a.shape[-1] != 3:
        raise ValidationError(f"expected F x J x 3 positions, got {a.shape}")
    return a


def _same_shape(a, b):
    if a.shape != b.shape:
        raise ValidationError(f"shape mismatch {a.shape} vs {b.shape}")


# ---------------------------------------------------------------------------
# alignment
# ---------------------------------------------------------------------------

def umeyama_align(source, target, with_scale=True):
    """Least-squares ``(R, t, s)`` minimizing ``sum ||s R x + t - y||^2``.

    ``det(R) = +1``. A source collapsed to a single point raises
    :class:`DegenerateConfigurationError`; collinear sources return one of the
    (non-unique) minimizers.
    """
    x = np.asarray(source, dtype=float).reshape(-1, 3)
    y = np.asarray(target, dtype=float).reshape(-1, 3)
    _same_shape(x, y)
    if x.shape[0] < 2:
        raise DegenerateConfigurationError("need at least two point pairs")
    mx, my = x.mean(axis=0), y.mean(axis=0)
    dx, dy = x - mx, y - my
    var_x = float(np.mean(np.sum(dx * dx, axis=1)))
    scale_ref = max(1.0, float(np.abs(x).max()))
    if var_x <= (1e-12 * scale_ref) ** 2:
        raise DegenerateConfigurationError("source points are coincident")
    cov = dy.T @ dx / x.shape[0]
    u, d, vt = np.linalg.svd(cov)
    sign = np.ones(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        sign[2] = -1.0
    rot = (u * sign) @ vt
    s = float(np.dot(d, sign) / var_x) if with_scale else 1.0
    t = my - s * rot @ mx
    return rot, t, s


def apply_alignment(points, rot, t, s=1.0):
    return s * np.asarray(points, dtype=float) @ rot.T + t


def _align_frames(pred, gt, with_scale):
    out = np.empty_like(pred)
    for f in range(pred.shape[0]):
        rot, t, s = umeyama_align(pred[f], gt[f], with_scale)
        out[f] = apply_alignment(pred[f], rot, t, s)
    return out


def _align_global(pred, gt, fit_frames, with_scale=False):
    rot, t, s = umeyama_align(pred[fit_frames].reshape(-1, 3),
                              gt[fit_frames].reshape(-1, 3), with_scale)
    return apply_alignment(pred.reshape(-1, 3), rot, t, s).reshape(pred.shape)


def align(pred, gt, mode):
    pred, gt = _positions(pred), _positions(gt)
    _same_shape(pred, gt)
    if mode == "none":
        return pred
    if mode == "rigid":
        return _align_frames(pred, gt, False)
    if mode == "similarity":
        return _align_frames(pred, gt, True)
    if mode == "first_two_frames":
        return _align_global(pred, gt, slice(0, 2))
    if mode == "full_segment":
        return _align_global(pred, gt, slice(None))
    raise ValidationError(f"unknown alignment mode {mode!r}; expected one of {ALIGNMENT_MODES}")


def _mean_error(a, b):
    return float(np.mean(np.linalg.norm(a - b, axis=-1)))


# ---------------------------------------------------------------------------
# camera-frame metrics
# ---------------------------------------------------------------------------

def mpjpe_family(pred, gt, mode="none"):
    """Mean Euclidean joint (or vertex) error after the chosen alignment.

    ``mode="similarity"`` gives PA-MPJPE; PVE is the same call on vertex sets.
    """
    pred, gt = _positions(pred), _positions(gt)
    _same_shape(pred, gt)
    return _mean_error(align(pred, gt, mode), gt)


def mpjpe(pred, gt):
    return mpjpe_family(pred, gt, "none")


def pa_mpjpe(pred, gt):
    return mpjpe_family(pred, gt, "similarity")


def second_difference(p):
    return p[2:] - 2.0 * p[1:-1] + p[:-2]


def third_difference(p):
    return p[3:] - 3.0 * p[2:-1] + 3.0 * p[1:-2] - p[:-3]


def accel_error(pred, gt):
    pred, gt = _positions(pred), _positions(gt)
    _same_shape(pred, gt)
    if pred.shape[0] < 3:
        raise ValidationError("accel error needs at least 3 frames")
    return _mean_error(second_difference(pred), second_difference(gt))


def jitter(pred):
    """Mean magnitude of the third finite difference (ground-truth independent)."""
    pred = _positions(pred)
    if pred.shape[0] < 4:
        raise ValidationError("jitter needs at least 4 frames")
    return float(np.mean(np.linalg.norm(third_difference(pred), axis=-1)))


def accel_and_jitter(pred, gt):
    return accel_error(pred, gt), jitter(pred)


# ---------------------------------------------------------------------------
# world-frame metrics
# ---------------------------------------------------------------------------

def _segments(n_frames, segment_len):
    starts = range(0, n_frames, segment_len)
    return [(s, min(s + segment_len, n_frames)) for s in starts
            if min(s + segment_len, n_frames) - s >= 2]


def segment_metrics(pred, gt, segment_len=100):
    """``(WA-MPJPE, W-MPJPE)`` over ``segment_len``-frame segments.

    Each segment gets one rigid transform, fitted on every joint of either all
    its frames (WA) or its first two frames (W), then applied to the whole
    segment. Joint errors are averaged over all frames of all segments; a
    trailing partial segment counts if it has at least two frames.
    """
    pred, gt = _positions(pred), _positions(gt)
    _same_shape(pred, gt)
    if pred.shape[0] < 2:
        raise ValidationError("segment metrics need at least 2 frames")
    wa_err, w_err = [], []
    for a, b in _segments(pred.shape[0], segment_len):
        p, g = pred[a:b], gt[a:b]
        wa_err.append(np.linalg.norm(_align_global(p, g, slice(None)) - g, axis=-1).ravel())
        w_err.append(np.linalg.norm(_align_global(p, g, slice(0, 2)) - g, axis=-1).ravel())
    return float(np.concatenate(wa_err).mean()), float(np.concatenate(w_err).mean())


def _path(x):
    a = np.asarray(x, dtype=float)
    if a.ndim != 2 or a.shape[1] != 3:
        raise ValidationError(f"expected an F x 3 path, got {a.shape}")
    return a


def rte(pred_root, gt_root):
    """Root translation error in percent of the ground-truth path length, after rigid alignment."""
    p, g = _path(pred_root), _path(gt_root)
    _same_shape(p, g)
    if p.shape[0] < 2:
        raise ValidationError("RTE needs at least 2 frames")
    length = float(np.sum(np.linalg.norm(np.diff(g, axis=0), axis=1)))
    if length <= 0.0:
        raise MetricUndefinedError("RTE undefined: ground truth does not move")
    rot, t, s = umeyama_align(p, g, with_scale=False)
    return 100.0 * _mean_error(apply_alignment(p, rot, t), g) / length


def _rotations(rot, n):
    if rot is None:
        return np.broadcast_to(np.eye(3), (n, 3, 3))
    r = np.asarray(rot, dtype=float)
    if r.ndim == 2 and r.shape[1] == 4:
        return quat_to_matrix(r)
    if r.ndim == 3 and r.shape[1:] == (3, 3):
        return r
    raise ValidationError(f"root orientations must be F x 4 (xyzw) or F x 3 x 3, got {r.shape}")


def egocentric_velocity(root, rot=None):
    """Root displacement of frame ``t`` expressed in the root frame of ``t - 1``."""
    root = _path(root)
    mats = _rotations(rot, root.shape[0])
    vel = np.diff(root, axis=0)
    return np.einsum("fji,fj->fi", mats[:-1], vel)


def erve(pred_root, gt_root, pred_rot=None, gt_rot=None):
    """Mean egocentric root-velocity error (per frame)."""
    p, g = _path(pred_root), _path(gt_root)
    _same_shape(p, g)
    if p.shape[0] < 2:
        raise ValidationError("ERVE needs at least 2 frames")
    return _mean_error(egocentric_velocity(p, pred_rot), egocentric_velocity(g, gt_rot))


# ---------------------------------------------------------------------------
# training-side losses
# ---------------------------------------------------------------------------

def velocity_regularizers(seq, weights=None, relative_to_pelvis=False, pelvis_joint=0,
                          confidence=None, eps=EPSILON):
    """Confidence-weighted mean squared joint velocity and acceleration ``(L_v, L_a)``.

    Velocity terms at frame ``t`` use the confidence of frame ``t``;
    acceleration terms centered on frame ``i`` use the confidence of frame ``i``.
    """
    weights = weights or LossWeights()
    if isinstance(seq, MotionSequence):
        p = np.asarray(seq.positions)
        c = np.asarray(seq.confidence) if confidence is None else np.asarray(confidence, float)
    else:
        p = _positions(seq)
        c = np.ones(p.shape[:2]) if confidence is None else np.asarray(confidence, float)
    if relative_to_pelvis:
        p = p - p[:, pelvis_joint:pelvis_joint + 1]
    l_v = l_a = 0.0
    if p.shape[0] >= 2:
        sq = np.sum((p[1:] - p[:-1]) ** 2, axis=-1)
        cv = c[1:]
        l_v = weights.w_velocity * float(np.sum(cv * sq)) / (float(np.sum(cv)) + eps)
    if p.shape[0] >= 3:
        sq = np.sum(second_difference(p) ** 2, axis=-1)
        ca = c[1:-1]
        l_a = weights.w_accel * float(np.sum(ca * sq)) / (float(np.sum(ca)) + eps)
    return l_v, l_a


def frame_losses(pred, gt, intrinsics, weights=None):
    """Per-frame supervision terms and their weighted sum.

    ``pred`` and ``gt`` are dicts with ``joints3d`` (J x 3), ``params`` (any
    vector) and ``vertices`` (V x 3); ``gt`` also carries ``joints2d`` (J x 2).
    The 2-D term compares ``gt["joints2d"]`` with the projection of
    ``pred["joints3d"]``.
    """
    weights = weights or LossWeights()

    def sqnorm(a, b):
        a, b = np.asarray(a, float), np.asarray(b, float)
        _same_shape(a, b)
        return float(np.sum((a - b) ** 2))

    uv, valid = project(pred["joints3d"], intrinsics)
    if not np.all(valid):
        raise ValidationError("predicted joints must lie in front of the camera")
    l2d = sqnorm(gt["joints2d"], uv)
    l3d = sqnorm(gt["joints3d"], pred["joints3d"])
    lsmpl = sqnorm(gt["params"], pred["params"])
    lv = sqnorm(gt["vertices"], pred["vertices"])
    total = (weights.w_2d * l2d + weights.w_3d * l3d
             + weights.w_smpl * lsmpl + weights.w_vertices * lv)
    return {"l_2d": l2d, "l_3d": l3d, "l_smpl": lsmpl, "l_vertices": lv, "l_f": total}


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

@dataclass
class MetricReport:
    mpjpe: float = None
    pa_mpjpe: float = None
    pve: float = None
    accel_error: float = None
    jitter: float = None
    wa_mpjpe_100: float = None
    w_mpjpe_100: float = None
    rte_percent: float = None
    erve: float = None

    UNITS = {
        "mpjpe": "mm", "pa_mpjpe": "mm", "pve": "mm",
        "accel_error": "mm/frame^2", "jitter": "mm/frame^3",
        "wa_mpjpe_100": "mm", "w_mpjpe_100": "mm",
        "rte_percent": "%", "erve": "mm/frame",
    }

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _try(fn, *args):
    try:
        return fn(*args)
    except (ValidationError, MetricUndefinedError, DegenerateConfigurationError):
        return None


def evaluate(pred, gt, pred_vertices=None, gt_vertices=None, pred_root=None, gt_root=None,
             pred_rot=None, gt_rot=None, segment_len=100, root_joint=0, fps=None):
    """Fill a :class:`MetricReport`; metrics undefined for the input are ``None``.

    Without vertex sets PVE is computed on the joints. Without explicit root
    paths the ``root_joint`` track is used. With ``fps`` accel and jitter are
    converted to per-second units.
    """
    p, g = _positions(pred), _positions(gt)
    _same_shape(p, g)
    pv = p if pred_vertices is None else _positions(pred_vertices)
    gv = g if gt_vertices is None else _positions(gt_vertices)
    pr = p[:, root_joint] if pred_root is None else pred_root
    gr = g[:, root_joint] if gt_root is None else gt_root
    report = MetricReport(
        mpjpe=_try(mpjpe_family, p, g, "none"),
        pa_mpjpe=_try(mpjpe_family, p, g, "similarity"),
        pve=_try(mpjpe_family, pv, gv, "none"),
        accel_error=_try(accel_error, p, g),
        jitter=_try(jitter, p),
        rte_percent=_try(rte, pr, gr),
        erve=_try(erve, pr, gr, pred_rot, gt_rot),
    )
    seg = _try(segment_metrics, p, g, segment_len)
    if seg is not None:
        report.wa_mpjpe_100, report.w_mpjpe_100 = seg
    if fps is not None:
        if report.accel_error is not None:
            report.accel_error *= fps ** 2
        if report.jitter is not None:
            report.jitter *= fps ** 3
    return report
