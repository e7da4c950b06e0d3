import math

import numpy as np
import pytest

from streammotion.errors import DegenerateConfigurationError, MetricUndefinedError
from streammotion.metrics import (
    LossWeights,
    accel_and_jitter,
    apply_alignment,
    erve,
    evaluate,
    frame_losses,
    mpjpe,
    mpjpe_family,
    pa_mpjpe,
    rte,
    segment_metrics,
    umeyama_align,
    velocity_regularizers,
)
from streammotion.motion_model import MotionSequence, quat_from_axis_angle, quat_to_matrix
from streammotion.world import CameraIntrinsics, project


def rot_z(deg):
    a = math.radians(deg)
    return np.array([[math.cos(a), -math.sin(a), 0], [math.sin(a), math.cos(a), 0], [0, 0, 1.0]])


def random_rotation(rng):
    q = rng.normal(size=4)
    return quat_to_matrix(q / np.linalg.norm(q))


def test_umeyama_identity():
    x = np.random.default_rng(0).normal(size=(10, 3))
    r, t, s = umeyama_align(x, x)
    assert np.allclose(r, np.eye(3), atol=1e-12)
    assert np.allclose(t, 0, atol=1e-12) and abs(s - 1) <= 1e-12


def test_umeyama_recovers_rotation_and_similarity():
    x = np.random.default_rng(1).normal(size=(12, 3))
    r, t, s = umeyama_align(x, x @ rot_z(30).T, with_scale=False)
    assert np.max(np.abs(r - rot_z(30))) <= 1e-9 and np.max(np.abs(t)) <= 1e-9
    r, t, s = umeyama_align(x, 2 * x + [1, 2, 3])
    assert abs(s - 2) <= 1e-9 and np.allclose(t, [1, 2, 3], atol=1e-9)
    assert np.allclose(r, np.eye(3), atol=1e-9)


def test_umeyama_reflection_free_and_degenerate():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(8, 3))
    r, _, _ = umeyama_align(x, x * [1, 1, -1])
    assert abs(np.linalg.det(r) - 1) <= 1e-9
    with pytest.raises(DegenerateConfigurationError):
        umeyama_align(np.ones((4, 3)), rng.normal(size=(4, 3)))


def test_mpjpe_examples():
    rng = np.random.default_rng(3)
    gt = rng.normal(scale=100, size=(5, 4, 3))
    for mode in ("none", "rigid", "similarity", "first_two_frames", "full_segment"):
        assert mpjpe_family(gt, gt, mode) <= 1e-9
    assert abs(mpjpe(gt + [10, 0, 0], gt) - 10) <= 1e-12
    r = random_rotation(rng)
    pred = 1.7 * gt @ r.T + [5, -3, 8]
    assert pa_mpjpe(pred, gt) <= 1e-9


def test_pa_never_exceeds_mpjpe_and_rigid_invariance():
    rng = np.random.default_rng(4)
    gt = rng.normal(scale=100, size=(6, 5, 3))
    pred = gt + rng.normal(scale=10, size=gt.shape)
    assert pa_mpjpe(pred, gt) <= mpjpe(pred, gt) + 1e-12
    r = random_rotation(rng)
    moved = pred @ r.T + [3.0, 1.0, -2.0]
    assert abs(pa_mpjpe(moved, gt) - pa_mpjpe(pred, gt)) <= 1e-9


def test_segment_metrics_identity_and_rigid():
    rng = np.random.default_rng(5)
    gt = rng.normal(scale=100, size=(150, 6, 3))
    assert max(segment_metrics(gt, gt)) <= 1e-9
    pred = gt @ random_rotation(rng).T + [100.0, -50.0, 20.0]
    assert max(segment_metrics(pred, gt)) <= 1e-6


def test_segment_metrics_drift_oracle():
    # static body drifting 1 mm/frame in +x over 200 frames, two 100-frame segments
    rng = np.random.default_rng(6)
    body = rng.normal(scale=100, size=(6, 3))
    gt = np.repeat(body[None], 200, axis=0)
    pred = gt + np.arange(200)[:, None, None] * np.array([1.0, 0.0, 0.0])
    wa, w = segment_metrics(pred, gt, 100)
    # full fit removes the segment-mean drift, first-two fit removes the frame 0/1 mean
    wa_oracle = sum(abs(f - 49.5) for f in range(100)) / 100
    w_oracle = sum(abs(f - 0.5) for f in range(100)) / 100
    assert abs(wa - wa_oracle) <= 1e-6 and abs(w - w_oracle) <= 1e-6
    assert wa <= w


def test_segment_trailing_partial():
    rng = np.random.default_rng(7)
    gt = rng.normal(size=(101, 3, 3))
    pred = gt + rng.normal(scale=0.1, size=gt.shape)
    # a one-frame tail is dropped, a two-frame tail is counted
    assert segment_metrics(pred, gt, 100) == segment_metrics(pred[:100], gt[:100], 100)
    pred2 = np.concatenate([pred, pred[-1:] + 5.0])
    gt2 = np.concatenate([gt, gt[-1:]])
    assert segment_metrics(pred2, gt2, 100) != segment_metrics(pred2[:100], gt2[:100], 100)


def test_rte_examples():
    rng = np.random.default_rng(8)
    gt = np.cumsum(rng.normal(size=(50, 3)), axis=0)
    assert rte(gt, gt) <= 1e-9
    assert rte(gt @ random_rotation(rng).T + [4, 5, 6], gt) <= 1e-9
    with pytest.raises(MetricUndefinedError):
        rte(np.zeros((5, 3)), np.zeros((5, 3)))


def test_rte_straight_line_oracle():
    k = np.arange(100)
    gt = np.stack([k / 99.0, np.zeros(100), np.zeros(100)], axis=1)
    # lateral offset is removed by the alignment
    assert rte(gt + [0.0, 0.01, 0.0], gt) <= 1e-9
    # a 10 % overshoot along the path leaves 0.1 |x - mean(x)| per frame
    expected = 100.0 * 0.1 * np.mean(np.abs(k / 99.0 - 0.5)) / 1.0
    assert abs(rte(1.1 * gt, gt) - expected) <= 1e-9


def test_accel_and_jitter():
    t = np.arange(20.0)
    u = np.array([1.0, -2.0, 0.5])
    quad = (t[:, None] ** 2 * u)[:, None]
    acc, jit = accel_and_jitter(quad, quad)
    assert acc == 0.0 and jit <= 1e-9
    cubic = (t[:, None] ** 3 * u)[:, None]
    assert abs(accel_and_jitter(cubic, cubic)[1] - 6 * np.linalg.norm(u)) <= 1e-9


def test_sinusoid_finite_difference_oracle():
    t = np.arange(40)
    pred = np.stack([np.sin(0.3 * t), np.cos(0.2 * t), 0.1 * t], axis=1)[:, None]
    gt = np.stack([np.sin(0.31 * t), np.cos(0.2 * t), np.zeros(40)], axis=1)[:, None]
    acc, jit = accel_and_jitter(pred, gt)
    p, g = pred[:, 0].tolist(), gt[:, 0].tolist()
    accs = []
    for i in range(1, 39):
        d = [(p[i + 1][c] - 2 * p[i][c] + p[i - 1][c]) - (g[i + 1][c] - 2 * g[i][c] + g[i - 1][c])
             for c in range(3)]
        accs.append(math.sqrt(sum(x * x for x in d)))
    jits = []
    for i in range(3, 40):
        d = [p[i][c] - 3 * p[i - 1][c] + 3 * p[i - 2][c] - p[i - 3][c] for c in range(3)]
        jits.append(math.sqrt(sum(x * x for x in d)))
    assert abs(acc - sum(accs) / len(accs)) <= 1e-9
    assert abs(jit - sum(jits) / len(jits)) <= 1e-9


def test_erve_examples():
    gt = np.zeros((10, 3))
    fwd = np.stack([np.zeros(10), np.zeros(10), np.arange(10.0)], axis=1)
    assert erve(gt, gt) == 0.0
    assert abs(erve(fwd, gt) - 1.0) <= 1e-12


def test_erve_random_walk_oracle():
    rng = np.random.default_rng(9)
    n = 30
    p = np.cumsum(rng.normal(size=(n, 3)), axis=0)
    g = np.cumsum(rng.normal(size=(n, 3)), axis=0)
    qp = np.array([quat_from_axis_angle(rng.normal(size=3), rng.uniform(0, 3)) for _ in range(n)])
    qg = np.array([quat_from_axis_angle(rng.normal(size=3), rng.uniform(0, 3)) for _ in range(n)])

    def ego(path, quats, i):
        x, y, z, w = quats[i - 1]
        s = math.sqrt(x * x + y * y + z * z)
        theta = 2 * math.atan2(s, w)
        k = np.array([[0, -z, y], [z, 0, -x], [-y, x, 0]]) / s
        r = np.eye(3) + math.sin(theta) * k + (1 - math.cos(theta)) * k @ k
        return r.T @ (path[i] - path[i - 1])

    errs = [np.linalg.norm(ego(p, qp, i) - ego(g, qg, i)) for i in range(1, n)]
    assert abs(erve(p, g, qp, qg) - np.mean(errs)) <= 1e-9


def test_velocity_regularizers():
    assert velocity_regularizers(np.ones((6, 2, 3))) == (0.0, 0.0)
    rng = np.random.default_rng(10)
    moving = rng.normal(size=(6, 2, 3))
    assert velocity_regularizers(MotionSequence(moving, np.zeros((6, 2)))) == (0.0, 0.0)
    u = np.array([0.3, -0.4, 1.2])
    lin = np.arange(10.0)[:, None, None] * u * np.ones((1, 2, 1))
    lv, la = velocity_regularizers(lin)
    assert abs(lv - 10.0 * u @ u) <= 1e-8 * lv
    assert la <= 1e-12


def test_velocity_regularizer_confidence_oracle():
    rng = np.random.default_rng(11)
    p = rng.normal(size=(7, 3, 3))
    c = rng.uniform(size=(7, 3))
    lv, la = velocity_regularizers(MotionSequence(p, c))
    num = sum(c[t, j] * np.sum((p[t, j] - p[t - 1, j]) ** 2) for t in range(1, 7) for j in range(3))
    den = sum(c[t, j] for t in range(1, 7) for j in range(3))
    assert abs(lv - 10 * num / (den + 1e-8)) <= 1e-12
    num = sum(c[i, j] * np.sum((p[i + 1, j] - 2 * p[i, j] + p[i - 1, j]) ** 2)
              for i in range(1, 6) for j in range(3))
    den = sum(c[i, j] for i in range(1, 6) for j in range(3))
    assert abs(la - 5 * num / (den + 1e-8)) <= 1e-12


def _frame(rng, k):
    j3 = rng.normal(size=(4, 3)) + [0, 0, 5.0]
    return {"joints3d": j3, "joints2d": project(j3, k)[0], "params": rng.normal(size=10),
            "vertices": rng.normal(size=(20, 3))}


def test_frame_losses():
    rng = np.random.default_rng(12)
    k = CameraIntrinsics(500.0, 500.0, 320.0, 240.0)
    gt = _frame(rng, k)
    out = frame_losses(gt, gt, k)
    assert all(v == 0.0 for v in out.values())
    pred = dict(gt, joints3d=gt["joints3d"].copy())
    pred["joints3d"][2] += [1.0, 0.0, 0.0]
    gt_matched = dict(gt, joints2d=project(pred["joints3d"], k)[0])
    out = frame_losses(pred, gt_matched, k)
    assert abs(out["l_3d"] - 1.0) <= 1e-12
    assert out["l_2d"] <= 1e-20 and out["l_smpl"] == 0 and out["l_vertices"] == 0
    assert abs(out["l_f"] - 5.0) <= 1e-12
    # unmatched 2-D target: projection of the shifted joint moves by fx / z in u
    out = frame_losses(pred, gt, k)
    z = gt["joints3d"][2, 2]
    assert abs(out["l_2d"] - (500.0 / z) ** 2) <= 1e-9


def test_frame_losses_linear_in_weights():
    rng = np.random.default_rng(13)
    k = CameraIntrinsics(500.0, 500.0, 320.0, 240.0)
    a, b = _frame(rng, k), _frame(rng, k)
    base = frame_losses(a, b, k)["l_f"]
    doubled = frame_losses(a, b, k, LossWeights().scaled(2.0))["l_f"]
    assert abs(doubled - 2 * base) <= 1e-9 * abs(base)


def test_evaluate_self_is_zero():
    t = np.arange(120.0)
    gt = t[:, None, None] ** 2 * np.array([0.01, 0.02, 0.0]) + np.random.default_rng(14).normal(
        size=(1, 5, 3))
    report = evaluate(gt, gt)
    for name, value in report.as_dict().items():
        assert value is not None and abs(value) <= 1e-6, name


def test_evaluate_undefined_metrics_are_none():
    gt = np.random.default_rng(15).normal(size=(2, 3, 3))
    report = evaluate(gt + 1.0, gt)
    assert report.accel_error is None and report.jitter is None
    assert report.mpjpe is not None


def test_apply_alignment_round_trip():
    rng = np.random.default_rng(16)
    x = rng.normal(size=(9, 3))
    r = random_rotation(rng)
    y = apply_alignment(x, r, np.array([1.0, 2.0, 3.0]), 0.5)
    rr, tt, ss = umeyama_align(x, y)
    assert np.allclose(apply_alignment(x, rr, tt, ss), y, atol=1e-9)
