import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from streammotion import attention
from streammotion.attention import (
    AttentionParams,
    KVCache,
    StreamState,
    attend_cross,
    attend_self,
    offline_window_forward,
    project,
    step,
    stream_forward,
)
from streammotion.errors import ValidationError


# -- independent oracles: plain python loops, no numpy linear algebra ---------

def naive_matmul(a, b):
    n, k = len(a), len(a[0])
    m = len(b[0])
    return [[sum(a[i][p] * b[p][j] for p in range(k)) for j in range(m)] for i in range(n)]


def naive_attention(q, k, v):
    d = len(q[0])
    out = []
    for qi in q:
        scores = [sum(qi[c] * kj[c] for c in range(d)) / math.sqrt(d) for kj in k]
        top = max(scores)
        ex = [math.exp(s - top) for s in scores]
        z = sum(ex)
        out.append([sum(ex[j] / z * v[j][c] for j in range(len(v))) for c in range(len(v[0]))])
    return np.array(out)


def random_stream(rng, frames, p, d):
    return [rng.normal(size=(p, d)) for _ in range(frames)]


def test_project_identity_and_zero():
    x = np.arange(12.0).reshape(4, 3)
    q, k, v = project(x, AttentionParams.identity(3))
    assert np.array_equal(q, x) and np.array_equal(k, x) and np.array_equal(v, x)
    q, k, v = project(np.zeros((4, 3)), AttentionParams.random(3, seed=1))
    assert not q.any() and not k.any() and not v.any()


def test_project_matches_naive_matmul():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(4, 3))
    params = AttentionParams.random(3, seed=5)
    for got, w in zip(project(x, params), (params.w_q, params.w_k, params.w_v)):
        assert np.max(np.abs(got - np.array(naive_matmul(x.tolist(), w.tolist())))) <= 1e-12


def test_project_dimension_mismatch():
    with pytest.raises(ValidationError):
        project(np.zeros((2, 4)), AttentionParams.identity(3))


def test_attend_self_scalar():
    assert attend_self([[1.0]], [[1.0]], [[7.0]]).tolist() == [[7.0]]


def test_attend_self_identical_keys_average_values():
    rng = np.random.default_rng(1)
    q = rng.normal(size=(3, 4))
    k = np.tile(rng.normal(size=(1, 4)), (5, 1))
    v = rng.normal(size=(5, 4))
    out = attend_self(q, k, v)
    assert np.allclose(out, np.tile(v.mean(axis=0), (3, 1)), atol=1e-12)


def test_attend_self_matches_explicit_softmax():
    rng = np.random.default_rng(2)
    q, k, v = (rng.normal(size=(3, 4)) for _ in range(3))
    expected = naive_attention(q.tolist(), k.tolist(), v.tolist())
    assert np.max(np.abs(attend_self(q, k, v) - expected)) <= 1e-9


def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(3)
    w = attention.softmax_rows(rng.normal(scale=20.0, size=(6, 9)))
    assert np.max(np.abs(w.sum(axis=1) - 1.0)) <= 1e-9


def test_attend_cross_empty_cache_is_zero():
    q = np.ones((2, 3))
    assert not attend_cross(q, KVCache(2)).any()


def test_attend_cross_single_identical_frame_equals_self():
    rng = np.random.default_rng(4)
    q, k, v = (rng.normal(size=(3, 5)) for _ in range(3))
    cache = KVCache(2)
    cache.push(k, v)
    assert np.allclose(attend_cross(q, cache), attend_self(q, k, v), atol=1e-15)


def test_attend_cross_matches_stacked_oracle():
    rng = np.random.default_rng(5)
    q = rng.normal(size=(3, 4))
    cache = KVCache(2)
    frames = [(rng.normal(size=(3, 4)), rng.normal(size=(3, 4))) for _ in range(2)]
    for k, v in frames:
        cache.push(k, v)
    k_all = [row for k, _ in frames for row in k.tolist()]
    v_all = [row for _, v in frames for row in v.tolist()]
    expected = naive_attention(q.tolist(), k_all, v_all)
    assert np.max(np.abs(attend_cross(q, cache) - expected)) <= 1e-9


def test_cache_fifo_eviction():
    cache = KVCache(2)
    for i in range(5):
        cache.push(np.full((1, 1), i), np.full((1, 1), i))
        assert len(cache) <= 2
    assert [int(k[0, 0]) for k, _ in cache.entries()] == [3, 4]


def test_window_one_never_caches():
    rng = np.random.default_rng(6)
    params = AttentionParams.random(4, window_size=1, seed=2)
    state = StreamState(params)
    for x in random_stream(rng, 5, 3, 4):
        out = step(state, x)
        assert len(state.cache) == 0
        assert np.array_equal(out, attend_self(*project(x, params)))


def test_first_frame_is_self_attention():
    rng = np.random.default_rng(7)
    params = AttentionParams.random(4, window_size=3, seed=3)
    x = rng.normal(size=(3, 4))
    assert np.array_equal(step(StreamState(params), x), attend_self(*project(x, params)))


def test_six_frame_stream_matches_offline():
    rng = np.random.default_rng(8)
    params = AttentionParams.random(5, window_size=3, seed=4)
    frames = random_stream(rng, 6, 4, 5)
    for a, b in zip(stream_forward(frames, params), offline_window_forward(frames, params)):
        assert np.max(np.abs(a - b)) <= 1e-9 * max(1.0, np.max(np.abs(b)))


def test_offline_single_frame_and_identical_frames():
    rng = np.random.default_rng(9)
    params = AttentionParams.random(3, window_size=3, seed=1)
    x = rng.normal(size=(2, 3))
    assert np.array_equal(offline_window_forward([x], params)[0], attend_self(*project(x, params)))
    outs = offline_window_forward([x] * 5, params)
    # frames 2.. all see a full window of identical frames
    for o in outs[3:]:
        assert np.array_equal(o, outs[2])


def test_offline_matches_naive_windowed_oracle():
    rng = np.random.default_rng(10)
    d, n = 3, 3
    params = AttentionParams.random(d, window_size=n, seed=6)
    frames = random_stream(rng, 5, 2, d)
    outs = offline_window_forward(frames, params)
    for i, out in enumerate(outs):
        proj = [[naive_matmul(f.tolist(), w.tolist()) for w in (params.w_q, params.w_k, params.w_v)]
                for f in frames[max(0, i - n + 1):i + 1]]
        q, k, v = proj[-1]
        expected = naive_attention(q, k, v)
        if len(proj) > 1:
            expected = expected + naive_attention(q, [r for p in proj[:-1] for r in p[1]],
                                                  [r for p in proj[:-1] for r in p[2]])
        assert np.max(np.abs(out - expected)) <= 1e-9


def test_average_fusion():
    rng = np.random.default_rng(11)
    frames = random_stream(rng, 4, 2, 3)
    add = AttentionParams.random(3, window_size=2, seed=1)
    avg = AttentionParams(add.w_q, add.w_k, add.w_v, 2, "average")
    a = stream_forward(frames, add)
    b = stream_forward(frames, avg)
    assert np.array_equal(a[0], b[0])
    assert np.allclose(b[1] * 2, a[1])


def test_dimension_drift_rejected():
    state = StreamState(AttentionParams.random(3, seed=0))
    step(state, np.zeros((2, 3)))
    with pytest.raises(ValidationError):
        step(state, np.zeros((3, 3)))


def test_causality_under_mutation():
    rng = np.random.default_rng(12)
    params = AttentionParams.random(4, window_size=4, seed=7)
    frames = random_stream(rng, 10, 3, 4)
    base = stream_forward(frames, params)
    j = 6
    mutated = list(frames)
    mutated[j] = mutated[j] + 1.0
    out = stream_forward(mutated, params)
    for i in range(j):
        assert np.array_equal(out[i], base[i])
    assert not np.allclose(out[j], base[j])


def test_feature_stream_round_trip(tmp_path):
    rng = np.random.default_rng(13)
    frames = [rng.normal(size=(3, 2)).astype(np.float32).astype(float) for _ in range(4)]
    attention.write_features(frames, tmp_path / "f.bin")
    back = attention.read_features(tmp_path / "f.bin")
    assert all(np.array_equal(a, b) for a, b in zip(frames, back))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 12), st.integers(1, 5), st.integers(1, 6), st.integers(1, 6),
       st.integers(0, 2**31 - 1))
def test_streaming_equals_offline_property(frames, p, d, n, seed):
    rng = np.random.default_rng(seed)
    params = AttentionParams.random(d, window_size=n, seed=seed)
    xs = random_stream(rng, frames, p, d)
    state = StreamState(params)
    for x, ref in zip(xs, offline_window_forward(xs, params)):
        out = step(state, x)
        assert len(state.cache) <= n - 1
        assert np.max(np.abs(out - ref)) <= 1e-9 * max(1.0, np.max(np.abs(ref)))
