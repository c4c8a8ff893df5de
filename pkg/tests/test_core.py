import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from interference_lab.core import (
    DecayParams,
    MemoryStore,
    MemoryTrace,
    NoiseParams,
    cosine,
    decay_factor,
    normalize,
    perturb,
    perturb_rows,
    retrieve,
    substream,
)
from interference_lab.errors import DimensionMismatch, EmptyStore, NegativeAge, ZeroVector

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def unit(v):
    return np.asarray(v, dtype=float) / np.linalg.norm(v)


@given(arrays(float, st.integers(2, 40), elements=finite))
def test_normalize_gives_unit_norm(v):
    if np.linalg.norm(v) < 1e-6:
        return
    assert abs(np.linalg.norm(normalize(v)) - 1.0) <= 1e-9


def test_normalize_rejects_zero():
    with pytest.raises(ZeroVector):
        normalize(np.zeros(4))


def test_cosine_examples():
    assert cosine([1.0, 0.0], [0.0, 1.0]) == 0.0
    assert cosine([1.0, 0.0], [1.0, 0.0]) == 1.0
    with pytest.raises(DimensionMismatch):
        cosine([1.0, 0.0], [1.0, 0.0, 0.0])


def test_decay_hand_values():
    p = DecayParams(0.2, 0.5)
    assert decay_factor(0.0, p) == 1.0
    assert decay_factor(30.0, p) == pytest.approx(7.0**-0.5, abs=1e-12)
    assert decay_factor(5.0, p) == pytest.approx(2.0**-0.5, abs=1e-12)
    with pytest.raises(NegativeAge):
        decay_factor(-1.0, p)


@given(st.floats(0, 5), st.floats(0, 3))
def test_decay_starts_at_one_and_is_nonincreasing(beta, psi):
    p = DecayParams(beta, psi)
    ages = np.linspace(0, 100, 201)
    s = decay_factor(ages, p)
    assert s[0] == 1.0
    assert np.all(np.diff(s) <= 1e-15)


def test_perturb_zero_sigma_is_identity():
    v = unit(np.arange(1, 9))
    out = perturb(v, 10.0, NoiseParams(0.0), np.random.default_rng(0))
    np.testing.assert_array_equal(out, v)


def test_perturb_noise_energy_matches_scale():
    # E||eps||^2 = sigma^2 (age + 0.01); compare on the raw increments
    d, n, sigma, age = 64, 100_000, 0.5, 7.0
    rng = np.random.default_rng(3)
    X = np.zeros((n, d))
    X[:, 0] = 1.0
    # recover eps from the unnormalised draw used inside perturb_rows
    scale = sigma * math.sqrt(age + 0.01) / math.sqrt(d)
    eps = scale * rng.standard_normal((n, d))
    assert np.mean(np.sum(eps**2, axis=1)) == pytest.approx(sigma**2 * (age + 0.01), rel=0.05)
    # and the library draws exactly that noise from the same stream
    Y = perturb_rows(X, age, NoiseParams(sigma), np.random.default_rng(3))
    np.testing.assert_allclose(Y, (X + eps) / np.linalg.norm(X + eps, axis=1, keepdims=True))


def test_trace_invariants():
    v = unit([1.0, 2.0])
    t = MemoryTrace(0, v, 1.0, (1.0, 2.0, 5.0))
    assert t.last_repetition == 5.0
    with pytest.raises(ValueError):
        MemoryTrace(0, v, 1.0, (2.0, 1.0))
    with pytest.raises(ValueError):
        MemoryTrace(0, v, 0.0, (1.0,))


def _store(vecs, origins, **kw):
    return MemoryStore(np.arange(len(vecs)), np.array([unit(v) for v in vecs]), np.asarray(origins, float), **kw)


def test_retrieve_single_trace_equal_to_query():
    v = unit([1.0, 2.0, 3.0])
    out = retrieve(_store([v], [0.0]), v, now=0.0)
    assert out.ranked[0][0] == 0
    assert out.ranked[0][1] == pytest.approx(1.0, abs=1e-12)


def test_younger_identical_trace_ranks_first():
    v = unit([1.0, 1.0])
    store = MemoryStore(np.array([0, 1]), np.array([v, v]), np.array([0.0, 30.0]))
    out = retrieve(store, v, now=30.0)
    assert [i for i, _ in out.ranked] == [1, 0]
    assert out.ranked[0][1] == pytest.approx(1.0)
    assert out.ranked[1][1] == pytest.approx(0.378, abs=1e-3)


def test_ties_break_by_lower_id():
    v = unit([1.0, 0.0])
    store = MemoryStore(np.array([5, 2, 9]), np.array([v, v, v]), np.zeros(3))
    assert [i for i, _ in retrieve(store, v, 0.0).ranked] == [2, 5, 9]
    assert store.top1(v, 0.0)[0] == 2


def test_accepted_subset_of_ranked():
    rng = np.random.default_rng(1)
    V = np.array([unit(r) for r in rng.standard_normal((30, 8))])
    store = MemoryStore(np.arange(30), V, np.zeros(30), threshold=0.2)
    out = retrieve(store, V[0], 0.0, top_k=30)
    ids = [i for i, _ in out.ranked]
    assert set(out.accepted) <= set(ids)
    assert all(s >= 0.2 for i, s in out.ranked if i in out.accepted)
    scores = [s for _, s in out.ranked]
    assert scores == sorted(scores, reverse=True)


@given(st.floats(0.01, 0.99), st.floats(0.0, 30.0))
def test_similarity_order_preserved_at_equal_age(gap, age):
    q = np.array([1.0, 0.0, 0.0])
    a = unit([1.0, gap, 0.0])
    b = unit([1.0, gap + 0.5, 0.0])
    store = _store([b, a], [0.0, 0.0])
    assert retrieve(store, q, now=age).ranked[0][0] == 1


def test_retrieval_is_deterministic():
    rng = np.random.default_rng(2)
    V = np.array([unit(r) for r in rng.standard_normal((50, 16))])
    store = MemoryStore(np.arange(50), V, rng.uniform(0, 10, 50))
    q1 = perturb(V[3], 4.0, NoiseParams(0.5), substream(42, "q"))
    q2 = perturb(V[3], 4.0, NoiseParams(0.5), substream(42, "q"))
    assert retrieve(store, q1, 10.0) == retrieve(store, q2, 10.0)


def test_store_errors():
    with pytest.raises(EmptyStore):
        MemoryStore.from_traces([]).scores(np.ones(3), 0.0)
    with pytest.raises(ValueError):
        MemoryStore(np.array([0, 0]), np.eye(2), np.zeros(2))
    with pytest.raises(NegativeAge):
        _store([[1.0, 0.0]], [5.0]).scores([1.0, 0.0], now=1.0)


def test_substream_depends_on_keys_only():
    a = substream(42, "x", 3).random(4)
    b = substream(42, "x", 3).random(4)
    c = substream(42, "x", 4).random(4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
