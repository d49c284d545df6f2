"""Embedding store, context aggregation laws, and augmentation hooks."""
import numpy as np
import pytest

from seqrep.config import make_encoder_config
from seqrep.context import (
    AGGREGATION_METHODS,
    EmbeddingStore,
    aggregate_context,
    augment_embedding,
    build_store,
    global_augmenter,
    train_attention_matrix,
    window_augmenter,
)
from seqrep.encoders import build_encoder
from seqrep.evaluation.protocol import FrozenModel, local_window_dataset


@pytest.fixture(scope="module")
def frozen(tiny_cfg, tiny_splits):
    enc_cfg = make_encoder_config(tiny_cfg, tiny_splits.vocab.n_indices)
    return FrozenModel(encoder=build_encoder(enc_cfg, seed=0),
                       pool_strategy="last")


def make_store(dim=3):
    store = EmbeddingStore(dim=dim)
    store.add_series("b", np.array([5, 10]), np.arange(2 * dim).reshape(2, dim) + 100.0)
    store.add_series("a", np.array([3, 7, 9]), np.arange(3 * dim).reshape(3, dim) * 1.0)
    return store


def test_query_latest_strictly_before():
    store = make_store()
    # At t=5: client a has entries at 3 (row 0); client b has nothing before 5.
    np.testing.assert_array_equal(store.query(5), store.series["a"][1][:1])
    # At t=6: a -> its t=3 row, b -> its t=5 row, ordered by client id.
    got = store.query(6)
    assert got.shape == (2, 3)
    np.testing.assert_array_equal(got[0], store.series["a"][1][0])
    np.testing.assert_array_equal(got[1], store.series["b"][1][0])


def test_query_excludes_client_and_handles_empty():
    store = make_store()
    got = store.query(100, exclude="a")
    np.testing.assert_array_equal(got, store.series["b"][1][1:])
    assert store.query(0).shape == (0, 3)


def test_query_many_matches_query_loop():
    store = make_store()
    times = np.array([0, 3, 4, 5, 8, 11, 50])
    batched = store.query_many(times, exclude="b")
    for t, rows in zip(times, batched):
        np.testing.assert_array_equal(rows, store.query(int(t), exclude="b"))


def test_add_series_validation():
    store = EmbeddingStore(dim=2)
    with pytest.raises(ValueError, match="matrix"):
        store.add_series("x", np.array([1]), np.zeros((1, 3)))
    with pytest.raises(ValueError, match="timestamps"):
        store.add_series("x", np.array([1, 2]), np.zeros((1, 2)))
    with pytest.raises(ValueError, match="sorted"):
        store.add_series("x", np.array([2, 1]), np.zeros((2, 2)))
    store.add_series("x", np.array([1]), np.zeros((1, 2)))
    with pytest.raises(ValueError, match="already present"):
        store.add_series("x", np.array([2]), np.ones((1, 2)))


def test_build_store_caps_and_is_seeded(frozen, tiny_clients):
    a = build_store(frozen, tiny_clients, max_clients=5, window=16, stride=8,
                    seed=0)
    b = build_store(frozen, tiny_clients, max_clients=5, window=16, stride=8,
                    seed=0)
    c = build_store(frozen, tiny_clients, max_clients=5, window=16, stride=8,
                    seed=1)
    assert len(a) <= 5
    assert a.dim == frozen.encoder.hidden
    assert a.client_ids() == b.client_ids()
    assert a.client_ids() != c.client_ids()
    assert a.n_entries() > 0
    with pytest.raises(ValueError):
        build_store(frozen, tiny_clients, max_clients=0)


def test_identical_rows_collapse_to_that_row(rng):
    """Weights sum to one, so constant context is a fixed point of every method."""
    row = rng.normal(size=6)
    x = np.tile(row, (7, 1))
    h = rng.normal(size=6)
    a = rng.normal(size=(6, 6))
    for method in AGGREGATION_METHODS:
        ctx = aggregate_context(x, h, method, a if method == "learnable" else None)
        np.testing.assert_allclose(ctx.vector, row, atol=1e-12)
        assert not ctx.fallback
        assert ctx.n_sources == 7


def test_learnable_identity_matches_attention_bitwise(rng):
    x = rng.normal(size=(5, 4))
    h = rng.normal(size=4)
    plain = aggregate_context(x, h, "attention")
    with_eye = aggregate_context(x, h, "learnable", np.eye(4))
    np.testing.assert_array_equal(plain.vector, with_eye.vector)


def test_mean_max_attention_oracles(rng):
    x = rng.normal(size=(4, 3))
    h = rng.normal(size=3)
    np.testing.assert_allclose(aggregate_context(x, h, "mean").vector,
                               x.mean(axis=0))
    np.testing.assert_allclose(aggregate_context(x, h, "max").vector,
                               x.max(axis=0))
    scores = x @ h
    w = np.exp(scores - scores.max())
    w /= w.sum()
    np.testing.assert_allclose(aggregate_context(x, h, "attention").vector,
                               w @ x, atol=1e-12)


def test_empty_context_falls_back_to_zero():
    ctx = aggregate_context(np.zeros((0, 4)), np.ones(4), "attention")
    assert ctx.fallback
    assert ctx.n_sources == 0
    np.testing.assert_array_equal(ctx.vector, np.zeros(4))


def test_aggregate_validation(rng):
    x = rng.normal(size=(3, 4))
    h = rng.normal(size=4)
    with pytest.raises(ValueError, match="unknown aggregation"):
        aggregate_context(x, h, "median")
    with pytest.raises(ValueError, match="does not match"):
        aggregate_context(x, np.ones(5), "mean")
    with pytest.raises(ValueError, match="needs the matrix"):
        aggregate_context(x, h, "learnable")
    with pytest.raises(ValueError, match="matrix"):
        aggregate_context(x, h, "learnable", np.eye(3))


def test_augment_embedding_concatenates():
    ctx = aggregate_context(np.ones((2, 3)), np.zeros(3), "mean")
    out = augment_embedding(np.array([5.0, 6.0, 7.0]), ctx)
    np.testing.assert_array_equal(out, [5.0, 6.0, 7.0, 1.0, 1.0, 1.0])


def test_window_augmenter_widens_and_excludes_self(frozen, tiny_clients):
    clients = [c for c in tiny_clients if len(c) >= 16][:6]
    store = build_store(frozen, clients[:1], max_clients=1, window=16, stride=8)
    aug = window_augmenter(store, method="mean")
    xs, _ = local_window_dataset(frozen, clients[:1], window=16, stride=8,
                                 augment=aug)
    # The only store client is the query client, so every context falls back.
    assert xs.shape[1] == 2 * store.dim
    np.testing.assert_array_equal(xs[:, store.dim:], 0.0)

    wide_store = build_store(frozen, clients, max_clients=6, window=16, stride=8)
    xs2, _ = local_window_dataset(frozen, clients[:1], window=16, stride=8,
                                  augment=window_augmenter(wide_store, "mean"))
    assert np.any(xs2[:, store.dim:] != 0.0)


def test_global_augmenter_widens(frozen, tiny_clients):
    clients = [c for c in tiny_clients if len(c) >= 16][:5]
    store = build_store(frozen, clients, max_clients=5, window=16, stride=8)
    aug = global_augmenter(store, method="max")
    base = np.zeros((len(clients), store.dim))
    out = aug(clients, base)
    assert out.shape == (len(clients), 2 * store.dim)


def test_train_attention_matrix_shapes_and_history(frozen, tiny_clients):
    clients = [c for c in tiny_clients if len(c) >= 20][:8]
    store = build_store(frozen, clients, max_clients=8, window=16, stride=8)
    a, history = train_attention_matrix(frozen, store, clients, epochs=2,
                                        seed=0, length_range=(10, 16),
                                        clients_per_batch=8)
    assert a.shape == (store.dim, store.dim)
    assert len(history) == 2
    assert all(np.isfinite(h) for h in history)


def test_train_attention_matrix_needs_pairs(frozen, tiny_clients):
    clients = [c for c in tiny_clients if len(c) >= 20][:1]
    store = build_store(frozen, clients, max_clients=1, window=16, stride=8)
    with pytest.raises(ValueError, match="no usable batches"):
        train_attention_matrix(frozen, store, clients, epochs=1,
                               length_range=(10, 16))
