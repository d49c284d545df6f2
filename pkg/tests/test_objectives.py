"""Objectives: samplers, loss functions, model batch plumbing, training loop."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seqrep.config import make_encoder_config
from seqrep.nn import Tape, Tensor
from seqrep.objectives import (
    OBJECTIVES,
    TrainConfig,
    ar_targets,
    build_model,
    coles_sample_subsequences,
    contrastive_loss,
    joint_loss,
    masked_joint_loss,
    mlm_corrupt,
    normalize_rows,
    pad_batch,
    train,
    ts2vec_contexts,
    ts2vec_hierarchical_loss,
)
from seqrep.objectives.models import _resolve_pool


# ---------------------------------------------------------------- sampling

def test_coles_slices_are_in_bounds(tiny_clients, rng):
    samples = coles_sample_subsequences(tiny_clients[:6], n_slices=4,
                                        length_range=(10, 30), seed=rng)
    assert len(samples) == 24
    for s in samples:
        seq = tiny_clients[s.client_index]
        assert 0 <= s.start < s.end <= len(seq)
        assert 10 <= s.length <= 30


def test_coles_skips_short_clients_with_warning(tiny_clients):
    from seqrep.data import ClientSequence
    short = ClientSequence(client_id="s", timestamps=np.array([1, 2]),
                           mcc=np.array([1, 1]), amounts=np.ones(2))
    with pytest.warns(UserWarning, match="skipped"):
        samples = coles_sample_subsequences([short, tiny_clients[0]],
                                            n_slices=2, length_range=(10, 20))
    assert {s.client_index for s in samples} == {1}


def test_coles_rejects_bad_ranges(tiny_clients):
    with pytest.raises(ValueError):
        coles_sample_subsequences(tiny_clients, length_range=(0, 5))
    with pytest.raises(ValueError):
        coles_sample_subsequences(tiny_clients, n_slices=0)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 80), st.integers(0, 2**31 - 1))
def test_ts2vec_contexts_law(length, seed):
    pair = ts2vec_contexts(length, seed)
    (a1, a2), (b1, b2) = pair.crop1, pair.crop2
    o1, o2 = pair.overlap
    assert 0 <= a1 <= o1 < o2 <= b2 <= length
    assert a2 == o2 and b1 == o1
    assert o2 - o1 >= 1


def test_mlm_corrupt_actions(rng):
    b, length = 8, 40
    mcc = rng.integers(1, 9, size=(b, length))
    amt = rng.normal(size=(b, length))
    valid = np.ones((b, length), dtype=bool)
    valid[:, 30:] = False
    cm, ca, plan = mlm_corrupt(mcc, amt, valid, seed=rng, select_p=0.3)
    assert len(plan) > 0
    # Padding is never selected.
    assert np.all(plan.cols < 30)
    # Original values are preserved in the plan.
    np.testing.assert_array_equal(plan.original_mcc, mcc[plan.rows, plan.cols])
    for i in range(len(plan)):
        r, c = plan.rows[i], plan.cols[i]
        if plan.actions[i] == 0:
            assert cm[r, c] == 0 and ca[r, c] == 0.0
        elif plan.actions[i] == 2:
            assert cm[r, c] == mcc[r, c] and ca[r, c] == amt[r, c]
    # Unselected positions never change.
    sel = np.zeros((b, length), dtype=bool)
    sel[plan.rows, plan.cols] = True
    np.testing.assert_array_equal(cm[~sel], mcc[~sel])


def test_mlm_corrupt_validates():
    with pytest.raises(ValueError):
        mlm_corrupt(np.ones((2, 3), dtype=np.int64), np.ones((2, 3)),
                    np.ones((2, 3), dtype=bool), action_probs=(0.9, 0.2, 0.1))
    with pytest.raises(ValueError):
        mlm_corrupt(np.ones((2, 3), dtype=np.int64), np.ones((2, 4)),
                    np.ones((2, 3), dtype=bool))


def test_ar_targets_shift(tiny_clients):
    seq = tiny_clients[0]
    mcc_t, amt_t = ar_targets(seq)
    np.testing.assert_array_equal(mcc_t, seq.mcc_idx[1:])
    np.testing.assert_array_equal(amt_t, seq.amounts_t[1:])


def test_pad_batch_rectangles(rng):
    parts = [(np.array([1, 2, 3]), np.array([0.1, 0.2, 0.3])),
             (np.array([4]), np.array([0.4]))]
    mcc, amt, lengths = pad_batch(parts)
    assert mcc.shape == (2, 3)
    np.testing.assert_array_equal(lengths, [3, 1])
    np.testing.assert_array_equal(mcc[1], [4, 0, 0])
    np.testing.assert_array_equal(amt[1], [0.4, 0.0, 0.0])
    with pytest.raises(ValueError):
        pad_batch([])


# ---------------------------------------------------------------- losses

def test_contrastive_loss_hand_case():
    # Two identical same-client rows: positive distance 0. One far-away
    # client beyond the margin: no negative slack. Loss is exactly 0.
    e = Tensor(np.array([[1.0, 0.0], [1.0, 0.0], [-1.0, 0.0]]))
    loss = contrastive_loss(e, np.array([0, 0, 1]), margin=0.5)
    assert float(loss.data) == pytest.approx(0.0, abs=1e-15)


def test_contrastive_loss_manual_value():
    # Unit vectors at 90 degrees, one pair per class relationship.
    e = Tensor(np.array([[1.0, 0.0], [0.0, 1.0]]))
    # Same client: loss = d^2 = 2. One pair total.
    same = contrastive_loss(e, np.array([0, 0]), margin=0.5)
    assert float(same.data) == pytest.approx(2.0, rel=1e-12)
    # Different clients: d = sqrt(2) > margin, slack clips to zero.
    diff = contrastive_loss(e, np.array([0, 1]), margin=0.5)
    assert float(diff.data) == pytest.approx(0.0, abs=1e-15)
    # Larger margin: (margin - sqrt(2))^2.
    big = contrastive_loss(e, np.array([0, 1]), margin=2.0)
    assert float(big.data) == pytest.approx((2.0 - np.sqrt(2.0)) ** 2, rel=1e-12)


def test_normalize_rows_unit_norm(rng):
    e = normalize_rows(Tensor(rng.normal(size=(5, 4)) * 3)).data
    np.testing.assert_allclose(np.linalg.norm(e, axis=1), np.ones(5), rtol=1e-12)


def test_ts2vec_loss_prefers_aligned_views(rng):
    t, d = 8, 6
    base = rng.normal(size=(2, t, d))
    aligned = ts2vec_hierarchical_loss(Tensor(base), Tensor(base.copy()))
    shuffled = ts2vec_hierarchical_loss(
        Tensor(base), Tensor(base[:, ::-1].copy()))
    assert float(aligned.data) < float(shuffled.data)


def test_ts2vec_loss_requires_3d(rng):
    with pytest.raises(ValueError):
        ts2vec_hierarchical_loss(Tensor(rng.normal(size=(4, 3))),
                                 Tensor(rng.normal(size=(4, 3))))


def test_joint_loss_weights_and_value(rng):
    n, k = 6, 5
    logits = rng.normal(size=(n, k))
    targets = rng.integers(0, k, size=n)
    amount_pred = rng.normal(size=(n, 1))
    amount_true = rng.normal(size=n)

    total, parts = joint_loss(Tensor(logits), Tensor(amount_pred), targets,
                              amount_true, weights=(5.0, 1.0))
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    ce = -logp[np.arange(n), targets].mean()
    mse = np.mean((amount_pred[:, 0] - amount_true) ** 2)
    assert float(total.data) == pytest.approx(5 * ce + mse, rel=1e-12)
    assert parts.ce == pytest.approx(ce, rel=1e-12)
    assert parts.mse == pytest.approx(mse, rel=1e-12)


def test_masked_joint_loss_ignores_invalid(rng):
    b, length, k = 3, 7, 4
    logits = rng.normal(size=(b, length, k))
    targets = rng.integers(0, k, size=(b, length))
    amount_pred = rng.normal(size=(b, length, 1))
    amount_true = rng.normal(size=(b, length))
    mask = np.ones((b, length))

    full, _ = masked_joint_loss(Tensor(logits), Tensor(amount_pred), targets,
                                amount_true, mask, weights=(5.0, 1.0))

    # Corrupt the masked-out region: loss must not move.
    mask2 = mask.copy()
    mask2[:, 5:] = 0.0
    ref, _ = masked_joint_loss(Tensor(logits), Tensor(amount_pred), targets,
                               amount_true, mask2, weights=(5.0, 1.0))
    targets_bad = targets.copy()
    targets_bad[:, 5:] = 0
    amount_bad = amount_true.copy()
    amount_bad[:, 5:] = 99.0
    out, _ = masked_joint_loss(Tensor(logits), Tensor(amount_pred), targets_bad,
                               amount_bad, mask2, weights=(5.0, 1.0))
    assert float(out.data) == pytest.approx(float(ref.data), rel=1e-12)
    assert float(full.data) != pytest.approx(float(ref.data), rel=1e-3)


# ---------------------------------------------------------------- models

def enc_cfg(tiny_cfg, tiny_splits, arch="gru"):
    return make_encoder_config(tiny_cfg, tiny_splits.vocab.n_indices, arch=arch)


def test_pool_resolution():
    assert _resolve_pool("mlm", "auto") == "first_token"
    assert _resolve_pool("ts2vec", "auto") == "max"
    assert _resolve_pool("coles", "auto") == "last"
    assert _resolve_pool("mlm", "mean") == "mean"


def test_build_model_coerces_arch(tiny_cfg, tiny_splits):
    tc = TrainConfig()
    mlm = build_model("mlm", enc_cfg(tiny_cfg, tiny_splits), tc, seed=0)
    assert mlm.encoder.config.arch == "transformer"
    ar = build_model("ar", enc_cfg(tiny_cfg, tiny_splits, "transformer"), tc, seed=0)
    assert ar.encoder.config.arch == "gru"
    with pytest.raises(ValueError):
        build_model("diffusion", enc_cfg(tiny_cfg, tiny_splits), tc, seed=0)


def test_supervised_needs_classes(tiny_cfg, tiny_splits):
    with pytest.raises(ValueError):
        build_model("supervised", enc_cfg(tiny_cfg, tiny_splits), TrainConfig(),
                    seed=0, n_classes=None)


@pytest.mark.parametrize("objective", OBJECTIVES)
def test_model_loss_is_finite_scalar(objective, tiny_cfg, tiny_splits):
    tc = TrainConfig(batch_size=8, max_len=40, clients_per_batch=6,
                     slices_per_client=3)
    model = build_model(objective, enc_cfg(tiny_cfg, tiny_splits), tc,
                        n_classes=2, seed=0)
    batches = model.iter_batches(tiny_splits.train, np.random.default_rng(0))
    assert len(batches) > 0
    with Tape():
        loss = model.loss(batches[0])
    assert loss.data.shape == ()
    assert np.isfinite(loss.data)


@pytest.mark.parametrize("objective", OBJECTIVES)
def test_model_parameters_unique_names(objective, tiny_cfg, tiny_splits):
    model = build_model(objective, enc_cfg(tiny_cfg, tiny_splits), TrainConfig(),
                        n_classes=2, seed=0)
    names = [n for n, _ in model.parameters()]
    assert len(names) == len(set(names))


def test_iter_batches_is_seed_deterministic(tiny_cfg, tiny_splits):
    tc = TrainConfig(batch_size=8, max_len=40)
    model = build_model("ar", enc_cfg(tiny_cfg, tiny_splits), tc, seed=0)
    b1 = model.iter_batches(tiny_splits.train, np.random.default_rng(5))
    b2 = model.iter_batches(tiny_splits.train, np.random.default_rng(5))
    assert len(b1) == len(b2)
    for x, y in zip(b1, b2):
        for k in x:
            np.testing.assert_array_equal(np.asarray(x[k]), np.asarray(y[k]))


# ---------------------------------------------------------------- training

def test_train_improves_and_restores_best(tiny_cfg, tiny_splits):
    tc = TrainConfig(batch_size=8, max_len=40, clients_per_batch=6,
                     slices_per_client=3)
    model = build_model("ar", enc_cfg(tiny_cfg, tiny_splits), tc, seed=0)
    result = train(model, tiny_splits.train, tiny_splits.val, epochs=3,
                   lr=3e-3, seed=0)
    assert len(result.history) == 3
    assert result.history[-1].train_loss < result.history[0].train_loss
    vals = [e.val_loss for e in result.history]
    assert result.best_val == pytest.approx(min(vals))
    assert result.best_epoch == int(np.argmin(vals))


def test_train_is_bit_deterministic(tiny_cfg, tiny_splits):
    def run():
        tc = TrainConfig(batch_size=8, max_len=40)
        model = build_model("coles", enc_cfg(tiny_cfg, tiny_splits), tc, seed=1)
        train(model, tiny_splits.train, tiny_splits.val, epochs=2, lr=1e-3,
              seed=1)
        return {n: t.data.copy() for n, t in model.parameters()}

    p1, p2 = run(), run()
    assert p1.keys() == p2.keys()
    for k in p1:
        assert np.array_equal(p1[k], p2[k]), k


def test_train_requires_clients(tiny_cfg, tiny_splits):
    model = build_model("coles", enc_cfg(tiny_cfg, tiny_splits), TrainConfig(),
                        seed=0)
    with pytest.raises(ValueError):
        train(model, [], tiny_splits.val, epochs=1)
