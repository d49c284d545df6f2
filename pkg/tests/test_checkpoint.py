"""Checkpoint container: round trips, error taxonomy, atomic writes."""
import struct

import numpy as np
import pytest

from seqrep.checkpoint import (
    MAGIC,
    VERSION,
    Checkpoint,
    CheckpointError,
    CheckpointFormatError,
    DigestMismatchError,
    atomic_write_bytes,
    load_checkpoint,
    load_model,
    save_checkpoint,
    save_model,
)
from seqrep.config import make_encoder_config, make_train_config
from seqrep.context import EmbeddingStore
from seqrep.data.types import MccVocab
from seqrep.objectives.models import build_model

DIGEST = "d" * 64


def test_tensor_round_trip_preserves_shapes(tmp_path, rng):
    tensors = {
        "w": rng.normal(size=(3, 4)),
        "b": rng.normal(size=5),
        "scalar": np.float64(2.5),
        "empty": np.zeros((0, 7)),
        "cube": rng.normal(size=(2, 3, 2)),
    }
    path = tmp_path / "t.ckpt"
    save_checkpoint(path, DIGEST, tensors=tensors)
    ckpt = load_checkpoint(path)
    assert ckpt.digest == DIGEST
    assert set(ckpt.tensors) == set(tensors)
    for name, arr in tensors.items():
        got = ckpt.tensors[name]
        assert got.shape == np.asarray(arr).shape
        np.testing.assert_array_equal(got, arr)
    assert ckpt.meta is None and ckpt.vocab is None and ckpt.store is None


def test_meta_vocab_store_round_trip(tmp_path):
    vocab = MccVocab(mapping={5411: 1, 5812: 2, 4111: 3}, k=3)
    store = EmbeddingStore(dim=2)
    store.add_series("c1", np.array([3, 9]), np.array([[1.0, 2.0], [3.0, 4.0]]))
    store.add_series("c0", np.array([1]), np.array([[5.0, 6.0]]))
    meta = {"objective": "ar", "nested": {"k": [1, 2, 3]}}
    path = tmp_path / "full.ckpt"
    save_checkpoint(path, DIGEST, meta=meta, vocab=vocab, store=store)
    ckpt = load_checkpoint(path)
    assert ckpt.meta == meta
    assert ckpt.vocab.mapping == vocab.mapping
    assert ckpt.vocab.k == 3
    assert ckpt.store.client_ids() == ["c0", "c1"]
    for cid in store.client_ids():
        ts, mat = store.series[cid]
        ts2, mat2 = ckpt.store.series[cid]
        np.testing.assert_array_equal(ts, ts2)
        np.testing.assert_array_equal(mat, mat2)


def test_reserved_tensor_names_rejected(tmp_path):
    with pytest.raises(CheckpointError, match="reserved"):
        save_checkpoint(tmp_path / "x.ckpt", DIGEST,
                        tensors={"META": np.zeros(1)})


def test_bad_magic(tmp_path):
    path = tmp_path / "not.ckpt"
    path.write_bytes(b"ZIP!" + b"\x00" * 16)
    with pytest.raises(CheckpointFormatError, match="magic"):
        load_checkpoint(path)


def test_bad_version(tmp_path):
    path = tmp_path / "v9.ckpt"
    path.write_bytes(MAGIC + struct.pack("<I", 99))
    with pytest.raises(CheckpointFormatError, match="version"):
        load_checkpoint(path)


def test_truncated_file(tmp_path):
    path = tmp_path / "t.ckpt"
    save_checkpoint(path, DIGEST, tensors={"w": np.arange(20.0)})
    payload = path.read_bytes()
    path.write_bytes(payload[:-9])
    with pytest.raises(CheckpointFormatError, match="truncated"):
        load_checkpoint(path)


def test_duplicate_sections_rejected(tmp_path):
    def packed(name, body):
        raw = name.encode()
        return struct.pack("<I", len(raw)) + raw + body

    digest = DIGEST.encode()
    head = MAGIC + struct.pack("<I", VERSION)
    head += struct.pack("<I", len(digest)) + digest
    meta = packed("META", struct.pack("<I", 2) + b"{}")
    path = tmp_path / "dup.ckpt"
    path.write_bytes(head + meta + meta)
    with pytest.raises(CheckpointFormatError, match="duplicate META"):
        load_checkpoint(path)
    tensor = packed("w", struct.pack("<qq", 1, 1) + struct.pack("<d", 0.0))
    path.write_bytes(head + tensor + tensor)
    with pytest.raises(CheckpointFormatError, match="duplicate tensor"):
        load_checkpoint(path)


def test_missing_file_errors(tmp_path):
    with pytest.raises(CheckpointError, match="cannot read"):
        load_checkpoint(tmp_path / "absent.ckpt")


def test_atomic_write_leaves_no_temp_files(tmp_path):
    target = tmp_path / "out.bin"
    atomic_write_bytes(target, b"hello")
    assert target.read_bytes() == b"hello"
    atomic_write_bytes(target, b"replaced")
    assert target.read_bytes() == b"replaced"
    assert [p.name for p in tmp_path.iterdir()] == ["out.bin"]


@pytest.fixture(scope="module")
def trained(tiny_cfg, tiny_splits):
    enc_cfg = make_encoder_config(tiny_cfg, tiny_splits.vocab.n_indices)
    model = build_model("ar", enc_cfg, make_train_config(tiny_cfg), seed=0)
    return model, tiny_splits.vocab


def test_model_round_trip_bitwise(tmp_path, trained):
    model, vocab = trained
    path = tmp_path / "model.ckpt"
    save_model(path, model, vocab, DIGEST)
    loaded, ckpt = load_model(path, expected_digest=DIGEST)
    assert ckpt.vocab.mapping == vocab.mapping
    assert loaded.objective == model.objective
    assert loaded.pool_strategy == model.pool_strategy
    original = dict(model.parameters())
    for name, param in loaded.parameters():
        np.testing.assert_array_equal(param.data, original[name].data)


def test_digest_mismatch_and_override(tmp_path, trained):
    model, vocab = trained
    path = tmp_path / "model.ckpt"
    save_model(path, model, vocab, DIGEST)
    with pytest.raises(DigestMismatchError, match="allow-digest-mismatch"):
        load_model(path, expected_digest="f" * 64)
    loaded, _ = load_model(path, expected_digest="f" * 64,
                           allow_digest_mismatch=True)
    assert loaded.objective == model.objective
    # No expectation given: digest is not checked at all.
    load_model(path)


def test_load_model_missing_tensor(tmp_path, trained):
    model, vocab = trained
    path = tmp_path / "model.ckpt"
    tensors = dict(model.parameters())
    name = sorted(tensors)[0]
    partial = {n: p.data for n, p in tensors.items() if n != name}
    from seqrep.checkpoint import model_meta
    save_checkpoint(path, DIGEST, tensors=partial,
                    meta=model_meta(model, vocab), vocab=vocab)
    with pytest.raises(CheckpointError, match="missing tensors"):
        load_model(path)


def test_load_model_shape_mismatch(tmp_path, trained):
    model, vocab = trained
    path = tmp_path / "model.ckpt"
    tensors = {n: p.data for n, p in model.parameters()}
    name = sorted(tensors)[0]
    tensors[name] = np.zeros(tensors[name].shape + (2,))
    from seqrep.checkpoint import model_meta
    save_checkpoint(path, DIGEST, tensors=tensors,
                    meta=model_meta(model, vocab), vocab=vocab)
    with pytest.raises(CheckpointError, match="shape"):
        load_model(path)


def test_load_model_without_meta(tmp_path, trained):
    model, _ = trained
    path = tmp_path / "bare.ckpt"
    save_checkpoint(path, DIGEST,
                    tensors={n: p.data for n, p in model.parameters()})
    with pytest.raises(CheckpointError, match="META"):
        load_model(path)


def test_checkpoint_dataclass_defaults():
    ckpt = Checkpoint(digest="x")
    assert ckpt.tensors == {}
