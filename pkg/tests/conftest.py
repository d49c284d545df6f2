"""Shared fixtures: one small synthetic dataset reused across test modules."""
import numpy as np
import pytest

from seqrep.config import config_from_values, default_config
from seqrep.pipeline import load_dataset, prepare_splits


def small_config(**overrides):
    values = dict(default_config().values)
    values.update({
        "data.n_clients": 60,
        "data.length_min": 60,
        "data.length_max": 120,
        "data.n_mcc": 12,
        "data.n_regimes": 3,
        "data.cp_probability": 0.5,
        "data.cp_distress_prob": 0.8,
        "vocab.k": 12,
        "encoder.d_emb": 8,
        "encoder.hidden": 16,
        "train.epochs": 2,
        "train.batch_size": 16,
        "train.max_len": 48,
        "train.clients_per_batch": 8,
        "train.slices_per_client": 3,
        "eval.n_seeds": 2,
        "eval.probe_epochs": 5,
        "context.store_size": 30,
    })
    values.update(overrides)
    return config_from_values(values)


@pytest.fixture(scope="session")
def tiny_cfg():
    return small_config()


@pytest.fixture(scope="session")
def tiny_splits(tiny_cfg):
    return prepare_splits(tiny_cfg, load_dataset(tiny_cfg))


@pytest.fixture(scope="session")
def tiny_clients(tiny_splits):
    return tiny_splits.train


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
