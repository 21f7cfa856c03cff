"""Shared fixtures: a small dataset and model so unit tests stay fast."""

import numpy as np
import pytest

from coattn.data import DatasetSpec, generate, write_dataset
from coattn.model import init_params
from coattn.training import TrainConfig, train


@pytest.fixture(scope="session")
def tiny_spec():
    return DatasetSpec(num_classes=3, image_size=16,
                       splits={"train": 40, "test": 10}, seed=7)


@pytest.fixture(scope="session")
def tiny_splits(tiny_spec):
    return generate(tiny_spec)


@pytest.fixture(scope="session")
def tiny_dataset_dir(tiny_spec, tiny_splits, tmp_path_factory):
    root = tmp_path_factory.mktemp("tiny_dataset")
    for split, samples in tiny_splits.items():
        write_dataset(samples, root / split, tiny_spec.class_names())
    return root


@pytest.fixture(scope="session")
def tiny_params():
    return init_params(num_classes=3, channels=(4, 4, 8), seed=3)


@pytest.fixture(scope="session")
def tiny_trained(tiny_splits):
    """A briefly trained small model; enough for inference plumbing tests."""
    cfg = TrainConfig(epochs=2, pairs_per_epoch=40, seed=1)
    params, rows = train(tiny_splits["train"], cfg)
    return params, rows


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
