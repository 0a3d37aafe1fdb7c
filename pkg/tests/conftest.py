"""Session fixtures: the desk-scale dataset and the trained models that the
acceptance tests share. Training is deterministic (seeded), so every test
sees identical artifacts."""

import time
from types import SimpleNamespace

import pytest

from kqn.data import SyntheticSpec, generate_synthetic
from kqn.dkt import DktConfig, DktModel
from kqn.model import ModelConfig, KqnModel
from kqn.training import TrainConfig, split_data, train

DESK_SPEC = SyntheticSpec(
    num_students=400,
    num_skills=50,
    num_concepts=5,
    steps_per_student=50,
    guess=0.25,
    seed=315,
)
DESK_SPLIT_SEED = 315
DESK_TRAIN_CFG = TrainConfig(
    batch_size=16,
    epochs_validation=20,
    adam_alpha=0.003,
    seed=1,
    patience=5,
)
DESK_KEEP_PROB = 0.6


def desk_model_config(dim):
    return ModelConfig(
        num_skills=DESK_SPEC.num_skills,
        dim=dim,
        rnn_kind="lstm",
        rnn_hidden=32,
        mlp_hidden=32,
        keep_prob=DESK_KEEP_PROB,
    )


@pytest.fixture(scope="session")
def desk():
    dataset, concepts = generate_synthetic(DESK_SPEC)
    split = split_data(dataset.sequences, 0.8, 0.5, seed=DESK_SPLIT_SEED)
    return SimpleNamespace(
        spec=DESK_SPEC,
        dataset=dataset,
        concepts=concepts,
        split=split,
        train_cfg=DESK_TRAIN_CFG,
    )


def _timed_train(model, desk, config):
    start = time.perf_counter()
    result = train(model, desk.split.train, desk.split.valid, desk.train_cfg)
    elapsed = time.perf_counter() - start
    return SimpleNamespace(
        config=config, params=result.params, result=result, train_seconds=elapsed
    )


@pytest.fixture(scope="session")
def kqn16(desk):
    config = desk_model_config(16)
    return _timed_train(KqnModel(config), desk, config)


@pytest.fixture(scope="session")
def kqn8(desk):
    config = desk_model_config(8)
    return _timed_train(KqnModel(config), desk, config)


@pytest.fixture(scope="session")
def dkt_desk(desk):
    config = DktConfig(num_skills=DESK_SPEC.num_skills, hidden=32, keep_prob=DESK_KEEP_PROB)
    return _timed_train(DktModel(config), desk, config)


@pytest.fixture(scope="session")
def tiny_synthetic():
    spec = SyntheticSpec(
        num_students=50,
        num_skills=10,
        num_concepts=2,
        steps_per_student=20,
        guess=0.25,
        seed=0,
    )
    dataset, concepts = generate_synthetic(spec)
    return SimpleNamespace(spec=spec, dataset=dataset, concepts=concepts)
