import numpy as np
import pytest

from lstnet.data.mnist import load_mnist
from lstnet.training import TrainConfig

TINY_SPATIAL = dict(
    batch_size=8, latent_dim=8, channels=[4, 8], hidden=16, decision_width=8, eval_every=10,
    eval_count=16, rotation_per_class=2, rotation_count=5, dilation_samples=20,
)
TINY_SEQUENCE = dict(
    task="sequence", batch_size=4, latent_dim=8, channels=[4, 8, 8], hidden=16, decision_width=8,
    eval_every=6, eval_count=8, sequence=dict(count=8, size=16, length=12, radius=[2, 3], speed=[0.5, 1.0]),
    sequence_test_count=4,
)


def tiny_config(task="rotation", **kw) -> TrainConfig:
    if task == "sequence":
        return TrainConfig(**{**TINY_SEQUENCE, **kw})
    return TrainConfig(**{**TINY_SPATIAL, "task": task, **kw})


@pytest.fixture(scope="session")
def mnist():
    return load_mnist()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
