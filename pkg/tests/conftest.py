import numpy as np
import pytest

from embedding_core import EncoderOracle, SceneDescriptor, make_embedding
from episodic_memory import ExperienceFrame, MemoryConfig


@pytest.fixture
def oracle():
    """Small exact-noise-free oracle for fast tests."""
    return EncoderOracle(seed=7, dimension=64, noise_angle=0.0)


@pytest.fixture
def noisy_oracle():
    return EncoderOracle(seed=7, dimension=64)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_config():
    return MemoryConfig(capacity=50, update_frequency=10, top_k=5)


def descriptor(terrain=(('grass', 10),), entities=(), bucket=0):
    return SceneDescriptor(visible_entities=frozenset(entities), terrain_summary=tuple(sorted(terrain)),
                           pose_bucket=bucket)


def kind_vector(oracle, *kinds, weights=None):
    weights = weights or [1.0] * len(kinds)
    return make_embedding(sum(w * oracle.base(k) for w, k in zip(weights, kinds)))


def frame(embedding, t, x=0.0, y=0.0, yaw=0.0):
    return ExperienceFrame(embedding=embedding, x=x, y=y, yaw=yaw, time=t)


def random_unit(rng, dimension=64):
    return make_embedding(rng.standard_normal(dimension))
