import pytest

from convsel.pipeline import PipelineConfig, train_models
from convsel.synth import generate_synthetic


@pytest.fixture(scope="session")
def small_corpus():
    return generate_synthetic(7, 40)


@pytest.fixture(scope="session")
def pipeline_config():
    return PipelineConfig(seed=7)


@pytest.fixture(scope="session")
def trained(small_corpus, pipeline_config):
    """Models trained on a small corpus, shared across module tests."""
    train = small_corpus[:30]
    models, report = train_models(train, pipeline_config)
    return models, report, train, small_corpus[30:]
