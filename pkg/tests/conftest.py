from pathlib import Path

import numpy as np
import pytest


@pytest.fixture(scope="session")
def test_settings_path() -> str:
    """Absolute path to the toy run configuration used by integration tests.

    Kept under tests/fixtures so tests do not depend on the shipped
    config/settings.yaml values.
    """
    return str(Path(__file__).parent / "fixtures" / "test_settings.yaml")


@pytest.fixture(scope="session")
def toy_run_config(test_settings_path: str):
    from repnet.config import RunConfig

    return RunConfig.load(test_settings_path, env_prefix=None)


@pytest.fixture(scope="session")
def toy_dataset(toy_run_config):
    """Synthetic dataset matching the toy config (2 colors x 3 models, 60 samples)."""
    from repnet.data.synthetic import generate_synthetic

    return generate_synthetic(toy_run_config.data, seed=0)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


def tiny_model_config(kind: str = "prl", **overrides):
    """Network config with every width <= 8 (whole-network gradient checks)."""
    from repnet.config import RepNetConfig

    values = dict(
        input_dim=8,
        base_dims=[8],
        d_acs=6,
        d_sls1=6,
        d_sls2=5,
        d_sls3=4,
        n_colors=3,
        n_models=4,
        rep_kind=kind,
        batch_size=4,
        seed=7,
    )
    values.update(overrides)
    return RepNetConfig(**values)


@pytest.fixture
def tiny_config():
    return tiny_model_config()


@pytest.fixture
def make_tiny_config():
    return tiny_model_config
