import numpy as np
import pytest

from hexmpc.model import RobotModel, default_model_path


@pytest.fixture(scope="session")
def model() -> RobotModel:
    return RobotModel.load(default_model_path())


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
