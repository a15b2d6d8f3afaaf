import json

import numpy as np
import pytest

from minar_cli.config import STUDY_MODEL
from minar_cli.model import InnovationModel, MinarModel, ThinningMatrix


@pytest.fixture
def study_model() -> MinarModel:
    return MinarModel.from_dict(STUDY_MODEL)


@pytest.fixture
def bivariate_model() -> MinarModel:
    return MinarModel(ThinningMatrix([[0.4, 0.2], [0.1, 0.3]]), InnovationModel.constant([1.5, 2.0]))


@pytest.fixture
def poisson_model() -> MinarModel:
    return MinarModel(ThinningMatrix.zeros(2), InnovationModel.constant([1.0, 3.0]))


@pytest.fixture
def model_file(tmp_path, study_model):
    path = tmp_path / "model.json"
    path.write_text(json.dumps(study_model.to_dict()))
    return path


@pytest.fixture
def small_experiment():
    return {
        "model": STUDY_MODEL,
        "total_length": 100,
        "setup_length": 80,
        "outbreak_time": 90,
        "kappas": [10.0],
        "replicates": 2,
        "alphas": [0.05, 0.01],
        "approaches": ["trivariate", "independent"],
        "rule_fraction": 0.6,
        "base_seed": 11,
        "burn_in": 50,
    }


@pytest.fixture
def random_model():
    """Factory for stationary models with entries of A below max_alpha"""

    def make(rng: np.random.Generator, n: int, max_alpha: float = 0.3) -> MinarModel:
        A = rng.uniform(0.0, max_alpha, size=(n, n))
        lam = rng.uniform(0.2, 3.0, size=n)
        return MinarModel(ThinningMatrix(A), InnovationModel.constant(lam))

    return make
