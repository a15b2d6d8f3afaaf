# minar-cli/minar_cli/config.py
from pydantic_settings import BaseSettings, SettingsConfigDict
from typing import Optional
from pathlib import Path
import json

from .utils import atomic_write

class Settings(BaseSettings):
    # Reproducibility
    seed: int = 2024

    # Surveillance defaults (component-wise type I error, 2/3 rule)
    alpha: float = 0.01
    rule_fraction: float = 0.6

    # Simulation
    burn_in: int = 100

    # Numerics
    pmf_tolerance: float = 1e-12
    max_iterations: int = 2000

    # Evaluation: None means one worker per CPU
    workers: Optional[int] = None

    # Design covariates (three-day recording intervals -> 122 per year)
    seasonal_period: float = 122.0

    model_config = SettingsConfigDict(env_prefix="MINAR_", env_file=".env", extra="ignore")

settings = Settings()

STUDY_MODEL = {
    "n": 3,
    "A": [[0.3, 0.1, 0.2], [0.2, 0.4, 0.2], [0.3, 0.2, 0.2]],
    "innovations": {"mode": "constant", "lambda": [1.0, 1.0, 1.0]},
}

def init_config(config_dir: Optional[Path] = None) -> tuple[Path, Path]:
    """Write the simulation-study model and experiment files"""
    if config_dir is None:
        config_dir = Path.cwd()

    config_dir.mkdir(parents=True, exist_ok=True)
    model_file = config_dir / "model.json"
    experiment_file = config_dir / "experiment.json"

    default_experiment = {
        "model": STUDY_MODEL,
        "total_length": 200,
        "setup_length": 150,
        "outbreak_time": 170,
        "kappas": [5.0, 8.0, 10.0],
        "replicates": 1000,
        "alphas": [0.10, 0.05, 0.01],
        "approaches": ["multivariate", "independent"],
        "rule_fraction": settings.rule_fraction,
        "base_seed": settings.seed,
        "burn_in": settings.burn_in,
    }

    if not model_file.exists():
        with atomic_write(model_file) as f:
            json.dump(STUDY_MODEL, f, indent=2)
    if not experiment_file.exists():
        with atomic_write(experiment_file) as f:
            json.dump(default_experiment, f, indent=2)

    return model_file, experiment_file
