"""Configuration, orchestration and persistence of experiments."""

from dgfflab.harness.config import EXPERIMENTS, ExperimentConfig, load_config, validate
from dgfflab.harness.export import ResultRecord, export, import_record
from dgfflab.harness.runner import run

__all__ = ["EXPERIMENTS", "ExperimentConfig", "ResultRecord", "export", "import_record", "load_config", "run", "validate"]
