from .config import ConfigError, ExperimentConfig, load_config, parse_config, preset
from .experiment import ScenarioOutcome, execute, load_artifacts, write_artifacts

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "parse_config", "preset",
           "ScenarioOutcome", "execute", "load_artifacts", "write_artifacts"]
