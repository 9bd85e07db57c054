"""Building reconstruction in multiple levels of detail from footprints and classified points."""

from .config import PipelineConfig, ReconstructionConfig, load_config
from .pipeline import BuildingModel, RunReport, reconstruct_building, run

__all__ = ["BuildingModel", "PipelineConfig", "ReconstructionConfig", "RunReport", "load_config", "reconstruct_building", "run"]
__version__ = "0.1.0"
