"""Semi-automatic bot/human classification of social-media profiles."""
from .artifact import ARTIFACT_FORMAT, ModelArtifact
from .config import PipelineConfig, load_config
from .features import FEATURE_NAMES, SCHEMA_HASH, build_matrix, extract_features
from .profiles import load_dataset, parse_user

__version__ = "1.0.0"

__all__ = [
    "ARTIFACT_FORMAT", "FEATURE_NAMES", "ModelArtifact", "PipelineConfig", "SCHEMA_HASH", "__version__",
    "build_matrix", "extract_features", "load_config", "load_dataset", "parse_user",
]
