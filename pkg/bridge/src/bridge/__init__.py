"""bridge: split-model feature export and Top-1 scoring for the tensorfill pipeline."""

from .evaluate import evaluate_completed, write_flags
from .export import export_features, split_from_manifest
from .splits import SplitModel, build_split, candidate_split_layers, resolve_add_by_fraction

__version__ = "0.1.0"
