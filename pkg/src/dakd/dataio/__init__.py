from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .dataset import SegmentDataset, load_dataset
from .features import FeatureFormatError, read_features, segment_bounds, segment_pool, write_features
from .manifest import DatasetManifest, ManifestError, VideoRecord, read_manifest, write_manifest
from .synth import anomalous_fraction, generate_synthetic

__all__ = [
    "CheckpointError", "load_checkpoint", "save_checkpoint",
    "SegmentDataset", "load_dataset",
    "FeatureFormatError", "read_features", "segment_bounds", "segment_pool", "write_features",
    "DatasetManifest", "ManifestError", "VideoRecord", "read_manifest", "write_manifest",
    "anomalous_fraction", "generate_synthetic",
]
