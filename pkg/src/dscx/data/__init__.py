from dscx.data.keyframes import select_keyframes
from dscx.data.manifest import DatasetManifest, ManifestEntry, load_samples, read_manifest
from dscx.data.metrics import ConfusionMatrix, accuracy_report
from dscx.data.splits import kfold, stratified_split, published_counts
from dscx.data.synth import SynthConfig, score_sample, synth_dataset

__all__ = [
    "ConfusionMatrix",
    "DatasetManifest",
    "ManifestEntry",
    "SynthConfig",
    "accuracy_report",
    "kfold",
    "load_samples",
    "read_manifest",
    "score_sample",
    "select_keyframes",
    "stratified_split",
    "synth_dataset",
    "published_counts",
]
