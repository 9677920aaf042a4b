"""Ingestion, preprocessing, synthetic data and the HARW1 dataset format."""

from .dataset import Dataset, synthetic_dataset
from .harw import HARWError, read_harw, write_harw
from .ingest import DatasetManifest, IngestError, builtin_manifests, ingest_csv, ingest_dir, resolve_manifest
from .synth import synth_har
from .windows import (PreparedData, RawRecording, SensorWindow, Standardizer, interpolate_missing,
                      prepare, split, split_counts, standardize, window)
