"""Datasets, synthetic tasks, partitioning and CSV files."""

from app.data.csv_io import CsvSchema, load_csv, read_partition, write_csv, write_partition
from app.data.dataset import DatasetKind, LabeledDataset
from app.data.partition import dirichlet_partition, eval_size, split_train_eval
from app.data.synthetic import synth_sequences, synth_vectors

__all__ = [
    "CsvSchema",
    "DatasetKind",
    "LabeledDataset",
    "dirichlet_partition",
    "eval_size",
    "load_csv",
    "read_partition",
    "split_train_eval",
    "synth_sequences",
    "synth_vectors",
    "write_csv",
    "write_partition",
]
