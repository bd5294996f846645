"""
Dataset and partition files.

Vector CSVs have the header ``f0,...,f{dim-1},label``; sequence CSVs have
``tokens,label`` with tokens space-separated. A persisted partition is one CSV
per shard plus ``manifest.json``.
"""

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from app.data.dataset import DatasetKind, LabeledDataset
from app.errors import DataError, StorageError

MANIFEST_NAME = "manifest.json"


@dataclass(frozen=True)
class CsvSchema:
    """Expected layout of a dataset file."""

    kind: DatasetKind
    width: int
    num_classes: int

    @property
    def header(self) -> list[str]:
        if self.kind == DatasetKind.VECTOR:
            return [f"f{i}" for i in range(self.width)] + ["label"]
        return ["tokens", "label"]

    @classmethod
    def of(cls, ds: LabeledDataset) -> "CsvSchema":
        return cls(ds.kind, ds.width, ds.num_classes)


def _parse_label(cell: str, schema: CsvSchema, path: str, row: int) -> int:
    try:
        label = int(cell)
    except ValueError:
        raise DataError(f"Non-integer label '{cell}'", path=path, row=row)
    if not 0 <= label < schema.num_classes:
        raise DataError(f"Label {label} outside [0, {schema.num_classes})", path=path, row=row)
    return label


def _parse_row(cells: list[str], schema: CsvSchema, path: str, row: int) -> tuple[list[Any], int]:
    expected = len(schema.header)
    if len(cells) != expected:
        raise DataError(f"Expected {expected} cells, found {len(cells)}", path=path, row=row)
    label = _parse_label(cells[-1].strip(), schema, path, row)
    if schema.kind == DatasetKind.VECTOR:
        try:
            values: list[Any] = [float(c) for c in cells[:-1]]
        except ValueError as exc:
            raise DataError(f"Non-numeric feature ({exc})", path=path, row=row)
        if not all(np.isfinite(values)):
            raise DataError("Non-finite feature", path=path, row=row)
        return values, label
    try:
        tokens = [int(t) for t in cells[0].split()]
    except ValueError as exc:
        raise DataError(f"Non-integer token ({exc})", path=path, row=row)
    if len(tokens) != schema.width:
        raise DataError(f"Expected {schema.width} tokens, found {len(tokens)}", path=path, row=row)
    if any(t < 0 for t in tokens):
        raise DataError("Negative token id", path=path, row=row)
    return tokens, label


def load_csv(path: str | Path, schema: CsvSchema, allow_empty: bool = False) -> LabeledDataset:
    """
    Parse a dataset file.

    A header-only file is an error unless ``allow_empty`` (empty partition shards).

    Raises:
        StorageError: if the file cannot be read
        DataError: on an empty file, a header mismatch or a malformed row
            (row numbers are file line numbers)
    """
    where = str(path)
    try:
        with open(path, newline="", encoding="utf-8") as handle:
            rows = [(line, cells) for line, cells in enumerate(csv.reader(handle), start=1) if cells]
    except OSError as exc:
        raise StorageError(f"Cannot read {where}: {exc}", details={"path": where})
    if not rows:
        raise DataError("Empty dataset file", path=where)
    header_line, header_cells = rows[0]
    header = [h.strip() for h in header_cells]
    if header != schema.header:
        raise DataError(
            f"Header mismatch: expected {','.join(schema.header)}",
            path=where,
            row=header_line,
            details={"found": header},
        )
    dtype = np.float64 if schema.kind == DatasetKind.VECTOR else np.int64
    if len(rows) == 1:
        if not allow_empty:
            raise DataError("Dataset has no rows", path=where)
        return LabeledDataset(
            np.empty((0, schema.width), dtype=dtype),
            np.empty(0, dtype=np.int64),
            schema.num_classes,
            schema.kind,
        )
    inputs = []
    labels = []
    for line, cells in rows[1:]:
        values, label = _parse_row(cells, schema, where, line)
        inputs.append(values)
        labels.append(label)
    return LabeledDataset(
        np.asarray(inputs, dtype=dtype),
        np.asarray(labels, dtype=np.int64),
        schema.num_classes,
        schema.kind,
    )


def write_csv(ds: LabeledDataset, path: str | Path) -> None:
    """Write ``ds`` so that :func:`load_csv` reproduces it exactly."""
    schema = CsvSchema.of(ds)
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(schema.header)
            for row, label in zip(ds.inputs, ds.labels):
                if ds.kind == DatasetKind.VECTOR:
                    writer.writerow([repr(float(v)) for v in row] + [int(label)])
                else:
                    writer.writerow([" ".join(str(int(t)) for t in row), int(label)])
    except OSError as exc:
        raise StorageError(f"Cannot write {path}: {exc}", details={"path": str(path)})


def shard_file_name(shard_id: int) -> str:
    return f"shard_{shard_id:03d}.csv"


def write_partition(
    shards: list[LabeledDataset], out_dir: str | Path, extra: dict[str, Any] | None = None
) -> dict[str, Any]:
    """
    Persist shards plus a manifest with sizes and class histograms.

    Returns:
        The manifest written to ``manifest.json``
    """
    if not shards:
        raise DataError("No shards to write")
    out = Path(out_dir)
    schema = CsvSchema.of(shards[0])
    entries = []
    for shard_id, shard in enumerate(shards):
        name = shard_file_name(shard_id)
        write_csv(shard, out / name)
        entries.append(
            {
                "id": shard_id,
                "file": name,
                "size": len(shard),
                "class_histogram": shard.class_histogram(),
            }
        )
    manifest: dict[str, Any] = {
        "kind": schema.kind.value,
        "width": schema.width,
        "num_classes": schema.num_classes,
        "shards": entries,
    }
    manifest.update(extra or {})
    try:
        (out / MANIFEST_NAME).write_text(
            json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
    except OSError as exc:
        raise StorageError(f"Cannot write manifest in {out}: {exc}", details={"path": str(out)})
    return manifest


def read_partition(out_dir: str | Path) -> tuple[list[LabeledDataset], dict[str, Any]]:
    """
    Load shards written by :func:`write_partition`.

    Raises:
        StorageError: if the manifest cannot be read
        DataError: if the manifest is malformed or a shard disagrees with it
    """
    base = Path(out_dir)
    manifest_path = base / MANIFEST_NAME
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise StorageError(f"Cannot read {manifest_path}: {exc}", details={"path": str(manifest_path)})
    except json.JSONDecodeError as exc:
        raise DataError(f"Malformed manifest ({exc.msg})", path=str(manifest_path), row=exc.lineno)
    try:
        schema = CsvSchema(
            DatasetKind(manifest["kind"]), int(manifest["width"]), int(manifest["num_classes"])
        )
        entries = manifest["shards"]
    except (KeyError, ValueError, TypeError) as exc:
        raise DataError(f"Manifest is missing or has an invalid field: {exc}", path=str(manifest_path))
    shards = []
    for entry in entries:
        shard = load_csv(base / entry["file"], schema, allow_empty=True)
        if len(shard) != entry["size"]:
            raise DataError(
                f"Shard size {len(shard)} differs from manifest size {entry['size']}",
                path=str(base / entry["file"]),
            )
        shards.append(shard)
    return shards, manifest
