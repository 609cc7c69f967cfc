"""CSV ingestion and the on-disk model format.

A model file is one JSON document holding the hyperparameters (natural
scale, full double precision via repr round-trip), the partition plan with
explicit index lists, the branching, and a reference to the training data
by path and content hash.  Loading verifies the hash and refits the
leaves, which is deterministic, so a round trip reproduces predictions
bit for bit.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .expert import Dataset
from .kernel import Hyperparameters
from .partition import PartitionPlan

__all__ = ["ModelFile", "ingest_csv", "save_model", "load_model", "file_sha256"]

FORMAT_VERSION = 1


def ingest_csv(path, target_column: int = -1, has_header: bool = False) -> Dataset:
    """Read a numeric CSV into a Dataset.

    ``target_column`` indexes the target (negative counts from the end);
    the remaining columns become inputs in file order.  The first
    unparseable cell aborts with its row and column named (rows are
    1-based file lines, header included).
    """
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise DataError(f"cannot open data file {path}: {exc}") from exc
    rows = []
    with fh:
        reader = csv.reader(fh)
        width = None
        for line_no, record in enumerate(reader, start=1):
            if line_no == 1 and has_header:
                continue
            if not record or all(cell.strip() == "" for cell in record):
                continue
            if width is None:
                width = len(record)
                if width < 2:
                    raise DataError(
                        f"{path}: need at least 2 columns (inputs and target), got {width}"
                    )
            elif len(record) != width:
                raise DataError(
                    f"{path}: row {line_no} has {len(record)} columns, expected {width}"
                )
            parsed = np.empty(width)
            for col, cell in enumerate(record):
                try:
                    parsed[col] = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: non-numeric value {cell!r} at row {line_no}, column {col}"
                    ) from None
            rows.append(parsed)
    if not rows:
        raise DataError(f"{path}: no data rows")
    table = np.vstack(rows)
    width = table.shape[1]
    target = target_column if target_column >= 0 else width + target_column
    if not 0 <= target < width:
        raise DataError(
            f"{path}: target column {target_column} outside the {width} columns present"
        )
    mask = np.ones(width, dtype=bool)
    mask[target] = False
    return Dataset(table[:, mask], table[:, target])


def read_inputs_csv(path, has_header: bool = False, expect_dim: int | None = None) -> np.ndarray:
    """Read a CSV of query inputs only (no target column); may be empty."""
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise DataError(f"cannot open data file {path}: {exc}") from exc
    rows = []
    with fh:
        reader = csv.reader(fh)
        for line_no, record in enumerate(reader, start=1):
            if line_no == 1 and has_header:
                continue
            if not record or all(cell.strip() == "" for cell in record):
                continue
            try:
                rows.append([float(cell) for cell in record])
            except ValueError:
                bad = next(c for c, cell in enumerate(record) if not _is_float(cell))
                raise DataError(
                    f"{path}: non-numeric value at row {line_no}, column {bad}"
                ) from None
    if not rows:
        return np.empty((0, expect_dim or 0))
    return np.asarray(rows, dtype=np.float64)


def _is_float(cell: str) -> bool:
    try:
        float(cell)
        return True
    except ValueError:
        return False


def file_sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


@dataclass
class ModelFile:
    """Everything needed to rebuild a fitted tree from the training data."""

    hp: Hyperparameters
    plan: PartitionPlan
    branching: tuple
    data_path: str
    data_sha256: str
    target_column: int = -1
    has_header: bool = False
    train_summary: dict | None = None
    version: int = FORMAT_VERSION


def save_model(mf: ModelFile, path) -> None:
    doc = {
        "format_version": mf.version,
        "hyperparameters": {
            "sigma_f": mf.hp.sigma_f,
            "lengthscales": list(mf.hp.lengthscales),
            "sigma_eps": mf.hp.sigma_eps,
        },
        "partition": {
            "method": mf.plan.method,
            "seed": mf.plan.seed,
            "sharing_factor": mf.plan.sharing_factor,
            "num_regions": mf.plan.num_regions,
            "subsets": [[int(i) for i in s] for s in mf.plan.subsets],
        },
        "branching": [int(b) for b in mf.branching],
        "data": {
            "path": str(mf.data_path),
            "sha256": mf.data_sha256,
            "target_column": mf.target_column,
            "has_header": mf.has_header,
        },
        "training": mf.train_summary,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_model(path) -> ModelFile:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot open model file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"model file {path} is not valid JSON: {exc}") from exc
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise DataError(
            f"model file {path} has format version {version}, expected {FORMAT_VERSION}"
        )
    hp_doc = doc["hyperparameters"]
    hp = Hyperparameters(
        sigma_f=hp_doc["sigma_f"],
        lengthscales=np.asarray(hp_doc["lengthscales"], dtype=np.float64),
        sigma_eps=hp_doc["sigma_eps"],
    )
    plan_doc = doc["partition"]
    plan = PartitionPlan(
        subsets=tuple(np.asarray(s, dtype=np.int64) for s in plan_doc["subsets"]),
        sharing_factor=plan_doc["sharing_factor"],
        method=plan_doc["method"],
        seed=plan_doc["seed"],
        num_regions=plan_doc.get("num_regions", 1),
    )
    return ModelFile(
        hp=hp,
        plan=plan,
        branching=tuple(doc["branching"]),
        data_path=doc["data"]["path"],
        data_sha256=doc["data"]["sha256"],
        target_column=doc["data"].get("target_column", -1),
        has_header=doc["data"].get("has_header", False),
        train_summary=doc.get("training"),
        version=version,
    )
