import hashlib
import logging
import struct
from pathlib import Path
from typing import Optional, Union

import numpy as np
import orjson
import pandas as pd

from ..constants import DATASET_FORMAT_VERSION, DATASET_MAGIC
from ..errors import ChecksumError, DatasetFormatError, TruncatedFileError, VersionMismatchError
from ..models import CoordinatePath, DatasetMeta, FieldDataset, QuadraticVariation, SpaceTimeGrid

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

# magic, u16 version, u32 metadata length, u64 tensor length; then metadata,
# the time-major float64 tensor and a blake2b digest of everything before it
_HEADER = struct.Struct("<4sHIQ")
_CHECKSUM_SIZE = 8


def _digest(payload: bytes) -> bytes:
    return hashlib.blake2b(payload, digest_size=_CHECKSUM_SIZE).digest()


def save_dataset(ds: FieldDataset, path: PathLike) -> Path:
    path = Path(path)
    metadata = orjson.dumps(
        {
            "grid": ds.grid.model_dump(mode="json"),
            "shape": list(ds.values.shape),
            "dtype": "<f8",
            "meta": ds.meta.model_dump(mode="json") if ds.meta is not None else None,
        }
    )
    tensor = np.ascontiguousarray(ds.values, dtype="<f8").tobytes()
    body = _HEADER.pack(DATASET_MAGIC, DATASET_FORMAT_VERSION, len(metadata), len(tensor)) + metadata + tensor
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(body + _digest(body))
    logger.info(f"Saved dataset {ds.values.shape} to {path}")
    return path


def load_dataset(path: PathLike) -> FieldDataset:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise TruncatedFileError(f"{path}: file shorter than the header ({len(raw)} bytes)")
    magic, version, meta_len, data_len = _HEADER.unpack_from(raw)
    if magic != DATASET_MAGIC:
        raise DatasetFormatError(f"{path}: not a dataset file (magic {magic!r})")
    if version != DATASET_FORMAT_VERSION:
        raise VersionMismatchError(f"{path}: format version {version}, this build reads version {DATASET_FORMAT_VERSION}")
    expected = _HEADER.size + meta_len + data_len + _CHECKSUM_SIZE
    if len(raw) < expected:
        raise TruncatedFileError(f"{path}: expected {expected} bytes, found {len(raw)}")
    if len(raw) > expected:
        raise DatasetFormatError(f"{path}: {len(raw) - expected} trailing bytes after the checksum")
    body, checksum = raw[:-_CHECKSUM_SIZE], raw[-_CHECKSUM_SIZE:]
    if _digest(body) != checksum:
        raise ChecksumError(f"{path}: checksum mismatch")

    try:
        metadata = orjson.loads(body[_HEADER.size:_HEADER.size + meta_len])
        grid = SpaceTimeGrid.model_validate(metadata["grid"])
        meta = DatasetMeta.model_validate(metadata["meta"]) if metadata.get("meta") is not None else None
        shape = tuple(metadata["shape"])
    except (orjson.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        raise DatasetFormatError(f"{path}: unreadable metadata block ({e})") from e

    tensor = np.frombuffer(body, dtype="<f8", count=data_len // 8, offset=_HEADER.size + meta_len)
    if tensor.size != int(np.prod(shape)):
        raise DatasetFormatError(f"{path}: tensor of {tensor.size} values does not fit shape {shape}")
    logger.debug(f"Loaded dataset {shape} from {path}")
    return FieldDataset(grid=grid, values=tensor.reshape(shape).astype(float), meta=meta)


def export_field_csv(ds: FieldDataset, path: PathLike) -> Path:
    """One row per grid node: i, j (j1, j2 for d = 2), t, y (y1, y2), value"""
    grid = ds.grid
    axes = [np.arange(grid.N + 1)] + [np.arange(m + 1) for m in grid.M]
    index = np.meshgrid(*axes, indexing="ij")
    columns = {"i": index[0].ravel()}
    names = ["j"] if grid.d == 1 else ["j1", "j2"]
    coords = ["y"] if grid.d == 1 else ["y1", "y2"]
    for name, idx in zip(names, index[1:]):
        columns[name] = idx.ravel()
    columns["t"] = index[0].ravel() / grid.N
    for coord, idx, m in zip(coords, index[1:], grid.M):
        columns[coord] = idx.ravel() / m
    columns["value"] = ds.values.ravel()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(columns).to_csv(path, index=False)
    return path


def export_path_csv(path_: CoordinatePath, qv: Optional[QuadraticVariation], path: PathLike) -> Path:
    """Columns i, t, value, S (partial quadratic variation, S_0 = 0)"""
    frame = pd.DataFrame({"i": np.arange(path_.values.size), "t": path_.times, "value": path_.values})
    if qv is not None:
        frame["S"] = qv.partials
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    return path


def load_path_csv(path: PathLike, ell=(1,)) -> CoordinatePath:
    frame = pd.read_csv(path)
    missing = {"t", "value"} - set(frame.columns)
    if missing:
        raise DatasetFormatError(f"{path}: coordinate CSV lacks columns {sorted(missing)}")
    return CoordinatePath(ell=tuple(ell), times=frame["t"].to_numpy(dtype=float), values=frame["value"].to_numpy(dtype=float))
