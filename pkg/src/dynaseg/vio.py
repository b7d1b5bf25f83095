"""Volume file I/O: JSON header + raw little-endian payload.

A volume on disk is a pair of files: ``<base>.json`` holding
``{"dims": [nx, ny, nz], "dtype": "f32"|"u8", "order": "x-major"}`` and
``<base>.raw`` holding exactly nx*ny*nz little-endian elements in C order
with x the slowest-varying axis. Masks use dtype ``u8`` with values {0,1}.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from .volume import BinaryMask, Volume

_DTYPES = {"f32": np.dtype("<f4"), "u8": np.dtype("u1")}


def _paths(base: str | Path) -> tuple[Path, Path]:
    base = Path(base)
    return base.with_suffix(".json"), base.with_suffix(".raw")


def write_volume(base: str | Path, obj: Volume | BinaryMask) -> None:
    header_path, payload_path = _paths(base)
    if isinstance(obj, BinaryMask):
        dtype = "u8"
        payload = obj.data.astype("u1")
    elif isinstance(obj, Volume):
        dtype = "f32"
        payload = obj.data.astype("<f4")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")
    header = {"dims": list(obj.dims), "dtype": dtype, "order": "x-major"}
    header_path.parent.mkdir(parents=True, exist_ok=True)
    tmp = payload_path.with_suffix(".raw.tmp")
    payload.tofile(tmp)
    os.replace(tmp, payload_path)
    tmp = header_path.with_suffix(".json.tmp")
    tmp.write_text(json.dumps(header, sort_keys=True))
    os.replace(tmp, header_path)


def read_volume(base: str | Path) -> Volume | BinaryMask:
    header_path, payload_path = _paths(base)
    header = json.loads(header_path.read_text())
    dims = header.get("dims")
    dtype_tag = header.get("dtype")
    if dtype_tag not in _DTYPES:
        raise ValueError(f"unknown dtype {dtype_tag!r}")
    if not (isinstance(dims, list) and len(dims) == 3 and all(int(d) > 0 for d in dims)):
        raise ValueError(f"bad dims in header: {dims!r}")
    dims = tuple(int(d) for d in dims)
    raw = np.fromfile(payload_path, dtype=_DTYPES[dtype_tag])
    expected = dims[0] * dims[1] * dims[2]
    if raw.size != expected:
        raise ValueError(
            f"payload has {raw.size} elements, header dims {dims} require {expected}"
        )
    data = raw.reshape(dims)
    if dtype_tag == "u8":
        return BinaryMask(data)
    return Volume(data)
