"""Run-length encoding for 2D binary masks on the wire.

Format: ``{"rows": [[start, len, start, len, ...], ...]}`` with one list
per mask row and alternating (start, length) runs of foreground pixels.
Starts are 0-based column offsets within the row.
"""

from __future__ import annotations

import numpy as np


def encode_mask(mask: np.ndarray) -> dict:
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ValueError("RLE encodes 2D masks only")
    rows = []
    for row in mask.astype(bool):
        runs: list[int] = []
        padded = np.concatenate(([False], row, [False]))
        edges = np.flatnonzero(padded[1:] != padded[:-1])
        for start, stop in zip(edges[::2], edges[1::2]):
            runs.extend((int(start), int(stop - start)))
        rows.append(runs)
    return {"rows": rows}


def decode_mask(payload: dict, shape: tuple[int, int]) -> np.ndarray:
    rows = payload.get("rows")
    if not isinstance(rows, list) or len(rows) != shape[0]:
        raise ValueError(f"RLE payload must have {shape[0]} rows")
    mask = np.zeros(shape, dtype=np.uint8)
    for i, runs in enumerate(rows):
        if len(runs) % 2 != 0:
            raise ValueError(f"row {i}: runs must come in (start, len) pairs")
        for start, length in zip(runs[::2], runs[1::2]):
            if length < 0 or start < 0 or start + length > shape[1]:
                raise ValueError(f"row {i}: run ({start}, {length}) out of bounds")
            mask[i, start : start + length] = 1
    return mask
