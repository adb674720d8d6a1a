"""Versioned binary container for trained artifacts.

Layout: 4-byte magic, uint32 little-endian header length, UTF-8 JSON
header (format version, artifact kind, metadata, declared block list),
then the raw little-endian float32 blocks in declared order.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import DataError

MAGIC = b"ERSH"
FORMAT_VERSION = 1


def write_checkpoint(path, kind: str, meta: dict, blocks: dict[str, np.ndarray]) -> None:
    header = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "meta": meta,
        "blocks": [{"name": name, "shape": list(arr.shape)} for name, arr in blocks.items()],
    }
    raw = json.dumps(header).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(np.uint32(len(raw)).tobytes())
        fh.write(raw)
        for arr in blocks.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def read_checkpoint(path) -> tuple[str, dict, dict[str, np.ndarray]]:
    if not Path(path).exists():
        raise DataError(f"missing checkpoint file {path}")
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise DataError(f"{path}: not a checkpoint file (bad magic {magic!r})")
        (header_len,) = np.frombuffer(fh.read(4), dtype="<u4")
        header = json.loads(fh.read(int(header_len)).decode("utf-8"))
        if header.get("format_version") != FORMAT_VERSION:
            raise DataError(f"{path}: unsupported format version {header.get('format_version')}")
        blocks = {}
        for entry in header["blocks"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(fh.read(count * 4), dtype="<f4")
            if data.size != count:
                raise DataError(f"{path}: truncated block {entry['name']!r}")
            blocks[entry["name"]] = data.reshape(shape).copy()
    return header["kind"], header["meta"], blocks
