"""Deterministic binary container for named, shape-tagged numeric arrays.

Layout: magic, 8-byte little-endian header length, UTF-8 JSON header, raw
array payload. Writing the same content twice produces byte-identical files
(no timestamps, sorted keys), and writes are atomic (temp file + rename).
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

from .errors import CheckpointError

MAGIC = b"SDCONT1\n"
CONTAINER_VERSION = 1


def save_container(path: Path, arrays: dict[str, np.ndarray], meta: dict) -> None:
    names = sorted(arrays)
    entries = {}
    offset = 0
    blobs = []
    for name in names:
        arr = np.asarray(arrays[name])
        blob = arr.tobytes(order="C")
        entries[name] = {
            "dtype": arr.dtype.str,
            "shape": list(arr.shape),
            "offset": offset,
            "nbytes": len(blob),
        }
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps(
        {"version": CONTAINER_VERSION, "meta": meta, "arrays": entries},
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")

    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(header)))
        f.write(header)
        for blob in blobs:
            f.write(blob)
    os.replace(tmp, path)


def load_container(path: Path) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read {path}: {exc}") from exc
    if not raw.startswith(MAGIC):
        raise CheckpointError(f"{path} is not a container file (bad magic)")
    try:
        (header_len,) = struct.unpack_from("<Q", raw, len(MAGIC))
        header_start = len(MAGIC) + 8
        header = json.loads(raw[header_start: header_start + header_len].decode("utf-8"))
    except (struct.error, json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"{path} has a corrupt header: {exc}") from exc
    if header.get("version") != CONTAINER_VERSION:
        raise CheckpointError(f"unsupported container version {header.get('version')!r}")
    payload_start = header_start + header_len
    arrays = {}
    for name, entry in header["arrays"].items():
        start = payload_start + entry["offset"]
        end = start + entry["nbytes"]
        if end > len(raw):
            raise CheckpointError(f"{path}: array {name!r} extends past end of file")
        arrays[name] = np.frombuffer(raw[start:end], dtype=np.dtype(entry["dtype"])).reshape(entry["shape"]).copy()
    return arrays, header["meta"]
