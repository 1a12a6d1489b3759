"""Self-describing binary container for datasets and checkpoints.

Byte layout (all integers little-endian, documented for cross-language use):

    bytes 0..7    magic ``b"CDCONT01"``
    bytes 8..15   uint64: length H of the UTF-8 JSON header
    bytes 16..16+H  header JSON
    rest          raw array payload, arrays concatenated in header order

The header is a JSON object with keys:

    kind           "dataset" | "checkpoint" | arbitrary tag
    config         JSON-serializable configuration echo
    config_sha256  hex digest of the canonical config JSON
    arrays         list of {name, dtype, shape, offset, nbytes}; ``offset``
                   is relative to the payload start

Arrays are stored row-major (C order) little-endian; supported dtypes are
``float64`` and ``int64``.  Writing is deterministic: the header JSON uses
sorted keys and arrays are laid out sorted by name, so identical inputs
produce identical files.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"CDCONT01"
_DTYPES = {"float64": "<f8", "int64": "<i8"}


class ContainerError(ValueError):
    """Malformed or truncated container file."""


def config_hash(config: dict) -> str:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def dumps_container(kind: str, config: dict, arrays: dict[str, np.ndarray]) -> bytes:
    directory = []
    payload = bytearray()
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        if arr.dtype == np.float64:
            dtype = "float64"
        elif arr.dtype == np.int64:
            dtype = "int64"
        else:
            raise ContainerError(f"array {name!r}: unsupported dtype {arr.dtype}")
        raw = arr.astype(_DTYPES[dtype]).tobytes(order="C")
        directory.append(
            {
                "name": name,
                "dtype": dtype,
                "shape": list(arr.shape),
                "offset": len(payload),
                "nbytes": len(raw),
            }
        )
        payload.extend(raw)
    header = {
        "kind": kind,
        "config": config,
        "config_sha256": config_hash(config),
        "arrays": directory,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<Q", len(header_bytes)) + header_bytes + bytes(payload)


def write_container(path: str | Path, kind: str, config: dict, arrays: dict[str, np.ndarray]) -> None:
    Path(path).write_bytes(dumps_container(kind, config, arrays))


def loads_container(blob: bytes) -> tuple[str, dict, dict[str, np.ndarray]]:
    if len(blob) < 16:
        raise ContainerError("file too short for the container preamble")
    if blob[:8] != MAGIC:
        raise ContainerError(f"bad magic {blob[:8]!r}; not a container file")
    (header_len,) = struct.unpack("<Q", blob[8:16])
    if 16 + header_len > len(blob):
        raise ContainerError("truncated file: header section incomplete")
    try:
        header = json.loads(blob[16 : 16 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise ContainerError(f"corrupt header JSON: {err}") from err
    for key in ("kind", "config", "arrays"):
        if key not in header:
            raise ContainerError(f"header missing required key {key!r}")
    payload = blob[16 + header_len :]
    arrays: dict[str, np.ndarray] = {}
    for entry in header["arrays"]:
        name = entry.get("name", "<unnamed>")
        dtype = entry.get("dtype")
        if dtype not in _DTYPES:
            raise ContainerError(f"section {name!r}: unsupported dtype {dtype!r}")
        shape = tuple(entry["shape"])
        offset, nbytes = entry["offset"], entry["nbytes"]
        if offset + nbytes > len(payload):
            raise ContainerError(f"truncated file: section {name!r} extends past end of payload")
        expected = int(np.prod(shape, dtype=np.int64)) * 8
        if expected != nbytes:
            raise ContainerError(
                f"section {name!r}: declared shape {shape} needs {expected} bytes, has {nbytes}"
            )
        arr = np.frombuffer(payload[offset : offset + nbytes], dtype=_DTYPES[dtype]).reshape(shape)
        arrays[name] = arr.copy()  # writable, detached from the blob
    return header["kind"], header["config"], arrays


def read_container(path: str | Path) -> tuple[str, dict, dict[str, np.ndarray]]:
    return loads_container(Path(path).read_bytes())
