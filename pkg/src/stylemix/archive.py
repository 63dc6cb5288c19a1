"""Manifest-plus-blob tensor archives.

An archive is a directory holding ``manifest.json`` (kind, config, ordered
tensor records, optional style registry metadata) and ``weights.bin``
(the tensors' float32 payloads concatenated little-endian, in record
order).  Round trips are bit-exact.
"""

from __future__ import annotations

import json
import os
from typing import Iterable

import numpy as np

__all__ = [
    "CheckpointError",
    "ManifestError",
    "TensorLayoutError",
    "PayloadError",
    "write_archive",
    "read_archive",
]

FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"
PAYLOAD_NAME = "weights.bin"


class CheckpointError(Exception):
    """Base class for archive load/save failures."""


class ManifestError(CheckpointError):
    """manifest.json is missing, unparsable, or structurally invalid."""


class TensorLayoutError(CheckpointError):
    """A tensor record's shape, offset, or length is inconsistent."""


class PayloadError(CheckpointError):
    """weights.bin is truncated or does not match the manifest."""


def write_archive(path: str, kind: str, config: dict,
                  tensors: Iterable[tuple[str, np.ndarray]],
                  styles: list[dict] | None = None) -> None:
    """Write tensors and metadata to the archive directory at ``path``."""
    os.makedirs(path, exist_ok=True)
    records = []
    chunks = []
    offset = 0
    for name, arr in tensors:
        blob = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        records.append({
            "name": name,
            "shape": [int(s) for s in arr.shape],
            "byte_offset": offset,
            "byte_len": len(blob),
        })
        chunks.append(blob)
        offset += len(blob)
    manifest = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "config": config,
        "tensors": records,
    }
    if styles is not None:
        manifest["styles"] = styles
    with open(os.path.join(path, PAYLOAD_NAME), "wb") as f:
        f.write(b"".join(chunks))
    with open(os.path.join(path, MANIFEST_NAME), "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def read_archive(path: str, expect_kind: str | None = None) -> tuple[dict, dict[str, np.ndarray]]:
    """Load (manifest, name -> float32 array) from ``path``, validating fully first.

    Raises :class:`ManifestError`, :class:`TensorLayoutError`, or
    :class:`PayloadError`; on any failure nothing partial is returned.
    """
    manifest_path = os.path.join(path, MANIFEST_NAME)
    payload_path = os.path.join(path, PAYLOAD_NAME)
    try:
        with open(manifest_path, "r", encoding="utf-8") as f:
            manifest = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ManifestError(f"cannot read manifest at {manifest_path}: {e}") from e
    for key in ("format_version", "kind", "config", "tensors"):
        if key not in manifest:
            raise ManifestError(f"manifest at {manifest_path} lacks required key {key!r}")
    if manifest["format_version"] != FORMAT_VERSION:
        raise ManifestError(f"unsupported archive format version {manifest['format_version']!r}")
    if expect_kind is not None and manifest["kind"] != expect_kind:
        raise ManifestError(f"archive kind {manifest['kind']!r} where {expect_kind!r} was expected")

    try:
        with open(payload_path, "rb") as f:
            payload = f.read()
    except OSError as e:
        raise PayloadError(f"cannot read payload at {payload_path}: {e}") from e

    records = manifest["tensors"]
    expected_offset = 0
    for rec in records:
        for key in ("name", "shape", "byte_offset", "byte_len"):
            if key not in rec:
                raise ManifestError(f"tensor record {rec!r} lacks required key {key!r}")
        n_items = int(np.prod(rec["shape"], dtype=np.int64)) if rec["shape"] else 1
        if rec["byte_len"] != 4 * n_items:
            raise TensorLayoutError(f"tensor {rec['name']!r}: shape {rec['shape']} implies "
                                    f"{4 * n_items} bytes but record declares {rec['byte_len']}")
        if rec["byte_offset"] != expected_offset:
            raise TensorLayoutError(f"tensor {rec['name']!r}: offset {rec['byte_offset']} "
                                    f"where {expected_offset} was expected")
        expected_offset += rec["byte_len"]
    if expected_offset != len(payload):
        raise PayloadError(f"payload holds {len(payload)} bytes but manifest declares {expected_offset}")

    arrays: dict[str, np.ndarray] = {}
    for rec in records:
        if rec["name"] in arrays:
            raise ManifestError(f"duplicate tensor name {rec['name']!r} in manifest")
        raw = payload[rec["byte_offset"]:rec["byte_offset"] + rec["byte_len"]]
        arrays[rec["name"]] = np.frombuffer(raw, dtype="<f4").reshape(rec["shape"]).copy()
    return manifest, arrays
