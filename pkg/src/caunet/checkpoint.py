"""Binary checkpoint container.

Layout: 8-byte magic, little-endian u32 format version, u64 header length, a
UTF-8 JSON header (network config, epoch, metrics, array directory), then the
arrays as contiguous little-endian float32. Header keys are sorted so equal
states produce byte-identical files.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from caunet.errors import DecodeError
from caunet.network import CAUNet, NetworkConfig, build

MAGIC = b"CAUNETCK"
VERSION = 1
_PREFIX = struct.Struct("<8sIQ")


def save(path: str | Path, net: CAUNet, epoch: int = -1, metrics: dict | None = None, extra: dict | None = None) -> None:
    state = net.state_dict()
    directory, blobs, offset = [], [], 0
    for name in sorted(state):
        arr = np.ascontiguousarray(state[name], dtype="<f4")
        directory.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": arr.nbytes})
        blobs.append(arr.tobytes())
        offset += arr.nbytes
    header = {"config": net.config.to_dict(), "epoch": int(epoch), "metrics": metrics or {}, "extra": extra or {},
              "arrays": directory}
    raw = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(_PREFIX.pack(MAGIC, VERSION, len(raw)))
        fh.write(raw)
        for b in blobs:
            fh.write(b)


def read(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    """Header and arrays of a checkpoint file."""
    data = Path(path).read_bytes()
    if len(data) < _PREFIX.size:
        raise DecodeError(f"checkpoint {path} is truncated", path=str(path))
    magic, version, hlen = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise DecodeError(f"{path} is not a checkpoint (bad magic)", path=str(path))
    if version != VERSION:
        raise DecodeError(f"checkpoint {path} has unsupported version {version}", path=str(path))
    start = _PREFIX.size + hlen
    try:
        header = json.loads(data[_PREFIX.size:start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DecodeError(f"checkpoint {path} has a corrupt header", path=str(path)) from exc
    arrays = {}
    for entry in header["arrays"]:
        lo = start + entry["offset"]
        if lo + entry["nbytes"] > len(data):
            raise DecodeError(f"checkpoint {path} is truncated at {entry['name']}", path=str(path))
        arrays[entry["name"]] = np.frombuffer(data, dtype="<f4", count=entry["nbytes"] // 4,
                                              offset=lo).reshape(entry["shape"]).copy()
    return header, arrays


def load(path: str | Path, dtype=np.float32) -> tuple[CAUNet, dict]:
    header, arrays = read(path)
    net = build(NetworkConfig.from_dict(header["config"]), 0, dtype)
    net.load_state_dict(arrays)
    return net, header
