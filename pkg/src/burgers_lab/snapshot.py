"""Bit-exact state persistence: JSON header + little-endian float64 payload.

Layout: 8-byte magic, 8-byte little-endian header length, the UTF-8 JSON
header, then the raw coefficient block.  The header records the format
version, array metadata, provenance (config hash, seed lineage), and a
SHA-256 of the payload, so truncation or corruption is always detected and
the header remains inspectable with any JSON tool (skip the first 16
bytes).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from hashlib import sha256
from pathlib import Path

import numpy as np

from burgers_lab.forcing import NoisePath
from burgers_lab.spectral import SpectralState

__all__ = ["Snapshot", "SnapshotError", "save_snapshot", "load_snapshot",
           "FORMAT_VERSION", "MAGIC"]

MAGIC = b"BURGLAB\x00"
FORMAT_VERSION = 1


class SnapshotError(RuntimeError):
    """Version mismatch, bad magic, or checksum failure."""


@dataclass(frozen=True)
class Snapshot:
    """A persisted state plus its provenance header."""

    kind: str                     # "state" or "noise_path"
    payload: np.ndarray
    time: float
    config_hash: str
    seed_lineage: tuple[int, ...]
    extra: dict

    def to_state(self) -> SpectralState:
        if self.kind != "state":
            raise SnapshotError(f"snapshot holds {self.kind!r}, not a state")
        return SpectralState(self.payload)

    def to_noise_path(self) -> NoisePath:
        if self.kind != "noise_path":
            raise SnapshotError(f"snapshot holds {self.kind!r}, not a noise path")
        return NoisePath(dt=float(self.extra["dt"]),
                         increments=self.payload,
                         seed=int(self.seed_lineage[0]))


def save_snapshot(obj, path, *, time: float = 0.0, config_hash: str = "",
                  seed_lineage=(), extra: dict | None = None) -> Path:
    """Write a SpectralState or NoisePath; round trip is bit exact."""
    path = Path(path)
    extra = dict(extra or {})
    if isinstance(obj, SpectralState):
        kind, payload = "state", obj.coeffs
    elif isinstance(obj, NoisePath):
        kind, payload = "noise_path", obj.increments
        extra["dt"] = obj.dt
        seed_lineage = tuple(seed_lineage) or (obj.seed,)
    else:
        raise TypeError(f"cannot snapshot {type(obj).__name__}")

    payload_le = np.ascontiguousarray(payload, dtype="<f8")
    blob = payload_le.tobytes()
    header = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "shape": list(payload_le.shape),
        "n_modes": int(payload_le.shape[-1]),
        "time": float(time),
        "config_hash": config_hash,
        "seed_lineage": [int(s) for s in seed_lineage],
        "payload_sha256": sha256(blob).hexdigest(),
        "extra": extra,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(len(header_bytes).to_bytes(8, "little"))
        f.write(header_bytes)
        f.write(blob)
    return path


def load_snapshot(path) -> Snapshot:
    raw = Path(path).read_bytes()
    if len(raw) < 16 or raw[:8] != MAGIC:
        raise SnapshotError(f"{path}: not a snapshot file")
    hlen = int.from_bytes(raw[8:16], "little")
    if len(raw) < 16 + hlen:
        raise SnapshotError(f"{path}: truncated header")
    try:
        header = json.loads(raw[16:16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise SnapshotError(f"{path}: corrupt header: {err}") from None
    if header.get("format_version") != FORMAT_VERSION:
        raise SnapshotError(
            f"{path}: format version {header.get('format_version')} "
            f"(this build reads {FORMAT_VERSION})")
    blob = raw[16 + hlen:]
    if sha256(blob).hexdigest() != header["payload_sha256"]:
        raise SnapshotError(f"{path}: payload checksum mismatch (truncated or corrupt)")
    payload = np.frombuffer(blob, dtype="<f8").reshape(header["shape"]).astype(float)
    return Snapshot(kind=header["kind"], payload=payload, time=header["time"],
                    config_hash=header["config_hash"],
                    seed_lineage=tuple(header["seed_lineage"]),
                    extra=header.get("extra", {}))
