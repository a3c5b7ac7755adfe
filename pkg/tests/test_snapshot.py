import json

import numpy as np
import pytest

from burgers_lab.forcing import sample_noise
from burgers_lab.snapshot import (
    FORMAT_VERSION,
    MAGIC,
    SnapshotError,
    load_snapshot,
    save_snapshot,
)
from burgers_lab.spectral import SpectralState


def test_state_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    state = SpectralState(rng.standard_normal(96))
    p = tmp_path / "state.snap"
    save_snapshot(state, p, time=2.5, config_hash="cafe01", seed_lineage=(3, 1))
    snap = load_snapshot(p)
    assert snap.kind == "state"
    assert np.array_equal(snap.to_state().coeffs, state.coeffs)
    assert snap.time == 2.5
    assert snap.config_hash == "cafe01"
    assert snap.seed_lineage == (3, 1)


def test_noise_path_round_trip(tmp_path):
    path = sample_noise(77, 1e-3, 500)
    p = tmp_path / "noise.snap"
    save_snapshot(path, p)
    back = load_snapshot(p).to_noise_path()
    assert back.dt == path.dt
    assert back.seed == path.seed
    assert np.array_equal(back.increments, path.increments)


def test_truncated_file_detected(tmp_path):
    state = SpectralState(np.arange(1.0, 33.0))
    p = tmp_path / "state.snap"
    save_snapshot(state, p)
    raw = p.read_bytes()
    p.write_bytes(raw[:-16])
    with pytest.raises(SnapshotError, match="checksum|truncated"):
        load_snapshot(p)


def test_header_is_standalone_json(tmp_path):
    state = SpectralState(np.ones(8))
    p = tmp_path / "state.snap"
    save_snapshot(state, p, config_hash="beef")
    raw = p.read_bytes()
    assert raw[:8] == MAGIC
    hlen = int.from_bytes(raw[8:16], "little")
    header = json.loads(raw[16:16 + hlen])
    assert header["format_version"] == FORMAT_VERSION
    assert header["config_hash"] == "beef"
    assert header["n_modes"] == 8


def test_version_mismatch_hard_error(tmp_path):
    state = SpectralState(np.ones(4))
    p = tmp_path / "state.snap"
    save_snapshot(state, p)
    raw = bytearray(p.read_bytes())
    hlen = int.from_bytes(raw[8:16], "little")
    header = json.loads(raw[16:16 + hlen])
    header["format_version"] = FORMAT_VERSION + 1
    new_header = json.dumps(header, sort_keys=True).encode()
    out = raw[:8] + len(new_header).to_bytes(8, "little") + new_header + raw[16 + hlen:]
    p.write_bytes(out)
    with pytest.raises(SnapshotError, match="version"):
        load_snapshot(p)


def test_not_a_snapshot(tmp_path):
    p = tmp_path / "junk.snap"
    p.write_bytes(b"hello world, this is not a snapshot")
    with pytest.raises(SnapshotError, match="not a snapshot"):
        load_snapshot(p)
