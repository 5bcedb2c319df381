import json
import os

import numpy as np
import pytest

from holotweezers.errors import InvalidParameterError
from holotweezers.holography import BlazeSpec, PhaseMask, SpotPattern, compose_mask
from holotweezers.io import (atomic_write_text, csv_text, path_from_json, path_to_json, pattern_from_json,
                             pattern_to_json, pgm_bytes, read_csv, read_pgm, write_csv, write_json, write_mask,
                             write_pgm)


def test_pgm_roundtrip(tmp_path, rng):
    levels = rng.integers(0, 256, size=(16, 24), dtype=np.uint8)
    write_pgm(tmp_path / "m.pgm", levels)
    raw = (tmp_path / "m.pgm").read_bytes()
    assert raw.startswith(b"P5\n24 16\n255\n")
    assert len(raw) == len(b"P5\n24 16\n255\n") + 16 * 24
    assert np.array_equal(read_pgm(tmp_path / "m.pgm"), levels)


def test_pgm_reader_skips_comments(tmp_path):
    levels = np.arange(12, dtype=np.uint8).reshape(3, 4)
    (tmp_path / "c.pgm").write_bytes(b"P5\n# made elsewhere\n4 3\n255\n" + levels.tobytes())
    assert np.array_equal(read_pgm(tmp_path / "c.pgm"), levels)


def test_pgm_rejects_wrong_dtype():
    with pytest.raises(InvalidParameterError):
        pgm_bytes(np.zeros((4, 4)))


def test_csv_format(tmp_path):
    write_csv(tmp_path / "t.csv", ["a", "b", "flag"], [(1, 0.1, True), (2, 1e-20, False)])
    raw = (tmp_path / "t.csv").read_bytes()
    assert b"\r" not in raw
    assert raw == b"a,b,flag\n1,0.1,1\n2,1e-20,0\n"
    header, rows = read_csv(tmp_path / "t.csv")
    assert header == ["a", "b", "flag"]
    assert float(rows[1][1]) == 1e-20


def test_csv_float_roundtrip_exact(rng):
    vals = rng.normal(size=20)
    text = csv_text(["v"], [(v,) for v in vals])
    back = np.array([float(x) for x in text.splitlines()[1:]])
    assert np.array_equal(back, vals)


def test_csv_rejects_ragged_rows():
    with pytest.raises(InvalidParameterError):
        csv_text(["a", "b"], [(1,)])


def test_atomic_write_leaves_no_temp_files(tmp_path):
    target = tmp_path / "sub" / "x.txt"
    atomic_write_text(target, "first")
    atomic_write_text(target, "second")
    assert target.read_text() == "second"
    assert os.listdir(target.parent) == ["x.txt"]


def test_json_is_sorted_and_numpy_aware(tmp_path):
    write_json(tmp_path / "r.json", {"b": np.float64(1.5), "a": np.arange(3)})
    text = (tmp_path / "r.json").read_text(encoding="utf-8")
    assert text.index('"a"') < text.index('"b"')
    assert json.loads(text) == {"a": [0, 1, 2], "b": 1.5}


def test_mask_sidecar(tmp_path):
    q = compose_mask(PhaseMask(np.full((8, 8), np.pi), 16.6e-6))
    pgm, side = write_mask(tmp_path / "masks" / "frame_000.pgm", q, BlazeSpec(8.0, 0.0), 3, "abc", frame=0)
    meta = json.loads(side.read_text())
    assert side.name == "frame_000.json"
    assert meta["shape"] == [8, 8] and meta["levels"] == 256
    assert meta["blaze"] == {"period_px": 8.0, "orientation_rad": 0.0}
    assert meta["seed"] == 3 and meta["config_hash"] == "abc" and meta["frame"] == 0
    assert np.all(read_pgm(pgm) == 128)


def test_pattern_and_path_json_in_micrometres():
    pat = SpotPattern(np.array([[1e-6, -2e-6, 1.0], [3.5e-6, 0.0, 2.0]]))
    obj = pattern_to_json(pat)
    assert obj["spots"][0] == {"x": 1.0, "y": -2.0, "weight": 1.0}
    back = pattern_from_json(json.loads(json.dumps(obj)))
    assert np.allclose(back.spots, pat.spots, rtol=1e-15, atol=0)
    assert np.allclose(pattern_from_json([[1, 2]]).spots, [[1e-6, 2e-6, 1.0]])
    path = np.array([[0.0, 0.0], [1e-6, 0.5e-6]])
    assert np.allclose(path_from_json(path_to_json(path)), path, rtol=1e-15, atol=0)
