import json
import math

import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from nearball import __version__
from nearball.reporting import MODULES, config_hash, dumps, fmt, meta, read_csv, write_csv, write_json


def test_fmt_scalars():
    assert fmt(True) == "true" and fmt(np.bool_(False)) == "false"
    assert fmt(3) == "3" and fmt(np.int64(4)) == "4"
    assert fmt(math.nan) == "nan" and fmt(-math.inf) == "-inf"
    assert fmt(None) == ""
    assert fmt(0.1) == "0.10000000000000001"


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_fmt_roundtrips_floats(x):
    assert float(fmt(x)) == x


def test_config_hash_order_independent():
    a = config_hash({"K": 6, "levels": (2, 3)})
    assert a == config_hash({"levels": [2, 3], "K": 6})
    assert a != config_hash({"K": 7, "levels": (2, 3)})
    assert len(a) == 16


def test_meta_lists_all_modules():
    m = meta({})
    assert m["version"] == __version__
    assert set(m["modules"]) == set(MODULES) and len(MODULES) == 8


def test_json_is_valid_and_deterministic(tmp_path):
    payload = {"b": [1.0, np.float64(2.5)], "a": {"x": np.array([1, 2]), "y": math.inf}, "s": "t"}
    text = dumps(payload)
    assert json.loads(text) == {"b": [1.0, 2.5], "a": {"x": [1, 2], "y": "inf"}, "s": "t"}
    p1 = write_json(tmp_path / "a.json", payload, {"k": 1})
    p2 = write_json(tmp_path / "b.json", payload, {"k": 1})
    assert p1.read_bytes() == p2.read_bytes()
    assert json.loads(p1.read_text())["meta"]["config_hash"] == config_hash({"k": 1})


def test_csv_header_and_roundtrip(tmp_path):
    p = write_csv(tmp_path / "x.csv", ["k", "v"], [(1, 0.5), (2, math.nan)], {"k": 1})
    lines = p.read_text().splitlines()
    assert lines[0] == f"# nearball {__version__}"
    assert lines[1] == f"# config_hash {config_hash({'k': 1})}"
    assert lines[2].startswith("# modules ball_spectrum=")
    assert read_csv(p) == [["k", "v"], ["1", "0.5"], ["2", "nan"]]
