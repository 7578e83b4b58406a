import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from jumplab.io import format_cell, read_csv, to_builtin, write_csv, write_json


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_float_cells_round_trip(x):
    assert float(format_cell(np.float64(x))) == x


def test_to_builtin_special_values():
    out = to_builtin({"a": np.array([1.5, np.nan, np.inf]), "b": (np.int64(3), np.bool_(True))})
    assert out == {"a": [1.5, "nan", "inf"], "b": [3, True]}


def test_csv_and_json_are_deterministic(tmp_path):
    rows = [(1, 0.1, True, [1.0, 2.0]), {"k": 2, "v": math.pi}]
    a = write_csv(tmp_path / "a.csv", ["k", "v", "ok", "vec"], rows).read_bytes()
    b = write_csv(tmp_path / "b.csv", ["k", "v", "ok", "vec"], rows).read_bytes()
    assert a == b and b"\r" not in a
    parsed = read_csv(tmp_path / "a.csv")
    assert parsed[0] == {"k": "1", "v": "0.1", "ok": "true", "vec": "1.0 2.0"}
    assert float(parsed[1]["v"]) == math.pi
    write_json(tmp_path / "x.json", {"z": 1, "a": np.float64(0.25)})
    text = (tmp_path / "x.json").read_text()
    assert text.index('"a"') < text.index('"z"')
    assert json.loads(text) == {"a": 0.25, "z": 1}


def test_json_writes_nonfinite_as_strings(tmp_path):
    write_json(tmp_path / "y.json", {"v": float("nan")})
    assert json.loads((tmp_path / "y.json").read_text()) == {"v": "nan"}


@pytest.mark.parametrize("v,text", [(None, ""), ("s", "s"), (np.int32(4), "4"),
                                    (([0.5], 0.25), "0.5 0.25"), (np.eye(2), "1.0 0.0 0.0 1.0")])
def test_format_cell_other(v, text):
    assert format_cell(v) == text
