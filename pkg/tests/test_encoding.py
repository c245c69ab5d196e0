import json

import pytest

from cryptotoll import encoding


def test_canonical_bytes_key_order_independent():
    a = encoding.canonical_bytes({"b": 1, "a": [2, 3], "c": {"y": 0, "x": 1}})
    b = encoding.canonical_bytes({"c": {"x": 1, "y": 0}, "a": [2, 3], "b": 1})
    assert a == b
    # frozen oracle: canonical form is sorted keys, no whitespace
    assert a == b'{"a":[2,3],"b":1,"c":{"x":1,"y":0}}'


def test_canonical_roundtrip():
    record = {"nested": {"k": [1, 2, {"z": "s"}]}, "n": 7, "f": 0.25, "t": True, "none": None}
    assert encoding.decode_record(encoding.canonical_bytes(record)) == record


def test_hex_helpers():
    raw = bytes(range(16))
    assert encoding.hexb(raw) == raw.hex()
    assert encoding.unhexb(raw.hex()) == raw
    with pytest.raises(ValueError):
        encoding.unhexb("zz")


def test_dump_and_load_lines():
    records = [{"i": i, "tag": f"r{i}"} for i in range(5)]
    lines = encoding.dump_lines(records)
    assert len(lines) == 5
    for line in lines:
        json.loads(line)  # every line is standalone JSON
    assert list(encoding.load_lines(lines)) == records
    assert list(encoding.load_lines(lines + ["", "   "])) == records  # blanks skipped


def test_delimited_file_roundtrip(tmp_path):
    path = tmp_path / "records.jsonl"
    records = [{"v": i * 3} for i in range(10)]
    encoding.write_delimited(path, records)
    assert encoding.read_delimited(path) == records
