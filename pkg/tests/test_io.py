import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from spdml.io import (
    DatasetManifest,
    ManifestError,
    atomic_write_text,
    format_matrix,
    parse_matrix,
    read_manifest,
    read_matrix,
    write_manifest,
    write_matrix,
)

finite = st.floats(allow_nan=False, allow_infinity=False)


@given(arrays(float, st.tuples(st.integers(1, 5), st.integers(1, 5)), elements=finite))
@settings(max_examples=100, deadline=None)
def test_text_roundtrip_is_exact(M):
    back = parse_matrix(format_matrix(M))
    np.testing.assert_array_equal(back, M)


def test_header_and_layout():
    text = format_matrix(np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]))
    lines = text.splitlines()
    assert lines[0] == "# 3 2"
    assert len(lines) == 4 and len(lines[1].split()) == 2


@pytest.mark.parametrize(
    "text",
    ["1 2\n", "# 2 2\n1 2\n", "# 1 2\n1 2 3\n", "# a b\n", "# 1 1\nx\n"],
)
def test_malformed(text):
    with pytest.raises(ManifestError):
        parse_matrix(text)


def test_file_roundtrip(tmp_path, rng):
    M = rng.standard_normal((4, 3))
    write_matrix(tmp_path / "sub" / "m.txt", M)
    np.testing.assert_array_equal(read_matrix(tmp_path / "sub" / "m.txt"), M)


def test_atomic_write_leaves_no_temp(tmp_path):
    atomic_write_text(tmp_path / "a.txt", "one")
    atomic_write_text(tmp_path / "a.txt", "two")
    assert (tmp_path / "a.txt").read_text() == "two"
    assert [p.name for p in tmp_path.iterdir()] == ["a.txt"]


def test_manifest_roundtrip(tmp_path, rng):
    for i in range(3):
        write_matrix(tmp_path / f"s{i}.txt", np.eye(3) * (i + 1))
    man = DatasetManifest("spd", 3, [(f"s{i}.txt", i + 1) for i in range(3)], root=tmp_path)
    write_manifest(tmp_path / "manifest.json", man)
    back = read_manifest(tmp_path / "manifest.json")
    assert back.kind == "spd" and back.n == 3 and back.samples == man.samples
    assert list(back.labels) == [1, 2, 3]
    np.testing.assert_array_equal(back.load()[2], 3 * np.eye(3))


def _write_doc(path, doc):
    path.write_text(json.dumps(doc))
    return path


@pytest.mark.parametrize(
    "doc",
    [
        {"kind": "images", "n": 2, "samples": [{"path": "a", "label": 1}]},
        {"kind": "spd", "samples": [{"path": "a", "label": 1}]},
        {"kind": "spd", "n": 2, "samples": [{"path": "a", "label": 0}]},
        {"kind": "spd", "n": 2, "samples": [{"path": "a", "label": "x"}]},
        {"kind": "spd", "n": 2, "samples": []},
    ],
)
def test_manifest_validation(tmp_path, doc):
    with pytest.raises(ManifestError):
        read_manifest(_write_doc(tmp_path / "m.json", doc))


def test_manifest_n_features_alias(tmp_path):
    man = read_manifest(_write_doc(tmp_path / "m.json", {"kind": "features", "n_features": 4,
                                                         "samples": [{"path": "a", "label": 2}]}))
    assert man.n == 4


def test_manifest_missing_file_and_shape(tmp_path):
    man = DatasetManifest("spd", 2, [("missing.txt", 1)], root=tmp_path)
    with pytest.raises(ManifestError):
        man.load()
    write_matrix(tmp_path / "big.txt", np.eye(3))
    with pytest.raises(ManifestError):
        DatasetManifest("spd", 2, [("big.txt", 1)], root=tmp_path).load()
