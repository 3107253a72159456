"""
Unit tests for the artifact writer.
"""
import json

import numpy as np
import pytest

from witten_lab.utils.export import ArtifactWriter, to_jsonable, write_vectors


def test_csv_starts_with_config_hash(tmp_path):
    """Test the hash line, the header and float formatting."""
    writer = ArtifactWriter(tmp_path, "abc123")
    path = writer.write_csv("table.csv", ("q", "value", "flag"), [(0, 0.1, True), (1, np.float64(2.5), False)])
    lines = path.read_text(encoding="utf-8").splitlines()

    # repr keeps every digit of a float
    assert lines[0] == "# config_hash=abc123"
    assert lines[1] == "q,value,flag"
    assert lines[2:] == ["0,0.1,1", "1,2.5,0"]


def test_csv_rejects_ragged_rows(tmp_path):
    """Test that a row of the wrong length is refused."""
    writer = ArtifactWriter(tmp_path, "abc123")

    # Two columns under a three-column header
    with pytest.raises(ValueError):
        writer.write_csv("table.csv", ("a", "b", "c"), [(1, 2)])


def test_json_carries_hash_and_plain_values(tmp_path):
    """Test numpy conversion and the config_hash key."""
    writer = ArtifactWriter(tmp_path, "abc123")
    path = writer.write_json("doc.json", {"values": np.array([1.0, 2.0]), "count": np.int64(3)})
    document = json.loads(path.read_text(encoding="utf-8"))

    # Arrays become lists, numpy scalars become Python numbers
    assert document == {"values": [1.0, 2.0], "count": 3, "config_hash": "abc123"}


def test_non_finite_floats_become_strings():
    """Test JSON-safe spellings of nan and infinities."""
    # JSON has no literal for them
    assert to_jsonable([float("nan"), float("inf"), -np.inf, 1.5]) == ["nan", "inf", "-inf", 1.5]


def test_summary_lists_artifacts(tmp_path):
    """Test the summary timestamp and artifact list."""
    writer = ArtifactWriter(tmp_path, "abc123")
    write_vectors(writer, "vectors.csv", np.eye(2))
    path = writer.write_summary({"betti": [1, 1]}, generated_at="2024-01-01T00:00:00+00:00")
    summary = json.loads(path.read_text(encoding="utf-8"))

    # Only files written before the summary are listed
    assert summary["artifacts"] == ["vectors.csv"]
    assert summary["generated_at"] == "2024-01-01T00:00:00+00:00"
    assert summary["config_hash"] == "abc123"


def test_vector_snapshot_columns_follow_branch_ids(tmp_path):
    """Test the (branch_id, cell_id) layout of an eigenvector snapshot."""
    writer = ArtifactWriter(tmp_path, "abc123")
    path = write_vectors(writer, "snapshot.csv", np.array([[1.0, 0.5], [0.0, -0.5], [2.0, 0.25]]), [3, 7])
    lines = path.read_text(encoding="utf-8").splitlines()

    # One row per cell, one column per branch; ids must match the columns
    assert lines[1] == "cell_id,branch_3,branch_7"
    assert lines[2:] == ["0,1.0,0.5", "1,0.0,-0.5", "2,2.0,0.25"]
    with pytest.raises(ValueError):
        write_vectors(writer, "bad.csv", np.eye(2), [0])
