"""
Unit tests for the command-line driver and its exit codes.
"""
import json

import pytest

from witten_lab.cli import EXIT_CONFIG, EXIT_OK, build_parser, main


def _write(tmp_path, document, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(document), encoding="utf-8")
    return path


def test_spectra_command_on_circle(tmp_path):
    """Test the spectra experiment end to end on a 16-cell circle."""
    config = _write(tmp_path, {"name": "circle", "manifold": {"dimension": 1, "resolution": 16}})
    out = tmp_path / "out"

    # Exit 0 and a summary with the circle's invariants
    assert main(["spectra", "--config", str(config), "--out", str(out)]) == EXIT_OK
    summary = json.loads((out / "summary.json").read_text(encoding="utf-8"))
    assert summary["betti"] == [1, 1]
    assert summary["lattice_volumes"] == pytest.approx([1.0, 1.0])
    assert summary["lattice_covolumes"] == pytest.approx([1.0, 1.0])
    assert summary["command"] == "spectra"
    assert "spectrum_0.csv" in summary["artifacts"]


def test_artifacts_are_reproducible(tmp_path):
    """Test byte-identical tables across two runs with the same seed."""
    config = _write(tmp_path, {"manifold": {"dimension": 1, "resolution": 16}})
    first, second = tmp_path / "a", tmp_path / "b"

    # Only summary.json carries a timestamp
    for out in (first, second):
        assert main(["spectra", "--config", str(config), "--out", str(out), "--seed", "5"]) == EXIT_OK
    for name in ("spectrum_0.csv", "spectrum_1.csv", "complex.json"):
        assert (first / name).read_bytes() == (second / name).read_bytes()


@pytest.mark.parametrize("max_dimension", [1, 2])
def test_oscillator_tables_command(tmp_path, max_dimension):
    """Test the symbol tables and their brute-force cross-check."""
    config = _write(tmp_path, {"oscillator": {"max_dimension": max_dimension, "max_order": 2}})
    out = tmp_path / "tables"

    # Every (n, q, k) agrees with the oracle
    assert main(["oscillator-tables", "--config", str(config), "--out", str(out)]) == EXIT_OK
    summary = json.loads((out / "summary.json").read_text(encoding="utf-8"))
    assert summary["oracle_agrees"] is True
    assert (out / "symbols.csv").read_text(encoding="utf-8").startswith("# config_hash=")


def test_malformed_config_exits_with_config_code(tmp_path):
    """Test exit code 2 for unparsable JSON."""
    path = tmp_path / "broken.json"
    path.write_text("{", encoding="utf-8")

    # Configuration errors never reach the numerics
    assert main(["spectra", "--config", str(path), "--out", str(tmp_path / "out")]) == EXIT_CONFIG


def test_resolution_cap_exits_with_config_code(tmp_path, capsys):
    """Test exit code 2 when t_max is beyond the mesh resolution."""
    config = _write(tmp_path, {"manifold": {"resolution": 8}, "t_grid": {"t_max": 25.0}})

    # The message names the offending field
    assert main(["branches", "--config", str(config), "--out", str(tmp_path / "out")]) == EXIT_CONFIG
    assert "t_grid.t_max" in capsys.readouterr().err


def test_seed_outside_range_is_rejected(tmp_path):
    """Test argparse validation of --seed."""
    config = _write(tmp_path, {})

    # argparse exits with status 2
    with pytest.raises(SystemExit) as info:
        build_parser().parse_args(["spectra", "--config", str(config), "--seed", str(2**64)])
    assert info.value.code == 2


def test_branches_command_writes_requested_snapshots(tmp_path):
    """Test one eigenvector snapshot per degree and requested t, with columns named by branch id."""
    document = {
        "manifold": {"dimension": 1, "resolution": 64, "periods": [6.283185307179586]},
        "function": {"name": "product_cosine", "params": {"frequencies": [1]}},
        "t_grid": {"t_min": 0.0, "t_max": 4.0, "count": 5, "samples": [2.0, 4.0]},
        "solver": {"eigencount": 4},
    }
    config = _write(tmp_path, document)
    out = tmp_path / "out"

    # Both sample times are grid points; every tracked branch gets a column
    assert main(["branches", "--config", str(config), "--out", str(out)]) == EXIT_OK
    for q in (0, 1):
        for t in ("2", "4"):
            lines = (out / f"vectors_{q}_t{t}.csv").read_text(encoding="utf-8").splitlines()
            assert lines[1] == "cell_id,branch_0,branch_1,branch_2,branch_3"
            assert len(lines) == 2 + 64
    assert not (out / "vectors_0_t0.csv").exists()
