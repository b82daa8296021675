"""
Tests for the JSON and CSV writers.
"""

import json

import numpy as np
import pytest

from config import VERSION
from models.schemas import RunConfig
from services.report_writer import config_hash, render_json, stack_columns, to_jsonable, write_csv, write_json


@pytest.fixture
def run():
    return RunConfig.parse_obj({
        "order": 2,
        "coefficients": [-1, 0],
        "perturbations": ["-0.5/t^2", "0"],
        "t0": 5.0,
        "t_end": 40.0,
        "step": 0.25,
        "lambda": -1.0,
    })


class TestToJsonable:
    """Test conversion of numerical values."""

    def test_scalars(self):
        """Test complex, non-finite and numpy scalars."""
        assert to_jsonable(1 + 2j) == [1.0, 2.0]
        assert to_jsonable(float("nan")) is None
        assert to_jsonable(np.float64(float("inf"))) is None
        assert to_jsonable(np.int64(3)) == 3
        assert to_jsonable(np.bool_(True)) is True

    def test_containers(self):
        """Test arrays, tuples and dict keys."""
        data = {1: np.array([1.0, 2.0]), "z": (np.complex128(1j),)}
        assert to_jsonable(data) == {"1": [1.0, 2.0], "z": [[0.0, 1.0]]}


class TestJson:
    """Test the JSON reports."""

    def test_config_hash_is_stable(self, run):
        """Test that equal configurations hash equally."""
        same = RunConfig.parse_obj(run.dict(by_alias=True))
        assert config_hash(run) == config_hash(same)
        assert config_hash(run) != config_hash(run.copy(update={"t_end": 41.0}))
        assert len(config_hash(run)) == 64

    def test_render_embeds_version_and_hash(self, run):
        """Test the embedded metadata and sorted keys."""
        text = render_json({"b": 1, "a": 2.5}, run)
        data = json.loads(text)
        assert data["tool_version"] == VERSION
        assert data["config_hash"] == config_hash(run)
        assert text.index('"a"') < text.index('"b"')

    def test_write_json(self, tmp_path):
        """Test that the file is written into a fresh directory."""
        path = write_json(tmp_path / "nested" / "report.json", {"value": 1 - 1j})
        assert json.loads(path.read_text())["value"] == [1.0, -1.0]


class TestCsv:
    """Test the CSV writer."""

    def test_header_and_rows(self, tmp_path):
        """Test the t column, column order and repr formatting."""
        grid = np.array([0.0, 0.5])
        columns = stack_columns("z", np.array([[1 + 2j, 3 - 1j]]))
        columns["envelope"] = [0.1, 0.2]
        path = write_csv(tmp_path / "z.csv", grid, columns)
        lines = path.read_text().splitlines()
        assert lines[0] == "t,z0_re,z0_im,envelope"
        assert lines[1] == "0.0,1.0,2.0,0.1"
        assert lines[2] == "0.5,3.0,-1.0,0.2"

    def test_length_mismatch(self, tmp_path):
        """Test that columns must match the grid."""
        with pytest.raises(ValueError, match="envelope"):
            write_csv(tmp_path / "bad.csv", [0.0, 1.0], {"envelope": [1.0]})


if __name__ == "__main__":
    pytest.main([__file__])
