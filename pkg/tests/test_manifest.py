"""Tests for tv_wasserstein.manifest module."""

import pytest
from tv_wasserstein.manifest import RunManifest, format_value, read_config_file


class TestFormatValue:
    """Test value rendering."""

    def test_booleans(self):
        """Test booleans render lower-case."""
        assert format_value(True) == "true"
        assert format_value(False) == "false"

    def test_floats_use_shortest_repr(self):
        """Test floats keep every significant digit."""
        assert format_value(0.1) == "0.1"
        assert format_value(1e-9) == "1e-09"
        assert format_value(1 / 3) == "0.3333333333333333"

    def test_none_is_empty(self):
        """Test None renders as an empty value."""
        assert format_value(None) == ""

    def test_quoting(self):
        """Test values with spaces or quotes are double-quoted and escaped."""
        assert format_value("runs/a b.tvwf") == '"runs/a b.tvwf"'
        assert format_value('x"y') == '"x\\"y"'
        assert format_value("plain") == "plain"


class TestRunManifest:
    """Test RunManifest text layout and round trip."""

    def _manifest(self):
        return RunManifest(
            command="noise",
            version="0.1.0",
            parameters={"variance": 0.01, "seed": 3, "normalize": True},
            inputs={"field": "in dir/clean.tvwf"},
            outputs={"preview": "noisy.pgm", "field": "noisy.tvwf"},
            seed=3,
            duration_seconds=1.23456,
        )

    def test_line_order(self):
        """Test header keys, then inputs, outputs and sorted parameters."""
        lines = self._manifest().to_text().splitlines()
        assert lines == [
            "command=noise",
            "version=0.1.0",
            "seed=3",
            "duration_seconds=1.235",
            'input.field="in dir/clean.tvwf"',
            "output.field=noisy.tvwf",
            "output.preview=noisy.pgm",
            "normalize=true",
            "variance=0.01",
        ]

    def test_no_seed_line_without_seed(self):
        """Test the seed line is omitted when no seed was used."""
        text = RunManifest(command="generate", version="0.1.0").to_text()
        assert "seed=" not in text

    def test_round_trip(self, tmp_path):
        """Test a written manifest reads back as a config mapping."""
        path = self._manifest().write(tmp_path / "manifest.txt")
        values = read_config_file(path)
        assert values["command"] == "noise"
        assert values["seed"] == "3"
        assert values["input.field"] == "in dir/clean.tvwf"
        assert float(values["variance"]) == 0.01
        assert values["normalize"] == "true"


class TestReadConfigFile:
    """Test read_config_file."""

    def test_missing_file(self, tmp_path):
        """Test a missing file raises FileNotFoundError."""
        with pytest.raises(FileNotFoundError, match="config file not found"):
            read_config_file(tmp_path / "absent.txt")

    def test_comments_and_bare_keys(self, tmp_path):
        """Test comments are ignored and keys without values are dropped."""
        path = tmp_path / "params.txt"
        path.write_text("# solver\ndt=0.5\nSTRICT\neps=1e-5  # tighter\n")
        assert read_config_file(path) == {"dt": "0.5", "eps": "1e-5"}
