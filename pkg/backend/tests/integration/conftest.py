"""
Integration test fixtures.

The suite drives the command-line entry point end to end on shrunken configs.
Each test writes into its own tmp_path, so runs never share an output directory.
"""

from pathlib import Path

import pytest

CONFIG_DIR = Path(__file__).resolve().parents[2] / "configs"


@pytest.fixture
def config_dir() -> Path:
    return CONFIG_DIR


@pytest.fixture
def write_config(tmp_path):
    """Write TOML text to tmp_path/<name> and return the path."""

    def _write(name: str, text: str) -> Path:
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path

    return _write


@pytest.fixture
def out_dir(tmp_path) -> Path:
    return tmp_path / "results"
