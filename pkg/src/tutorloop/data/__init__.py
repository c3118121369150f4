"""Bundled fixtures: the demo course, labeled attempts, population configs."""

from pathlib import Path

_ROOT = Path(__file__).parent


def data_path(*parts: str) -> Path:
    """Absolute path to a bundled data file or directory."""
    return _ROOT.joinpath(*parts)
