"""Conspiracy-theory tweet pipeline: regex partitioning, actively-learned
random-forest misinformation classification, lexicon sentiment, and dynamic
topic modeling."""

from importlib import resources
from pathlib import Path

__version__ = "0.1.0"


def data_path(name: str) -> Path:
    """Path to a bundled data file (stopwords, default theory config, lexicon fixtures)."""
    return Path(resources.files(__name__) / "data" / name)
