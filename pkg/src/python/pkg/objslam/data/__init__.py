"""Data management: default file locations and the synthetic chair collection."""

import pathlib

from objslam.data import chairs  # noqa: F401

DATA_DIR = pathlib.Path(__file__).resolve().parents[5] / "data"

# Default locations written by init_project.py
CHAIR_COLLECTION = DATA_DIR / "raw" / "chairs.csv"
CHAIR_MODEL = DATA_DIR / "models" / "chair.toml"
CHAIR_INDEX = DATA_DIR / "models" / "chair_index.csv"
SCENARIO_DIR = DATA_DIR / "scenarios"
