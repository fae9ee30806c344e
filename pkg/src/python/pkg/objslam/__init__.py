"""Category-level object SLAM from 2D keypoints."""

__version__ = "0.1.0"
