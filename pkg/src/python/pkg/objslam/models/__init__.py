"""Category shape models and instance retrieval."""

from objslam.models import category, retrieval  # noqa: F401
