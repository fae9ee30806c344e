"""Object pose and shape from 2D keypoints."""

from objslam.fit.alternating import (  # noqa: F401
    MultiFrameEstimate,
    fit_alternating,
    fit_multiframe,
    fit_observation,
    initial_hypotheses,
    initialize_estimate,
)
from objslam.fit.observation import FitConfig, KeypointObservation, ObjectEstimate  # noqa: F401
from objslam.fit.scale import recover_scale  # noqa: F401
from objslam.fit.solver import fit_pose, fit_shape, reprojection_cost  # noqa: F401
