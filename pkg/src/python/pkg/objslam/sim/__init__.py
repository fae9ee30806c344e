"""Deterministic synthetic scenarios with exact ground truth."""

from objslam.sim.io import (  # noqa: F401
    read_measurements,
    read_scenario,
    write_measurements,
    write_scenario,
)
from objslam.sim.scenario import (  # noqa: F401
    MeasurementSet,
    Scenario,
    ScenarioConfig,
    SimObject,
    generate,
    perturb_odometry,
    render_observations,
    sample_odometry_noise,
    scenario_presets,
)
