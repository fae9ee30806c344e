#!/usr/bin/env python3

import logging

from objslam.data import CHAIR_COLLECTION, CHAIR_INDEX, CHAIR_MODEL, SCENARIO_DIR
from objslam.data.chairs import CHAIR_KEYPOINTS, generate_chairs, write_keypoint_collection
from objslam.models.category import build_category_model, save_category_model
from objslam.models.retrieval import build_index, write_index
from objslam.sim.io import write_measurements, write_scenario
from objslam.sim.scenario import generate, scenario_presets

SEED = 0
NUM_CHAIRS = 250

logger = logging.getLogger(__name__)


def build_data():
    """Synthesize the chair collection, category model, index and preset scenes under data/"""
    for path in (CHAIR_COLLECTION, CHAIR_MODEL, CHAIR_INDEX):
        path.parent.mkdir(parents=True, exist_ok=True)
    SCENARIO_DIR.mkdir(parents=True, exist_ok=True)

    chairs = generate_chairs(NUM_CHAIRS, SEED)
    write_keypoint_collection(chairs, CHAIR_COLLECTION)

    model = build_category_model(chairs, keypoint_names=CHAIR_KEYPOINTS)
    save_category_model(model, CHAIR_MODEL)
    write_index(build_index(model, chairs), CHAIR_INDEX)

    for name, cfg in scenario_presets(SEED).items():
        scenario = generate(cfg, model)
        write_scenario(scenario, SCENARIO_DIR / f"{name}.toml")
        write_measurements(scenario, SCENARIO_DIR / f"{name}.measurements.toml")
        logger.info(f"Wrote scenario {name} ({scenario.num_frames} frames)")


if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s %(message)s")
    build_data()
