"""objslam command line.

    objslam build-model   PCA category model and instance index from a keypoint collection
    objslam gen-scenario  synthetic scenario (full and measurement-only files)
    objslam run           fit, associate and optimize a scenario; report, estimate, plot
    objslam retrieve      nearest training instances for every estimated object
    objslam eval          score an earlier run directory against a scenario's ground truth

Exit codes: 0 success, 2 bad input file, 3 optimizer failure, 4 configuration error.
"""

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence, Tuple

import pandas as pd

from objslam.assoc.tracker import write_association_log
from objslam.config import RunConfig, config_to_dict, load_config
from objslam.data import CHAIR_COLLECTION, CHAIR_INDEX, CHAIR_MODEL
from objslam.data.chairs import CHAIR_KEYPOINTS, generate_chairs, read_keypoint_collection
from objslam.errors import (
    ConfigError,
    DimensionMismatch,
    DisconnectedGraph,
    Diverged,
    EmptyIndex,
    FileFormatError,
    GaugeUnfixed,
    MissingCorrespondence,
)
from objslam.evaluation.pipeline import MODES, run_pipeline
from objslam.evaluation.plots import plot_top_down
from objslam.evaluation.report import (
    build_report,
    evaluate_estimate,
    ids_from_association_log,
    read_estimate,
    write_estimate,
    write_report,
)
from objslam.models.category import (
    DEFAULT_EXPLAINED_VARIANCE,
    CategoryModel,
    build_category_model,
    explained_variance_ratio,
    load_category_model,
    save_category_model,
)
from objslam.models.retrieval import build_index, knn_retrieve, read_index, write_index
from objslam.sim.io import read_measurements, read_scenario, write_measurements, write_scenario
from objslam.sim.scenario import MeasurementSet, Scenario, generate, scenario_presets

__all__ = ["EXIT_BAD_INPUT", "EXIT_CONFIG", "EXIT_OPTIMIZER", "build_parser", "main"]

EXIT_BAD_INPUT = 2
EXIT_OPTIMIZER = 3
EXIT_CONFIG = 4

# Artifact names inside a run directory
REPORT_FILE = "report.txt"
ESTIMATE_FILE = "estimate.csv"
ASSOCIATION_FILE = "associations.csv"
PLOT_FILE = "top_down.svg"
LOG_FILE = "run.log"

logger = logging.getLogger(__name__)


# Subcommands ------------------------------------------------------------------


def _build_model(args: argparse.Namespace) -> None:
    if args.collection is not None:
        instances, names = read_keypoint_collection(args.collection)
    else:
        instances, names = generate_chairs(args.count, args.seed), list(CHAIR_KEYPOINTS)
    m = build_category_model(instances, args.basis_size, args.explained_variance, names)
    logger.info(
        f"Category model: K={m.num_keypoints}, B={m.basis_size}, "
        f"explained variance {explained_variance_ratio(m):.4f}"
    )
    args.model.parent.mkdir(parents=True, exist_ok=True)
    save_category_model(m, args.model)
    args.index.parent.mkdir(parents=True, exist_ok=True)
    write_index(build_index(m, instances), args.index)


def _gen_scenario(args: argparse.Namespace) -> None:
    run_config = load_config(args.config).with_overrides(seed=args.seed)
    if args.preset is not None:
        cfg = scenario_presets(run_config.sim.seed)[args.preset]
        name = args.preset
    else:
        cfg = run_config.sim
        name = f"{cfg.trajectory}_seed{cfg.seed}"
    scenario = generate(cfg, load_category_model(args.model))
    args.out.mkdir(parents=True, exist_ok=True)
    write_scenario(scenario, args.out / f"{name}.toml")
    write_measurements(scenario, args.out / f"{name}.measurements.toml")


def _load_run_input(
    args: argparse.Namespace, run_config: RunConfig, m: CategoryModel
) -> Tuple[Optional[Scenario], MeasurementSet, str]:
    """(scenario or None, measurements, name); presets are generated on the fly."""
    presets = scenario_presets(run_config.sim.seed)
    if args.scenario in presets:
        scenario = generate(presets[args.scenario], m)
        return scenario, scenario.measurements(), args.scenario
    path = Path(args.scenario)
    try:
        scenario = read_scenario(path)
    except FileFormatError:
        logger.warning(f"{path} has no ground truth; the run will not be scored")
        return None, read_measurements(path), path.stem
    return scenario, scenario.measurements(), path.stem


def _run(args: argparse.Namespace) -> None:
    run_config = load_config(args.config).with_overrides(
        mode=args.mode, olc=None if args.olc is None else args.olc == "on", seed=args.seed
    )
    m = load_category_model(args.model)
    scenario, ms, name = _load_run_input(args, run_config, m)
    if scenario is not None:
        run_config = replace(run_config, sim=scenario.config)

    result = run_pipeline(ms, m, run_config.pipeline)
    write_estimate(result.trajectory, result.objects, result.shapes, args.out / ESTIMATE_FILE)
    write_association_log(result.records, args.out / ASSOCIATION_FILE)

    if scenario is None:
        plot_top_down(
            args.out / PLOT_FILE,
            result.trajectory,
            result.object_positions(),
            dead_reckoning=result.dead_reckoning,
            title=name,
        )
        return

    report = build_report(scenario, result, name)
    write_report(report, args.out / REPORT_FILE, config_to_dict(run_config))
    plot_top_down(
        args.out / PLOT_FILE,
        result.trajectory,
        result.object_positions(),
        ground_truth=scenario.robot_poses,
        true_objects={obj.label: obj.pose.translation for obj in scenario.objects},
        dead_reckoning=result.dead_reckoning,
        title=f"{name} ({run_config.pipeline.mode})",
    )
    loc = report.localization
    if loc is not None:
        logger.info(f"Object error best {loc.best:.4f} worst {loc.worst:.4f} avg {loc.avg:.4f}")
    if report.drift is not None:
        logger.info(f"Endpoint drift x {report.drift[0]:.4f} z {report.drift[1]:.4f}")
    for stage, seconds in sorted(report.timing.items()):
        logger.info(f"Timing {stage}: {seconds:.3f} s")


def _retrieve(args: argparse.Namespace) -> None:
    estimate = read_estimate(args.estimate)
    index = read_index(args.index)
    rows = []
    for gid, shape in sorted(estimate.shapes.items()):
        for rank, (instance_id, distance) in enumerate(
            knn_retrieve(index, shape, args.k, args.whitened), start=1
        ):
            rows.append((gid, rank, instance_id, distance))
    df = pd.DataFrame(rows, columns=["global_id", "rank", "instance_id", "distance"])
    args.out.mkdir(parents=True, exist_ok=True)
    df.to_csv(args.out / "retrieval.csv", index=False, float_format="%.17g")
    logger.info(f"Retrieved top-{args.k} instances for {len(estimate.shapes)} objects")


def _eval(args: argparse.Namespace) -> None:
    scenario = read_scenario(args.scenario)
    estimate = read_estimate(args.run / ESTIMATE_FILE)
    ids = ids_from_association_log(args.run / ASSOCIATION_FILE, scenario)
    report = evaluate_estimate(
        scenario,
        estimate.trajectory,
        estimate.object_positions(),
        ids,
        args.mode,
        args.olc == "on",
        Path(args.scenario).stem,
    )
    out = args.out if args.out is not None else args.run
    out.mkdir(parents=True, exist_ok=True)
    write_report(report, out / "eval_report.txt")


# Parser -----------------------------------------------------------------------


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging.")
    parser.add_argument("-q", "--quiet", action="store_true", help="Warnings and errors only.")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="objslam", description="Category-level object SLAM")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-model", help="Build the category model and instance index.")
    p.add_argument(
        "--collection",
        type=Path,
        default=None,
        help=f"Keypoint collection CSV (e.g. {CHAIR_COLLECTION}); synthetic chairs if omitted.",
    )
    p.add_argument("--count", type=int, default=250, help="Synthetic chairs to generate.")
    p.add_argument("--seed", type=int, default=0, help="Seed for synthetic chairs.")
    p.add_argument("--basis-size", type=int, default=None, help="Fixed basis size B.")
    p.add_argument(
        "--explained-variance",
        type=float,
        default=DEFAULT_EXPLAINED_VARIANCE,
        help="Variance floor used to choose B when --basis-size is not given.",
    )
    p.add_argument("--model", type=Path, default=CHAIR_MODEL, help="Model file to write.")
    p.add_argument("--index", type=Path, default=CHAIR_INDEX, help="Index file to write.")
    p.set_defaults(func=_build_model)

    p = sub.add_parser("gen-scenario", help="Generate a synthetic scenario.")
    p.add_argument("--preset", choices=sorted(scenario_presets()), default=None)
    p.add_argument("--config", type=Path, default=None, help="TOML file; [sim] is used.")
    p.add_argument("--seed", type=int, default=None, help="Overrides the configured seed.")
    p.add_argument("--model", type=Path, default=CHAIR_MODEL)
    p.add_argument("--out", type=Path, required=True, help="Output directory.")
    p.set_defaults(func=_gen_scenario)

    p = sub.add_parser("run", help="Run the pipeline on a scenario.")
    p.add_argument(
        "--scenario", required=True, help="Scenario file, or a preset name generated on the fly."
    )
    p.add_argument("--model", type=Path, default=CHAIR_MODEL)
    p.add_argument("--mode", choices=MODES, default=None)
    p.add_argument("--olc", choices=("on", "off"), default=None)
    p.add_argument("--seed", type=int, default=None, help="Seed for preset scenarios.")
    p.add_argument("--config", type=Path, default=None)
    p.add_argument("--out", type=Path, required=True, help="Run directory.")
    p.set_defaults(func=_run)

    p = sub.add_parser("retrieve", help="Nearest training instances per estimated object.")
    p.add_argument("--estimate", type=Path, required=True, help=f"A run's {ESTIMATE_FILE}.")
    p.add_argument("--index", type=Path, default=CHAIR_INDEX)
    p.add_argument("-k", type=int, default=5)
    p.add_argument("--whitened", action="store_true", help="Scale by 1/sqrt(eigenvalue).")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=_retrieve)

    p = sub.add_parser("eval", help="Score a run directory against ground truth.")
    p.add_argument("--scenario", type=Path, required=True, help="Full scenario file.")
    p.add_argument("--run", type=Path, required=True, help="Directory written by `run`.")
    p.add_argument("--mode", choices=MODES, default="batch", help="Mode the run used.")
    p.add_argument("--olc", choices=("on", "off"), default="on")
    p.add_argument("--out", type=Path, default=None, help="Defaults to the run directory.")
    p.set_defaults(func=_eval)

    for p in sub.choices.values():
        _add_common(p)
    return parser


def _configure_logging(args: argparse.Namespace) -> Optional[logging.Handler]:
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s %(name)s %(levelname)s %(message)s")
    logging.getLogger().setLevel(level)
    if args.command != "run":
        return None
    args.out.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(args.out / LOG_FILE, mode="w")
    handler.setFormatter(logging.Formatter("%(asctime)s %(name)s %(levelname)s %(message)s"))
    logging.getLogger().addHandler(handler)
    return handler


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    handler = _configure_logging(args)
    try:
        args.func(args)
    except ConfigError as exc:
        logger.error(f"Configuration error: {exc}")
        return EXIT_CONFIG
    except (Diverged, GaugeUnfixed, DisconnectedGraph) as exc:
        logger.error(f"Optimization failed: {exc}")
        return EXIT_OPTIMIZER
    except (FileFormatError, MissingCorrespondence, DimensionMismatch, EmptyIndex, OSError) as exc:
        logger.error(f"Bad input: {exc}")
        return EXIT_BAD_INPUT
    finally:
        if handler is not None:
            logging.getLogger().removeHandler(handler)
            handler.close()
    return 0


if __name__ == "__main__":
    sys.exit(main())
