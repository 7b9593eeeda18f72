import os
import sys
import csv
import json
import math
import logging
import argparse
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
from dotenv import load_dotenv
from pydantic import ValidationError

from errors import (AuditFailure, ConstantsInvalid, CornerFlowError, GateViolation, ParseError,
                    PressureOutOfRange, TVTooLarge)
from gas_core import GasParams, GasState
from glimm import GlimmSnapshot
from riemann import background_solution, sample_solver_speeds, solve_riemann
from scenario import ScenarioConfig, gate_report, run_scenario, run_sweep, sweep_configs
from tracking import FrontField, InteractionRecord, Slab, check_consistency, slabs_at
from validate import bump_grid, weak_residual
from wave_curves import WaveFamily

logger = logging.getLogger(__name__)

# Define output directories
OUTPUT_DIR = "output"
LOG_FILENAME = "corner_flow.log"

EXIT_OK = 0
EXIT_GATE = 2
EXIT_AUDIT = 3
EXIT_SOLVER = 4

SNAPSHOT_COLUMNS = ["y_low", "y_high", "u", "v", "p", "rho"]
TRACE_COLUMNS = ["x", "L1", "L2", "L3", "L4", "Q0", "Q1", "Q2", "Q4", "S", "F1", "F"]
TOP_SLAB_WIDTHS = 3.0
SVG_HASH_SALT = "corner-flow"

FAMILY_COLORS = {
    WaveFamily.F1: "tab:blue",
    WaveFamily.F2_VORTEX: "tab:green",
    WaveFamily.F2_ENTROPY: "tab:olive",
    WaveFamily.F3: "tab:red",
    WaveFamily.NON_PHYSICAL: "tab:gray",
}


def output_dir() -> str:
    return os.getenv("CORNER_FLOW_OUTPUT_DIR", OUTPUT_DIR)


def setup_logging(directory: str, level: int = logging.INFO) -> None:
    os.makedirs(directory, exist_ok=True)
    logging.basicConfig(
        level=level,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.FileHandler(os.path.join(directory, LOG_FILENAME)),
            logging.StreamHandler()
        ],
        force=True,
    )


def _number(value: float) -> str:
    # repr is the shortest string that reads back to the same double
    return repr(float(value))


# --- configuration ---------------------------------------------------------

def parse_config(payload: dict, source: str = "<dict>") -> ScenarioConfig:
    try:
        return ScenarioConfig.model_validate(payload)
    except ValidationError as e:
        error_msg = f"Invalid scenario in {source}: {e}"
        logger.error(error_msg)
        raise ParseError(error_msg) from e


def load_config(path: str, check_gates: bool = True) -> ScenarioConfig:
    """
    Load a scenario from a .json or .toml file and check the derived gates.

    Args:
        path (str): Scenario file
        check_gates (bool): Compute p_*, delta* and raise on violation

    Returns:
        ScenarioConfig: The validated scenario
    """
    logger.info(f"Loading scenario from {path}")
    try:
        if path.endswith(".toml"):
            with open(path, "rb") as f:
                payload = tomllib.load(f)
        else:
            with open(path, "r", encoding="utf-8") as f:
                payload = json.load(f)
    except (OSError, json.JSONDecodeError, tomllib.TOMLDecodeError) as e:
        error_msg = f"Could not read {path}: {e}"
        logger.error(error_msg)
        raise ParseError(error_msg) from e

    config = parse_config(payload, path)
    if check_gates:
        gate_report(config)
    return config


# --- exports ---------------------------------------------------------------

def _top_bound(slabs: Sequence[Slab]) -> float:
    finite = [s.y_high - s.y_low for s in slabs if math.isfinite(s.y_low) and math.isfinite(s.y_high)]
    width = float(np.median(finite)) if finite else 1.0
    return slabs[-1].y_low + TOP_SLAB_WIDTHS * max(width, 1e-12)


def export_snapshot(field: FrontField, x: float, path: str) -> str:
    """
    Write U^delta(x, .) as one CSV row per constant slab, static gas first.

    The static slab keeps -inf as its lower bound; the unbounded top slab is cut
    at the topmost front plus three slab widths.
    """
    slabs = slabs_at(field, x)
    y_max = _top_bound(slabs)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(SNAPSHOT_COLUMNS)
        for slab in slabs:
            y_high = slab.y_high if math.isfinite(slab.y_high) else y_max
            U = slab.state
            writer.writerow([_number(slab.y_low), _number(y_high),
                             _number(U.u), _number(U.v), _number(U.p), _number(U.rho)])
    logger.info(f"Snapshot at x={x:g} with {len(slabs)} slabs written to {path}")
    return path


def read_snapshot(path: str) -> List[Slab]:
    slabs = []
    with open(path, "r", newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != SNAPSHOT_COLUMNS:
            error_msg = f"Unexpected snapshot header in {path}: {reader.fieldnames}"
            logger.error(error_msg)
            raise ParseError(error_msg)
        for row in reader:
            state = GasState(float(row["u"]), float(row["v"]), float(row["p"]), float(row["rho"]))
            slabs.append(Slab(float(row["y_low"]), float(row["y_high"]), state))
    return slabs


def export_events(log: Iterable[InteractionRecord], path: str) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    count = 0
    with open(path, "w", encoding="utf-8") as f:
        for record in log:
            f.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")
            count += 1
    logger.info(f"{count} interaction events written to {path}")
    return path


def export_glimm_trace(trace: Iterable[GlimmSnapshot], path: str) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(TRACE_COLUMNS)
        for snapshot in trace:
            terms = snapshot.terms()
            writer.writerow([_number(snapshot.x)] + [_number(terms[name]) for name in TRACE_COLUMNS[1:]])
    logger.info(f"Glimm trace written to {path}")
    return path


def _boundary_polyline(field: FrontField, X: float) -> np.ndarray:
    xs = [start for start, _, _ in field.boundary.segments if start < X] + [X]
    return np.array([[x, field.boundary.y_at(x)] for x in xs])


def _strong_band(field: FrontField, xs: np.ndarray):
    low, high = [], []
    for x in xs:
        ys = [f.y_at(x) for f in field.history if f.is_strong and f.alive_at(x)]
        low.append(min(ys) if ys else np.nan)
        high.append(max(ys) if ys else np.nan)
    return np.array(low), np.array(high)


def export_diagram(field: FrontField, path: str, x_max: Optional[float] = None) -> str:
    """
    Static SVG of the front history on [0, x_max]: fronts colored by family, the
    strong fan shaded, the free boundary bold and non-physical fronts dashed.
    """
    X = field.x if x_max is None else x_max
    X = X if X > 0.0 else 1.0
    plt.rcParams["svg.hashsalt"] = SVG_HASH_SALT
    fig, ax = plt.subplots(figsize=(8, 6))
    try:
        xs = np.linspace(0.0, X, 101)
        low, high = _strong_band(field, xs)
        ax.fill_between(xs, low, high, where=~np.isnan(low), color="tab:red", alpha=0.12, linewidth=0)
        for front in field.history:
            x_end = min(front.x_end, X)
            if x_end <= front.x0:
                continue
            ax.plot([front.x0, x_end], [front.y_at(front.x0), front.y_at(x_end)],
                    color=FAMILY_COLORS[front.family],
                    linestyle="--" if not front.is_physical else "-",
                    linewidth=0.6 if front.is_strong else 0.9)
        boundary = _boundary_polyline(field, X)
        ax.plot(boundary[:, 0], boundary[:, 1], color="black", linewidth=2.2)
        ax.set_xlim(0.0, X)
        ax.set_xlabel("x")
        ax.set_ylabel("y")
        ax.set_title(f"Fronts up to x = {X:g}")
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        fig.savefig(path, format="svg", metadata={"Date": None})
    finally:
        plt.close(fig)
    logger.info(f"Wave diagram written to {path}")
    return path


def export_run(result, directory: str) -> Dict[str, str]:
    """Snapshot, events, Glimm trace, diagram and summary of one run."""
    name = result.config.name
    field = result.field
    paths = {
        "snapshot": export_snapshot(field, field.x, os.path.join(directory, f"{name}_snapshot.csv")),
        "events": export_events(field.event_log, os.path.join(directory, f"{name}_events.jsonl")),
        "trace": export_glimm_trace(field.glimm_trace, os.path.join(directory, f"{name}_glimm.csv")),
        "diagram": export_diagram(field, os.path.join(directory, f"{name}_fronts.svg")),
    }
    summary_path = os.path.join(directory, f"{name}_summary.json")
    with open(summary_path, "w", encoding="utf-8") as f:
        json.dump(result.summary(), f, indent=2, sort_keys=True)
    paths["summary"] = summary_path
    return paths


# --- commands --------------------------------------------------------------

def _state(text: str) -> GasState:
    values = [float(v) for v in text.split(",")]
    if len(values) != 4:
        raise argparse.ArgumentTypeError(f"state needs u,v,p,rho, got '{text}'")
    return GasState(*values)


def _floats(text: str) -> List[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text: str) -> List[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _config_with_flags(args) -> ScenarioConfig:
    payload = load_config(args.config, check_gates=False).model_dump()
    for name in ("delta", "x_max", "seed", "audit", "max_interactions"):
        value = getattr(args, name, None)
        if value is not None:
            payload[name] = value
    if getattr(args, "epsilon", None) is not None:
        payload["perturbation"]["epsilon"] = args.epsilon
    if getattr(args, "allow_gate_override", False):
        payload["allow_gate_override"] = True
    return parse_config(payload, args.config)


def cmd_run(args) -> int:
    config = _config_with_flags(args)
    directory = args.output or output_dir()
    result = run_scenario(config)
    paths = export_run(result, directory)
    if args.report:
        from report import write_report
        paths.update(write_report(result, directory, paths["diagram"], pdf=args.pdf))
    print(json.dumps(result.summary(), indent=2, sort_keys=True))
    for kind, path in paths.items():
        print(f"- {kind}: {path}")
    return EXIT_OK


def cmd_background(args) -> int:
    params = GasParams(gamma=args.gamma)
    bg = background_solution(args.U_plus, args.p_bar, params)
    speeds = sample_solver_speeds(bg, args.delta0)
    summary = {
        "U_minus": bg.U_minus.as_array().tolist(),
        "p_star": bg.p_star,
        "k_b": bg.k_b,
        "k1": bg.k1,
        "k2": bg.k2,
        "S_bar": bg.S_bar,
        "theta_minus": bg.theta_minus,
        "tv_constant": bg.tv_constant,
        "lambda_hat": speeds.lambda_hat,
        "lambda1_star": speeds.lambda1_star,
        "lambda3_star": speeds.lambda3_star,
    }
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def cmd_riemann(args) -> int:
    params = GasParams(gamma=args.gamma)
    solution = solve_riemann(args.U_L, args.U_R, params)
    summary = {
        "strengths": solution.strengths.as_array().tolist(),
        "mid_states": [U.as_array().tolist() for U in solution.mid_states],
        "fronts": [{"family": f.family.value, "alpha": f.alpha, "alpha22": f.alpha22, "speed": f.speed}
                   for f in solution.fronts],
        "residual": solution.residual,
        "iterations": solution.iterations,
    }
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def cmd_validate(args) -> int:
    config = _config_with_flags(args)
    directory = args.output or output_dir()
    result = run_scenario(config)
    field = result.field
    weak = weak_residual(field, field.x, bump_grid(field, field.x))
    report = {
        "summary": result.summary(),
        "consistency": check_consistency(field),
        "weak_residual": {"max": weak.max_residual, "mean": weak.mean_residual,
                          "per_scale": {str(k): v for k, v in weak.per_scale.items()},
                          "functions": weak.functions},
        "invariant_region": {"d_I": result.margins.d_I, "d_B": result.margins.d_B, "d_A": result.margins.d_A,
                             "subsonic": result.margins.subsonic, "inside": result.margins.inside},
    }
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, f"{config.name}_validation.json")
    with open(path, "w", encoding="utf-8") as f:
        json.dump(report, f, indent=2, sort_keys=True)
    print(json.dumps(report, indent=2, sort_keys=True))
    print(f"Validation report written to {path}")
    return EXIT_OK if result.entropy.all_ok else EXIT_AUDIT


def cmd_sweep(args) -> int:
    base = _config_with_flags(args)
    configs = sweep_configs(base, args.epsilons or [base.perturbation.epsilon],
                            args.deltas or [base.delta], args.seeds or [base.seed])
    directory = args.output or output_dir()
    os.makedirs(directory, exist_ok=True)
    results = run_sweep(configs, workers=args.workers)
    path = os.path.join(directory, f"{base.name}_sweep.csv")
    columns = ["name", "epsilon", "delta", "seed", "status", "interactions", "max_fronts",
               "np_total", "functional_non_increasing", "tv_deviation", "region_worst"]
    failures = 0
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(columns)
        for config, result in zip(configs, results):
            head = [config.name, config.perturbation.epsilon, config.delta, config.seed]
            if isinstance(result, CornerFlowError):
                failures += 1
                writer.writerow(head + [type(result).__name__] + [""] * (len(columns) - 5))
                continue
            s = result.summary()
            writer.writerow(head + ["ok", s["interactions"], s["max_fronts"], _number(s["np_total"]),
                                    s["functional_non_increasing"], _number(s["tv_deviation"]),
                                    _number(s["region_worst"])])
    print(f"{len(configs) - failures}/{len(configs)} runs finished; summary written to {path}")
    return EXIT_OK if failures == 0 else EXIT_SOLVER


def _add_scenario_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("config", help="Scenario file (.json or .toml)")
    parser.add_argument("--delta", type=float, help="Override the approximation parameter")
    parser.add_argument("--epsilon", type=float, help="Override the perturbation size")
    parser.add_argument("--x-max", dest="x_max", type=float, help="Override the end of the run")
    parser.add_argument("--seed", type=int, help="Override the random seed")
    parser.add_argument("--audit", choices=["off", "warn", "strict"], help="Glimm audit strictness")
    parser.add_argument("--max-interactions", dest="max_interactions", type=int, help="Interaction safety cap")
    parser.add_argument("--allow-gate-override", action="store_true", help="Warn instead of failing on gates")
    parser.add_argument("-o", "--output", help="Output directory (default: $CORNER_FLOW_OUTPUT_DIR or output)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Front tracking for supersonic flow past a convex corner")
    parser.add_argument("-v", "--verbose", action="store_true", help="Log per-interaction detail")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Run one scenario and export its artifacts")
    _add_scenario_flags(run)
    run.add_argument("--report", action="store_true", help="Write an HTML run report")
    run.add_argument("--pdf", action="store_true", help="Also render the report to PDF")
    run.set_defaults(handler=cmd_run)

    background = sub.add_parser("background", help="Unperturbed corner solution")
    background.add_argument("--U-plus", dest="U_plus", type=_state, required=True, help="u,v,p,rho")
    background.add_argument("--p-bar", dest="p_bar", type=float, required=True)
    background.add_argument("--gamma", type=float, default=1.4)
    background.add_argument("--delta0", type=float, default=0.05)
    background.set_defaults(handler=cmd_background)

    riemann = sub.add_parser("riemann", help="One-shot Riemann solve")
    riemann.add_argument("--U-L", dest="U_L", type=_state, required=True, help="u,v,p,rho below")
    riemann.add_argument("--U-R", dest="U_R", type=_state, required=True, help="u,v,p,rho above")
    riemann.add_argument("--gamma", type=float, default=1.4)
    riemann.set_defaults(handler=cmd_riemann)

    validate = sub.add_parser("validate", help="Run a scenario and report entropy, weak-form and region checks")
    _add_scenario_flags(validate)
    validate.set_defaults(handler=cmd_validate)

    sweep = sub.add_parser("sweep", help="Run a grid of scenarios on worker threads")
    _add_scenario_flags(sweep)
    sweep.add_argument("--epsilons", type=_floats, help="Comma-separated perturbation sizes")
    sweep.add_argument("--deltas", type=_floats, help="Comma-separated delta values")
    sweep.add_argument("--seeds", type=_ints, help="Comma-separated seeds")
    sweep.add_argument("--workers", type=int, default=4)
    sweep.set_defaults(handler=cmd_sweep)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    # Load environment variables from .env file
    load_dotenv()
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(getattr(args, "output", None) or output_dir(),
                  logging.DEBUG if args.verbose else logging.INFO)

    try:
        return args.handler(args)
    except (GateViolation, PressureOutOfRange, TVTooLarge, ConstantsInvalid, ParseError) as e:
        logger.error(f"Gate check failed: {str(e)}")
        print(f"Error: {str(e)}")
        return EXIT_GATE
    except AuditFailure as e:
        logger.error(f"Audit failed: {str(e)}")
        print(f"Error: {str(e)}")
        return EXIT_AUDIT
    except CornerFlowError as e:
        logger.error(f"Solver failure: {str(e)}")
        print(f"Error: {str(e)}")
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
