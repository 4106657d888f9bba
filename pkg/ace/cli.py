"""Command-line front end.

    python run.py optimize --config data/configs/poisson_toy.json --out output/poisson
    python run.py evaluate --config CONFIG --design output/poisson/design.csv --reps 20
    python run.py efficiency --config CONFIG --design1 A.csv --design2 B.csv
    python run.py sweep --config CONFIG --grid 10000
    python run.py lhs --config CONFIG --kind maximin
    python run.py emulate --config CONFIG --coordinate 1
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np
from pydantic import ValidationError

from .config import settings
from .core import AceRunner, evaluate_design, multi_start
from .exceptions import AceError, ConfigError, IngestionError
from .models import ProblemConfig
from .sampling import RngStream, lhs_random_design, maximin_lhs
from .statistical_models import DoseResponseModel, StatisticalModel, build_model, to_original_dose
from .storage import ResultStore, read_design, result_store
from .utilities import UtilityEstimator, d_efficiency

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2
MAX_SWEEP_COORDINATES = 2


def _resolve(value: Optional[str], base: Path) -> Optional[str]:
    """Paths inside a config are taken relative to the working directory, then to the config file."""
    if not value:
        return value
    path = Path(value)
    if path.is_absolute() or path.exists():
        return str(path)
    return str(base / path)


def load_problem_config(path: str, args: Optional[argparse.Namespace] = None) -> ProblemConfig:
    """Parse and validate a problem configuration, applying CLI overrides."""
    config_path = Path(path)
    if not config_path.exists():
        raise ConfigError(f"config file not found: {config_path}")
    try:
        raw = json.loads(config_path.read_text())
        problem = ProblemConfig.model_validate(raw)
    except (json.JSONDecodeError, ValidationError) as e:
        raise ConfigError(f"invalid config {config_path}: {e}") from e

    data = problem.model_dump()
    data["model"]["posterior_path"] = _resolve(problem.model.posterior_path, config_path.parent)
    data["initial_design"] = _resolve(problem.initial_design, config_path.parent)
    if args is not None:
        if getattr(args, "seed", None) is not None:
            data["seed"] = args.seed
        if getattr(args, "out", None):
            data["output_dir"] = args.out
        if getattr(args, "B", None) is not None:
            data["ace"]["B"] = args.B
        if getattr(args, "reps", None) is not None:
            data["ace"]["C"] = args.reps
    try:
        return ProblemConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"invalid override: {e}") from e


def _setup(args) -> tuple:
    problem = load_problem_config(args.config, args)
    model = build_model(problem.model)
    utility = UtilityEstimator(problem.utility, model)
    store = ResultStore(problem.output_dir) if problem.output_dir else result_store
    return problem, model, utility, store


def _metadata(problem: ProblemConfig, args) -> dict:
    return {
        "seed": str(problem.seed),
        "config": args.config,
        "utility": problem.utility,
        "model": problem.model.name,
    }


def _dose_column(model: StatisticalModel, design: np.ndarray) -> Optional[dict]:
    if isinstance(model, DoseResponseModel):
        return {"dose": to_original_dose(design[:, 0])}
    return None


def _read_model_design(path: str, model: StatisticalModel, any_runs: bool = False) -> np.ndarray:
    delta = read_design(path, None if any_runs else model.n, model.v)
    if not any_runs and not model.is_feasible(delta):
        raise IngestionError(f"{path}: design violates the constraints of '{model.name}'")
    return delta


def cmd_optimize(args) -> int:
    problem, model, utility, store = _setup(args)
    initial = None
    if problem.initial_design:
        initial = _read_model_design(problem.initial_design, model)
    rng = RngStream(problem.seed)
    result = multi_start(model, utility, problem.ace, rng, threads=args.threads, initial_design=initial)

    design = model.design_matrix(result.design)
    store.write_design(design, _metadata(problem, args), _dose_column(model, design))
    store.write_trace(result.traces)
    store.write_summary(result.starts, result.best_start)
    print(f"U~(design) = {result.utility:.6g} (start {result.best_start}, "
          f"{result.accepted} accepted / {result.rejected} rejected)")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    problem, model, utility, store = _setup(args)
    delta = _read_model_design(args.design, model)
    values = evaluate_design(utility, delta, problem.ace, RngStream(problem.seed), problem.ace.C)
    store.write_evaluations(values, problem.ace.B)
    se = float(np.std(values, ddof=1) / np.sqrt(len(values))) if len(values) > 1 else 0.0
    print(f"U~ = {np.mean(values):.6g} +/- {se:.2g} over {len(values)} evaluations at B={problem.ace.B}")
    return EXIT_OK


def cmd_efficiency(args) -> int:
    problem, model, _, _ = _setup(args)
    if not model.has_fisher:
        raise ConfigError(f"model '{model.name}' has no Fisher information; D-efficiency is undefined")
    delta1 = _read_model_design(args.design1, model, any_runs=True)
    delta2 = _read_model_design(args.design2, model, any_runs=True)
    eff = d_efficiency(delta1, delta2, model, model.p, problem.ace.B, RngStream(problem.seed))
    print(f"{eff:.2f}")
    return EXIT_OK


def _sweep_points(model: StatisticalModel, size: int, regular: bool, rng: RngStream) -> np.ndarray:
    domains = model.domains()
    if regular:
        axes = [np.asarray(d.levels) if d.levels is not None else np.linspace(d.lo, d.hi, size) for d in domains]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.column_stack([m.ravel() for m in mesh])
    columns = [
        rng.gen.choice(np.asarray(d.levels), size=size) if d.levels is not None else rng.gen.uniform(d.lo, d.hi, size)
        for d in domains
    ]
    return np.column_stack(columns)


def cmd_sweep(args) -> int:
    """U~ over a random (or regular) grid; infeasible points are reported with utility 0."""
    problem, model, utility, store = _setup(args)
    if model.q > MAX_SWEEP_COORDINATES:
        raise ConfigError(f"sweep needs at most {MAX_SWEEP_COORDINATES} free coordinates, model has {model.q}")
    rng = RngStream(problem.seed)
    points = _sweep_points(model, args.grid, args.regular, rng)
    mc = problem.ace.comparison_mc() if args.B is not None else problem.ace.emulator_mc()
    values = np.zeros(len(points))
    feasible = np.array([model.is_feasible(p) for p in points])
    for j in np.flatnonzero(feasible):
        values[j] = utility.evaluate(points[j], mc, rng).mean
    extra = {"dose": to_original_dose(points[:, 0])} if isinstance(model, DoseResponseModel) else None
    store.write_sweep(points, values, feasible, extra)
    logger.info(f"✅ Swept {len(points)} designs ({int(feasible.sum())} feasible) at B={mc.B}")
    return EXIT_OK


def cmd_lhs(args) -> int:
    problem, model, _, store = _setup(args)
    rng = RngStream(problem.seed)
    if args.kind == "maximin":
        delta = maximin_lhs(model.n, model.v, model.domains(), rng, iterations=args.iterations)
    else:
        delta = lhs_random_design(model.n, model.v, model.domains(), rng)
    design = model.design_matrix(delta)
    metadata = {**_metadata(problem, args), "generator": f"{args.kind} latin hypercube"}
    store.write_design(design, metadata, _dose_column(model, design))
    if not model.is_feasible(delta):
        logger.warning(f"⚠️  {args.kind} LHS design does not satisfy the constraints of '{model.name}'")
    return EXIT_OK


def cmd_emulate(args) -> int:
    """Dump the coordinate-design, its U~ values and the emulator curve for one coordinate."""
    problem, model, utility, store = _setup(args)
    rng = RngStream(problem.seed)
    delta = _read_model_design(args.design, model) if args.design else model.initial_design(rng)
    i = args.coordinate - 1
    if not 0 <= i < model.q:
        raise ConfigError(f"coordinate must be in 1..{model.q}, got {args.coordinate}")
    xi, values, fit = AceRunner(model, utility, problem.ace).emulate_coordinate(delta, i, rng)
    domain = model.domains()[i]
    grid = np.asarray(domain.levels) if domain.levels is not None else np.linspace(domain.lo, domain.hi, args.grid)
    metadata = {**_metadata(problem, args), "coordinate": str(args.coordinate),
                "rho": f"{fit.rho:.6g}", "eta": f"{fit.eta:.6g}"}
    store.write_emulator(xi, values, fit.predict(xi), grid, fit.predict(grid), metadata)
    return EXIT_OK


COMMANDS = {
    "optimize": cmd_optimize,
    "evaluate": cmd_evaluate,
    "efficiency": cmd_efficiency,
    "sweep": cmd_sweep,
    "lhs": cmd_lhs,
    "emulate": cmd_emulate,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="problem configuration (JSON)")
    common.add_argument("--seed", type=int, help="master seed (overrides config)")
    common.add_argument("--threads", type=int, default=None, help="concurrent starts (default: ACE_THREADS or cores)")
    common.add_argument("--out", help="output directory (overrides config)")
    common.add_argument("--B", type=int, help="comparison-grade Monte Carlo size")
    common.add_argument("--reps", type=int, help="number of final evaluations C")

    parser = argparse.ArgumentParser(prog="ace", description="Approximate coordinate exchange for Bayesian design")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("optimize", parents=[common], help="run multi-start ACE and write design, trace, summary")

    evaluate = sub.add_parser("evaluate", parents=[common], help="C independent utility estimates of a design")
    evaluate.add_argument("--design", required=True)

    efficiency = sub.add_parser("efficiency", parents=[common], help="D-efficiency of design1 relative to design2")
    efficiency.add_argument("--design1", required=True)
    efficiency.add_argument("--design2", required=True)

    sweep = sub.add_parser("sweep", parents=[common], help="utility over a grid of designs (<= 2 coordinates)")
    sweep.add_argument("--grid", type=int, default=10000, help="random grid size, or points per axis with --regular")
    sweep.add_argument("--regular", action="store_true")

    lhs = sub.add_parser("lhs", parents=[common], help="emit a random or maximin Latin hypercube design")
    lhs.add_argument("--kind", choices=["random", "maximin"], default="maximin")
    lhs.add_argument("--iterations", type=int, default=5000)

    emulate = sub.add_parser("emulate", parents=[common], help="dump the emulator of one coordinate")
    emulate.add_argument("--design", help="design CSV (default: a random feasible LHS design)")
    emulate.add_argument("--coordinate", type=int, default=1)
    emulate.add_argument("--grid", type=int, default=200)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=settings.log_level, format="%(levelname)s %(name)s: %(message)s")
    if args.threads is not None and args.threads < 1:
        logger.error("❌ --threads must be positive")
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, IngestionError) as e:
        logger.error(f"❌ {e}")
        return EXIT_CONFIG
    except AceError as e:
        logger.error(f"❌ {args.command} failed: {e}")
        return EXIT_RUNTIME
    except Exception as e:
        logger.error(f"❌ Unexpected error in {args.command}: {e}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
