import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from .config import settings
from .exceptions import IngestionError
from .models import TraceRecord

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ["start", "phase", "sweep", "index", "utility_estimate", "p_accept", "accepted", "skipped"]
SUMMARY_COLUMNS = ["start", "initial_utility", "mean_utility", "sd_utility", "accepted", "rejected", "skipped", "selected"]
FLOAT_FORMAT = "%.17g"


def design_columns(v: int) -> List[str]:
    return [f"x{j + 1}" for j in range(v)]


class ResultStore:
    """Writes run outputs as tidy CSV files under one directory."""

    def __init__(self, output_dir: Union[str, Path] = "output"):
        self.output_dir = Path(output_dir)

    def _path(self, name: str) -> Path:
        self.output_dir.mkdir(parents=True, exist_ok=True)
        return self.output_dir / name

    def _write(self, df: pd.DataFrame, name: str, header: Optional[Dict[str, str]] = None) -> Path:
        path = self._path(name)
        with open(path, "w", newline="") as fh:
            for key, value in (header or {}).items():
                fh.write(f"# {key}: {value}\n")
            df.to_csv(fh, index=False, float_format=FLOAT_FORMAT)
        logger.info(f"💾 Wrote {path}")
        return path

    def write_design(self, design: np.ndarray, metadata: Dict[str, str], extra: Optional[Dict[str, Sequence[float]]] = None,
                     name: str = "design.csv") -> Path:
        """n x v design matrix with `# key: value` metadata lines above the header."""
        design = np.atleast_2d(design)
        df = pd.DataFrame(design, columns=design_columns(design.shape[1]))
        for column, values in (extra or {}).items():
            df[column] = np.asarray(values, dtype=float)
        return self._write(df, name, metadata)

    def write_trace(self, traces: List[TraceRecord], name: str = "trace.csv") -> Path:
        rows = [t.model_dump() for t in traces]
        df = pd.DataFrame(rows, columns=TRACE_COLUMNS)
        df[["accepted", "skipped"]] = df[["accepted", "skipped"]].astype(int)
        return self._write(df, name)

    def write_summary(self, starts, best_start: int, name: str = "summary.csv") -> Path:
        rows = [
            {
                "start": s.start,
                "initial_utility": s.initial_utility,
                "mean_utility": s.mean_utility,
                "sd_utility": float(np.std(s.evaluations, ddof=1)) if len(s.evaluations) > 1 else 0.0,
                "accepted": s.accepted,
                "rejected": s.rejected,
                "skipped": s.skipped,
                "selected": int(s.start == best_start),
            }
            for s in starts
        ]
        return self._write(pd.DataFrame(rows, columns=SUMMARY_COLUMNS), name)

    def write_evaluations(self, values: Sequence[float], B: int, name: str = "evaluation.csv") -> Path:
        df = pd.DataFrame({"rep": np.arange(1, len(values) + 1), "B": B, "utility_estimate": values})
        return self._write(df, name)

    def write_sweep(self, points: np.ndarray, values: np.ndarray, feasible: np.ndarray,
                    extra: Optional[Dict[str, Sequence[float]]] = None, name: str = "sweep.csv") -> Path:
        points = np.asarray(points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        df = pd.DataFrame(points, columns=design_columns(points.shape[1]))
        for column, col_values in (extra or {}).items():
            df[column] = np.asarray(col_values, dtype=float)
        df["utility_estimate"] = values
        df["feasible"] = np.asarray(feasible, dtype=int)
        return self._write(df, name)

    def write_emulator(self, xi: np.ndarray, values: np.ndarray, fitted: np.ndarray,
                       grid: np.ndarray, predictions: np.ndarray, metadata: Dict[str, str]) -> List[Path]:
        points = pd.DataFrame({"x": xi, "utility_estimate": values, "prediction": fitted})
        curve = pd.DataFrame({"x": grid, "prediction": predictions})
        return [
            self._write(points, "emulator_points.csv", metadata),
            self._write(curve, "emulator_grid.csv", metadata),
        ]


def read_design(path: Union[str, Path], n: Optional[int], v: int) -> np.ndarray:
    """Read an n x v design CSV (metadata lines ignored) and return vec(D).

    With n=None any number of runs is accepted.
    """
    path = Path(path)
    if not path.exists():
        raise IngestionError(f"design file not found: {path}")
    try:
        df = pd.read_csv(path, comment="#")
    except Exception as e:
        raise IngestionError(f"could not parse {path}: {e}") from e
    columns = design_columns(v)
    missing = [c for c in columns if c not in df.columns]
    if missing:
        raise IngestionError(f"{path.name}: missing design columns {missing}")
    design = df[columns].to_numpy(dtype=float)
    if design.shape[0] == 0 or (n is not None and design.shape[0] != n):
        raise IngestionError(f"{path.name}: expected {n} runs, found {design.shape[0]}")
    if not np.all(np.isfinite(design)):
        raise IngestionError(f"{path.name}: non-finite design coordinates")
    return design.flatten(order="F")


result_store = ResultStore(settings.output_dir)
