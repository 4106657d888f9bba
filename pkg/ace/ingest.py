import logging
from pathlib import Path
from typing import Optional, Union

import numpy as np
import pandas as pd

from .exceptions import IngestionError, UndefinedLD50Error
from .statistical_models import REFERENCE_MODEL_WEIGHTS, DoseResponsePosterior, is_second_order, ld50

logger = logging.getLogger(__name__)

POSTERIOR_COLUMNS = ["u", "b0", "b1", "b2", "weight"]
DOSE_DATA_COLUMNS = ["dose", "n", "deaths"]
WEIGHT_TOLERANCE = 1e-6


def _read_csv(path: Union[str, Path], required_columns) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise IngestionError(f"file not found: {path}")
    try:
        df = pd.read_csv(path, comment="#")
    except Exception as e:
        raise IngestionError(f"could not parse {path}: {e}") from e
    df.columns = df.columns.str.strip()
    missing = [c for c in required_columns if c not in df.columns]
    if missing:
        raise IngestionError(f"{path.name}: missing columns {missing}")
    return df


def load_posterior_samples(path: Union[str, Path], rate: float = 60.0) -> DoseResponsePosterior:
    """Read a weighted posterior sample of (u, beta_u) for the six dose-response models.

    Rows with b0 and b1 set are posterior draws (b2 empty for 1st-order
    models). Rows with only u and weight set give pi(u | y). When no weight
    rows are present the reference model probabilities are used,
    renormalized over the models that have draws.
    """
    df = _read_csv(path, POSTERIOR_COLUMNS)
    try:
        df["u"] = df["u"].astype(int)
    except (ValueError, TypeError) as e:
        raise IngestionError(f"{Path(path).name}: model index column 'u' must be integer: {e}") from e
    if not df["u"].between(1, 6).all():
        raise IngestionError(f"{Path(path).name}: model index outside 1..6")

    has_b0, has_b1, has_weight = df["b0"].notna(), df["b1"].notna(), df["weight"].notna()
    half = df.index[has_b0 != has_b1]
    if len(half):
        raise IngestionError(f"row {half[0]}: b0 and b1 must both be set or both be empty")
    mixed = df.index[has_b0 & has_weight]
    if len(mixed):
        raise IngestionError(f"row {mixed[0]}: a row holds either a posterior draw or a model weight, not both")

    weight_rows = df[~has_b0 & has_weight]
    sample_rows = df[has_b0]
    if sample_rows.empty:
        raise IngestionError(f"{Path(path).name}: no posterior draws")

    model_index, betas = [], []
    rejected = 0
    for i, row in sample_rows.iterrows():
        u = int(row["u"])
        second = bool(is_second_order(u))
        if second and pd.isna(row["b2"]):
            raise IngestionError(f"row {i}: 2nd-order model {u} needs b2")
        if not second and pd.notna(row["b2"]):
            raise IngestionError(f"row {i}: 1st-order model {u} must leave b2 empty")
        beta = [float(row["b0"]), float(row["b1"]), float(row["b2"]) if second else 0.0]
        if not np.all(np.isfinite(beta)):
            raise IngestionError(f"row {i}: non-finite regression coefficients")
        try:
            ld50(u, beta if second else beta[:2])
        except UndefinedLD50Error:
            rejected += 1
            continue
        model_index.append(u)
        betas.append(beta)

    if rejected:
        logger.warning(f"⚠️  Discarded {rejected} posterior draws with undefined LD50")
    if not model_index:
        raise IngestionError(f"{Path(path).name}: every posterior draw has undefined LD50")

    present = sorted(set(model_index))
    weights = _model_weights(weight_rows, present, Path(path).name)
    posterior = DoseResponsePosterior(
        model_index=np.array(model_index), beta=np.array(betas), weights=weights, rate=rate, rejected=rejected
    )
    logger.info(
        f"Loaded {posterior.size} posterior draws over models {present} "
        f"(LD50 variance {posterior.ld50_variance():.3e})"
    )
    return posterior


def _model_weights(weight_rows: pd.DataFrame, present, source: str) -> np.ndarray:
    weights = np.zeros(6)
    if weight_rows.empty:
        for u in present:
            weights[u - 1] = REFERENCE_MODEL_WEIGHTS[u - 1]
        if len(present) < 6:
            logger.warning(f"⚠️  {source}: renormalizing reference model weights over models {present}")
        return weights / weights.sum()

    if weight_rows["u"].duplicated().any():
        raise IngestionError(f"{source}: more than one weight row for a model")
    for _, row in weight_rows.iterrows():
        weights[int(row["u"]) - 1] = float(row["weight"])
    if np.any(weights < 0):
        raise IngestionError(f"{source}: negative model weight")
    if abs(weights.sum() - 1.0) > WEIGHT_TOLERANCE:
        raise IngestionError(f"{source}: model weights sum to {weights.sum():.8f}, not 1")
    unsampled = [u for u in range(1, 7) if weights[u - 1] > 0 and u not in present]
    if unsampled:
        raise IngestionError(f"{source}: models {unsampled} have weight but no posterior draws")
    return weights


def load_dose_data(path: Union[str, Path]) -> pd.DataFrame:
    """Read binomial dose-mortality data (`dose,n,deaths`)."""
    df = _read_csv(path, DOSE_DATA_COLUMNS)
    if (df["n"] <= 0).any() or (df["deaths"] < 0).any() or (df["deaths"] > df["n"]).any():
        raise IngestionError(f"{Path(path).name}: counts must satisfy 0 <= deaths <= n, n > 0")
    return df


def dose_range(df: Optional[pd.DataFrame]) -> tuple:
    """Original-scale dose interval spanned by a dose dataset."""
    if df is None or df.empty:
        from .statistical_models import DOSE_RANGE

        return DOSE_RANGE
    return float(df["dose"].min()), float(df["dose"].max())
