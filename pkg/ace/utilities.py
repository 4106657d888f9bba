"""Monte Carlo approximations of expected utility.

Every estimator returns a `UtilitySampleBatch`: the per-draw utility
realizations u(delta, y_l, psi_l) and their mean. All utilities are oriented
so that larger is better.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, Optional

import numpy as np
from scipy.special import logsumexp

from .config import settings
from .exceptions import DegenerateWeightError, InvalidArgumentError, SingularInformationError
from .models import NestedMcConfig
from .sampling import RngStream
from .statistical_models import DoseResponseModel, DoseResponsePosterior, StatisticalModel

logger = logging.getLogger(__name__)

# Upper bound on elements materialized per inner-loop block.
_BLOCK_ELEMENTS = 2_000_000


@dataclass(frozen=True)
class UtilitySampleBatch:
    values: np.ndarray
    rejected: int = 0

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))

    @property
    def B(self) -> int:
        return len(self.values)

    @property
    def variance(self) -> float:
        return float(np.var(self.values, ddof=1)) if self.B > 1 else 0.0

    @property
    def standard_error(self) -> float:
        return math.sqrt(self.variance / self.B)


def _block_rows(inner: int, width: int) -> int:
    return max(1, _BLOCK_ELEMENTS // max(inner * max(width, 1), 1))


def _normalized_log_weights(log_lik: np.ndarray) -> np.ndarray:
    """Self-normalized log importance weights along the last axis."""
    total = logsumexp(log_lik, axis=-1, keepdims=True)
    if not np.all(np.isfinite(total)):
        raise DegenerateWeightError("every importance weight underflowed to zero")
    return log_lik - total


def sig_nested(model: StatisticalModel, delta: np.ndarray, cfg: NestedMcConfig, rng: RngStream) -> UtilitySampleBatch:
    """Nested Monte Carlo Shannon information gain for theta.

    Each outer draw gets fresh inner prior samples: one over gamma with theta
    held at theta_l for pi(y | theta, delta), one over (theta, gamma) for
    pi(y | delta).
    """
    delta = np.asarray(delta, dtype=float)
    B, K = cfg.B, cfg.inner_B
    psi = model.sample_prior(B, rng)
    y = model.simulate(psi, delta, rng)
    values = np.empty(B)
    step = _block_rows(K, max(y.shape[1], model.P))
    log_k = math.log(K)

    for start in range(0, B, step):
        stop = min(start + step, B)
        L = stop - start
        y_blk = y[start:stop, None, :]
        inner = model.sample_prior(L * K, rng).reshape(L, K, model.P)
        log_marginal = logsumexp(model.log_likelihood(y_blk, inner, delta), axis=1) - log_k

        if model.P > model.p:
            nuisance = model.sample_nuisance(L * K, rng).reshape(L, K, model.P - model.p)
            theta = np.broadcast_to(psi[start:stop, None, : model.p], (L, K, model.p))
            conditional = np.concatenate([theta, nuisance], axis=-1)
            log_conditional = logsumexp(model.log_likelihood(y_blk, conditional, delta), axis=1) - log_k
        else:
            log_conditional = model.log_likelihood(y[start:stop], psi[start:stop], delta)

        if not (np.all(np.isfinite(log_marginal)) and np.all(np.isfinite(log_conditional))):
            raise DegenerateWeightError("inner likelihood average underflowed to zero")
        values[start:stop] = log_conditional - log_marginal

    return UtilitySampleBatch(values)


def nsel_nested(model: StatisticalModel, delta: np.ndarray, cfg: NestedMcConfig, rng: RngStream) -> UtilitySampleBatch:
    """Nested Monte Carlo negative squared error loss for theta.

    The posterior mean is the self-normalized importance-sampling estimate
    with fresh prior draws as proposal and likelihood weights.
    """
    delta = np.asarray(delta, dtype=float)
    B, K, p = cfg.B, cfg.inner_B, model.p
    psi = model.sample_prior(B, rng)
    y = model.simulate(psi, delta, rng)
    values = np.empty(B)
    step = _block_rows(K, max(y.shape[1], model.P))

    for start in range(0, B, step):
        stop = min(start + step, B)
        L = stop - start
        inner = model.sample_prior(L * K, rng).reshape(L, K, model.P)
        log_w = _normalized_log_weights(model.log_likelihood(y[start:stop, None, :], inner, delta))
        posterior_mean = np.einsum("lk,lkp->lp", np.exp(log_w), inner[..., :p])
        values[start:stop] = -np.sum((psi[start:stop, :p] - posterior_mean) ** 2, axis=1)

    return UtilitySampleBatch(values)


def _information_criterion(model: StatisticalModel, psi: np.ndarray, delta: np.ndarray, rng: RngStream,
                           criterion: str) -> np.ndarray:
    """Per-draw log det I or -tr I^{-1}; NaN where I is singular."""
    info = model.fisher_information(psi, delta, rng)
    sign, logdet = np.linalg.slogdet(info)
    ok = (sign > 0) & np.isfinite(logdet)
    out = np.full(len(info), np.nan)
    if criterion == "d":
        out[ok] = logdet[ok]
    elif np.any(ok):
        out[ok] = -np.trace(np.linalg.inv(info[ok]), axis1=1, axis2=2)
    return out


def _pseudo_bayes(model: StatisticalModel, delta: np.ndarray, B: int, rng: RngStream, criterion: str,
                  prior_sample: Optional[np.ndarray] = None) -> UtilitySampleBatch:
    if not model.has_fisher:
        raise InvalidArgumentError(f"model '{model.name}' has no Fisher information")
    delta = np.asarray(delta, dtype=float)
    psi = model.sample_prior(B, rng) if prior_sample is None else np.array(prior_sample, dtype=float)
    values = _information_criterion(model, psi, delta, rng, criterion)
    rejected = 0
    for _ in range(settings.max_rejections):
        bad = np.isnan(values)
        if not bad.any():
            break
        rejected += int(bad.sum())
        psi[bad] = model.sample_prior(int(bad.sum()), rng)
        values[bad] = _information_criterion(model, psi[bad], delta, rng, criterion)
    if np.isnan(values).any():
        raise SingularInformationError(
            f"Fisher information singular after {settings.max_rejections} resamples at design {delta}"
        )
    if rejected:
        logger.debug(f"pseudo-Bayesian {criterion.upper()}: resampled {rejected} singular draws")
    return UtilitySampleBatch(values, rejected=rejected)


def pseudo_bayes_d(model: StatisticalModel, delta: np.ndarray, B: int, rng: RngStream,
                   prior_sample: Optional[np.ndarray] = None) -> UtilitySampleBatch:
    """Per-draw log det I(theta_l; delta, gamma_l)."""
    return _pseudo_bayes(model, delta, B, rng, "d", prior_sample)


def pseudo_bayes_a(model: StatisticalModel, delta: np.ndarray, B: int, rng: RngStream,
                   prior_sample: Optional[np.ndarray] = None) -> UtilitySampleBatch:
    """Per-draw -tr I(theta_l; delta, gamma_l)^{-1}."""
    return _pseudo_bayes(model, delta, B, rng, "a", prior_sample)


def d_efficiency(delta1: np.ndarray, delta2: np.ndarray, model: StatisticalModel, p: int, B: int,
                 rng: RngStream) -> float:
    """D-efficiency (percent) of delta1 relative to delta2 on a shared prior sample.

    Both designs see the same parameter draws and the same auxiliary random
    numbers, so identical designs give exactly 100.
    """
    psi = model.sample_prior(B, rng)
    aux = rng.child()
    first = _information_criterion(model, psi, np.asarray(delta1, float), aux.replay(), "d")
    second = _information_criterion(model, psi, np.asarray(delta2, float), aux.replay(), "d")
    for _ in range(settings.max_rejections):
        bad = np.isnan(first) | np.isnan(second)
        if not bad.any():
            break
        psi[bad] = model.sample_prior(int(bad.sum()), rng)
        aux = rng.child()
        first[bad] = _information_criterion(model, psi[bad], np.asarray(delta1, float), aux.replay(), "d")
        second[bad] = _information_criterion(model, psi[bad], np.asarray(delta2, float), aux.replay(), "d")
    if np.isnan(first).any() or np.isnan(second).any():
        raise SingularInformationError("Fisher information singular on the shared prior sample")
    return float(100.0 * math.exp((first.mean() - second.mean()) / p))


def nsel_ld50_model_averaged(posterior: DoseResponsePosterior, delta: np.ndarray, cfg: NestedMcConfig,
                             rng: RngStream) -> UtilitySampleBatch:
    """Model-averaged negative squared error loss for LD50.

    Outer draws (u_l, beta_l) come from the weighted posterior and simulate
    follow-up counts y_0l; one weighted posterior sample of size inner_B,
    shared by all outer draws, is the importance proposal for
    E(LD50 | y_0l). An empty design carries no data, so every value is minus
    the posterior LD50 variance.
    """
    delta = np.asarray(delta, dtype=float).ravel()
    B, K = cfg.B, cfg.inner_B
    if delta.size == 0:
        return UtilitySampleBatch(np.full(B, -posterior.ld50_variance()))

    model = DoseResponseModel(posterior, n=delta.size)
    outer = model.sample_prior(B, rng)
    y0 = model.simulate(outer, delta, rng)
    inner = model.sample_prior(K, rng)
    inner_ld50 = posterior.ld50[inner[:, 0].astype(int)]
    outer_ld50 = posterior.ld50[outer[:, 0].astype(int)]

    values = np.empty(B)
    step = _block_rows(K, delta.size)
    for start in range(0, B, step):
        stop = min(start + step, B)
        log_w = _normalized_log_weights(model.log_likelihood(y0[start:stop, None, :], inner[None, :, :], delta))
        expected = np.exp(log_w) @ inner_ld50
        values[start:stop] = -((outer_ld50[start:stop] - expected) ** 2)
    return UtilitySampleBatch(values)


EstimatorFn = Callable[[np.ndarray, NestedMcConfig, RngStream], UtilitySampleBatch]


class UtilityEstimator:
    """A named utility bound to a model: evaluate(delta, mc, rng) -> batch."""

    def __init__(self, name: str, model: StatisticalModel):
        self.name = name
        self.model = model
        self._estimate = self._resolve(name, model)

    @staticmethod
    def _resolve(name: str, model: StatisticalModel) -> EstimatorFn:
        if name == "sig":
            return lambda delta, mc, rng: sig_nested(model, delta, mc, rng)
        if name == "nsel":
            return lambda delta, mc, rng: nsel_nested(model, delta, mc, rng)
        if name in ("pseudo_d", "pseudo_a"):
            if not model.has_fisher:
                raise InvalidArgumentError(f"utility '{name}' needs a model with Fisher information")
            fn = pseudo_bayes_d if name == "pseudo_d" else pseudo_bayes_a
            return lambda delta, mc, rng: fn(model, delta, mc.B, rng)
        if name == "nsel_ld50":
            if not isinstance(model, DoseResponseModel):
                raise InvalidArgumentError("utility 'nsel_ld50' needs the dose-response posterior model")
            return lambda delta, mc, rng: nsel_ld50_model_averaged(model.posterior, delta, mc, rng)
        raise InvalidArgumentError(f"unknown utility '{name}'")

    def evaluate(self, delta: np.ndarray, mc: NestedMcConfig, rng: RngStream) -> UtilitySampleBatch:
        return self._estimate(np.asarray(delta, dtype=float), mc, rng)

    def __repr__(self) -> str:
        return f"UtilityEstimator({self.name!r}, {self.model.describe()})"


UTILITY_NAMES: Dict[str, str] = {
    "sig": "Shannon information gain",
    "nsel": "negative squared error loss",
    "pseudo_d": "pseudo-Bayesian D-optimality",
    "pseudo_a": "pseudo-Bayesian A-optimality",
    "nsel_ld50": "model-averaged NSEL for LD50",
}
