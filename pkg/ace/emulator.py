"""One-dimensional Gaussian process emulator of noisy utility evaluations.

Values are standardized, modelled as a zero-mean GP with squared-exponential
correlation plus nugget, and the posterior predictive mean serves as the
emulator. Hyperparameters are maximum likelihood estimates from Fisher
scoring on (log rho, log eta).
"""

import logging
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .exceptions import ConstantResponseError, EmptyDomainError, InvalidArgumentError
from .models import CoordinateDomain
from .sampling import RngStream, as_domain

logger = logging.getLogger(__name__)

LOG_RHO_BOUNDS = (-10.0, 15.0)
LOG_ETA_BOUNDS = (-10.0, 5.0)
START_LOG_ETAS = (-4.0, -1.0, 1.0)
SEED_GRID = (np.linspace(-5.0, 5.0, 50), np.linspace(-8.0, 2.0, 50))
MAX_SCORING_ITERATIONS = 50
CHOLESKY_BOOST = 1e-10


def standardize(values: np.ndarray) -> Tuple[float, float, np.ndarray]:
    """Sample mean, sample SD (divisor m - 1) and standardized values."""
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        raise InvalidArgumentError("standardizing needs at least two values")
    mu = float(values.mean())
    sigma = float(values.std(ddof=1))
    if not np.isfinite(sigma) or sigma <= 0.0:
        raise ConstantResponseError("utility evaluations are constant over the coordinate-design")
    return mu, sigma, (values - mu) / sigma


def correlation(x1: np.ndarray, x2: np.ndarray, rho: float) -> np.ndarray:
    return np.exp(-rho * (np.asarray(x1)[:, None] - np.asarray(x2)[None, :]) ** 2)


def _factor(A: np.ndarray):
    try:
        return cho_factor(A, lower=True)
    except LinAlgError:
        return cho_factor(A + CHOLESKY_BOOST * np.eye(len(A)), lower=True)


def log_likelihood(xi: np.ndarray, z: np.ndarray, rho: float, eta: float) -> float:
    """Zero-mean GP log-likelihood -1/2 log det A - 1/2 z^T A^{-1} z (constant dropped)."""
    A = correlation(xi, xi, rho) + eta * np.eye(len(xi))
    try:
        c = _factor(A)
    except LinAlgError:
        return -np.inf
    return float(-np.sum(np.log(np.diag(c[0]))) - 0.5 * z @ cho_solve(c, z))


def _grid_log_likelihood(xi: np.ndarray, z: np.ndarray, log_rho: np.ndarray, log_eta: np.ndarray) -> np.ndarray:
    """Log-likelihood over every (log rho, log eta) pair, batched one rho row at a time."""
    d2 = (xi[:, None] - xi[None, :]) ** 2
    eye = np.eye(len(xi))
    nuggets = np.exp(log_eta)[:, None, None] * eye
    out = np.empty((len(log_rho), len(log_eta)))
    for r, lr in enumerate(log_rho):
        L = np.linalg.cholesky(np.exp(-np.exp(lr) * d2) + nuggets)
        w = np.linalg.solve(L, np.broadcast_to(z, (len(log_eta), len(xi)))[..., None])[..., 0]
        out[r] = -np.sum(np.log(np.diagonal(L, axis1=1, axis2=2)), axis=1) - 0.5 * np.sum(w * w, axis=1)
    return out


class HyperparameterFit(NamedTuple):
    rho: float
    eta: float
    log_likelihood: float
    converged: bool


def _clip(phi: np.ndarray) -> np.ndarray:
    return np.array([np.clip(phi[0], *LOG_RHO_BOUNDS), np.clip(phi[1], *LOG_ETA_BOUNDS)])


def _fisher_scoring(xi: np.ndarray, z: np.ndarray, phi: np.ndarray) -> Tuple[np.ndarray, float, bool]:
    d2 = (xi[:, None] - xi[None, :]) ** 2
    eye = np.eye(len(xi))
    phi = _clip(phi)
    current = log_likelihood(xi, z, *np.exp(phi))
    for _ in range(MAX_SCORING_ITERATIONS):
        rho, eta = np.exp(phi)
        K = np.exp(-rho * d2)
        c = _factor(K + eta * eye)
        A_inv = cho_solve(c, eye)
        alpha = A_inv @ z
        derivs = (-rho * d2 * K, eta * eye)
        products = [A_inv @ D for D in derivs]
        grad = np.array([0.5 * alpha @ D @ alpha - 0.5 * np.trace(P) for D, P in zip(derivs, products)])
        info = np.array([[0.5 * np.sum(Pj * Pk.T) for Pk in products] for Pj in products])
        try:
            step = np.linalg.solve(info + 1e-12 * np.eye(2), grad)
        except np.linalg.LinAlgError:
            return phi, current, False

        scale = 1.0
        while scale > 2.0**-20:
            candidate = _clip(phi + scale * step)
            value = log_likelihood(xi, z, *np.exp(candidate))
            if value > current:
                break
            scale *= 0.5
        else:
            return phi, current, True

        moved = np.max(np.abs(candidate - phi))
        gain = value - current
        phi, current = candidate, value
        if gain < 1e-9 or moved < 1e-8:
            return phi, current, True
    return phi, current, False


def maximize_likelihood(xi: np.ndarray, z: np.ndarray) -> HyperparameterFit:
    """Fisher scoring from several starts; the best likelihood wins.

    Starts: the best point of a 50 x 50 log-parameter grid, and the median
    squared-distance heuristic for rho with each of log eta in {-4, -1, 1}.
    The grid point itself is kept if no scoring run ends above it.
    """
    xi = np.asarray(xi, dtype=float)
    z = np.asarray(z, dtype=float)
    if len(np.unique(xi)) < 3:
        raise InvalidArgumentError("emulator fitting needs at least three distinct points")

    grid = _grid_log_likelihood(xi, z, *SEED_GRID)
    gi, gj = np.unravel_index(np.nanargmax(grid), grid.shape)
    grid_phi = np.array([SEED_GRID[0][gi], SEED_GRID[1][gj]])
    rho_g, eta_g = np.exp(grid_phi)
    best = HyperparameterFit(float(rho_g), float(eta_g), log_likelihood(xi, z, rho_g, eta_g), True)

    d2 = (xi[:, None] - xi[None, :]) ** 2
    log_rho0 = -np.log(np.median(d2[d2 > 0]))
    starts = [grid_phi] + [np.array([log_rho0, le]) for le in START_LOG_ETAS]
    for phi0 in starts:
        phi, value, converged = _fisher_scoring(xi, z, phi0)
        if value > best.log_likelihood:
            best = HyperparameterFit(float(np.exp(phi[0])), float(np.exp(phi[1])), value, converged)
    if (best.rho, best.eta) == (rho_g, eta_g):
        logger.debug("Fisher scoring did not improve on the seed grid; keeping the grid point")
    elif not best.converged:
        logger.warning(f"⚠️  Fisher scoring hit {MAX_SCORING_ITERATIONS} iterations; using best iterate")
    return best


def fit_hyperparams(xi: np.ndarray, z: np.ndarray) -> Tuple[float, float]:
    fit = maximize_likelihood(xi, z)
    return fit.rho, fit.eta


@dataclass(frozen=True)
class EmulatorFit:
    xi: np.ndarray
    values: np.ndarray
    mu: float
    sigma: float
    z: np.ndarray
    rho: float
    eta: float
    alpha: np.ndarray
    converged: bool = True

    @property
    def A(self) -> np.ndarray:
        return correlation(self.xi, self.xi, self.rho) + self.eta * np.eye(len(self.xi))

    def predict(self, delta) -> np.ndarray:
        return predict_mean(self, delta)


def fit_emulator(xi: np.ndarray, values: np.ndarray, rho: Optional[float] = None,
                 eta: Optional[float] = None) -> EmulatorFit:
    """Standardize, estimate (rho, eta) unless both are given, and factor A."""
    xi = np.asarray(xi, dtype=float)
    values = np.asarray(values, dtype=float)
    mu, sigma, z = standardize(values)
    converged = True
    if rho is None or eta is None:
        fit = maximize_likelihood(xi, z)
        rho, eta, converged = fit.rho, fit.eta, fit.converged
    A = correlation(xi, xi, rho) + eta * np.eye(len(xi))
    alpha = cho_solve(_factor(A), z)
    logger.debug(f"emulator fit: rho={rho:.4g} eta={eta:.4g} mu={mu:.4g} sigma={sigma:.4g}")
    return EmulatorFit(xi, values, mu, sigma, z, float(rho), float(eta), alpha, converged)


def predict_mean(fit: EmulatorFit, delta) -> np.ndarray:
    """mu + sigma a(delta, xi)^T A^{-1} z, vectorized over delta."""
    scalar = np.ndim(delta) == 0
    pred = fit.mu + fit.sigma * correlation(np.atleast_1d(delta), fit.xi, fit.rho) @ fit.alpha
    return float(pred[0]) if scalar else pred


def maximize_on_grid(fit: EmulatorFit, domain, n_grid: int, rng: RngStream,
                     predicate: Optional[Callable[[np.ndarray], np.ndarray]] = None) -> float:
    """Argmax of the emulator over uniform candidates (or every level of a discrete domain).

    Candidates failing `predicate` are discarded first; ties go to the first
    candidate in draw order.
    """
    if n_grid < 1:
        raise InvalidArgumentError("candidate grid needs at least one point")
    dom: CoordinateDomain = as_domain(domain)
    if dom.levels is not None:
        candidates = np.asarray(dom.levels, dtype=float)
    else:
        candidates = rng.gen.uniform(dom.lo, dom.hi, size=n_grid)
    if predicate is not None:
        candidates = candidates[np.asarray(predicate(candidates), dtype=bool)]
    if candidates.size == 0:
        raise EmptyDomainError("no candidate satisfies the coordinate constraint")
    return float(candidates[int(np.argmax(predict_mean(fit, candidates)))])
