"""Statistical model plug-ins and their closed-form building blocks.

Every model exposes prior sampling of psi = (theta, gamma), vectorized response
simulation, a broadcasting log-likelihood and, where defined, the Fisher
information for theta. Parameter arrays always carry the interest parameters
theta in their first `p` columns.
"""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import betaincinv, expit, gammaln, log_expit, xlogy
from scipy.stats import norm

from .config import settings
from .exceptions import DomainError, InvalidArgumentError, SingularityError, UndefinedLD50Error
from .models import CoordinateDomain, Marginal, ModelConfig, NestedUniform, ParameterPrior, PriorSpec
from .sampling import RngStream, lhs_random_design, sample_prior

logger = logging.getLogger(__name__)

COMPARTMENTAL_SIGMA2 = 0.1
SAMPLING_HORIZON = 24.0
MIN_SAMPLING_GAP = 0.25
LOGISTIC_BETA_RANGES = ((-3.0, 3.0), (4.0, 10.0), (5.0, 11.0), (-6.0, 0.0), (-2.5, 3.5))
LOGISTIC_HALF_WIDTH_BOUNDS = (3.0, 3.0, 3.0, 1.0, 1.0)
DOSE_RANGE = (1.6907, 1.8839)
CLOGLOG_LD50_OFFSET = math.log(-math.log(0.5))


# ---------------------------------------------------------------------------
# Poisson toy
# ---------------------------------------------------------------------------


def poisson_toy_utility(beta: float, x: float) -> float:
    """Log Fisher information of y ~ Poisson(exp(beta x)): 2 log|x| + beta x."""
    if x == 0:
        raise DomainError("poisson toy utility is undefined at x = 0")
    return 2.0 * math.log(abs(x)) + beta * x


# ---------------------------------------------------------------------------
# Compartmental model
# ---------------------------------------------------------------------------


def _compartmental_terms(theta: np.ndarray, t: np.ndarray):
    theta = np.asarray(theta, dtype=float)
    t = np.asarray(t, dtype=float)
    th1, th2, th3 = theta[..., 0:1], theta[..., 1:2], theta[..., 2:3]
    if np.any(th2 == th1):
        raise SingularityError("compartmental model needs theta2 != theta1")
    a = 400.0 * th2 / (th3 * (th2 - th1))
    e1, e2 = np.exp(-th1 * t), np.exp(-th2 * t)
    mu = e1 - e2
    return th1, th2, th3, a, mu, e1, e2


def compartmental_mean_var(theta: np.ndarray, t: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Mean a(theta) mu(theta; t) and variance sigma^2 b(theta; t), broadcasting theta over t."""
    _, _, _, a, mu, _, _ = _compartmental_terms(theta, t)
    mean = a * mu
    return mean, COMPARTMENTAL_SIGMA2 * (1.0 + mean**2 / 10.0)


def compartmental_mean_sd(theta: Sequence[float], t: float) -> Tuple[float, float]:
    if t < 0:
        raise InvalidArgumentError(f"sampling time must be non-negative, got {t}")
    mean, var = compartmental_mean_var(np.asarray(theta, dtype=float), np.atleast_1d(t))
    return float(mean[0]), float(math.sqrt(var[0]))


def compartmental_simulate(theta: np.ndarray, delta: np.ndarray, rng: RngStream) -> np.ndarray:
    """Independent normal responses at sampling times delta; theta may be (3,) or (B, 3)."""
    delta = np.asarray(delta, dtype=float)
    if np.any((delta < 0) | (delta > SAMPLING_HORIZON)):
        raise InvalidArgumentError("sampling times must lie in [0, 24]")
    mean, var = compartmental_mean_var(theta, delta)
    return mean + np.sqrt(var) * rng.gen.standard_normal(mean.shape)


def compartmental_fisher_info(theta: np.ndarray, t: np.ndarray) -> np.ndarray:
    """J^T V^{-1} J for the mean a(theta) mu(theta; t); theta (B, 3) -> (B, 3, 3).

    The theta-dependence of the variance is ignored.
    """
    th1, th2, th3, a, mu, e1, e2 = _compartmental_terms(np.atleast_2d(theta), t)
    da = np.concatenate([a / (th2 - th1), -a * th1 / (th2 * (th2 - th1)), -a / th3], axis=-1)
    t = np.asarray(t, dtype=float)
    jac = np.stack(
        [
            da[:, 0:1] * mu - a * t * e1,
            da[:, 1:2] * mu + a * t * e2,
            da[:, 2:3] * mu,
        ],
        axis=-1,
    )
    var = COMPARTMENTAL_SIGMA2 * (1.0 + (a * mu) ** 2 / 10.0)
    return np.einsum("bni,bnj,bn->bij", jac, jac, 1.0 / var)


# ---------------------------------------------------------------------------
# Beta dimension-reduction scheme
# ---------------------------------------------------------------------------


def beta_quantile(r, a, b) -> np.ndarray:
    """Beta quantile Q(r; a, b), vectorized; NaN where a or b is not positive."""
    return betaincinv(np.asarray(a, float), np.asarray(b, float), np.asarray(r, float))


def _drs_levels(n: int) -> np.ndarray:
    return np.arange(1, n + 1) / (n + 1.0)


def beta_drs_expand(alpha1: float, alpha2: float, n: int) -> np.ndarray:
    """Sampling times t_j = 24 Q(j/(n+1); alpha1, alpha2), j = 1..n."""
    if alpha1 <= 0 or alpha2 <= 0:
        raise InvalidArgumentError("Beta shape parameters must be positive")
    return SAMPLING_HORIZON * beta_quantile(_drs_levels(n), alpha1, alpha2)


def drs_domain_check(alpha1, alpha2, n: int, which: int = 1):
    """Membership of a candidate shape parameter in D_1 (which=1) or D_2 (which=2).

    The candidate is `alpha1` for D_1 and `alpha2` for D_2; either may be an
    array of candidates, the other is held fixed. True iff both are positive
    and every consecutive quantile gap exceeds 0.25/24.
    """
    if which not in (1, 2):
        raise InvalidArgumentError(f"which must be 1 or 2, got {which}")
    a1 = np.asarray(alpha1, dtype=float)
    a2 = np.asarray(alpha2, dtype=float)
    ok = (a1 > 0) & (a2 > 0)
    if n >= 2:
        q = beta_quantile(_drs_levels(n), a1[..., None], a2[..., None])
        ok = ok & (np.diff(q, axis=-1).min(axis=-1) > MIN_SAMPLING_GAP / SAMPLING_HORIZON)
    return bool(ok) if ok.ndim == 0 else ok


# ---------------------------------------------------------------------------
# Logistic regression
# ---------------------------------------------------------------------------


def group_index(n: int, groups: int, group_size: Optional[int] = None) -> np.ndarray:
    """Group of each run; runs beyond groups * group_size join the last group."""
    size = group_size or max(n // groups, 1)
    return np.minimum(np.arange(n) // size, groups - 1)


def model_matrix(design: np.ndarray) -> np.ndarray:
    return np.hstack([np.ones((design.shape[0], 1)), design])


def logistic_simulate(beta: np.ndarray, omega: np.ndarray, X: np.ndarray, rng: RngStream,
                      group_size: Optional[int] = None) -> np.ndarray:
    """y_st ~ Bernoulli(logistic(x_st^T (beta + omega_s))); omega is (G, 5)."""
    omega = np.atleast_2d(omega)
    groups = group_index(X.shape[0], omega.shape[0], group_size)
    eta = np.sum(X * (np.asarray(beta)[None, :] + omega[groups]), axis=1)
    return (rng.gen.uniform(size=eta.shape) < expit(eta)).astype(float)


def logistic_fisher_info(beta: np.ndarray, X: np.ndarray) -> np.ndarray:
    """X^T W X with W = diag(rho (1 - rho)); beta (5,) -> (5, 5) or (B, 5) -> (B, 5, 5)."""
    beta = np.asarray(beta, dtype=float)
    rho = expit(beta @ X.T)
    w = rho * (1.0 - rho)
    if beta.ndim == 1:
        return (X * w[:, None]).T @ X
    return np.einsum("bn,ni,nj->bij", w, X, X)


def hier_logistic_fisher_approx(beta: np.ndarray, half_widths: np.ndarray, X: np.ndarray, groups: int,
                                group_size: Optional[int], rng: RngStream, R: int) -> np.ndarray:
    """Prior-averaged conditional information sum_s (1/R) sum_r X_s^T W_s(beta + omega_s^(r)) X_s.

    beta, half_widths: (5,) or (B, 5). Reduces to logistic_fisher_info when
    every half-width is zero.
    """
    if R < 1:
        raise InvalidArgumentError("Monte Carlo size R must be >= 1")
    single = np.ndim(beta) == 1
    beta = np.atleast_2d(beta)
    half = np.atleast_2d(half_widths)
    B = beta.shape[0]
    runs = group_index(X.shape[0], groups, group_size)
    omega = rng.gen.uniform(-1.0, 1.0, size=(B, R, groups, beta.shape[1])) * half[:, None, None, :]
    coef = beta[:, None, None, :] + omega[:, :, runs, :]
    rho = expit(np.einsum("brni,ni->brn", coef, X))
    w = (rho * (1.0 - rho)).mean(axis=1)
    info = np.einsum("bn,ni,nj->bij", w, X, X)
    return info[0] if single else info


# ---------------------------------------------------------------------------
# Dose response under model uncertainty
# ---------------------------------------------------------------------------

LINKS = {1: "logit", 2: "logit", 3: "cloglog", 4: "cloglog", 5: "probit", 6: "probit"}


def is_second_order(u) -> np.ndarray:
    return np.asarray(u) % 2 == 0


def inverse_link(u, eta: np.ndarray) -> np.ndarray:
    """Probability of death under model u (1-2 logit, 3-4 c-log-log, 5-6 probit)."""
    u = np.asarray(u)
    eta = np.asarray(eta, dtype=float)
    logit = expit(eta)
    cloglog = -np.expm1(-np.exp(np.minimum(eta, 700.0)))
    probit = norm.cdf(eta)
    return np.where(u <= 2, logit, np.where(u <= 4, cloglog, probit))


def linear_predictor(beta: np.ndarray, x: np.ndarray) -> np.ndarray:
    """beta (..., 3) with beta2 = 0 for 1st-order models; x (n,) -> (..., n)."""
    beta = np.asarray(beta, dtype=float)
    x = np.asarray(x, dtype=float)
    return beta[..., 0:1] + beta[..., 1:2] * x + beta[..., 2:3] * x**2


def ld50(u: int, beta: Sequence[float]) -> float:
    """Dose (coded scale) with death probability 0.5 under model u."""
    if u not in LINKS:
        raise InvalidArgumentError(f"model index must be in 1..6, got {u}")
    w = CLOGLOG_LD50_OFFSET if LINKS[u] == "cloglog" else 0.0
    b = [float(x) for x in beta]
    if not is_second_order(u):
        if len(b) < 2 or b[1] == 0:
            raise UndefinedLD50Error(f"LD50 undefined for model {u}: beta1 = 0")
        return (w - b[0]) / b[1]
    if len(b) < 3 or b[2] == 0:
        raise UndefinedLD50Error(f"LD50 undefined for model {u}: beta2 = 0")
    disc = b[1] ** 2 - 4.0 * b[2] * (b[0] - w)
    if disc < 0:
        raise UndefinedLD50Error(f"LD50 undefined for model {u}: negative discriminant")
    return (-b[1] + math.sqrt(disc)) / (2.0 * b[2])


def dose_response_simulate(u: int, beta: Sequence[float], delta: np.ndarray, rate: float,
                           rng: RngStream) -> np.ndarray:
    """Counts y_0k ~ Poisson(rate * rho_k) at coded doses delta."""
    if rate <= 0:
        raise InvalidArgumentError("Poisson group-size mean must be positive")
    coef = np.zeros(3)
    coef[: len(beta)] = beta
    rho = inverse_link(u, linear_predictor(coef, delta))
    return rng.gen.poisson(rate * rho).astype(float)


def to_original_dose(coded: np.ndarray, dose_range: Tuple[float, float] = DOSE_RANGE) -> np.ndarray:
    lo, hi = dose_range
    return lo + (np.asarray(coded, dtype=float) + 1.0) * (hi - lo) / 2.0


def to_coded_dose(dose: np.ndarray, dose_range: Tuple[float, float] = DOSE_RANGE) -> np.ndarray:
    lo, hi = dose_range
    return 2.0 * (np.asarray(dose, dtype=float) - lo) / (hi - lo) - 1.0


REFERENCE_MODEL_WEIGHTS = (0.0216, 0.0686, 0.7580, 0.0612, 0.0304, 0.0602)


@dataclass
class DoseResponsePosterior:
    """Weighted joint posterior sample of (u, beta_u) with precomputed LD50 values."""

    model_index: np.ndarray
    beta: np.ndarray
    weights: np.ndarray
    rate: float = 60.0
    rejected: int = 0
    ld50: np.ndarray = field(init=False)
    sample_weights: np.ndarray = field(init=False)

    def __post_init__(self):
        self.model_index = np.asarray(self.model_index, dtype=int)
        self.beta = np.asarray(self.beta, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        self.ld50 = np.array([ld50(int(u), b) for u, b in zip(self.model_index, self.beta)])
        counts = np.bincount(self.model_index, minlength=7)
        self.sample_weights = self.weights[self.model_index - 1] / counts[self.model_index]

    @property
    def size(self) -> int:
        return len(self.model_index)

    def sample_indices(self, count: int, rng: RngStream) -> np.ndarray:
        return rng.gen.choice(self.size, size=count, p=self.sample_weights)

    def ld50_mean(self) -> float:
        return float(np.sum(self.sample_weights * self.ld50))

    def ld50_variance(self) -> float:
        return float(np.sum(self.sample_weights * (self.ld50 - self.ld50_mean()) ** 2))


# ---------------------------------------------------------------------------
# Model plug-ins
# ---------------------------------------------------------------------------


def _point_prior(spec: PriorSpec) -> PriorSpec:
    """Collapse every top-level marginal to a point mass at its prior mean."""
    params = [
        ParameterPrior(name=p.name, marginal=Marginal(kind="point", value=p.marginal.center))
        for p in spec.parameters
    ]
    return PriorSpec(parameters=params, nested=spec.nested)


class StatisticalModel(ABC):
    """A design problem: prior, data model, coordinate domains and constraints."""

    name: str = "model"
    response: str = "normal"
    v: int = 1
    has_fisher: bool = True
    supports_phase2: bool = True

    def __init__(self, n: int, prior: PriorSpec, p: int, domain: CoordinateDomain, point_prior: bool = False):
        if n < 1 or p < 1:
            raise InvalidArgumentError(f"need n >= 1 and p >= 1, got n={n}, p={p}")
        self.n = n
        self.p = p
        self.prior = _point_prior(prior) if point_prior else prior
        self.domain = domain

    @property
    def q(self) -> int:
        return self.n * self.v

    @property
    def P(self) -> int:
        return self.prior.dimension

    def runs(self, delta: np.ndarray) -> int:
        return len(delta) // self.v

    def design_matrix(self, delta: np.ndarray) -> np.ndarray:
        """Rows are runs; delta is vec(D), stacked column by column."""
        return np.reshape(np.asarray(delta, dtype=float), (self.runs(delta), self.v), order="F")

    def vec(self, design: np.ndarray) -> np.ndarray:
        return np.asarray(design, dtype=float).flatten(order="F")

    def domains(self) -> List[CoordinateDomain]:
        return [self.domain] * self.q

    def sample_prior(self, count: int, rng: RngStream) -> np.ndarray:
        return sample_prior(self.prior, count, rng)

    def sample_nuisance(self, count: int, rng: RngStream) -> np.ndarray:
        """Nuisance draws gamma; independent of theta for every built-in model."""
        return self.sample_prior(count, rng)[:, self.p:]

    @abstractmethod
    def simulate(self, psi: np.ndarray, delta: np.ndarray, rng: RngStream) -> np.ndarray:
        """Responses (B, n) for parameter draws psi (B, P)."""

    @abstractmethod
    def log_likelihood(self, y: np.ndarray, psi: np.ndarray, delta: np.ndarray) -> np.ndarray:
        """log pi(y | psi, delta); y (..., n) and psi (..., P) broadcast over leading axes."""

    def fisher_information(self, psi: np.ndarray, delta: np.ndarray, rng: RngStream) -> np.ndarray:
        raise NotImplementedError(f"model '{self.name}' has no Fisher information")

    def coordinate_feasible(self, delta: np.ndarray, i: int, candidates: np.ndarray) -> np.ndarray:
        """Membership of candidate values for coordinate i given the other coordinates."""
        return np.ones(np.shape(candidates), dtype=bool)

    def is_feasible(self, delta: np.ndarray) -> bool:
        delta = np.asarray(delta, dtype=float)
        for x, dom in zip(delta, self.domains()):
            if not dom.lo <= x <= dom.hi:
                return False
            if dom.levels is not None and not np.any(np.isclose(x, dom.levels)):
                return False
        return True

    def initial_design(self, rng: RngStream, attempts: int = 1000) -> np.ndarray:
        """Random Latin hypercube design, redrawn until it satisfies the constraints."""
        for _ in range(attempts):
            delta = lhs_random_design(self.n, self.v, self.domains(), rng)
            if self.is_feasible(delta):
                return delta
        raise InvalidArgumentError(f"could not draw a feasible initial design for '{self.name}'")

    def describe(self) -> str:
        return f"{self.name}(n={self.n}, v={self.v}, p={self.p}, P={self.P})"


class PoissonToyModel(StatisticalModel):
    """y_k | beta ~ Poisson(exp(beta x_k)), beta ~ N(0.5, 1)."""

    name = "poisson_toy"
    response = "poisson-counts"

    def __init__(self, n: int = 1, point_prior: bool = False, levels: Optional[Sequence[float]] = None,
                 beta_mean: float = 0.5, beta_var: float = 1.0):
        prior = PriorSpec(parameters=[ParameterPrior(name="beta", marginal=Marginal(kind="normal", mean=beta_mean, var=beta_var))])
        domain = CoordinateDomain(lo=-1.0, hi=1.0, levels=tuple(levels) if levels is not None else None)
        super().__init__(n, prior, 1, domain, point_prior)

    def _eta(self, psi: np.ndarray, delta: np.ndarray) -> np.ndarray:
        return np.asarray(psi, dtype=float)[..., 0:1] * np.asarray(delta, dtype=float)

    def simulate(self, psi, delta, rng):
        return rng.gen.poisson(np.exp(self._eta(psi, delta))).astype(float)

    def log_likelihood(self, y, psi, delta):
        eta = self._eta(psi, delta)
        return np.sum(y * eta - np.exp(eta) - gammaln(y + 1.0), axis=-1)

    def fisher_information(self, psi, delta, rng):
        x = np.asarray(delta, dtype=float)
        info = np.sum(x**2 * np.exp(self._eta(np.atleast_2d(psi), x)), axis=-1)
        return info[:, None, None]


class NormalMeanModel(StatisticalModel):
    """y_i ~ N(theta, noise_var), theta ~ N(0, prior_var); the design carries no information."""

    name = "normal_mean"

    def __init__(self, n: int = 1, noise_var: float = 1.0, prior_var: float = 1.0, point_prior: bool = False):
        prior = PriorSpec(parameters=[ParameterPrior(name="theta", marginal=Marginal(kind="normal", mean=0.0, var=prior_var))])
        super().__init__(n, prior, 1, CoordinateDomain(lo=-1.0, hi=1.0), point_prior)
        self.noise_var = noise_var

    def simulate(self, psi, delta, rng):
        theta = np.asarray(psi, dtype=float)[:, 0:1]
        return theta + math.sqrt(self.noise_var) * rng.gen.standard_normal((theta.shape[0], self.runs(delta)))

    def log_likelihood(self, y, psi, delta):
        theta = np.asarray(psi, dtype=float)[..., 0:1]
        return np.sum(norm.logpdf(y, loc=theta, scale=math.sqrt(self.noise_var)), axis=-1)

    def fisher_information(self, psi, delta, rng):
        B = np.atleast_2d(psi).shape[0]
        return np.full((B, 1, 1), self.runs(delta) / self.noise_var)


def compartmental_prior() -> PriorSpec:
    means = (math.log(0.1), math.log(1.0), math.log(20.0))
    return PriorSpec(
        parameters=[
            ParameterPrior(name=f"theta{j + 1}", marginal=Marginal(kind="lognormal", log_mean=m, log_var=0.05))
            for j, m in enumerate(means)
        ]
    )


class CompartmentalModel(StatisticalModel):
    """Sampling times for the three-parameter compartmental model.

    With `constrained`, every pair of times must be at least 15 minutes apart
    and point exchange is disabled.
    """

    name = "compartmental"

    def __init__(self, n: int = 15, constrained: bool = True, point_prior: bool = False):
        super().__init__(n, compartmental_prior(), 3, CoordinateDomain(lo=0.0, hi=SAMPLING_HORIZON), point_prior)
        self.constrained = constrained
        self.supports_phase2 = not constrained

    def simulate(self, psi, delta, rng):
        return compartmental_simulate(np.asarray(psi)[:, :3], delta, rng)

    def log_likelihood(self, y, psi, delta):
        mean, var = compartmental_mean_var(np.asarray(psi)[..., :3], delta)
        return np.sum(-0.5 * (np.log(2.0 * math.pi * var) + (y - mean) ** 2 / var), axis=-1)

    def fisher_information(self, psi, delta, rng):
        return compartmental_fisher_info(np.atleast_2d(psi)[:, :3], np.asarray(delta, dtype=float))

    def coordinate_feasible(self, delta, i, candidates):
        candidates = np.asarray(candidates, dtype=float)
        if not self.constrained:
            return np.ones(candidates.shape, dtype=bool)
        others = np.delete(np.asarray(delta, dtype=float), i)
        if others.size == 0:
            return np.ones(candidates.shape, dtype=bool)
        return np.abs(candidates[..., None] - others).min(axis=-1) >= MIN_SAMPLING_GAP

    def is_feasible(self, delta):
        if not super().is_feasible(delta):
            return False
        if self.constrained and len(delta) > 1:
            t = np.sort(np.asarray(delta, dtype=float))
            return bool(np.diff(t).min() >= MIN_SAMPLING_GAP)
        return True


class BetaDrsModel(StatisticalModel):
    """Compartmental sampling times restricted to scaled Beta(alpha1, alpha2) quantiles.

    The design is the pair (alpha1, alpha2), a single run in two variables.
    """

    name = "compartmental_drs"
    supports_phase2 = False
    v = 2

    def __init__(self, times: int = 15, bounds: Tuple[float, float] = (0.01, 5.0), point_prior: bool = False):
        lo, hi = bounds
        super().__init__(1, compartmental_prior(), 3, CoordinateDomain(lo=lo, hi=hi), point_prior)
        self.times = times
        self.base = CompartmentalModel(n=times, constrained=False, point_prior=point_prior)

    def sampling_times(self, delta: np.ndarray) -> np.ndarray:
        return beta_drs_expand(float(delta[0]), float(delta[1]), self.times)

    def simulate(self, psi, delta, rng):
        return self.base.simulate(psi, self.sampling_times(delta), rng)

    def log_likelihood(self, y, psi, delta):
        return self.base.log_likelihood(y, psi, self.sampling_times(delta))

    def fisher_information(self, psi, delta, rng):
        return self.base.fisher_information(psi, self.sampling_times(delta), rng)

    def coordinate_feasible(self, delta, i, candidates):
        if i == 0:
            return drs_domain_check(candidates, float(delta[1]), self.times, which=1)
        return drs_domain_check(float(delta[0]), candidates, self.times, which=2)

    def is_feasible(self, delta):
        return super().is_feasible(delta) and bool(drs_domain_check(delta[0], delta[1], self.times))


def logistic_prior(groups: int = 0) -> PriorSpec:
    params = [
        ParameterPrior(name=f"beta{r}", marginal=Marginal(kind="uniform", lo=lo, hi=hi))
        for r, (lo, hi) in enumerate(LOGISTIC_BETA_RANGES)
    ]
    if groups == 0:
        return PriorSpec(parameters=params)
    params += [
        ParameterPrior(name=f"lambda{r}", marginal=Marginal(kind="triangular", L=L))
        for r, L in enumerate(LOGISTIC_HALF_WIDTH_BOUNDS)
    ]
    nested = NestedUniform(half_widths=[f"lambda{r}" for r in range(5)], groups=groups)
    return PriorSpec(parameters=params, nested=nested)


class LogisticModel(StatisticalModel):
    """First-order logistic regression in four variables with homogeneous groups."""

    name = "logistic"
    response = "bernoulli"
    v = 4

    def __init__(self, n: int = 16, point_prior: bool = False):
        super().__init__(n, logistic_prior(), 5, CoordinateDomain(lo=-1.0, hi=1.0), point_prior)

    def _eta(self, psi: np.ndarray, delta: np.ndarray) -> np.ndarray:
        X = model_matrix(self.design_matrix(delta))
        return np.asarray(psi, dtype=float)[..., :5] @ X.T

    def simulate(self, psi, delta, rng):
        eta = self._eta(psi, delta)
        return (rng.gen.uniform(size=eta.shape) < expit(eta)).astype(float)

    def log_likelihood(self, y, psi, delta):
        eta = self._eta(psi, delta)
        return np.sum(y * log_expit(eta) + (1.0 - y) * log_expit(-eta), axis=-1)

    def fisher_information(self, psi, delta, rng):
        X = model_matrix(self.design_matrix(delta))
        return logistic_fisher_info(np.atleast_2d(psi)[:, :5], X)


class HierarchicalLogisticModel(LogisticModel):
    """Logistic regression with group effects omega_sr ~ U[-lambda_r, lambda_r].

    psi columns: beta (5), lambda (5), omega group-major (G x 5).
    """

    name = "hierarchical_logistic"

    def __init__(self, groups: int = 2, group_size: int = 6, point_prior: bool = False,
                 fisher_mc_size: Optional[int] = None):
        StatisticalModel.__init__(self, groups * group_size, logistic_prior(groups), 5,
                                  CoordinateDomain(lo=-1.0, hi=1.0), point_prior)
        self.groups = groups
        self.group_size = group_size
        self.fisher_mc_size = fisher_mc_size or settings.fisher_mc_size

    def _eta(self, psi, delta):
        psi = np.asarray(psi, dtype=float)
        X = model_matrix(self.design_matrix(delta))
        runs = group_index(X.shape[0], self.groups, self.group_size)
        omega = psi[..., 10:].reshape(psi.shape[:-1] + (self.groups, 5))[..., runs, :]
        coef = psi[..., None, :5] + omega
        return np.sum(coef * X, axis=-1)

    def fisher_information(self, psi, delta, rng):
        psi = np.atleast_2d(psi)
        X = model_matrix(self.design_matrix(delta))
        return hier_logistic_fisher_approx(psi[:, :5], psi[:, 5:10], X, self.groups, self.group_size,
                                           rng, self.fisher_mc_size)


class DoseResponseModel(StatisticalModel):
    """Follow-up doses for the beetle study; psi holds indices into the posterior sample."""

    name = "dose_response"
    response = "poisson-counts"
    has_fisher = False

    def __init__(self, posterior: DoseResponsePosterior, n: int = 1):
        # The prior here is the ingested posterior; the PriorSpec is a placeholder index.
        placeholder = PriorSpec(parameters=[ParameterPrior(name="sample", marginal=Marginal(kind="point", value=0.0))])
        super().__init__(n, placeholder, 1, CoordinateDomain(lo=-1.0, hi=1.0))
        self.posterior = posterior

    def sample_prior(self, count, rng):
        return self.posterior.sample_indices(count, rng).astype(float)[:, None]

    def _rho(self, psi: np.ndarray, delta: np.ndarray) -> np.ndarray:
        idx = np.asarray(psi)[..., 0].astype(int)
        eta = linear_predictor(self.posterior.beta[idx], delta)
        u = self.posterior.model_index[idx][..., None]
        return inverse_link(u, eta)

    def simulate(self, psi, delta, rng):
        return rng.gen.poisson(self.posterior.rate * self._rho(psi, delta)).astype(float)

    def log_likelihood(self, y, psi, delta):
        mu = self.posterior.rate * self._rho(psi, delta)
        return np.sum(xlogy(y, mu) - mu - gammaln(y + 1.0), axis=-1)


def build_model(cfg: ModelConfig) -> StatisticalModel:
    """Instantiate the model named in a problem configuration."""
    levels = None
    if cfg.levels is not None:
        levels = np.linspace(-1.0, 1.0, cfg.levels).tolist()

    if cfg.name == "poisson_toy":
        return PoissonToyModel(n=cfg.n, point_prior=cfg.point_prior, levels=levels)
    if cfg.name == "normal_mean":
        return NormalMeanModel(n=cfg.n, noise_var=cfg.noise_var, prior_var=cfg.prior_var, point_prior=cfg.point_prior)
    if cfg.name == "compartmental":
        return CompartmentalModel(n=cfg.n, constrained=cfg.constrained, point_prior=cfg.point_prior)
    if cfg.name == "compartmental_drs":
        return BetaDrsModel(times=cfg.n, bounds=cfg.drs_bounds, point_prior=cfg.point_prior)
    if cfg.name == "logistic":
        return LogisticModel(n=cfg.n, point_prior=cfg.point_prior)
    if cfg.name == "hierarchical_logistic":
        size = cfg.group_size or max(cfg.n // cfg.groups, 1)
        return HierarchicalLogisticModel(groups=cfg.groups, group_size=size, point_prior=cfg.point_prior,
                                         fisher_mc_size=cfg.fisher_mc_size)
    if cfg.name == "dose_response":
        from .ingest import load_posterior_samples

        posterior = load_posterior_samples(cfg.posterior_path, rate=cfg.poisson_mean)
        return DoseResponseModel(posterior, n=cfg.n)
    raise InvalidArgumentError(f"unknown model '{cfg.name}'")
