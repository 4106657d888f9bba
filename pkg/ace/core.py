"""Approximate coordinate exchange driver.

Phase I sweeps the coordinates, proposing for each a maximizer of a GP
emulator fitted to cheap utility evaluations over a Latin hypercube
coordinate-design. Phase II consolidates runs by point exchange. Every
proposal is accepted or rejected with a Bayesian two-sample t-test on fresh
comparison-grade Monte Carlo batches.
"""

import asyncio
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.stats import t as student_t

from .config import settings
from .emulator import EmulatorFit, fit_emulator, maximize_on_grid
from .exceptions import (
    AceRunError,
    ConstantResponseError,
    ConstraintViolationError,
    DegenerateWeightError,
    EmptyDomainError,
    InvalidArgumentError,
    SingularInformationError,
)
from .models import AceConfig, TraceRecord
from .sampling import RngStream, lhs_1d
from .statistical_models import StatisticalModel
from .utilities import UtilityEstimator, UtilitySampleBatch

logger = logging.getLogger(__name__)

# Estimator failures that disqualify a single candidate rather than the run.
_CANDIDATE_ERRORS = (DegenerateWeightError, SingularInformationError)
_TOP_UP_ROUNDS = 50


def bayes_t_accept(batch_new: UtilitySampleBatch, batch_cur: UtilitySampleBatch,
                   rng: RngStream) -> Tuple[float, bool]:
    """Posterior probability that the proposal beats the current design, and the draw.

    p = T_{2B-2}(B (mean_new - mean_cur) / sqrt(2 B nu)) with nu the pooled
    variance over both batches (divisor 2B - 2).
    """
    B = batch_new.B
    if B != batch_cur.B or B < 2:
        raise InvalidArgumentError(f"acceptance test needs two batches of equal size >= 2, got {B} and {batch_cur.B}")
    diff = batch_new.mean - batch_cur.mean
    new = np.asarray(batch_new.values)
    cur = np.asarray(batch_cur.values)
    nu = (np.sum((new - new.mean()) ** 2) + np.sum((cur - cur.mean()) ** 2)) / (2 * B - 2)
    if nu <= 0.0:
        p = 0.5 if diff == 0 else float(diff > 0)
    else:
        p = float(student_t.cdf(B * diff / math.sqrt(2.0 * B * nu), df=2 * B - 2))
    p = min(max(p, 0.0), 1.0)
    return p, bool(rng.gen.uniform() < p)


@dataclass
class StartResult:
    start: int
    design: np.ndarray
    traces: List[TraceRecord]
    initial_utility: float
    evaluations: List[float] = field(default_factory=list)
    accepted: int = 0
    rejected: int = 0
    skipped: int = 0

    @property
    def mean_utility(self) -> float:
        return float(np.mean(self.evaluations)) if self.evaluations else float("nan")


@dataclass
class AceResult:
    design: np.ndarray
    best_start: int
    starts: List[StartResult]
    failures: Dict[int, str] = field(default_factory=dict)

    @property
    def best(self) -> StartResult:
        return next(s for s in self.starts if s.start == self.best_start)

    @property
    def utility(self) -> float:
        return self.best.mean_utility

    @property
    def traces(self) -> List[TraceRecord]:
        return [record for s in self.starts for record in s.traces]

    @property
    def accepted(self) -> int:
        return sum(s.accepted for s in self.starts)

    @property
    def rejected(self) -> int:
        return sum(s.rejected for s in self.starts)


class AceRunner:
    """Single-start ACE for one model/utility pair."""

    def __init__(self, model: StatisticalModel, utility: UtilityEstimator, cfg: AceConfig, start: int = 0):
        self.model = model
        self.utility = utility
        self.cfg = cfg
        self.start = start
        self.emulator_mc = cfg.emulator_mc()
        self.comparison_mc = cfg.comparison_mc()
        self.current_utility: Optional[float] = None
        self.accepted = 0
        self.rejected = 0
        self.skipped = 0

    @property
    def phase2_active(self) -> bool:
        return self.cfg.phase2_enabled and self.model.supports_phase2 and self.model.n >= 2

    def _check(self, delta: np.ndarray):
        if not self.model.is_feasible(delta):
            raise ConstraintViolationError(f"design violates the constraints of '{self.model.name}': {delta}")

    def _compare(self, proposal: np.ndarray, delta: np.ndarray, rng: RngStream):
        batch_new = self.utility.evaluate(proposal, self.comparison_mc, rng)
        batch_cur = self.utility.evaluate(delta, self.comparison_mc, rng)
        p, accepted = bayes_t_accept(batch_new, batch_cur, rng)
        return p, accepted, batch_new, batch_cur

    def _current(self, delta: np.ndarray, rng: RngStream) -> float:
        if self.current_utility is None:
            self.current_utility = self.utility.evaluate(delta, self.comparison_mc, rng).mean
        return self.current_utility

    def _record(self, phase: str, sweep: int, index: int, p: float, accepted: bool,
                skipped: bool = False) -> TraceRecord:
        return TraceRecord(start=self.start, phase=phase, sweep=sweep, index=index,
                           utility_estimate=self.current_utility, p_accept=p, accepted=accepted, skipped=skipped)

    def coordinate_design(self, delta: np.ndarray, i: int, rng: RngStream) -> np.ndarray:
        """m-point coordinate-design for coordinate i, restricted to feasible values.

        On a continuous domain the lowest and highest LHS points are moved onto
        the interval ends, which stay in their strata. Discrete domains keep each
        level at most once. Infeasible points are replaced by uniform feasible
        draws where possible.
        """
        domain = self.model.domains()[i]
        m = self.cfg.m
        xi = lhs_1d(m, domain, rng)
        if domain.levels is None:
            lowest, highest = np.argmin(xi), np.argmax(xi)
            xi[lowest], xi[highest] = domain.lo, domain.hi
        else:
            xi = np.unique(xi)
        xi = xi[np.asarray(self.model.coordinate_feasible(delta, i, xi), dtype=bool)]
        if domain.levels is None:
            for _ in range(_TOP_UP_ROUNDS):
                if len(xi) >= m:
                    break
                extra = rng.gen.uniform(domain.lo, domain.hi, size=m)
                extra = extra[np.asarray(self.model.coordinate_feasible(delta, i, extra), dtype=bool)]
                xi = np.concatenate([xi, extra[: m - len(xi)]])
        return xi

    def emulate_coordinate(self, delta: np.ndarray, i: int, rng: RngStream) -> Tuple[np.ndarray, np.ndarray, EmulatorFit]:
        """Evaluate U~ over a coordinate-design at the emulator budget and fit the GP."""
        xi = self.coordinate_design(delta, i, rng)
        points, values = [], []
        for x in xi:
            candidate = delta.copy()
            candidate[i] = x
            try:
                values.append(self.utility.evaluate(candidate, self.emulator_mc, rng).mean)
                points.append(x)
            except _CANDIDATE_ERRORS as e:
                logger.debug(f"coordinate {i + 1}: dropped point {x:.4g} ({e})")
        xi, values = np.array(points), np.array(values)
        if len(np.unique(xi)) < 3:
            raise EmptyDomainError(f"coordinate {i + 1}: fewer than three usable coordinate-design points")
        return xi, values, fit_emulator(xi, values)

    def phase1_coordinate_step(self, delta: np.ndarray, i: int, rng: RngStream,
                               sweep: int = 1) -> Tuple[np.ndarray, TraceRecord]:
        if not 0 <= i < len(delta):
            raise InvalidArgumentError(f"coordinate index {i} outside 0..{len(delta) - 1}")
        delta = np.asarray(delta, dtype=float).copy()
        self._current(delta, rng)
        try:
            _, _, fit = self.emulate_coordinate(delta, i, rng)
            feasible = lambda c: self.model.coordinate_feasible(delta, i, c)  # noqa: E731
            best = maximize_on_grid(fit, self.model.domains()[i], self.cfg.n_grid, rng, predicate=feasible)
        except (ConstantResponseError, EmptyDomainError) as e:
            self.skipped += 1
            logger.debug(f"start {self.start} sweep {sweep} coordinate {i + 1}: skipped ({e})")
            return delta, self._record("I", sweep, i + 1, 0.0, False, skipped=True)

        proposal = delta.copy()
        proposal[i] = best
        self._check(proposal)
        p, accepted, batch_new, batch_cur = self._compare(proposal, delta, rng)
        if accepted:
            self.accepted += 1
            delta, self.current_utility = proposal, batch_new.mean
        else:
            self.rejected += 1
            self.current_utility = batch_cur.mean
        logger.debug(f"start {self.start} sweep {sweep} coordinate {i + 1}: proposal {best:.4g} p={p:.3f} "
                     f"{'accepted' if accepted else 'rejected'}")
        return delta, self._record("I", sweep, i + 1, p, accepted)

    def phase1_sweep(self, delta: np.ndarray, rng: RngStream, sweep: int = 1) -> Tuple[np.ndarray, List[TraceRecord]]:
        records = []
        for i in range(len(delta)):
            delta, record = self.phase1_coordinate_step(delta, i, rng, sweep)
            records.append(record)
        return delta, records

    def _scan_value(self, design: np.ndarray, rng: RngStream) -> float:
        try:
            return self.utility.evaluate(self.model.vec(design), self.emulator_mc, rng).mean
        except _CANDIDATE_ERRORS:
            return -np.inf

    def phase2_point_exchange(self, delta: np.ndarray, rng: RngStream,
                              iteration: int = 1) -> Tuple[np.ndarray, TraceRecord]:
        """Append a replicate of the best run, drop the least useful run, then test."""
        delta = np.asarray(delta, dtype=float).copy()
        self._current(delta, rng)
        D = self.model.design_matrix(delta)
        n = D.shape[0]

        grown = [self._scan_value(np.vstack([D, D[k]]), rng) for k in range(n)]
        k_best = int(np.argmax(grown))
        D2 = np.vstack([D, D[k_best]])
        shrunk = [self._scan_value(np.delete(D2, h, axis=0), rng) for h in range(n + 1)]
        h_best = int(np.argmax(shrunk))

        proposal = self.model.vec(np.delete(D2, h_best, axis=0))
        self._check(proposal)
        p, accepted, batch_new, batch_cur = self._compare(proposal, delta, rng)
        if accepted:
            self.accepted += 1
            delta, self.current_utility = proposal, batch_new.mean
        else:
            self.rejected += 1
            self.current_utility = batch_cur.mean
        logger.debug(f"start {self.start} point exchange {iteration}: replicate run {k_best + 1}, "
                     f"drop run {h_best + 1}, p={p:.3f} {'accepted' if accepted else 'rejected'}")
        return delta, self._record("II", iteration, h_best + 1, p, accepted)

    def run_ace(self, delta0: np.ndarray, rng: RngStream) -> StartResult:
        """N_I Phase I sweeps then, where allowed, N_II point exchanges."""
        delta = np.asarray(delta0, dtype=float).copy()
        if len(delta) != self.model.q:
            raise InvalidArgumentError(f"initial design has {len(delta)} coordinates, model needs {self.model.q}")
        self._check(delta)
        self.current_utility = None
        initial = self._current(delta, rng)
        traces: List[TraceRecord] = []

        for sweep in range(1, self.cfg.N_I + 1):
            delta, records = self.phase1_sweep(delta, rng, sweep)
            traces.extend(records)
        if self.phase2_active:
            for iteration in range(1, self.cfg.N_II + 1):
                delta, record = self.phase2_point_exchange(delta, rng, iteration)
                traces.append(record)

        return StartResult(start=self.start, design=delta, traces=traces, initial_utility=initial,
                           accepted=self.accepted, rejected=self.rejected, skipped=self.skipped)


def run_ace(model: StatisticalModel, utility: UtilityEstimator, cfg: AceConfig, delta0: np.ndarray,
            rng: RngStream, start: int = 0) -> StartResult:
    return AceRunner(model, utility, cfg, start).run_ace(delta0, rng)


def evaluate_design(utility: UtilityEstimator, delta: np.ndarray, cfg: AceConfig, rng: RngStream,
                    reps: Optional[int] = None) -> List[float]:
    """C independent comparison-grade estimates of U(delta)."""
    mc = cfg.comparison_mc()
    return [utility.evaluate(delta, mc, rng).mean for _ in range(reps or cfg.C)]


def _single_start(model: StatisticalModel, utility: UtilityEstimator, cfg: AceConfig, rng: RngStream,
                  start: int, initial_design: Optional[np.ndarray]) -> StartResult:
    optimize_rng, evaluate_rng = rng.sibling(start + 1).spawn(2)
    delta0 = initial_design if initial_design is not None else model.initial_design(optimize_rng)
    result = AceRunner(model, utility, cfg, start).run_ace(delta0, optimize_rng)
    result.evaluations = evaluate_design(utility, result.design, cfg, evaluate_rng)
    logger.info(f"📊 Start {start}: U~ = {result.mean_utility:.6g} "
                f"({result.accepted} accepted, {result.rejected} rejected, {result.skipped} skipped)")
    return result


async def multi_start_async(model: StatisticalModel, utility: UtilityEstimator, cfg: AceConfig, rng: RngStream,
                            threads: Optional[int] = None,
                            initial_design: Optional[np.ndarray] = None) -> AceResult:
    """Run M starts concurrently and keep the best C-averaged design.

    Start k draws from the stream (seed, k + 1) only, so the result does not
    depend on the thread count or on scheduling order.
    """
    semaphore = asyncio.Semaphore(max(1, threads or settings.threads))

    async def one(start: int) -> StartResult:
        async with semaphore:
            return await asyncio.to_thread(_single_start, model, utility, cfg, rng, start, initial_design)

    logger.info(f"🚀 ACE: {cfg.M} starts of {model.describe()} with {utility.name}")
    outcomes = await asyncio.gather(*(one(k) for k in range(cfg.M)), return_exceptions=True)

    starts, failures = [], {}
    for k, outcome in enumerate(outcomes):
        if isinstance(outcome, BaseException):
            logger.error(f"❌ Start {k} failed: {outcome}")
            failures[k] = outcome
        else:
            starts.append(outcome)
    if not starts:
        raise AceRunError(f"all {cfg.M} starts failed", failures)

    best = max(starts, key=lambda s: (s.mean_utility, -s.start))
    logger.info(f"✅ Best design from start {best.start}: U~ = {best.mean_utility:.6g}")
    return AceResult(design=best.design, best_start=best.start, starts=starts,
                     failures={k: str(e) for k, e in failures.items()})


def multi_start(model: StatisticalModel, utility: UtilityEstimator, cfg: AceConfig, rng: RngStream,
                threads: Optional[int] = None, initial_design: Optional[np.ndarray] = None) -> AceResult:
    return asyncio.run(multi_start_async(model, utility, cfg, rng, threads, initial_design))
