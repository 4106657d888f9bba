"""Random streams, Latin hypercube designs and prior sampling."""

import logging
import math
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.spatial.distance import pdist
from scipy.stats import qmc

from .exceptions import InvalidArgumentError
from .models import CoordinateDomain, Marginal, PriorSpec

logger = logging.getLogger(__name__)

Interval = Union[CoordinateDomain, Tuple[float, float]]

# A coordinate-design is a 1-D array of m points inside one coordinate domain.
CoordinateDesign = np.ndarray


class RngStream:
    """PCG64 generator keyed by (seed, stream_id).

    Child streams are spawned from the underlying SeedSequence, so a master
    seed partitions deterministically into independent per-start and
    per-step streams regardless of how work is scheduled.
    """

    def __init__(self, seed: int = 0, stream_id: int = 0, _seed_seq: Optional[np.random.SeedSequence] = None):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        if _seed_seq is None:
            _seed_seq = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        self._seq = _seed_seq
        self.gen = np.random.Generator(np.random.PCG64(self._seq))

    def spawn(self, count: int) -> List["RngStream"]:
        return [RngStream(self.seed, self.stream_id, _seed_seq=s) for s in self._seq.spawn(count)]

    def child(self) -> "RngStream":
        return self.spawn(1)[0]

    def sibling(self, stream_id: int) -> "RngStream":
        return RngStream(self.seed, stream_id)

    def replay(self) -> "RngStream":
        """A fresh stream that reproduces this stream's draws from the start."""
        return RngStream(self.seed, self.stream_id, _seed_seq=self._seq)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"


def as_domain(domain: Interval) -> CoordinateDomain:
    if isinstance(domain, CoordinateDomain):
        return domain
    try:
        lo, hi = domain
        return CoordinateDomain(lo=float(lo), hi=float(hi))
    except Exception as e:
        raise InvalidArgumentError(f"invalid coordinate domain {domain!r}: {e}") from e


def snap_to_levels(points: np.ndarray, levels: Sequence[float]) -> np.ndarray:
    """Map each point to its nearest level of a discrete domain."""
    grid = np.asarray(levels, dtype=float)
    idx = np.abs(points[..., None] - grid).argmin(axis=-1)
    return grid[idx]


def _unit_lhs(m: int, columns: int, rng: RngStream) -> np.ndarray:
    """(m, columns) Latin hypercube on the unit cube: one point per stratum in every column."""
    return qmc.LatinHypercube(d=columns, seed=rng.gen).random(m)


def lhs_1d(m: int, domain: Interval, rng: RngStream) -> CoordinateDesign:
    """One-dimensional Latin hypercube: one uniform point in each of m equal strata."""
    if not isinstance(m, (int, np.integer)) or m < 2:
        raise InvalidArgumentError(f"coordinate-design size must be an integer >= 2, got {m!r}")
    dom = as_domain(domain)
    points = qmc.scale(_unit_lhs(int(m), 1, rng), [dom.lo], [dom.hi])[:, 0]
    if dom.levels is not None:
        points = snap_to_levels(points, dom.levels)
    return points


def _expand_domains(n: int, v: int, domains: Sequence[Interval]) -> List[CoordinateDomain]:
    doms = [as_domain(d) for d in domains]
    if len(doms) == v and v != n * v:
        doms = [doms[j] for j in range(v) for _ in range(n)]
    if len(doms) != n * v:
        raise InvalidArgumentError(
            f"expected {n * v} coordinate domains (or {v} per-variable domains), got {len(doms)}"
        )
    return doms


def lhs_random_design(n: int, v: int, domains: Sequence[Interval], rng: RngStream) -> np.ndarray:
    """Random n x v Latin hypercube, returned as the column-major q-vector vec(D)."""
    if n < 1 or v < 1:
        raise InvalidArgumentError(f"need n, v >= 1, got n={n}, v={v}")
    doms = _expand_domains(n, v, domains)
    unit = _unit_lhs(n, v, rng).flatten(order="F")
    return _map_unit(unit, doms)


def _map_unit(unit: np.ndarray, doms: List[CoordinateDomain]) -> np.ndarray:
    lo = np.array([d.lo for d in doms])
    width = np.array([d.length for d in doms])
    delta = lo + unit * width
    for i, d in enumerate(doms):
        if d.levels is not None:
            delta[i] = snap_to_levels(delta[i : i + 1], d.levels)[0]
    return delta


def maximin_lhs(
    n: int,
    v: int,
    domains: Sequence[Interval],
    rng: RngStream,
    iterations: int = 5000,
    initial_temperature: float = 0.1,
    cooling: float = 0.999,
) -> np.ndarray:
    """Maximin Latin hypercube by simulated annealing over within-column swaps.

    Strata assignments are permuted two rows at a time; the minimum pairwise
    distance between cell centres is maximized. Points are then jittered
    uniformly inside their cells. Returns vec(D).
    """
    if n < 2 or v < 1:
        raise InvalidArgumentError(f"maximin LHS needs n >= 2 and v >= 1, got n={n}, v={v}")
    doms = _expand_domains(n, v, domains)
    cells = np.stack([rng.gen.permutation(n) for _ in range(v)], axis=1).astype(float)

    def score(c: np.ndarray) -> float:
        return float(pdist((c + 0.5) / n).min())

    current = best = score(cells)
    best_cells = cells.copy()
    temperature = initial_temperature
    for _ in range(iterations):
        col = rng.gen.integers(v)
        a, b = rng.gen.choice(n, size=2, replace=False)
        cells[[a, b], col] = cells[[b, a], col]
        candidate = score(cells)
        if candidate >= current or rng.gen.uniform() < math.exp((candidate - current) / temperature):
            current = candidate
            if candidate > best:
                best, best_cells = candidate, cells.copy()
        else:
            cells[[a, b], col] = cells[[b, a], col]
        temperature *= cooling

    logger.debug(f"maximin LHS n={n} v={v}: min distance {best:.4f}")
    unit = (best_cells + rng.gen.uniform(size=best_cells.shape)) / n
    return _map_unit(unit.flatten(order="F"), doms)


def sample_marginal(marginal: Marginal, count: int, rng: RngStream) -> np.ndarray:
    kind = marginal.kind
    if kind == "uniform":
        return rng.gen.uniform(marginal.lo, marginal.hi, size=count)
    if kind == "normal":
        return rng.gen.normal(marginal.mean, math.sqrt(marginal.var), size=count)
    if kind == "lognormal":
        return np.exp(rng.gen.normal(marginal.log_mean, math.sqrt(marginal.log_var), size=count))
    if kind == "triangular":
        # inverse CDF of 2(L - x)/L^2 on [0, L]
        return marginal.L * (1.0 - np.sqrt(1.0 - rng.gen.uniform(size=count)))
    if kind == "point":
        return np.full(count, marginal.value, dtype=float)
    if kind == "poisson":
        return rng.gen.poisson(marginal.rate, size=count).astype(float)
    raise InvalidArgumentError(f"unknown marginal kind {kind!r}")


def sample_prior(spec: PriorSpec, count: int, rng: RngStream) -> np.ndarray:
    """Draw `count` parameter vectors; columns follow `spec.names`.

    Top-level parameters are drawn first, then group effects
    omega[g, r] ~ U[-lambda_r, lambda_r] conditionally on the drawn half-widths.
    """
    if count < 1:
        raise InvalidArgumentError(f"prior sample size must be >= 1, got {count}")
    columns = [sample_marginal(p.marginal, count, rng) for p in spec.parameters]
    draws = np.column_stack(columns) if columns else np.empty((count, 0))
    if spec.nested is None:
        return draws

    names = [p.name for p in spec.parameters]
    half = draws[:, [names.index(h) for h in spec.nested.half_widths]]
    u = rng.gen.uniform(-1.0, 1.0, size=(count, spec.nested.groups, half.shape[1]))
    omega = (u * half[:, None, :]).reshape(count, -1)
    return np.hstack([draws, omega])
