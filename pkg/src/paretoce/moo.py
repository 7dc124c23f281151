"""NSGA-II for box-bounded real vectors with constraint-domination.

Objectives are minimised. Evaluators are vectorised over rows: the
objective evaluator maps an (n, r) matrix to (n, L), the constraint
evaluator to (n, J) non-negative violation magnitudes (0 = satisfied).
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

log = logging.getLogger(__name__)


class MooError(RuntimeError):
    pass


@dataclass
class MooProblem:
    lower: np.ndarray
    upper: np.ndarray
    objectives: Callable[[np.ndarray], np.ndarray]
    n_objectives: int
    constraints: Optional[Callable[[np.ndarray], np.ndarray]] = None
    initial: Optional[np.ndarray] = None  # genomes injected into generation 0

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float).ravel()
        self.upper = np.asarray(self.upper, dtype=float).ravel()
        if self.lower.shape != self.upper.shape or self.lower.size == 0:
            raise ValueError("lower and upper bounds must be equal-length, non-empty")
        if not (np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper))):
            raise ValueError("bounds must be finite")
        if np.any(self.lower >= self.upper):
            raise ValueError("every lower bound must be strictly below its upper bound")
        if self.n_objectives < 1:
            raise ValueError("need at least one objective")

    @property
    def dimension(self) -> int:
        return self.lower.size

    def evaluate(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        F = np.asarray(self.objectives(X), dtype=float).reshape(len(X), self.n_objectives)
        bad = ~np.all(np.isfinite(F), axis=1)
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise MooError(f"objective evaluator returned non-finite values at genome {X[i].tolist()}")
        if self.constraints is None:
            cv = np.zeros(len(X))
        else:
            G = np.asarray(self.constraints(X), dtype=float).reshape(len(X), -1)
            cv = np.where(G > 0, G, 0.0).sum(axis=1)
            if not np.all(np.isfinite(cv)):
                i = int(np.flatnonzero(~np.isfinite(cv))[0])
                raise MooError(f"constraint evaluator returned non-finite values at genome {X[i].tolist()}")
        return F, cv


@dataclass
class Individual:
    genome: np.ndarray
    objectives: np.ndarray
    total_violation: float = 0.0
    rank: int = 0
    crowding: float = 0.0

    @property
    def feasible(self) -> bool:
        return self.total_violation <= 0.0


@dataclass(frozen=True)
class MooConfig:
    population: int = 100
    generations: int = 100
    crossover_prob: float = 0.9
    sbx_eta: float = 15.0
    mutation_prob: Optional[float] = None  # None -> 1 / dimension
    mutation_eta: float = 20.0
    seed: int = 0
    seed_initial: bool = True
    reference_point: Optional[tuple] = None  # enables hypervolume in the trace

    def __post_init__(self):
        if self.population < 4 or self.population % 2:
            raise ValueError("population must be even and >= 4")
        if self.generations < 1:
            raise ValueError("generations must be >= 1")
        for p in (self.crossover_prob, self.mutation_prob):
            if p is not None and not 0.0 <= p <= 1.0:
                raise ValueError("probabilities must lie in [0, 1]")
        if self.sbx_eta <= 0 or self.mutation_eta <= 0:
            raise ValueError("distribution indices must be positive")


# ---------------------------------------------------------------------------
# dominance, sorting, crowding


def dominates(a: Individual, b: Individual) -> bool:
    """Constraint-domination: feasibility first, then violation, then Pareto order."""
    fa = np.asarray(a.objectives, dtype=float)
    fb = np.asarray(b.objectives, dtype=float)
    if fa.shape != fb.shape:
        raise ValueError(f"objective lengths differ: {fa.shape} vs {fb.shape}")
    a_ok, b_ok = a.total_violation <= 0, b.total_violation <= 0
    if a_ok and not b_ok:
        return True
    if not a_ok and not b_ok:
        return a.total_violation < b.total_violation
    if not a_ok:
        return False
    return bool(np.all(fa <= fb) and np.any(fa < fb))


def domination_matrix(F: np.ndarray, cv: np.ndarray | None = None) -> np.ndarray:
    """D[i, j] is True when row i constraint-dominates row j."""
    F = np.asarray(F, dtype=float)
    n = F.shape[0]
    cv = np.zeros(n) if cv is None else np.asarray(cv, dtype=float)
    le = np.all(F[:, None, :] <= F[None, :, :], axis=2)
    lt = np.any(F[:, None, :] < F[None, :, :], axis=2)
    pareto = le & lt
    feas = cv <= 0
    both = feas[:, None] & feas[None, :]
    D = np.where(both, pareto, False)
    D |= feas[:, None] & ~feas[None, :]
    D |= (~feas[:, None] & ~feas[None, :]) & (cv[:, None] < cv[None, :])
    return D


def nondominated_fronts(F: np.ndarray, cv: np.ndarray | None = None) -> list[np.ndarray]:
    n = len(F)
    if n == 0:
        return []
    D = domination_matrix(F, cv)
    count = D.sum(axis=0)
    fronts = []
    current = np.flatnonzero(count == 0)
    while current.size:
        fronts.append(current)
        count = count - D[current].sum(axis=0)
        count[current] = -1
        current = np.flatnonzero(count == 0)
    return fronts


def fast_nondominated_sort(pop: Sequence[Individual]) -> list[list[int]]:
    """Partition ``pop`` into fronts of indices; also sets each ``rank``."""
    if not pop:
        return []
    F = np.array([ind.objectives for ind in pop], dtype=float)
    cv = np.array([ind.total_violation for ind in pop], dtype=float)
    fronts = nondominated_fronts(F, cv)
    for k, front in enumerate(fronts):
        for i in front:
            pop[i].rank = k
    return [sorted(int(i) for i in f) for f in fronts]


def crowding_of(F: np.ndarray) -> np.ndarray:
    """Crowding distance of every row of one front's objective matrix."""
    F = np.asarray(F, dtype=float)
    n, L = F.shape
    d = np.zeros(n)
    if n <= 2:
        d[:] = np.inf
        return d
    for l in range(L):
        order = np.argsort(F[:, l], kind="stable")
        f = F[order, l]
        d[order[0]] = d[order[-1]] = np.inf
        span = f[-1] - f[0]
        if span > 0:
            d[order[1:-1]] += (f[2:] - f[:-2]) / span
    return d


def crowding_distance(front: Sequence[Individual]) -> np.ndarray:
    if not front:
        raise ValueError("crowding distance of an empty front")
    d = crowding_of(np.array([ind.objectives for ind in front], dtype=float))
    for ind, v in zip(front, d):
        ind.crowding = float(v)
    return d


def hypervolume(F: np.ndarray, reference) -> float:
    """Exact dominated hypervolume of minimisation points w.r.t. ``reference``."""
    F = np.asarray(F, dtype=float)
    ref = np.asarray(reference, dtype=float)
    if F.size == 0:
        return 0.0
    F = F[np.all(F < ref, axis=1)]
    return _hv(F, ref)


def _hv(F, ref):
    if len(F) == 0:
        return 0.0
    if F.shape[1] == 1:
        return float(ref[0] - F[:, 0].min())
    if F.shape[1] == 2:
        P = F[np.lexsort((F[:, 1], F[:, 0]))]
        vol, best = 0.0, ref[1]
        for x, y in P:
            if y < best:
                vol += (ref[0] - x) * (best - y)
                best = y
        return float(vol)
    P = F[np.argsort(F[:, -1], kind="stable")]
    vol = 0.0
    for i in range(len(P)):
        top = P[i + 1, -1] if i + 1 < len(P) else ref[-1]
        h = top - P[i, -1]
        if h > 0:
            vol += h * _hv(P[: i + 1, :-1], ref[:-1])
    return float(vol)


# ---------------------------------------------------------------------------
# variation


def sbx_crossover(P1, P2, lower, upper, eta, prob, rng):
    """Simulated binary crossover, bounded form; returns two child matrices."""
    C1, C2 = P1.copy(), P2.copy()
    n, r = P1.shape
    do_pair = rng.random(n) < prob
    do_var = (rng.random((n, r)) < 0.5) & do_pair[:, None]
    u = rng.random((n, r))
    swap = rng.random((n, r)) < 0.5
    diff = np.abs(P1 - P2)
    mask = do_var & (diff > 1e-14)
    if not mask.any():
        return C1, C2
    y1 = np.minimum(P1, P2)
    y2 = np.maximum(P1, P2)
    lo = np.broadcast_to(lower, P1.shape)
    hi = np.broadcast_to(upper, P1.shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        span = np.where(mask, y2 - y1, 1.0)

        def betaq(beta):
            alpha = 2.0 - np.power(beta, -(eta + 1.0))
            return np.where(
                u <= 1.0 / alpha,
                np.power(u * alpha, 1.0 / (eta + 1.0)),
                np.power(1.0 / (2.0 - u * alpha), 1.0 / (eta + 1.0)),
            )

        c1 = 0.5 * ((y1 + y2) - betaq(1.0 + 2.0 * (y1 - lo) / span) * span)
        c2 = 0.5 * ((y1 + y2) + betaq(1.0 + 2.0 * (hi - y2) / span) * span)
    c1 = np.clip(c1, lo, hi)
    c2 = np.clip(c2, lo, hi)
    a = np.where(swap, c2, c1)
    b = np.where(swap, c1, c2)
    C1[mask] = a[mask]
    C2[mask] = b[mask]
    return C1, C2


def polynomial_mutation(X, lower, upper, eta, prob, rng):
    """Bounded polynomial mutation applied gene-wise with probability ``prob``."""
    Y = X.copy()
    mask = rng.random(X.shape) < prob
    if not mask.any():
        return Y
    span = upper - lower
    d1 = (X - lower) / span
    d2 = (upper - X) / span
    u = rng.random(X.shape)
    p = 1.0 / (eta + 1.0)
    left = u < 0.5
    val_l = 2.0 * u + (1.0 - 2.0 * u) * np.power(1.0 - d1, eta + 1.0)
    val_r = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * np.power(1.0 - d2, eta + 1.0)
    dq = np.where(left, np.power(val_l, p) - 1.0, 1.0 - np.power(val_r, p))
    Y[mask] = (X + dq * span)[mask]
    return np.clip(Y, lower, upper)


# ---------------------------------------------------------------------------
# main loop


def _rank_and_crowd(F, cv):
    n = len(F)
    rank = np.empty(n, dtype=int)
    crowd = np.empty(n)
    for k, front in enumerate(nondominated_fronts(F, cv)):
        rank[front] = k
        crowd[front] = crowding_of(F[front])
    return rank, crowd


def _tournament(rank, crowd, n_out, rng):
    n = len(rank)
    a = rng.integers(0, n, n_out)
    b = rng.integers(0, n, n_out)
    coin = rng.random(n_out) < 0.5
    a_wins = (rank[a] < rank[b]) | ((rank[a] == rank[b]) & (crowd[a] > crowd[b]))
    b_wins = (rank[b] < rank[a]) | ((rank[a] == rank[b]) & (crowd[b] > crowd[a]))
    return np.where(a_wins, a, np.where(b_wins, b, np.where(coin, a, b)))


def _environmental_selection(F, cv, size):
    chosen = []
    for front in nondominated_fronts(F, cv):
        if len(chosen) + len(front) <= size:
            chosen.extend(front.tolist())
            if len(chosen) == size:
                break
            continue
        d = crowding_of(F[front])
        order = np.argsort(-d, kind="stable")
        chosen.extend(front[order[: size - len(chosen)]].tolist())
        break
    return np.array(chosen, dtype=int)


@dataclass
class TraceRow:
    generation: int
    best: np.ndarray
    feasible: int
    hypervolume: Optional[float] = None


def _trace_row(gen, F, cv, rank, reference):
    feas = cv <= 0
    L = F.shape[1]
    best = F[feas].min(axis=0) if feas.any() else np.full(L, np.nan)
    hv = None
    if reference is not None:
        elite = feas & (rank == 0)
        hv = hypervolume(F[elite], reference) if elite.any() else 0.0
    return TraceRow(gen, best, int(feas.sum()), hv)


def evolve(problem: MooProblem, config: MooConfig = MooConfig(), trace: list | None = None) -> list[Individual]:
    """Run NSGA-II and return the rank-0 feasible members of the final population.

    If no feasible member exists, the whole final population is returned and
    each member carries its positive ``total_violation``. Genomes are
    de-duplicated. Pass a list as ``trace`` to collect per-generation
    :class:`TraceRow` records (generation 0 is the initial population).
    """
    rng = np.random.default_rng(config.seed)
    lo, hi = problem.lower, problem.upper
    N, r = config.population, problem.dimension
    pm = config.mutation_prob if config.mutation_prob is not None else 1.0 / r

    X = lo + rng.random((N, r)) * (hi - lo)
    if config.seed_initial and problem.initial is not None:
        seeds = np.clip(np.atleast_2d(np.asarray(problem.initial, dtype=float)), lo, hi)[:N]
        X[: len(seeds)] = seeds
    F, cv = problem.evaluate(X)
    rank, crowd = _rank_and_crowd(F, cv)
    if trace is not None:
        trace.append(_trace_row(0, F, cv, rank, config.reference_point))

    for gen in range(1, config.generations + 1):
        parents = _tournament(rank, crowd, N, rng)
        P1, P2 = X[parents[0::2]], X[parents[1::2]]
        C1, C2 = sbx_crossover(P1, P2, lo, hi, config.sbx_eta, config.crossover_prob, rng)
        Q = polynomial_mutation(np.vstack([C1, C2]), lo, hi, config.mutation_eta, pm, rng)
        FQ, cvQ = problem.evaluate(Q)
        XR, FR, cvR = np.vstack([X, Q]), np.vstack([F, FQ]), np.concatenate([cv, cvQ])
        keep = _environmental_selection(FR, cvR, N)
        X, F, cv = XR[keep], FR[keep], cvR[keep]
        rank, crowd = _rank_and_crowd(F, cv)
        if trace is not None:
            trace.append(_trace_row(gen, F, cv, rank, config.reference_point))

    feas = cv <= 0
    if feas.any():
        idx = np.flatnonzero(feas & (rank == 0))
    else:
        log.warning("NSGA-II finished without a feasible individual; returning the whole population")
        idx = np.arange(N)
    out, seen = [], set()
    for i in idx:
        key = X[i].tobytes()
        if key in seen:
            continue
        seen.add(key)
        out.append(Individual(X[i].copy(), F[i].copy(), float(cv[i]), int(rank[i]), float(crowd[i])))
    return out


def select_diverse_subset(archive: Sequence[Individual], k: int) -> list[Individual]:
    """Keep the ``k`` members with the largest crowding distance (extremes first)."""
    if not archive:
        raise ValueError("cannot select from an empty archive")
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(archive) <= k:
        return list(archive)
    d = crowding_of(np.array([ind.objectives for ind in archive], dtype=float))
    order = np.argsort(-d, kind="stable")[:k]
    return [archive[i] for i in order]


def write_trace_csv(trace: Sequence[TraceRow], path) -> Path:
    path = Path(path)
    L = len(trace[0].best) if trace else 0
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["generation", *[f"best_f{l + 1}" for l in range(L)], "feasible", "hypervolume"])
        for row in trace:
            hv = "" if row.hypervolume is None else repr(float(row.hypervolume))
            w.writerow([row.generation, *[repr(float(v)) for v in row.best], row.feasible, hv])
    return path
