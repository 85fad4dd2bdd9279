"""Maximization of rate evaluators over probability-simplex blocks.

A problem exposes a list of simplex blocks (one per free conditional-pmf
column, plus scalar phase weights) and an ``evaluate`` callable.  Three
methods are provided:

* ``coordinate``: cyclic blockwise ascent; one simplex block at a time is
  improved by golden-section line searches toward each of its vertices.
  Min-over-levels objectives are optimized on the min directly and a step
  is accepted only when it improves the objective by at least tol/10.
* ``random``: independent Dirichlet(1) draws per block.
* ``grid``: exhaustive enumeration of a uniform simplex lattice.

Restart 0 always starts from (and evaluates) the uniform point, so the
returned objective never falls below the uniform evaluation.  Given the
same method, seed and restart count the output is bitwise identical,
regardless of the thread count used to run restarts.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import (
    DimensionCap,
    LatticeTooLarge,
    NonFiniteRate,
    NormalizationError,
)
from .prob import ROW_TOL

LATTICE_CAP = 10 ** 7


@dataclass(frozen=True)
class BlockSpec:
    label: str
    size: int


@dataclass(frozen=True)
class Evaluation:
    """Outcome of one evaluator call; infeasible points score -inf."""

    objective: float
    feasible: bool
    result: object


@dataclass(frozen=True, eq=False)
class FunctionProblem:
    """A problem given by block specs plus an evaluation closure."""

    blocks: tuple[BlockSpec, ...]
    fn: Callable[[Sequence[np.ndarray]], Evaluation]

    def evaluate(self, values: Sequence[np.ndarray]) -> Evaluation:
        out = self.fn(values)
        if math.isnan(out.objective):
            raise NonFiniteRate("evaluator returned NaN")
        return out


@dataclass(frozen=True, eq=False)
class ParamVector:
    """Concatenated simplex blocks; each block sums to one within 1e-12."""

    labels: tuple[str, ...]
    blocks: tuple[np.ndarray, ...]

    def __init__(self, labels, blocks):
        labels = tuple(labels)
        cleaned = []
        for label, b in zip(labels, blocks):
            arr = np.asarray(b, dtype=float).copy()
            if np.any(arr < -ROW_TOL) or abs(float(arr.sum()) - 1.0) > ROW_TOL:
                raise NormalizationError(f"block {label!r} is not a simplex point")
            arr.setflags(write=False)
            cleaned.append(arr)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "blocks", tuple(cleaned))

    def as_dict(self) -> dict[str, list[float]]:
        return {l: [float(x) for x in b] for l, b in zip(self.labels, self.blocks)}


@dataclass(frozen=True)
class OptimizerConfig:
    method: str = "coordinate"  # coordinate | random | grid
    restarts: int = 1
    seed: int = 0
    tol: float = 1e-6
    max_iters: int = 200
    grid_resolution: int = 8
    threads: int = 1
    block_cap: int = 64

    def __post_init__(self):
        if self.method not in ("coordinate", "random", "grid"):
            raise NormalizationError(f"unknown method {self.method!r}")
        if self.restarts < 1 or self.tol <= 0:
            raise NormalizationError("restarts >= 1 and tol > 0 required")


def _uniform_blocks(blocks: Sequence[BlockSpec]) -> list[np.ndarray]:
    return [np.full(b.size, 1.0 / b.size) for b in blocks]


def _renormalize(v: np.ndarray) -> np.ndarray:
    v = np.maximum(v, 0.0)
    s = v.sum()
    return v / s if s > 0 else np.full_like(v, 1.0 / len(v))


_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def _golden_max(g: Callable[[float], float], iters: int = 40):
    """Golden-section maximization of a unimodal g on [0, 1]."""
    lo, hi = 0.0, 1.0
    x1 = hi - _INVPHI * (hi - lo)
    x2 = lo + _INVPHI * (hi - lo)
    f1, f2 = g(x1), g(x2)
    best_x, best_f = (x1, f1) if f1 >= f2 else (x2, f2)
    for _ in range(iters):
        if f1 < f2:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _INVPHI * (hi - lo)
            f2 = g(x2)
        else:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _INVPHI * (hi - lo)
            f1 = g(x1)
        if f1 > best_f:
            best_x, best_f = x1, f1
        if f2 > best_f:
            best_x, best_f = x2, f2
    for x in (0.0, 1.0):
        fx = g(x)
        if fx > best_f:
            best_x, best_f = x, fx
    return best_x, best_f


def _coordinate_restart(problem, start, config):
    values = [v.copy() for v in start]
    best = problem.evaluate(values)
    trace = [best.objective]
    accept = config.tol / 10.0
    for _ in range(config.max_iters):
        cycle_gain = 0.0
        for bi, spec in enumerate(problem.blocks):
            base = values[bi]
            for vertex in range(spec.size):
                e = np.zeros(spec.size)
                e[vertex] = 1.0

                def g(alpha, _e=e, _base=base, _bi=bi):
                    cand = _renormalize((1.0 - alpha) * _base + alpha * _e)
                    trial = values.copy()
                    trial[_bi] = cand
                    return problem.evaluate(trial).objective

                alpha, f_alpha = _golden_max(g)
                if f_alpha >= best.objective + accept:
                    values[bi] = _renormalize((1.0 - alpha) * base + alpha * e)
                    new = problem.evaluate(values)
                    if new.objective > best.objective:
                        cycle_gain += new.objective - best.objective
                        best = new
                        trace.append(best.objective)
                    base = values[bi]
        if cycle_gain < config.tol:
            break
    return values, best, trace


def _random_restart(problem, start, config, rng):
    values = [v.copy() for v in start]
    best = problem.evaluate(values)
    trace = [best.objective]
    for _ in range(config.max_iters):
        cand = [rng.dirichlet(np.ones(b.size)) for b in problem.blocks]
        ev = problem.evaluate(cand)
        if ev.objective > best.objective:
            values, best = cand, ev
            trace.append(best.objective)
    return values, best, trace


def _simplex_lattice(size: int, resolution: int):
    for comp in _compositions(resolution, size):
        yield np.asarray(comp, dtype=float) / resolution


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for rest in _compositions(total - head, parts - 1):
            yield (head, *rest)


def _lattice_size(blocks: Sequence[BlockSpec], resolution: int) -> int:
    size = 1
    for b in blocks:
        size *= math.comb(resolution + b.size - 1, b.size - 1)
        if size > LATTICE_CAP:
            return size
    return size


def _grid_best(problem, resolution: int):
    size = _lattice_size(problem.blocks, resolution)
    if size > LATTICE_CAP:
        raise LatticeTooLarge(f"lattice has {size} points (cap {LATTICE_CAP})")
    best_values = _uniform_blocks(problem.blocks)
    best = problem.evaluate(best_values)
    lattices = [list(_simplex_lattice(b.size, resolution))
                for b in problem.blocks]
    for combo in itertools.product(*lattices):
        ev = problem.evaluate(combo)
        if ev.objective > best.objective:
            best_values, best = [c.copy() for c in combo], ev
    return best_values, best


def optimize(problem, config: OptimizerConfig | None = None):
    """Maximize a problem's objective; returns (params, result, trace).

    ``trace`` is the nondecreasing sequence of best objectives of the
    winning restart.  Restarts beyond the first start from seeded
    Dirichlet(1) draws; all of them may run in parallel (``threads``), with
    results merged by (objective desc, restart index asc) so the outcome
    does not depend on scheduling.
    """
    config = config or OptimizerConfig()
    if len(problem.blocks) > config.block_cap:
        raise DimensionCap(
            f"{len(problem.blocks)} free blocks exceed the cap "
            f"{config.block_cap}"
        )
    if not problem.blocks:
        ev = problem.evaluate([])
        return ParamVector((), ()), ev.result, [ev.objective]

    if config.method == "grid":
        values, best = _grid_best(problem, config.grid_resolution)
        params = ParamVector([b.label for b in problem.blocks], values)
        return params, best.result, [best.objective]

    def run(restart: int):
        if restart == 0:
            start = _uniform_blocks(problem.blocks)
        else:
            rng = np.random.Generator(
                np.random.Philox(key=np.array([config.seed, restart],
                                              dtype=np.uint64))
            )
            start = [rng.dirichlet(np.ones(b.size)) for b in problem.blocks]
        if config.method == "coordinate":
            return _coordinate_restart(problem, start, config)
        rng = np.random.Generator(
            np.random.Philox(key=np.array([config.seed, restart + 2 ** 32],
                                          dtype=np.uint64))
        )
        return _random_restart(problem, start, config, rng)

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            outcomes = list(pool.map(run, range(config.restarts)))
    else:
        outcomes = [run(r) for r in range(config.restarts)]

    best_idx = 0
    for i in range(1, len(outcomes)):
        if outcomes[i][1].objective > outcomes[best_idx][1].objective:
            best_idx = i
    values, best, trace = outcomes[best_idx]
    params = ParamVector([b.label for b in problem.blocks],
                         [_renormalize(v) for v in values])
    return params, best.result, trace


def grid_oracle(problem, resolution: int) -> float:
    """Exhaustive maximum of the objective over a uniform simplex lattice.

    Used as an independent check of :func:`optimize` on tiny problems; the
    total lattice size is capped at 10^7 points.
    """
    _, best = _grid_best(problem, resolution)
    return best.objective
